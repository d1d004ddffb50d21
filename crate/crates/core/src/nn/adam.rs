//! Bias-corrected Adam with lazy (sparse) updates for embedding tables:
//! only rows touched by the batch gradient move, so untouched rows are
//! bit-identical before and after a step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tower::{Tower, TowerGrads};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One scalar Adam update; mutates the moments in place and returns the new
/// parameter value. `t` is the 1-based global step.
#[inline]
pub fn adam_scalar_update(
    param: f64,
    grad: f64,
    m: &mut f64,
    v: &mut f64,
    cfg: &AdamConfig,
    t: u64,
) -> f64 {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * grad;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * grad * grad;
    let m_hat = *m / (1.0 - cfg.beta1.powi(t as i32));
    let v_hat = *v / (1.0 - cfg.beta2.powi(t as i32));
    param - cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps)
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn zeros(len: usize) -> Moments {
        Moments { m: vec![0.0; len], v: vec![0.0; len] }
    }
}

/// Adam state for every tensor of one tower. Dense moment storage; embedding
/// updates touch only the rows present in the sparse gradient.
#[derive(Debug, Clone)]
pub struct TowerOptimizer {
    cfg: AdamConfig,
    embeddings: Vec<Moments>,
    layers: Vec<(Moments, Moments)>,
}

impl TowerOptimizer {
    pub fn new(cfg: AdamConfig, tower: &Tower) -> TowerOptimizer {
        TowerOptimizer {
            cfg,
            embeddings: tower.embeddings.iter().map(|e| Moments::zeros(e.weights.len())).collect(),
            layers: tower
                .layers
                .iter()
                .map(|l| (Moments::zeros(l.w.len()), Moments::zeros(l.b.len())))
                .collect(),
        }
    }

    /// Apply one Adam step with global step count `t` (1-based).
    ///
    /// A non-finite gradient anywhere rejects the whole step before touching
    /// any parameter or moment.
    pub fn step(&mut self, tower: &mut Tower, grads: &TowerGrads, t: u64) -> Result<()> {
        if t == 0 {
            return Err(Error::config("adam step count must be >= 1"));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient; step rejected".into()));
        }
        let cfg = self.cfg;
        for ((table, sg), moments) in
            tower.embeddings.iter_mut().zip(&grads.embeddings).zip(&mut self.embeddings)
        {
            for (&id, row_grad) in &sg.rows {
                let o = id as usize * table.dim;
                for (j, &g) in row_grad.iter().enumerate() {
                    let p = &mut table.weights[o + j];
                    *p = adam_scalar_update(
                        *p,
                        g,
                        &mut moments.m[o + j],
                        &mut moments.v[o + j],
                        &cfg,
                        t,
                    );
                }
            }
        }
        for ((layer, dg), (wm, bm)) in
            tower.layers.iter_mut().zip(&grads.layers).zip(&mut self.layers)
        {
            for (i, &g) in dg.w.iter().enumerate() {
                layer.w[i] =
                    adam_scalar_update(layer.w[i], g, &mut wm.m[i], &mut wm.v[i], &cfg, t);
            }
            for (i, &g) in dg.b.iter().enumerate() {
                layer.b[i] =
                    adam_scalar_update(layer.b[i], g, &mut bm.m[i], &mut bm.v[i], &cfg, t);
            }
        }
        Ok(())
    }
}
