//! Deep semantic retrieval: a two-tower model mapping queries and items into
//! one unit sphere, trained with a margin hinge over (query, clicked,
//! non-clicked) triples. Query and item towers share no parameters; only the
//! output space is shared, so the whole catalog can be embedded offline and
//! queries encoded online.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, ItemFeatures, QueryFeatures};
use crate::nn::{
    Activation, AdamConfig, DenseLayer, EmbeddingTable, Tower, TowerGrads, TowerOptimizer,
};
use crate::persist;

pub const DSR_MAGIC: &[u8; 4] = b"DSRM";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsrConfig {
    /// Width of the pooled token embedding feeding each tower.
    pub token_dim: usize,
    /// Hidden ReLU widths; the output layer is appended after these.
    pub hidden_dims: Vec<usize>,
    /// Shared embedding dimension `d` of the output space.
    pub output_dim: usize,
    /// Hinge margin `delta`.
    pub margin: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for DsrConfig {
    fn default() -> Self {
        DsrConfig {
            token_dim: 64,
            hidden_dims: vec![256, 128],
            output_dim: 64,
            margin: 0.1,
            batch_size: 256,
            epochs: 5,
            // Above the Adam default: token embedding rows each see only a
            // small slice of the batches, and at 1e-3 the five-epoch budget
            // leaves the cluster directions underfit.
            adam: AdamConfig { lr: 4e-3, ..AdamConfig::default() },
        }
    }
}

impl DsrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.token_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::config("tower dimensions must be positive"));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::config(format!("margin must be finite and >= 0, got {}", self.margin)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        Ok(())
    }
}

/// One featurized training triple: a query, an item the session clicked, and
/// an item it did not.
#[derive(Debug, Clone)]
pub struct Triple {
    pub query: QueryFeatures,
    pub positive: ItemFeatures,
    pub negative: ItemFeatures,
}

/// `max(0, margin - (s_pos - s_neg))`.
#[inline]
pub fn triplet_hinge_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    (margin - (s_pos - s_neg)).max(0.0)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-tower retrieval model. Both towers end in L2 normalization, so
/// similarity is the plain dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTowerModel {
    pub query_tower: Tower,
    pub item_tower: Tower,
    pub margin: f64,
}

fn build_tower<R: Rng>(
    rows: usize,
    token_dim: usize,
    numeric_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    rng: &mut R,
) -> Result<Tower> {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut in_dim = token_dim + numeric_dim;
    for &h in hidden {
        layers.push(DenseLayer::init(in_dim, h, Activation::Relu, rng));
        in_dim = h;
    }
    layers.push(DenseLayer::init(in_dim, output_dim, Activation::Relu, rng));
    Tower::new(vec![EmbeddingTable::init(rows, token_dim, rng)], numeric_dim, layers, true)
}

impl TwoTowerModel {
    pub fn init<R: Rng>(cfg: &DsrConfig, feat: &FeatureConfig, rng: &mut R) -> Result<TwoTowerModel> {
        cfg.validate()?;
        feat.validate()?;
        let query_tower = build_tower(
            feat.query_buckets as usize,
            cfg.token_dim,
            0,
            &cfg.hidden_dims,
            cfg.output_dim,
            rng,
        )?;
        let item_tower = build_tower(
            feat.item_buckets as usize,
            cfg.token_dim,
            feat.item_numeric_dim(),
            &cfg.hidden_dims,
            cfg.output_dim,
            rng,
        )?;
        Ok(TwoTowerModel { query_tower, item_tower, margin: cfg.margin })
    }

    pub fn output_dim(&self) -> usize {
        self.query_tower.output_dim()
    }

    fn check_query(&self, q: &QueryFeatures) -> Result<()> {
        if q.tokens.num_buckets as usize != self.query_tower.embeddings[0].rows {
            return Err(Error::config(format!(
                "query hashed into {} buckets but model has {} rows",
                q.tokens.num_buckets, self.query_tower.embeddings[0].rows
            )));
        }
        Ok(())
    }

    fn check_item(&self, it: &ItemFeatures) -> Result<()> {
        if it.tokens.num_buckets as usize != self.item_tower.embeddings[0].rows {
            return Err(Error::config(format!(
                "item hashed into {} buckets but model has {} rows",
                it.tokens.num_buckets, self.item_tower.embeddings[0].rows
            )));
        }
        Ok(())
    }

    /// Unit-norm query embedding.
    pub fn query_embed(&self, q: &QueryFeatures) -> Result<Vec<f64>> {
        self.check_query(q)?;
        self.query_tower.infer(&[&q.tokens.ids], &[])
    }

    /// Unit-norm item embedding.
    pub fn item_embed(&self, it: &ItemFeatures) -> Result<Vec<f64>> {
        self.check_item(it)?;
        self.item_tower.infer(&[&it.tokens.ids], &it.numeric.values)
    }

    // Flat parameter vector: query tower then item tower. Used by the
    // finite-difference harness.

    pub fn param_count(&self) -> usize {
        self.query_tower.param_count() + self.item_tower.param_count()
    }

    pub fn export_params(&self, out: &mut Vec<f64>) {
        self.query_tower.export_params(out);
        self.item_tower.export_params(out);
    }

    pub fn import_params(&mut self, data: &[f64]) -> Result<()> {
        let split = self.query_tower.param_count();
        if data.len() != self.param_count() {
            return Err(Error::shape(format!(
                "expected {} params, got {}",
                self.param_count(),
                data.len()
            )));
        }
        self.query_tower.import_params(&data[..split])?;
        self.item_tower.import_params(&data[split..])?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save_towers(
            path,
            DSR_MAGIC,
            &[("query", &self.query_tower), ("item", &self.item_tower)],
        )
    }

    /// Load a checkpoint. The hinge margin is a training hyperparameter, not
    /// part of the parameter file; pass the one from the run config.
    pub fn load(path: &Path, margin: f64) -> Result<TwoTowerModel> {
        let towers = persist::load_towers(path, DSR_MAGIC)?;
        let mut query = None;
        let mut item = None;
        for (name, tower) in towers {
            match name.as_str() {
                "query" => query = Some(tower),
                "item" => item = Some(tower),
                other => {
                    return Err(Error::format(0, format!("unexpected tower {other:?} in checkpoint")))
                }
            }
        }
        let (query_tower, item_tower) = match (query, item) {
            (Some(q), Some(i)) => (q, i),
            _ => return Err(Error::format(0, "checkpoint must contain query and item towers")),
        };
        if query_tower.output_dim() != item_tower.output_dim() {
            return Err(Error::format(0, "query/item output dimensions differ"));
        }
        if !query_tower.normalize || !item_tower.normalize {
            return Err(Error::format(0, "retrieval towers must be normalized"));
        }
        Ok(TwoTowerModel { query_tower, item_tower, margin })
    }
}

/// Loss and backward pass for one triple. Gradients accumulate into the two
/// grad buffers; an inactive hinge (loss == 0) touches neither.
pub fn triple_loss_and_backward(
    model: &TwoTowerModel,
    triple: &Triple,
    q_grads: &mut TowerGrads,
    i_grads: &mut TowerGrads,
) -> Result<f64> {
    model.check_query(&triple.query)?;
    model.check_item(&triple.positive)?;
    model.check_item(&triple.negative)?;
    let q_fields = [triple.query.tokens.ids.as_slice()];
    let p_fields = [triple.positive.tokens.ids.as_slice()];
    let n_fields = [triple.negative.tokens.ids.as_slice()];
    let (q, q_trace) = model.query_tower.forward(&q_fields, &[])?;
    let (p, p_trace) = model.item_tower.forward(&p_fields, &triple.positive.numeric.values)?;
    let (n, n_trace) = model.item_tower.forward(&n_fields, &triple.negative.numeric.values)?;
    let s_pos = dot(&q, &p);
    let s_neg = dot(&q, &n);
    let loss = triplet_hinge_loss(s_pos, s_neg, model.margin);
    if loss > 0.0 {
        // L = margin - q.p + q.n, so dL/dq = n - p, dL/dp = -q, dL/dn = q.
        let dq: Vec<f64> = n.iter().zip(&p).map(|(nv, pv)| nv - pv).collect();
        model.query_tower.backward(&q_fields, &q_trace, &dq, q_grads);
        let dp: Vec<f64> = q.iter().map(|v| -v).collect();
        model.item_tower.backward(&p_fields, &p_trace, &dp, i_grads);
        model.item_tower.backward(&n_fields, &n_trace, &q, i_grads);
    }
    Ok(loss)
}

/// Per-epoch training summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DsrTrainReport {
    /// Mean per-triple hinge loss each epoch.
    pub epoch_mean_loss: Vec<f64>,
    /// Fraction of triples with an active hinge each epoch.
    pub epoch_active_fraction: Vec<f64>,
    /// Optimizer steps actually applied.
    pub steps: u64,
}

/// Minibatch Adam over shuffled triples. Batch losses are summed (the
/// per-batch objective is `sum_i max(0, delta - s_pos + s_neg)`); the report
/// records means so epochs of different sizes compare.
pub fn train_dsr(
    model: &mut TwoTowerModel,
    triples: &[Triple],
    cfg: &DsrConfig,
    seed: u64,
) -> Result<DsrTrainReport> {
    cfg.validate()?;
    if triples.is_empty() {
        return Err(Error::data("no training triples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut q_opt = TowerOptimizer::new(cfg.adam, &model.query_tower);
    let mut i_opt = TowerOptimizer::new(cfg.adam, &model.item_tower);
    let mut q_grads = TowerGrads::zeros_like(&model.query_tower);
    let mut i_grads = TowerGrads::zeros_like(&model.item_tower);
    let mut report = DsrTrainReport {
        epoch_mean_loss: Vec::with_capacity(cfg.epochs),
        epoch_active_fraction: Vec::with_capacity(cfg.epochs),
        steps: 0,
    };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut active = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            q_grads.clear();
            i_grads.clear();
            for &idx in batch {
                let loss = triple_loss_and_backward(model, &triples[idx], &mut q_grads, &mut i_grads)?;
                if loss > 0.0 {
                    active += 1;
                }
                loss_sum += loss;
            }
            // An all-inactive batch has exactly zero gradient; skipping the
            // step keeps Adam's bias correction tied to real updates.
            if !(q_grads.is_zero() && i_grads.is_zero()) {
                report.steps += 1;
                q_opt.step(&mut model.query_tower, &q_grads, report.steps)?;
                i_opt.step(&mut model.item_tower, &i_grads, report.steps)?;
            }
        }
        report.epoch_mean_loss.push(loss_sum / triples.len() as f64);
        report.epoch_active_fraction.push(active as f64 / triples.len() as f64);
    }
    Ok(report)
}
