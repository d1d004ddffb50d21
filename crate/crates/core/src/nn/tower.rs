//! Tower topology: per-field sum-pooled embeddings concatenated with numeric
//! inputs, a dense stack, and an optional L2-normalized output.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Norms below this are treated as degenerate; the output falls back to e1.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Identity => z,
        }
    }

    /// Subgradient convention: relu'(0) = 0.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Row-major `rows x dim` embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
}

impl EmbeddingTable {
    pub fn zeros(rows: usize, dim: usize) -> EmbeddingTable {
        EmbeddingTable { rows, dim, weights: vec![0.0; rows * dim] }
    }

    /// Rows drawn from N(0, 0.01), i.e. stddev 0.1. Much smaller and pooled
    /// token vectors start out negligible next to O(1) numeric inputs, which
    /// lets early training latch onto the numerics alone.
    pub fn init<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> EmbeddingTable {
        let normal = Normal::new(0.0, 0.1).expect("valid stddev");
        let weights = (0..rows * dim).map(|_| normal.sample(rng)).collect();
        EmbeddingTable { rows, dim, weights }
    }

    #[inline]
    pub fn row(&self, id: u32) -> &[f64] {
        let o = id as usize * self.dim;
        &self.weights[o..o + self.dim]
    }

    /// Sum of the rows addressed by `ids`; empty ids yield the zero vector,
    /// duplicates count once per occurrence.
    pub fn sum_pool(&self, ids: &[u32]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.sum_pool_into(ids, &mut out)?;
        Ok(out)
    }

    fn sum_pool_into(&self, ids: &[u32], out: &mut [f64]) -> Result<()> {
        for &id in ids {
            if id as usize >= self.rows {
                return Err(Error::OutOfRange(format!(
                    "embedding id {id} >= table rows {}",
                    self.rows
                )));
            }
            let row = self.row(id);
            for (o, &w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
        Ok(())
    }
}

/// Dense layer `act(Wx + b)` with `W` stored row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Glorot-uniform weights in ±sqrt(6/(in+out)), zero biases.
    pub fn init<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> DenseLayer {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = (0..in_dim * out_dim).map(|_| rng.random_range(-limit..limit)).collect();
        DenseLayer { in_dim, out_dim, w, b: vec![0.0; out_dim], activation }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::shape(format!(
                "dense input has {} dims, layer expects {}",
                x.len(),
                self.in_dim
            )));
        }
        Ok(self.pre_activation(x).into_iter().map(|z| self.activation.apply(z)).collect())
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.b.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            *zo += acc;
        }
        z
    }
}

/// `v / ||v||`; degenerate inputs (norm < [`NORM_EPS`]) return e1 and set the
/// flag so cold inputs still serve a unit vector.
pub fn l2_normalize(v: &[f64]) -> (Vec<f64>, bool) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < NORM_EPS {
        let mut e1 = vec![0.0; v.len()];
        if !e1.is_empty() {
            e1[0] = 1.0;
        }
        return (e1, true);
    }
    (v.iter().map(|x| x / norm).collect(), false)
}

/// One tower: per-field embedding tables, a numeric tail concatenated at the
/// input layer, a dense stack, and optionally an L2-normalized output.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    pub embeddings: Vec<EmbeddingTable>,
    pub numeric_dim: usize,
    pub layers: Vec<DenseLayer>,
    pub normalize: bool,
}

impl Tower {
    pub fn new(
        embeddings: Vec<EmbeddingTable>,
        numeric_dim: usize,
        layers: Vec<DenseLayer>,
        normalize: bool,
    ) -> Result<Tower> {
        let input_dim: usize = embeddings.iter().map(|e| e.dim).sum::<usize>() + numeric_dim;
        if layers.is_empty() {
            return Err(Error::config("tower needs at least one dense layer"));
        }
        let mut expected = input_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim != expected {
                return Err(Error::shape(format!(
                    "layer {i} expects input dim {}, got {expected}",
                    l.in_dim
                )));
            }
            expected = l.out_dim;
        }
        Ok(Tower { embeddings, numeric_dim, layers, normalize })
    }

    pub fn input_dim(&self) -> usize {
        self.embeddings.iter().map(|e| e.dim).sum::<usize>() + self.numeric_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    fn concat_input(&self, fields: &[&[u32]], numeric: &[f64]) -> Result<Vec<f64>> {
        if fields.len() != self.embeddings.len() {
            return Err(Error::shape(format!(
                "tower has {} token fields, got {}",
                self.embeddings.len(),
                fields.len()
            )));
        }
        if numeric.len() != self.numeric_dim {
            return Err(Error::shape(format!(
                "tower numeric dim {}, got {}",
                self.numeric_dim,
                numeric.len()
            )));
        }
        let mut x = Vec::with_capacity(self.input_dim());
        for (table, ids) in self.embeddings.iter().zip(fields) {
            let start = x.len();
            x.resize(start + table.dim, 0.0);
            table.sum_pool_into(ids, &mut x[start..])?;
        }
        x.extend_from_slice(numeric);
        Ok(x)
    }

    /// Forward pass recording every activation for a later [`Tower::backward`].
    pub fn forward(&self, fields: &[&[u32]], numeric: &[f64]) -> Result<(Vec<f64>, TowerTrace)> {
        let input = self.concat_input(fields, numeric)?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut h = input.clone();
        for layer in &self.layers {
            let z = layer.pre_activation(&h);
            h = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            post.push(h.clone());
        }
        let (output, norm, degenerate) = if self.normalize {
            let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
            let (y, degenerate) = l2_normalize(&h);
            (y, norm, degenerate)
        } else {
            (h, 0.0, false)
        };
        let trace = TowerTrace { input, pre, post, norm, degenerate };
        Ok((output, trace))
    }

    /// Forward without recording; for serving and evaluation.
    pub fn infer(&self, fields: &[&[u32]], numeric: &[f64]) -> Result<Vec<f64>> {
        let mut h = self.concat_input(fields, numeric)?;
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        if self.normalize {
            h = l2_normalize(&h).0;
        }
        Ok(h)
    }

    /// Exact reverse-mode gradients for one recorded forward pass.
    ///
    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the concatenated input vector. The normalization
    /// Jacobian is `(I - y yᵀ)/||v||`; a degenerate forward (constant e1
    /// fallback) propagates zero gradient.
    pub fn backward(
        &self,
        fields: &[&[u32]],
        trace: &TowerTrace,
        upstream: &[f64],
        grads: &mut TowerGrads,
    ) -> Vec<f64> {
        let n_layers = self.layers.len();
        let mut d_post: Vec<f64> = if self.normalize {
            if trace.degenerate {
                vec![0.0; upstream.len()]
            } else {
                let y: Vec<f64> =
                    trace.post[n_layers - 1].iter().map(|&v| v / trace.norm).collect();
                let dot: f64 = y.iter().zip(upstream).map(|(a, b)| a * b).sum();
                y.iter()
                    .zip(upstream)
                    .map(|(&yi, &ui)| (ui - yi * dot) / trace.norm)
                    .collect()
            }
        } else {
            upstream.to_vec()
        };

        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let dz: Vec<f64> = trace.pre[l]
                .iter()
                .zip(&d_post)
                .map(|(&z, &d)| d * layer.activation.derivative(z))
                .collect();
            let layer_input: &[f64] =
                if l == 0 { &trace.input } else { &trace.post[l - 1] };

            let g = &mut grads.layers[l];
            for (o, &dzo) in dz.iter().enumerate() {
                g.b[o] += dzo;
                let row = &mut g.w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (wg, &xi) in row.iter_mut().zip(layer_input) {
                    *wg += dzo * xi;
                }
            }

            let mut d_prev = vec![0.0; layer.in_dim];
            for (o, &dzo) in dz.iter().enumerate() {
                let row = &self.layers[l].w[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (dp, &wi) in d_prev.iter_mut().zip(row) {
                    *dp += dzo * wi;
                }
            }
            d_post = d_prev;
        }

        // Split the input gradient back into embedding rows; each occurrence
        // of an id accumulates the pooled slice once.
        let mut offset = 0;
        for (f, table) in self.embeddings.iter().enumerate() {
            let slice = &d_post[offset..offset + table.dim];
            for &id in fields[f] {
                let row = grads.embeddings[f]
                    .rows
                    .entry(id)
                    .or_insert_with(|| vec![0.0; table.dim]);
                for (r, &d) in row.iter_mut().zip(slice) {
                    *r += d;
                }
            }
            offset += table.dim;
        }
        d_post
    }

    // Flat parameter layout: embedding tables in order (row-major), then
    // layers in order (W row-major, then b). Shared by gradient checks and
    // checkpoints.

    pub fn param_count(&self) -> usize {
        let emb: usize = self.embeddings.iter().map(|e| e.weights.len()).sum();
        let dense: usize = self.layers.iter().map(|l| l.w.len() + l.b.len()).sum();
        emb + dense
    }

    pub fn export_params(&self, out: &mut Vec<f64>) {
        for e in &self.embeddings {
            out.extend_from_slice(&e.weights);
        }
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }

    pub fn import_params(&mut self, data: &[f64]) -> Result<()> {
        if data.len() != self.param_count() {
            return Err(Error::shape(format!(
                "expected {} params, got {}",
                self.param_count(),
                data.len()
            )));
        }
        let mut o = 0;
        for e in &mut self.embeddings {
            let n = e.weights.len();
            e.weights.copy_from_slice(&data[o..o + n]);
            o += n;
        }
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&data[o..o + nw]);
            o += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&data[o..o + nb]);
            o += nb;
        }
        Ok(())
    }
}

/// Activations recorded by [`Tower::forward`], consumed by [`Tower::backward`].
#[derive(Debug, Clone)]
pub struct TowerTrace {
    pub input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    norm: f64,
    pub degenerate: bool,
}

impl TowerTrace {
    /// Smallest |pre-activation| across all ReLU units; used to keep
    /// finite-difference checks away from kinks.
    pub fn min_relu_margin(&self, layers: &[DenseLayer]) -> f64 {
        let mut min = f64::INFINITY;
        for (l, z) in self.pre.iter().enumerate() {
            if layers[l].activation == Activation::Relu {
                for &v in z {
                    min = min.min(v.abs());
                }
            }
        }
        min
    }

    pub fn pre_norm(&self) -> f64 {
        self.norm
    }
}

/// Gradient for one dense layer, same shapes as the layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Sparse per-row embedding gradient; only touched rows appear. BTreeMap so
/// iteration (and therefore the optimizer update order) is deterministic.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGrad {
    pub dim: usize,
    pub rows: BTreeMap<u32, Vec<f64>>,
}

/// Accumulated gradients for a whole tower.
#[derive(Debug, Clone, PartialEq)]
pub struct TowerGrads {
    pub embeddings: Vec<SparseGrad>,
    pub layers: Vec<DenseGrad>,
}

impl TowerGrads {
    pub fn zeros_like(tower: &Tower) -> TowerGrads {
        TowerGrads {
            embeddings: tower
                .embeddings
                .iter()
                .map(|e| SparseGrad { dim: e.dim, rows: BTreeMap::new() })
                .collect(),
            layers: tower
                .layers
                .iter()
                .map(|l| DenseGrad { w: vec![0.0; l.w.len()], b: vec![0.0; l.b.len()] })
                .collect(),
        }
    }

    pub fn clear(&mut self) {
        for e in &mut self.embeddings {
            e.rows.clear();
        }
        for l in &mut self.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
    }

    /// Multiply every accumulated gradient by `factor` (batch mean scaling).
    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.embeddings {
            for row in e.rows.values_mut() {
                for v in row {
                    *v *= factor;
                }
            }
        }
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(&mut l.b) {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings
            .iter()
            .all(|e| e.rows.values().all(|r| r.iter().all(|v| v.is_finite())))
            && self
                .layers
                .iter()
                .all(|l| l.w.iter().chain(&l.b).all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.embeddings.iter().all(|e| e.rows.values().all(|r| r.iter().all(|&v| v == 0.0)))
            && self.layers.iter().all(|l| l.w.iter().chain(&l.b).all(|&v| v == 0.0))
    }

    /// Densified flat gradient aligned with [`Tower::export_params`] order.
    pub fn export_flat(&self, tower: &Tower, out: &mut Vec<f64>) {
        for (sg, table) in self.embeddings.iter().zip(&tower.embeddings) {
            let start = out.len();
            out.resize(start + table.weights.len(), 0.0);
            for (&id, row) in &sg.rows {
                let o = start + id as usize * table.dim;
                out[o..o + table.dim].copy_from_slice(row);
            }
        }
        for g in &self.layers {
            out.extend_from_slice(&g.w);
            out.extend_from_slice(&g.b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table_from_rows(rows: &[&[f64]]) -> EmbeddingTable {
        let dim = rows[0].len();
        EmbeddingTable {
            rows: rows.len(),
            dim,
            weights: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    #[test]
    fn sum_pool_adds_rows() {
        let t = table_from_rows(&[&[1.0, 2.0], &[3.0, -1.0]]);
        assert_eq!(t.sum_pool(&[0, 1]).unwrap(), vec![4.0, 1.0]);
    }

    #[test]
    fn sum_pool_empty_ids_is_zero() {
        let t = table_from_rows(&[&[1.0, 2.0]]);
        assert_eq!(t.sum_pool(&[]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn sum_pool_counts_duplicates() {
        let t = table_from_rows(&[&[1.5, -0.5]]);
        assert_eq!(t.sum_pool(&[0, 0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn sum_pool_rejects_out_of_range() {
        let t = table_from_rows(&[&[1.0]]);
        assert!(matches!(t.sum_pool(&[3]), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn sum_pool_linear_in_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = EmbeddingTable::init(8, 4, &mut rng);
        let b = EmbeddingTable::init(8, 4, &mut rng);
        let (alpha, beta) = (0.7, -1.3);
        let mixed = EmbeddingTable {
            rows: 8,
            dim: 4,
            weights: a
                .weights
                .iter()
                .zip(&b.weights)
                .map(|(&x, &y)| alpha * x + beta * y)
                .collect(),
        };
        let ids = [3u32, 3, 5, 0];
        let pm = mixed.sum_pool(&ids).unwrap();
        let pa = a.sum_pool(&ids).unwrap();
        let pb = b.sum_pool(&ids).unwrap();
        for i in 0..4 {
            assert!((pm[i] - (alpha * pa[i] + beta * pb[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_relu_clamps() {
        let l = DenseLayer {
            in_dim: 2,
            out_dim: 2,
            w: vec![1.0, 0.0, 0.0, 1.0],
            b: vec![0.0, 0.0],
            activation: Activation::Relu,
        };
        assert_eq!(l.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);
    }

    #[test]
    fn dense_zero_weights_pass_bias() {
        let l = DenseLayer {
            in_dim: 3,
            out_dim: 2,
            w: vec![0.0; 6],
            b: vec![0.25, -0.5],
            activation: Activation::Identity,
        };
        assert_eq!(l.forward(&[9.0, 9.0, 9.0]).unwrap(), vec![0.25, -0.5]);
    }

    #[test]
    fn dense_direct_formula() {
        let l = DenseLayer {
            in_dim: 2,
            out_dim: 1,
            w: vec![1.0, 1.0],
            b: vec![0.5],
            activation: Activation::Identity,
        };
        assert_eq!(l.forward(&[1.0, 2.0]).unwrap(), vec![3.5]);
    }

    #[test]
    fn dense_rejects_shape_mismatch() {
        let l = DenseLayer {
            in_dim: 2,
            out_dim: 1,
            w: vec![1.0, 1.0],
            b: vec![0.0],
            activation: Activation::Identity,
        };
        assert!(l.forward(&[1.0]).is_err());
    }

    #[test]
    fn l2_normalize_three_four_five() {
        let (y, degenerate) = l2_normalize(&[3.0, 4.0]);
        assert!(!degenerate);
        assert!((y[0] - 0.6).abs() < 1e-15);
        assert!((y[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn l2_normalize_idempotent_on_unit() {
        let (y, _) = l2_normalize(&[0.6, 0.8]);
        let (y2, _) = l2_normalize(&y);
        for (a, b) in y.iter().zip(&y2) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn l2_normalize_degenerate_falls_back_to_e1() {
        let (y, degenerate) = l2_normalize(&[0.0, 0.0, 0.0]);
        assert!(degenerate);
        assert_eq!(y, vec![1.0, 0.0, 0.0]);
    }

    /// Linear chain with quadratic loss: dL/dx must match 2Wᵀ(Wx − y).
    #[test]
    fn backward_linear_chain_matches_closed_form() {
        let w = vec![0.5, -1.0, 2.0, 0.25];
        let layer = DenseLayer {
            in_dim: 2,
            out_dim: 2,
            w: w.clone(),
            b: vec![0.0, 0.0],
            activation: Activation::Identity,
        };
        let tower = Tower::new(vec![], 2, vec![layer], false).unwrap();
        let x = [0.3, -0.7];
        let target = [1.0, -1.0];
        let (out, trace) = tower.forward(&[], &x).unwrap();
        let upstream: Vec<f64> = out.iter().zip(&target).map(|(o, t)| 2.0 * (o - t)).collect();
        let mut grads = TowerGrads::zeros_like(&tower);
        let d_input = tower.backward(&[], &trace, &upstream, &mut grads);

        // hand formula: residual r = Wx - y, dx = 2 Wᵀ r, dW = 2 r xᵀ
        let r = [out[0] - target[0], out[1] - target[1]];
        let dx0 = 2.0 * (w[0] * r[0] + w[2] * r[1]);
        let dx1 = 2.0 * (w[1] * r[0] + w[3] * r[1]);
        assert!((d_input[0] - dx0).abs() < 1e-12);
        assert!((d_input[1] - dx1).abs() < 1e-12);
        assert!((grads.layers[0].w[0] - 2.0 * r[0] * x[0]).abs() < 1e-12);
        assert!((grads.layers[0].w[3] - 2.0 * r[1] * x[1]).abs() < 1e-12);
        assert!((grads.layers[0].b[1] - 2.0 * r[1]).abs() < 1e-12);
    }

    #[test]
    fn backward_zero_upstream_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let emb = EmbeddingTable::init(16, 4, &mut rng);
        let l1 = DenseLayer::init(4, 6, Activation::Relu, &mut rng);
        let l2 = DenseLayer::init(6, 3, Activation::Identity, &mut rng);
        let tower = Tower::new(vec![emb], 0, vec![l1, l2], true).unwrap();
        let ids: &[u32] = &[1, 5, 5];
        let (_, trace) = tower.forward(&[ids], &[]).unwrap();
        let mut grads = TowerGrads::zeros_like(&tower);
        tower.backward(&[ids], &trace, &[0.0, 0.0, 0.0], &mut grads);
        assert!(grads.is_zero());
    }

    #[test]
    fn normalized_output_is_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let emb = EmbeddingTable::init(32, 8, &mut rng);
        let l1 = DenseLayer::init(8, 8, Activation::Relu, &mut rng);
        let l2 = DenseLayer::init(8, 4, Activation::Identity, &mut rng);
        let tower = Tower::new(vec![emb], 0, vec![l1, l2], true).unwrap();
        for ids in [&[0u32, 1][..], &[7, 7, 9], &[31]] {
            let out = tower.infer(&[ids], &[]).unwrap();
            let norm: f64 = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn forward_and_infer_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = EmbeddingTable::init(8, 3, &mut rng);
        let l = DenseLayer::init(5, 2, Activation::Relu, &mut rng);
        let tower = Tower::new(vec![emb], 2, vec![l], false).unwrap();
        let ids: &[u32] = &[2, 4];
        let numeric = [0.5, -0.25];
        let (a, _) = tower.forward(&[ids], &numeric).unwrap();
        let b = tower.infer(&[ids], &numeric).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn param_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let emb = EmbeddingTable::init(4, 2, &mut rng);
        let l = DenseLayer::init(2, 3, Activation::Relu, &mut rng);
        let mut tower = Tower::new(vec![emb], 0, vec![l], false).unwrap();
        let mut flat = Vec::new();
        tower.export_params(&mut flat);
        assert_eq!(flat.len(), tower.param_count());
        let orig = tower.clone();
        let modified: Vec<f64> = flat.iter().map(|v| v + 1.0).collect();
        tower.import_params(&modified).unwrap();
        assert_ne!(tower, orig);
        tower.import_params(&flat).unwrap();
        assert_eq!(tower, orig);
    }
}
