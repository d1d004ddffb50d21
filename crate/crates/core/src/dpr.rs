//! Deep pairwise ranking: one tower scores a (user, query, item) triple to a
//! scalar logit; training pushes the logit difference of a preferred/other
//! item pair through binary cross-entropy. Because both pair sides share the
//! single tower, serving needs only one forward pass per candidate — scoring
//! a slate of N items is N evaluations, never N^2.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, ItemFeatures, QueryFeatures, UserContext};
use crate::nn::{
    Activation, AdamConfig, DenseLayer, EmbeddingTable, Tower, TowerGrads, TowerOptimizer,
};
use crate::persist;

pub const DPR_MAGIC: &[u8; 4] = b"DPRM";

/// Candidate count the serving layer re-ranks after retrieval.
pub const DEFAULT_RERANK_DEPTH: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DprConfig {
    /// Pooled embedding width for user action tokens.
    pub user_dim: usize,
    /// Pooled embedding width for query tokens.
    pub query_dim: usize,
    /// Pooled embedding width for item title tokens.
    pub item_dim: usize,
    /// Hidden ReLU widths; a 1-unit identity output layer is appended.
    pub hidden_dims: Vec<usize>,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
}

impl Default for DprConfig {
    fn default() -> Self {
        DprConfig {
            user_dim: 32,
            query_dim: 32,
            item_dim: 32,
            hidden_dims: vec![256, 64, 16],
            batch_size: 256,
            epochs: 5,
            adam: AdamConfig::default(),
        }
    }
}

impl DprConfig {
    pub fn validate(&self) -> Result<()> {
        if self.user_dim == 0 || self.query_dim == 0 || self.item_dim == 0 {
            return Err(Error::config("embedding dimensions must be positive"));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::config("hidden_dims must be non-empty and positive"));
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

/// Numerically stable `ln(1 + exp(x))`.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of the pair outcome "first side wins" given logit
/// difference `delta`: `-ln sigmoid(delta) = softplus(-delta)`.
#[inline]
pub fn pairwise_loss(delta: f64) -> f64 {
    softplus(-delta)
}

/// `d pairwise_loss / d delta = sigmoid(delta) - 1`.
#[inline]
pub fn pairwise_loss_grad(delta: f64) -> f64 {
    sigmoid(delta) - 1.0
}

/// One featurized preference: the session preferred `pos` over `neg` under
/// the same user and query. Swapping the sides encodes the opposite label.
#[derive(Debug, Clone)]
pub struct Pair {
    pub user: UserContext,
    pub query: QueryFeatures,
    pub pos: ItemFeatures,
    pub neg: ItemFeatures,
}

/// One re-ranked candidate; `index` points into the input slate.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedItem {
    pub index: usize,
    pub item_id: u64,
    pub logit: f64,
}

/// Single-tower pairwise ranker. Field order: user action tokens, query
/// tokens, item tokens; numeric tail: user dims then item dims.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseModel {
    pub tower: Tower,
}

impl PairwiseModel {
    pub fn init<R: Rng>(cfg: &DprConfig, feat: &FeatureConfig, rng: &mut R) -> Result<PairwiseModel> {
        cfg.validate()?;
        feat.validate()?;
        let embeddings = vec![
            EmbeddingTable::init(feat.user_action_buckets as usize, cfg.user_dim, rng),
            EmbeddingTable::init(feat.query_buckets as usize, cfg.query_dim, rng),
            EmbeddingTable::init(feat.item_buckets as usize, cfg.item_dim, rng),
        ];
        let numeric_dim = feat.user_numeric_dim() + feat.item_numeric_dim();
        let mut layers = Vec::with_capacity(cfg.hidden_dims.len() + 1);
        let mut in_dim = cfg.user_dim + cfg.query_dim + cfg.item_dim + numeric_dim;
        for &h in &cfg.hidden_dims {
            layers.push(DenseLayer::init(in_dim, h, Activation::Relu, rng));
            in_dim = h;
        }
        layers.push(DenseLayer::init(in_dim, 1, Activation::Identity, rng));
        Ok(PairwiseModel { tower: Tower::new(embeddings, numeric_dim, layers, false)? })
    }

    fn check(&self, user: &UserContext, query: &QueryFeatures, item: &ItemFeatures) -> Result<()> {
        let tables = &self.tower.embeddings;
        for (name, buckets, rows) in [
            ("user action", user.action_tokens.num_buckets, tables[0].rows),
            ("query", query.tokens.num_buckets, tables[1].rows),
            ("item", item.tokens.num_buckets, tables[2].rows),
        ] {
            if buckets as usize != rows {
                return Err(Error::config(format!(
                    "{name} tokens hashed into {buckets} buckets but model has {rows} rows"
                )));
            }
        }
        Ok(())
    }

    fn numeric(&self, user: &UserContext, item: &ItemFeatures) -> Vec<f64> {
        let mut n = Vec::with_capacity(self.tower.numeric_dim);
        n.extend_from_slice(&user.numeric.values);
        n.extend_from_slice(&item.numeric.values);
        n
    }

    /// Raw preference logit for one candidate.
    pub fn logit(&self, user: &UserContext, query: &QueryFeatures, item: &ItemFeatures) -> Result<f64> {
        self.check(user, query, item)?;
        let fields = [
            user.action_tokens.ids.as_slice(),
            query.tokens.ids.as_slice(),
            item.tokens.ids.as_slice(),
        ];
        let out = self.tower.infer(&fields, &self.numeric(user, item))?;
        Ok(out[0])
    }

    /// Score every candidate with one tower pass each.
    pub fn score_slate(
        &self,
        user: &UserContext,
        query: &QueryFeatures,
        items: &[ItemFeatures],
    ) -> Result<Vec<f64>> {
        items.iter().map(|it| self.logit(user, query, it)).collect()
    }

    /// Order candidates by descending logit; exact ties fall back to
    /// ascending item id so the ordering is total and deterministic.
    pub fn rerank(
        &self,
        user: &UserContext,
        query: &QueryFeatures,
        items: &[ItemFeatures],
    ) -> Result<Vec<RankedItem>> {
        let logits = self.score_slate(user, query, items)?;
        if let Some(bad) = logits.iter().find(|l| !l.is_finite()) {
            return Err(Error::Numeric(format!("non-finite logit {bad} while re-ranking")));
        }
        let mut ranked: Vec<RankedItem> = logits
            .into_iter()
            .enumerate()
            .map(|(index, logit)| RankedItem { index, item_id: items[index].item_id, logit })
            .collect();
        ranked.sort_by(|a, b| {
            b.logit
                .partial_cmp(&a.logit)
                .unwrap_or(Ordering::Equal)
                .then(a.item_id.cmp(&b.item_id))
        });
        Ok(ranked)
    }

    pub fn param_count(&self) -> usize {
        self.tower.param_count()
    }

    pub fn export_params(&self, out: &mut Vec<f64>) {
        self.tower.export_params(out);
    }

    pub fn import_params(&mut self, data: &[f64]) -> Result<()> {
        self.tower.import_params(data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        persist::save_towers(path, DPR_MAGIC, &[("pairwise", &self.tower)])
    }

    pub fn load(path: &Path) -> Result<PairwiseModel> {
        let mut towers = persist::load_towers(path, DPR_MAGIC)?;
        if towers.len() != 1 || towers[0].0 != "pairwise" {
            return Err(Error::format(0, "checkpoint must contain exactly the pairwise tower"));
        }
        let tower = towers.pop().expect("length checked").1;
        if tower.normalize || tower.output_dim() != 1 || tower.embeddings.len() != 3 {
            return Err(Error::format(0, "tower shape is not a pairwise ranker"));
        }
        Ok(PairwiseModel { tower })
    }
}

/// Loss and backward for one pair; gradients accumulate into `grads`.
pub fn pair_loss_and_backward(
    model: &PairwiseModel,
    pair: &Pair,
    grads: &mut TowerGrads,
) -> Result<f64> {
    model.check(&pair.user, &pair.query, &pair.pos)?;
    model.check(&pair.user, &pair.query, &pair.neg)?;
    let pos_fields = [
        pair.user.action_tokens.ids.as_slice(),
        pair.query.tokens.ids.as_slice(),
        pair.pos.tokens.ids.as_slice(),
    ];
    let neg_fields = [
        pair.user.action_tokens.ids.as_slice(),
        pair.query.tokens.ids.as_slice(),
        pair.neg.tokens.ids.as_slice(),
    ];
    let pos_numeric = model.numeric(&pair.user, &pair.pos);
    let neg_numeric = model.numeric(&pair.user, &pair.neg);
    let (pos_out, pos_trace) = model.tower.forward(&pos_fields, &pos_numeric)?;
    let (neg_out, neg_trace) = model.tower.forward(&neg_fields, &neg_numeric)?;
    let delta = pos_out[0] - neg_out[0];
    let g = pairwise_loss_grad(delta);
    model.tower.backward(&pos_fields, &pos_trace, &[g], grads);
    model.tower.backward(&neg_fields, &neg_trace, &[-g], grads);
    Ok(pairwise_loss(delta))
}

/// Per-epoch training summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DprTrainReport {
    pub epoch_mean_loss: Vec<f64>,
    /// Fraction of training pairs already ordered correctly (delta > 0).
    pub epoch_pair_accuracy: Vec<f64>,
    pub steps: u64,
}

/// Minibatch Adam over shuffled pairs with mean loss reduction per batch.
pub fn train_dpr(
    model: &mut PairwiseModel,
    pairs: &[Pair],
    cfg: &DprConfig,
    seed: u64,
) -> Result<DprTrainReport> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::data("no training pairs"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut opt = TowerOptimizer::new(cfg.adam, &model.tower);
    let mut grads = TowerGrads::zeros_like(&model.tower);
    let mut report = DprTrainReport {
        epoch_mean_loss: Vec::with_capacity(cfg.epochs),
        epoch_pair_accuracy: Vec::with_capacity(cfg.epochs),
        steps: 0,
    };
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &idx in batch {
                let loss = pair_loss_and_backward(model, &pairs[idx], &mut grads)?;
                // loss < ln 2 iff delta > 0 iff the pair is already ordered.
                if loss < std::f64::consts::LN_2 {
                    correct += 1;
                }
                loss_sum += loss;
            }
            grads.scale(1.0 / batch.len() as f64);
            report.steps += 1;
            opt.step(&mut model.tower, &grads, report.steps)?;
        }
        report.epoch_mean_loss.push(loss_sum / pairs.len() as f64);
        report.epoch_pair_accuracy.push(correct as f64 / pairs.len() as f64);
    }
    Ok(report)
}
