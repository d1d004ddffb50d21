//! Synthetic e-commerce corpus with planted ground truth. Every quantity a
//! model is asked to recover is generated from a known closed form, so
//! offline metrics can be checked against an oracle instead of eyeballed:
//!
//! * items live in topic clusters with disjoint vocabularies, and a query
//!   from cluster c is relevant exactly to the items of c;
//! * each item has a latent quality that drives its numeric features, and a
//!   scalar *base utility* that is linear in the featurized numerics;
//! * clicks are Bernoulli draws from a logistic in (utility + impression
//!   noise + position bias), orders are a second logistic conditioned on the
//!   click.
//!
//! The planted sidecar keeps per-item base utilities so evaluation can
//! compare trained rankers against the best possible (oracle) ranking.
//!
//! Generation is a pure function of (config, seed): one ChaCha8 stream,
//! fixed draw order, no iteration over unordered containers.

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::dpr::Pair;
use crate::dsr::Triple;
use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureStats, Featurizer, NumericStats, FEATURE_STATS_SCHEMA_VERSION};

pub const CATALOG_FILE: &str = "catalog.jsonl";
pub const SESSIONS_FILE: &str = "sessions.jsonl";
pub const TRIPLES_FILE: &str = "triples.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const PLANTED_FILE: &str = "planted.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n_items: usize,
    pub n_clusters: usize,
    pub n_users: usize,
    pub n_sessions: usize,
    /// Slate length per session.
    pub presented_per_session: usize,
    /// Probability a slate slot is drawn from the query's cluster.
    pub same_cluster_prob: f64,
    /// Retrieval negatives sampled per click.
    pub negatives_per_click: usize,
    /// Probability a retrieval negative is a hard one (unclicked item from
    /// the same slate) rather than an easy out-of-cluster item.
    pub hard_negative_prob: f64,
    /// Ranking pairs sampled per clicked (and per ordered) item.
    pub pairs_per_positive: usize,
    /// Sessions with `session_id % valid_modulus == 0` form the held-out
    /// split.
    pub valid_modulus: u64,
    /// Std-dev of the per-impression utility noise.
    pub noise_scale: f64,
    /// Position bias strength: the click logit drops by `gamma * ln(pos)`.
    pub position_gamma: f64,
    pub click_slope: f64,
    pub click_bias: f64,
    pub order_slope: f64,
    pub order_bias: f64,
    /// Linear utility weights over the *featurized* item numerics.
    pub utility_weights: Vec<f64>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_items: 5_000,
            n_clusters: 50,
            n_users: 1_000,
            n_sessions: 20_000,
            presented_per_session: 10,
            same_cluster_prob: 0.95,
            negatives_per_click: 1,
            hard_negative_prob: 0.5,
            pairs_per_positive: 2,
            valid_modulus: 10,
            noise_scale: 0.1,
            position_gamma: 0.5,
            click_slope: 1.0,
            // Engagement runs high on purpose: the unclicked remainder of a
            // slate then concentrates in the utility bottom tail, so hard
            // negatives mostly discipline the tail instead of pitting a
            // cluster's good items against each other. A lower bias teaches
            // retrieval to split every cluster along its quality axis, which
            // wrecks same-cluster recall.
            click_bias: 4.5,
            // Utility weights sized so planted utility clearly outweighs the
            // position and noise terms in the click logit; the per-cluster
            // quality baselines keep the wide utility from collapsing into a
            // topic-blind popularity oracle.
            order_slope: 3.5,
            order_bias: -1.0,
            utility_weights: vec![0.5, 0.4, 0.6, 0.6],
        }
    }
}

impl DataConfig {
    pub fn validate(&self, feat: &FeatureConfig) -> Result<()> {
        if self.n_clusters == 0 || self.n_items < self.n_clusters {
            return Err(Error::config(format!(
                "need n_items >= n_clusters >= 1, got {} / {}",
                self.n_items, self.n_clusters
            )));
        }
        if self.n_users == 0 || self.n_sessions == 0 {
            return Err(Error::config("n_users and n_sessions must be >= 1"));
        }
        if self.presented_per_session < 2 || self.presented_per_session > self.n_items {
            return Err(Error::config(format!(
                "presented_per_session must be in [2, n_items], got {}",
                self.presented_per_session
            )));
        }
        for (name, p) in [
            ("same_cluster_prob", self.same_cluster_prob),
            ("hard_negative_prob", self.hard_negative_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must be in [0,1], got {p}")));
            }
        }
        if self.valid_modulus < 2 {
            return Err(Error::config("valid_modulus must be >= 2"));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::config("noise_scale must be finite and >= 0"));
        }
        if self.utility_weights.len() != feat.item_numeric_dim() {
            return Err(Error::config(format!(
                "utility_weights has {} dims, item numerics have {}",
                self.utility_weights.len(),
                feat.item_numeric_dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogRow {
    pub item_id: u64,
    pub cluster_id: u32,
    pub title: String,
    /// Raw (untransformed) numerics: quality score, sale volume, CTR, CVR.
    pub numeric: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresentedItem {
    pub item_id: u64,
    pub clicked: bool,
    pub ordered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub session_id: u64,
    pub user_id: u64,
    pub split: Split,
    pub query: String,
    pub query_cluster: u32,
    pub user_action_text: String,
    /// Raw user numerics: purchasing power, activity.
    pub user_numeric: Vec<f64>,
    /// Slate in presentation order.
    pub presented: Vec<PresentedItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSource {
    /// Uniform item from a different cluster.
    Easy,
    /// Unclicked item from the same slate.
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRow {
    pub session_id: u64,
    pub query: String,
    pub pos_item_id: u64,
    pub neg_item_id: u64,
    pub neg_source: NegativeSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    /// Clicked beats presented-but-unclicked.
    Click,
    /// Ordered beats clicked-but-unordered.
    Order,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub session_id: u64,
    pub query: String,
    pub user_action_text: String,
    pub user_numeric: Vec<f64>,
    pub pos_item_id: u64,
    pub neg_item_id: u64,
    pub source: PairSource,
}

/// Ground-truth sidecar: consumed by oracles, never by models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRow {
    pub item_id: u64,
    pub cluster_id: u32,
    pub base_utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub catalog: Vec<CatalogRow>,
    pub sessions: Vec<SessionRow>,
    pub triples: Vec<TripleRow>,
    pub pairs: Vec<PairRow>,
    pub planted: Vec<PlantedRow>,
}

fn sigmoid(x: f64) -> f64 {
    crate::dpr::sigmoid(x)
}

/// Deterministic pseudo-word pool: every cluster gets a disjoint vocabulary,
/// so token overlap between a query and an item title identifies the cluster
/// exactly.
const SYLLABLES: &[&str] = &[
    "ba", "be", "bi", "bo", "bu", "da", "de", "di", "do", "du", "fa", "fe", "fi", "fo", "fu",
    "ga", "ge", "gi", "go", "gu", "ka", "ke", "ki", "ko", "ku", "la", "le", "li", "lo", "lu",
    "ma", "me", "mi", "mo", "mu", "na", "ne", "ni", "no", "nu", "pa", "pe", "pi", "po", "pu",
    "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "su", "ta", "te", "ti", "to", "tu",
    "va", "ve", "vi", "vo", "vu", "za", "ze", "zi", "zo", "zu",
];

/// Small on purpose: every cluster word (and most adjacent bigrams) must
/// recur across enough training sessions for its embedding row to learn a
/// direction. A wide vocabulary starves each row of gradient steps.
const VOCAB_PER_CLUSTER: usize = 10;
/// Topic-free words mixed into titles so term overlap exists across clusters.
const SHARED_FILLERS: usize = 12;

fn fresh_word<R: Rng>(used: &mut BTreeSet<String>, rng: &mut R) -> String {
    loop {
        let n_syll = rng.random_range(2..=3);
        let word: String =
            (0..n_syll).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect();
        if used.insert(word.clone()) {
            return word;
        }
    }
}

/// Per-cluster vocabularies plus one shared filler pool, all globally
/// disjoint word sets.
fn make_vocabularies<R: Rng>(
    n_clusters: usize,
    rng: &mut R,
) -> (Vec<Vec<String>>, Vec<String>) {
    let mut used: BTreeSet<String> = BTreeSet::new();
    let mut vocabs = Vec::with_capacity(n_clusters);
    for _ in 0..n_clusters {
        vocabs.push((0..VOCAB_PER_CLUSTER).map(|_| fresh_word(&mut used, rng)).collect());
    }
    let fillers = (0..SHARED_FILLERS).map(|_| fresh_word(&mut used, rng)).collect();
    (vocabs, fillers)
}

fn words_from<R: Rng>(vocab: &[String], count: usize, rng: &mut R) -> String {
    let picked = sample(rng, vocab.len(), count.min(vocab.len()));
    picked.iter().map(|i| vocab[i].as_str()).collect::<Vec<_>>().join(" ")
}

struct UserProfile {
    favorite_cluster: usize,
    action_text: String,
    numeric: Vec<f64>,
}

/// Generate the full corpus. Pure in (configs, seed).
pub fn generate(cfg: &DataConfig, feat: &FeatureConfig, seed: u64) -> Result<Dataset> {
    cfg.validate(feat)?;
    feat.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("valid");

    // --- catalog ---
    let (vocabs, fillers) = make_vocabularies(cfg.n_clusters, &mut rng);
    let mut catalog = Vec::with_capacity(cfg.n_items);
    let mut cluster_items: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_clusters];
    // Each cluster gets its own quality baseline, the way real categories
    // differ in price and popularity level. This matters for retrieval
    // training: it ties part of the click signal to cluster identity, so a
    // model cannot satisfy the click data with a topic-blind quality score.
    let cluster_quality: Vec<f64> = (0..cfg.n_clusters).map(|_| std_normal.sample(&mut rng)).collect();
    for item_id in 0..cfg.n_items {
        // Round-robin keeps every cluster non-empty; quality drives all four
        // numerics so they correlate the way real aggregates do.
        let cluster = item_id % cfg.n_clusters;
        let q: f64 = cluster_quality[cluster] + std_normal.sample(&mut rng);
        let quality_score = q + 0.3 * std_normal.sample(&mut rng);
        let sale_volume = (1.0 + 0.8 * q + 0.5 * std_normal.sample(&mut rng)).exp();
        let past_ctr = sigmoid(1.5 * q + 0.4 * std_normal.sample(&mut rng));
        let past_cvr = sigmoid(1.2 * q + 0.4 * std_normal.sample(&mut rng)) * 0.3;
        // Titles mix cluster words with one shared filler, so term overlap
        // across clusters exists and exact term match stays imperfect.
        let n_words = rng.random_range(2..=4);
        let mut title_words: Vec<String> = {
            let picked = sample(&mut rng, vocabs[cluster].len(), n_words);
            picked.iter().map(|i| vocabs[cluster][i].clone()).collect()
        };
        let filler = fillers[rng.random_range(0..fillers.len())].clone();
        title_words.insert(rng.random_range(0..=title_words.len()), filler);
        let title = title_words.join(" ");
        cluster_items[cluster].push(item_id);
        catalog.push(CatalogRow {
            item_id: item_id as u64,
            cluster_id: cluster as u32,
            title,
            numeric: vec![quality_score, sale_volume, past_ctr, past_cvr],
        });
    }

    // --- planted utility: linear in the featurized numerics ---
    let item_stats = NumericStats::fit(
        &catalog.iter().map(|c| c.numeric.clone()).collect::<Vec<_>>(),
        &feat.item_numeric_transforms,
    )?;
    let mut planted = Vec::with_capacity(cfg.n_items);
    let mut base_utility = Vec::with_capacity(cfg.n_items);
    for row in &catalog {
        let g = item_stats.normalize(&row.numeric)?;
        let u: f64 = g.values.iter().zip(&cfg.utility_weights).map(|(a, b)| a * b).sum();
        base_utility.push(u);
        planted.push(PlantedRow { item_id: row.item_id, cluster_id: row.cluster_id, base_utility: u });
    }

    // --- users ---
    let mut users = Vec::with_capacity(cfg.n_users);
    for _ in 0..cfg.n_users {
        let favorite_cluster = rng.random_range(0..cfg.n_clusters);
        let purchasing_power = (0.5 + 0.6 * std_normal.sample(&mut rng)).exp();
        let activity = std_normal.sample(&mut rng);
        let n_words = rng.random_range(2..=4);
        let action_text = words_from(&vocabs[favorite_cluster], n_words, &mut rng);
        users.push(UserProfile {
            favorite_cluster,
            action_text,
            numeric: vec![purchasing_power, activity],
        });
    }

    // --- sessions ---
    let noise = Normal::new(0.0, cfg.noise_scale.max(f64::MIN_POSITIVE)).expect("valid");
    let mut sessions = Vec::with_capacity(cfg.n_sessions);
    let mut triples = Vec::new();
    let mut pairs = Vec::new();
    for session_id in 0..cfg.n_sessions as u64 {
        let user_id = rng.random_range(0..cfg.n_users) as u64;
        let user = &users[user_id as usize];
        // Users query their favorite topic half the time.
        let query_cluster = if rng.random_bool(0.5) {
            user.favorite_cluster
        } else {
            rng.random_range(0..cfg.n_clusters)
        };
        // Short queries: held-out sessions reuse token n-grams the trainer has
        // actually seen, instead of probing untrained embedding rows.
        let n_words = rng.random_range(1..=2);
        let query = words_from(&vocabs[query_cluster], n_words, &mut rng);

        // Distinct slate, mostly from the query's cluster.
        let mut slate: Vec<usize> = Vec::with_capacity(cfg.presented_per_session);
        let mut in_slate: BTreeSet<usize> = BTreeSet::new();
        while slate.len() < cfg.presented_per_session {
            let candidate = if rng.random_bool(cfg.same_cluster_prob) {
                let members = &cluster_items[query_cluster];
                members[rng.random_range(0..members.len())]
            } else {
                rng.random_range(0..cfg.n_items)
            };
            if in_slate.insert(candidate) {
                slate.push(candidate);
            } else if in_slate.len() >= cfg.n_items.min(cluster_items[query_cluster].len())
                && slate.len() < cfg.presented_per_session
            {
                // Tiny catalogs can exhaust a cluster; fall back to the first
                // unused item id.
                for fallback in 0..cfg.n_items {
                    if in_slate.insert(fallback) {
                        slate.push(fallback);
                        break;
                    }
                }
            }
        }

        let mut presented = Vec::with_capacity(slate.len());
        for (pos0, &item_idx) in slate.iter().enumerate() {
            let pos = (pos0 + 1) as f64;
            let u = base_utility[item_idx] + noise.sample(&mut rng);
            let p_click =
                sigmoid(cfg.click_slope * u + cfg.click_bias - cfg.position_gamma * pos.ln());
            let clicked = rng.random_bool(p_click);
            let ordered = if clicked {
                rng.random_bool(sigmoid(cfg.order_slope * u + cfg.order_bias))
            } else {
                false
            };
            presented.push(PresentedItem { item_id: item_idx as u64, clicked, ordered });
        }

        let split = if session_id % cfg.valid_modulus == 0 { Split::Valid } else { Split::Train };

        if split == Split::Train {
            let clicked_idx: Vec<usize> =
                (0..presented.len()).filter(|&i| presented[i].clicked).collect();
            let unclicked_idx: Vec<usize> =
                (0..presented.len()).filter(|&i| !presented[i].clicked).collect();

            // Retrieval triples: per click, a mix of hard (same slate,
            // unclicked) and easy (different cluster) negatives.
            for &ci in &clicked_idx {
                let pos_item = presented[ci].item_id;
                for _ in 0..cfg.negatives_per_click {
                    let hard = !unclicked_idx.is_empty() && rng.random_bool(cfg.hard_negative_prob);
                    let (neg_item, source) = if hard {
                        let pick = unclicked_idx[rng.random_range(0..unclicked_idx.len())];
                        (presented[pick].item_id, NegativeSource::Hard)
                    } else {
                        // Rejection-sample an out-of-cluster item; guaranteed
                        // to exist because n_clusters >= 2 in any config that
                        // reaches here with multiple clusters.
                        let mut neg = rng.random_range(0..cfg.n_items);
                        let mut guard = 0;
                        while catalog[neg].cluster_id as usize == query_cluster && guard < 1000 {
                            neg = rng.random_range(0..cfg.n_items);
                            guard += 1;
                        }
                        (neg as u64, NegativeSource::Easy)
                    };
                    triples.push(TripleRow {
                        session_id,
                        query: query.clone(),
                        pos_item_id: pos_item,
                        neg_item_id: neg_item,
                        neg_source: source,
                    });
                }
            }

            // Ranking pairs: click beats unclicked, order beats click-only.
            for &ci in &clicked_idx {
                if unclicked_idx.is_empty() {
                    break;
                }
                for _ in 0..cfg.pairs_per_positive {
                    let pick = unclicked_idx[rng.random_range(0..unclicked_idx.len())];
                    pairs.push(PairRow {
                        session_id,
                        query: query.clone(),
                        user_action_text: user.action_text.clone(),
                        user_numeric: user.numeric.clone(),
                        pos_item_id: presented[ci].item_id,
                        neg_item_id: presented[pick].item_id,
                        source: PairSource::Click,
                    });
                }
            }
            let ordered_idx: Vec<usize> =
                (0..presented.len()).filter(|&i| presented[i].ordered).collect();
            let click_only_idx: Vec<usize> = (0..presented.len())
                .filter(|&i| presented[i].clicked && !presented[i].ordered)
                .collect();
            for &oi in &ordered_idx {
                if click_only_idx.is_empty() {
                    break;
                }
                for _ in 0..cfg.pairs_per_positive {
                    let pick = click_only_idx[rng.random_range(0..click_only_idx.len())];
                    pairs.push(PairRow {
                        session_id,
                        query: query.clone(),
                        user_action_text: user.action_text.clone(),
                        user_numeric: user.numeric.clone(),
                        pos_item_id: presented[oi].item_id,
                        neg_item_id: presented[pick].item_id,
                        source: PairSource::Order,
                    });
                }
            }
        }

        sessions.push(SessionRow {
            session_id,
            user_id,
            split,
            query,
            query_cluster: query_cluster as u32,
            user_action_text: user.action_text.clone(),
            user_numeric: user.numeric.clone(),
            presented,
        });
    }

    Ok(Dataset { catalog, sessions, triples, pairs, planted })
}

// --- JSONL I/O ---

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        for row in rows {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut rows = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&line).map_err(|e| {
            Error::data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        rows.push(row);
    }
    Ok(rows)
}

impl Dataset {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_jsonl(&dir.join(CATALOG_FILE), &self.catalog)?;
        write_jsonl(&dir.join(SESSIONS_FILE), &self.sessions)?;
        write_jsonl(&dir.join(TRIPLES_FILE), &self.triples)?;
        write_jsonl(&dir.join(PAIRS_FILE), &self.pairs)?;
        write_jsonl(&dir.join(PLANTED_FILE), &self.planted)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Dataset> {
        Ok(Dataset {
            catalog: read_jsonl(&dir.join(CATALOG_FILE))?,
            sessions: read_jsonl(&dir.join(SESSIONS_FILE))?,
            triples: read_jsonl(&dir.join(TRIPLES_FILE))?,
            pairs: read_jsonl(&dir.join(PAIRS_FILE))?,
            planted: read_jsonl(&dir.join(PLANTED_FILE))?,
        })
    }

    pub fn catalog_by_id(&self) -> BTreeMap<u64, &CatalogRow> {
        self.catalog.iter().map(|c| (c.item_id, c)).collect()
    }

    pub fn sessions_in(&self, split: Split) -> impl Iterator<Item = &SessionRow> {
        self.sessions.iter().filter(move |s| s.split == split)
    }
}

/// Fit feature stats the way serving sees them: item stats over the whole
/// catalog, user stats over training sessions only.
pub fn fit_stats(ds: &Dataset, feat: &FeatureConfig) -> Result<FeatureStats> {
    let item_rows: Vec<Vec<f64>> = ds.catalog.iter().map(|c| c.numeric.clone()).collect();
    let user_rows: Vec<Vec<f64>> =
        ds.sessions_in(Split::Train).map(|s| s.user_numeric.clone()).collect();
    if user_rows.is_empty() {
        return Err(Error::data("no training sessions to fit user stats on"));
    }
    Ok(FeatureStats {
        schema_version: FEATURE_STATS_SCHEMA_VERSION,
        item: NumericStats::fit(&item_rows, &feat.item_numeric_transforms)?,
        user: NumericStats::fit(&user_rows, &feat.user_numeric_transforms)?,
    })
}

/// Featurize retrieval triples against the catalog.
pub fn featurize_triples(ds: &Dataset, fz: &Featurizer) -> Result<Vec<Triple>> {
    let by_id = ds.catalog_by_id();
    let lookup = |id: u64| -> Result<&CatalogRow> {
        by_id.get(&id).copied().ok_or_else(|| Error::data(format!("triple references unknown item {id}")))
    };
    let mut out = Vec::with_capacity(ds.triples.len());
    for t in &ds.triples {
        let pos = lookup(t.pos_item_id)?;
        let neg = lookup(t.neg_item_id)?;
        out.push(Triple {
            query: fz.query(&t.query)?,
            positive: fz.item(pos.item_id, &pos.title, &pos.numeric)?,
            negative: fz.item(neg.item_id, &neg.title, &neg.numeric)?,
        });
    }
    Ok(out)
}

/// Featurize ranking pairs against the catalog.
pub fn featurize_pairs(ds: &Dataset, fz: &Featurizer) -> Result<Vec<Pair>> {
    let by_id = ds.catalog_by_id();
    let lookup = |id: u64| -> Result<&CatalogRow> {
        by_id.get(&id).copied().ok_or_else(|| Error::data(format!("pair references unknown item {id}")))
    };
    let mut out = Vec::with_capacity(ds.pairs.len());
    for p in &ds.pairs {
        let pos = lookup(p.pos_item_id)?;
        let neg = lookup(p.neg_item_id)?;
        out.push(Pair {
            user: fz.user(&p.user_action_text, &p.user_numeric)?,
            query: fz.query(&p.query)?,
            pos: fz.item(pos.item_id, &pos.title, &pos.numeric)?,
            neg: fz.item(neg.item_id, &neg.title, &neg.numeric)?,
        });
    }
    Ok(out)
}
