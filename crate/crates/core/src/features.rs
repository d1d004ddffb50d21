//! Featurization shared by the retrieval and ranking models: raw query/item/
//! user text becomes hashed sparse token ids, raw numeric attributes become
//! z-scored dense vectors.
//!
//! Tokens are lowercased whitespace unigrams plus adjacent bigrams, mapped
//! into fixed per-field bucket spaces with the hashing trick (FNV-1a 64),
//! so there is no vocabulary to ship and cold tokens are well-defined.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joiner between the two halves of a bigram. U+2581 cannot appear in a
/// whitespace-split unigram, so bigrams never collide with natural text.
pub const BIGRAM_JOINER: char = '\u{2581}';

/// Unigrams and adjacent bigrams of one text field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenList {
    pub unigrams: Vec<String>,
    pub bigrams: Vec<String>,
}

impl TokenList {
    pub fn is_empty(&self) -> bool {
        self.unigrams.is_empty()
    }
}

/// Lowercase whitespace tokenization into unigrams and bigrams.
///
/// Total over valid Unicode; empty or all-whitespace text yields empty lists.
pub fn tokenize(text: &str) -> TokenList {
    let unigrams: Vec<String> = text.split_whitespace().map(|t| t.to_lowercase()).collect();
    let bigrams = unigrams
        .windows(2)
        .map(|w| {
            let mut b = String::with_capacity(w[0].len() + w[1].len() + 3);
            b.push_str(&w[0]);
            b.push(BIGRAM_JOINER);
            b.push_str(&w[1]);
            b
        })
        .collect();
    TokenList { unigrams, bigrams }
}

/// FNV-1a 64-bit over the token's UTF-8 bytes.
pub fn fnv1a64(token: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for &b in token.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

/// Token ids in `[0, num_buckets)`, unigrams first then bigrams, duplicates
/// preserved so sum pooling weights repeats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedFeatures {
    pub ids: Vec<u32>,
    pub num_buckets: u32,
}

impl HashedFeatures {
    pub fn empty(num_buckets: u32) -> Self {
        HashedFeatures { ids: Vec::new(), num_buckets }
    }
}

fn check_buckets(num_buckets: u32) -> Result<()> {
    if num_buckets < 2 || !num_buckets.is_power_of_two() {
        return Err(Error::config(format!(
            "num_buckets must be a power of two >= 2, got {num_buckets}"
        )));
    }
    Ok(())
}

/// Hash every unigram then every bigram into `[0, num_buckets)`, order and
/// duplicates preserved.
pub fn hash_tokens(tokens: &TokenList, num_buckets: u32) -> Result<HashedFeatures> {
    check_buckets(num_buckets)?;
    let nb = u64::from(num_buckets);
    let ids = tokens
        .unigrams
        .iter()
        .chain(tokens.bigrams.iter())
        .map(|t| (fnv1a64(t) % nb) as u32)
        .collect();
    Ok(HashedFeatures { ids, num_buckets })
}

/// Convenience: tokenize then hash in one call.
pub fn hash_text(text: &str, num_buckets: u32) -> Result<HashedFeatures> {
    hash_tokens(&tokenize(text), num_buckets)
}

/// Per-dimension preprocessing applied before z-scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Plain z-score.
    ZScore,
    /// log1p first, then z-score. For heavy-tailed count-like dims.
    Log1pZScore,
}

impl Transform {
    fn apply(self, x: f64) -> f64 {
        match self {
            Transform::ZScore => x,
            Transform::Log1pZScore => x.ln_1p(),
        }
    }
}

/// Fixed-length normalized dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericFeatures {
    pub values: Vec<f64>,
}

/// Per-dimension mean/stddev fitted on the training split, in transformed
/// space. Population stddev; dims with stddev below `CONST_EPS` are flagged
/// constant and normalize to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericStats {
    pub transforms: Vec<Transform>,
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    pub constant: Vec<bool>,
}

const CONST_EPS: f64 = 1e-12;

impl NumericStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Fit mean/stddev over `rows` (each of length `transforms.len()`),
    /// applying each dim's transform first.
    pub fn fit(rows: &[Vec<f64>], transforms: &[Transform]) -> Result<NumericStats> {
        let dim = transforms.len();
        if rows.is_empty() {
            return Err(Error::data("cannot fit numeric stats on an empty split"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::shape(format!(
                    "row {i} has {} dims, expected {dim}",
                    r.len()
                )));
            }
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (d, &x) in r.iter().enumerate() {
                mean[d] += transforms[d].apply(x);
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for (d, &x) in r.iter().enumerate() {
                let t = transforms[d].apply(x) - mean[d];
                var[d] += t * t;
            }
        }
        let mut stddev = vec![0.0; dim];
        let mut constant = vec![false; dim];
        for d in 0..dim {
            stddev[d] = (var[d] / n).sqrt();
            constant[d] = stddev[d] < CONST_EPS;
        }
        Ok(NumericStats { transforms: transforms.to_vec(), mean, stddev, constant })
    }

    /// `(transform(x) - mean) / stddev` per dim; constant dims map to 0.
    pub fn normalize(&self, raw: &[f64]) -> Result<NumericFeatures> {
        if raw.len() != self.dim() {
            return Err(Error::shape(format!(
                "numeric vector has {} dims, stats expect {}",
                raw.len(),
                self.dim()
            )));
        }
        let mut values = Vec::with_capacity(raw.len());
        for (d, &x) in raw.iter().enumerate() {
            let v = if self.constant[d] {
                0.0
            } else {
                (self.transforms[d].apply(x) - self.mean[d]) / self.stddev[d]
            };
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite normalized value at dim {d} (raw {x})"
                )));
            }
            values.push(v);
        }
        Ok(NumericFeatures { values })
    }
}

/// Query-side input: hashed query tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFeatures {
    pub tokens: HashedFeatures,
}

/// Item-side input: id, hashed title tokens, normalized numeric attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFeatures {
    pub item_id: u64,
    pub tokens: HashedFeatures,
    pub numeric: NumericFeatures,
}

/// User-side input: hashed historical click-stream tokens plus normalized
/// numeric attributes (purchasing power and the like). Token lists may be
/// empty for cold users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserContext {
    pub action_tokens: HashedFeatures,
    pub numeric: NumericFeatures,
}

/// Bucket sizes and numeric schemas per field. Separate bucket spaces per
/// field; defaults are sized for desk-scale runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub schema_version: u32,
    pub query_buckets: u32,
    pub item_buckets: u32,
    pub user_action_buckets: u32,
    pub item_numeric_transforms: Vec<Transform>,
    pub user_numeric_transforms: Vec<Transform>,
}

pub const FEATURE_CONFIG_SCHEMA_VERSION: u32 = 1;

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            schema_version: FEATURE_CONFIG_SCHEMA_VERSION,
            query_buckets: 1 << 16,
            item_buckets: 1 << 16,
            user_action_buckets: 1 << 16,
            // quality score, sale volume (count-like), past CTR, past CVR
            item_numeric_transforms: vec![
                Transform::ZScore,
                Transform::Log1pZScore,
                Transform::ZScore,
                Transform::ZScore,
            ],
            // purchasing power (count-like), activity level
            user_numeric_transforms: vec![Transform::Log1pZScore, Transform::ZScore],
        }
    }
}

impl FeatureConfig {
    pub fn item_numeric_dim(&self) -> usize {
        self.item_numeric_transforms.len()
    }

    pub fn user_numeric_dim(&self) -> usize {
        self.user_numeric_transforms.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != FEATURE_CONFIG_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported feature config schema_version {}",
                self.schema_version
            )));
        }
        check_buckets(self.query_buckets)?;
        check_buckets(self.item_buckets)?;
        check_buckets(self.user_action_buckets)?;
        Ok(())
    }
}

/// Fitted stats file contents: one [`NumericStats`] per numeric entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub schema_version: u32,
    pub item: NumericStats,
    pub user: NumericStats,
}

pub const FEATURE_STATS_SCHEMA_VERSION: u32 = 1;

/// Config plus fitted stats: everything needed to featurize raw inputs.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub config: FeatureConfig,
    pub stats: FeatureStats,
}

impl Featurizer {
    pub fn new(config: FeatureConfig, stats: FeatureStats) -> Result<Featurizer> {
        config.validate()?;
        if stats.schema_version != FEATURE_STATS_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported feature stats schema_version {}",
                stats.schema_version
            )));
        }
        if stats.item.dim() != config.item_numeric_dim() {
            return Err(Error::shape(format!(
                "item stats dim {} != config dim {}",
                stats.item.dim(),
                config.item_numeric_dim()
            )));
        }
        if stats.user.dim() != config.user_numeric_dim() {
            return Err(Error::shape(format!(
                "user stats dim {} != config dim {}",
                stats.user.dim(),
                config.user_numeric_dim()
            )));
        }
        Ok(Featurizer { config, stats })
    }

    pub fn query(&self, text: &str) -> Result<QueryFeatures> {
        Ok(QueryFeatures { tokens: hash_text(text, self.config.query_buckets)? })
    }

    pub fn item(&self, item_id: u64, title: &str, numeric: &[f64]) -> Result<ItemFeatures> {
        Ok(ItemFeatures {
            item_id,
            tokens: hash_text(title, self.config.item_buckets)?,
            numeric: self.stats.item.normalize(numeric)?,
        })
    }

    pub fn user(&self, action_text: &str, numeric: &[f64]) -> Result<UserContext> {
        Ok(UserContext {
            action_tokens: hash_text(action_text, self.config.user_action_buckets)?,
            numeric: self.stats.user.normalize(numeric)?,
        })
    }

    /// Serialize config and stats as one JSON artifact (atomic rename).
    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        #[derive(Serialize)]
        struct Bundle<'a> {
            config: &'a FeatureConfig,
            stats: &'a FeatureStats,
        }
        let tmp = path.with_extension("tmp");
        let mut body =
            serde_json::to_string_pretty(&Bundle { config: &self.config, stats: &self.stats })?;
        body.push('\n');
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Featurizer> {
        #[derive(Deserialize)]
        struct Bundle {
            config: FeatureConfig,
            stats: FeatureStats,
        }
        let body = std::fs::read_to_string(path)?;
        let bundle: Bundle = serde_json::from_str(&body)?;
        Featurizer::new(bundle.config, bundle.stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_unigrams_and_bigrams() {
        let t = tokenize("red running shoe");
        assert_eq!(t.unigrams, vec!["red", "running", "shoe"]);
        assert_eq!(t.bigrams, vec!["red\u{2581}running", "running\u{2581}shoe"]);
    }

    #[test]
    fn tokenize_empty_text() {
        let t = tokenize("");
        assert!(t.unigrams.is_empty());
        assert!(t.bigrams.is_empty());
        let t = tokenize("   \t\n");
        assert!(t.unigrams.is_empty());
        assert!(t.bigrams.is_empty());
    }

    #[test]
    fn tokenize_single_token_lowercases() {
        let t = tokenize("Shoe");
        assert_eq!(t.unigrams, vec!["shoe"]);
        assert!(t.bigrams.is_empty());
    }

    // Reference value computed with an independent FNV-1a 64 implementation.
    #[test]
    fn fnv1a64_reference_values() {
        assert_eq!(fnv1a64("red"), 0x89e9_be19_60f4_c21c);
        assert_eq!(fnv1a64("red") % 1024, 540);
        assert_eq!(fnv1a64("shoe") % 1024, 498);
        assert_eq!(fnv1a64("red\u{2581}running") % 65536, 35422);
    }

    #[test]
    fn hash_tokens_is_deterministic_and_ordered() {
        let t = tokenize("red running shoe");
        let a = hash_tokens(&t, 1024).unwrap();
        let b = hash_tokens(&t, 1024).unwrap();
        assert_eq!(a, b);
        // unigrams first, then bigrams, order preserved
        assert_eq!(a.ids.len(), 5);
        assert_eq!(a.ids[0], 540); // "red"
        assert!(a.ids.iter().all(|&id| id < 1024));
    }

    #[test]
    fn hash_tokens_preserves_duplicates() {
        let t = TokenList { unigrams: vec!["a".into(), "a".into()], bigrams: vec![] };
        let h = hash_tokens(&t, 64).unwrap();
        assert_eq!(h.ids.len(), 2);
        assert_eq!(h.ids[0], h.ids[1]);
    }

    #[test]
    fn hash_tokens_rejects_bad_buckets() {
        let t = tokenize("x");
        assert!(hash_tokens(&t, 0).is_err());
        assert!(hash_tokens(&t, 1).is_err());
        assert!(hash_tokens(&t, 1000).is_err()); // not a power of two
    }

    #[test]
    fn normalize_centering_and_scaling() {
        let rows = vec![vec![1.0, 10.0], vec![3.0, 10.0], vec![5.0, 10.0]];
        let stats = NumericStats::fit(&rows, &[Transform::ZScore, Transform::ZScore]).unwrap();
        // mean vector maps to zeros
        let z = stats.normalize(&[3.0, 10.0]).unwrap();
        assert!(z.values[0].abs() < 1e-12);
        // constant dim maps to 0 regardless of raw value
        assert!(stats.constant[1]);
        let z = stats.normalize(&[1.0, 123.0]).unwrap();
        assert_eq!(z.values[1], 0.0);
    }

    #[test]
    fn normalize_direct_formula() {
        let stats = NumericStats {
            transforms: vec![Transform::ZScore],
            mean: vec![3.0],
            stddev: vec![2.0],
            constant: vec![false],
        };
        let z = stats.normalize(&[5.0]).unwrap();
        assert!((z.values[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_rejects_length_mismatch() {
        let stats = NumericStats {
            transforms: vec![Transform::ZScore],
            mean: vec![0.0],
            stddev: vec![1.0],
            constant: vec![false],
        };
        assert!(matches!(stats.normalize(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn fitted_split_has_zero_mean_unit_stddev() {
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|i| vec![i as f64 * 0.37 - 5.0, (i as f64).powi(2) * 0.01])
            .collect();
        let tf = [Transform::ZScore, Transform::Log1pZScore];
        let stats = NumericStats::fit(&rows, &tf).unwrap();
        let normed: Vec<Vec<f64>> =
            rows.iter().map(|r| stats.normalize(r).unwrap().values).collect();
        for d in 0..2 {
            let n = normed.len() as f64;
            let mean: f64 = normed.iter().map(|r| r[d]).sum::<f64>() / n;
            let var: f64 = normed.iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9, "dim {d} mean {mean}");
            assert!((var.sqrt() - 1.0).abs() < 1e-9, "dim {d} stddev {}", var.sqrt());
        }
    }

    #[test]
    fn log1p_transform_applied_before_zscore() {
        let rows = vec![vec![0.0], vec![(1f64).exp() - 1.0]]; // ln1p -> {0, 1}
        let stats = NumericStats::fit(&rows, &[Transform::Log1pZScore]).unwrap();
        assert!((stats.mean[0] - 0.5).abs() < 1e-12);
        assert!((stats.stddev[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn featurizer_roundtrip() {
        let config = FeatureConfig::default();
        let item_rows = vec![vec![0.0, 1.0, 0.1, 0.01], vec![1.0, 100.0, 0.3, 0.05]];
        let user_rows = vec![vec![10.0, 0.0], vec![100.0, 1.0]];
        let stats = FeatureStats {
            schema_version: FEATURE_STATS_SCHEMA_VERSION,
            item: NumericStats::fit(&item_rows, &config.item_numeric_transforms).unwrap(),
            user: NumericStats::fit(&user_rows, &config.user_numeric_transforms).unwrap(),
        };
        let fz = Featurizer::new(config, stats).unwrap();
        let q = fz.query("Red Shoe").unwrap();
        assert_eq!(q.tokens.ids.len(), 3);
        let item = fz.item(7, "red running shoe", &[0.5, 10.0, 0.2, 0.02]).unwrap();
        assert_eq!(item.item_id, 7);
        assert_eq!(item.numeric.values.len(), 4);
        // cold user: empty action text is accepted
        let u = fz.user("", &[50.0, 0.5]).unwrap();
        assert!(u.action_tokens.ids.is_empty());
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        // |ids| = n + (n - 1) for any text with n >= 1 unigrams.
        #[test]
        fn id_count_matches_ngram_count(words in proptest::collection::vec("[a-z]{1,8}", 1..20)) {
            let text = words.join(" ");
            let t = tokenize(&text);
            let n = t.unigrams.len();
            prop_assert_eq!(t.bigrams.len(), n - 1);
            let h = hash_tokens(&t, 4096).unwrap();
            prop_assert_eq!(h.ids.len(), 2 * n - 1);
            prop_assert!(h.ids.iter().all(|&id| id < 4096));
        }

        // tokenize + hash is total and deterministic over arbitrary unicode.
        #[test]
        fn hashing_total_and_deterministic(text in "\\PC{0,64}") {
            let a = hash_text(&text, 256).unwrap();
            let b = hash_text(&text, 256).unwrap();
            prop_assert_eq!(a, b);
        }

        // bigram reconstruction invariant
        #[test]
        fn bigrams_join_adjacent_unigrams(words in proptest::collection::vec("[a-z]{1,6}", 2..10)) {
            let t = tokenize(&words.join(" "));
            for (i, b) in t.bigrams.iter().enumerate() {
                let expect = format!("{}{}{}", t.unigrams[i], BIGRAM_JOINER, t.unigrams[i + 1]);
                prop_assert_eq!(b, &expect);
            }
        }
    }
}
