//! Online layer: loads a validated artifact set — featurizer, two-tower
//! retrieval checkpoint, pairwise ranker checkpoint, embedding index — and
//! serves semantic search plus re-ranking over HTTP. Every request works off
//! one immutable snapshot of the set; a reload either installs a fully
//! validated replacement through a single reference switch or leaves the old
//! set untouched, so no response ever mixes artifacts from different sets.

mod http;

pub use http::{
    router, ErrorBody, HealthResponse, MetricsResponse, RerankItemBody, RerankRequestBody,
    RerankResponse, ScoredHit, SearchRequestBody, SearchResponse, SCHEMA_VERSION,
};

use std::path::{Path, PathBuf};
use std::sync::Arc;

use arc_swap::ArcSwapOption;
use thiserror::Error;

use semstack_core::dpr::{PairwiseModel, DEFAULT_RERANK_DEPTH};
use semstack_core::dsr::{DsrConfig, TwoTowerModel};
use semstack_core::features::Featurizer;
use semstack_core::index::EmbeddingIndex;
use semstack_core::manifest::{
    ArtifactManifest, DPR_CKPT_FILE, DSR_CKPT_FILE, FEATURES_FILE, INDEX_FILE,
};

#[derive(Debug, Error)]
pub enum ServingError {
    #[error("artifact set: {0}")]
    Artifacts(#[from] semstack_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Service knobs. `artifacts_dir` doubles as the reload source: an admin
/// reload re-reads whatever set currently lives there.
#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub port: u16,
    pub artifacts_dir: PathBuf,
    /// Service-wide IVF probe override; a request-level `nprobe` wins.
    pub nprobe_default: Option<usize>,
    /// Upper bound on `k` accepted by /search.
    pub max_k: usize,
    /// Upper bound on the /rerank candidate list length.
    pub rerank_depth: usize,
}

impl ServeConfig {
    pub fn new(artifacts_dir: impl Into<PathBuf>) -> ServeConfig {
        ServeConfig {
            port: 8080,
            artifacts_dir: artifacts_dir.into(),
            nprobe_default: None,
            max_k: 1000,
            rerank_depth: DEFAULT_RERANK_DEPTH,
        }
    }
}

/// Everything one request needs, loaded and cross-validated as a unit.
/// Immutable once constructed; swaps replace the whole set.
#[derive(Debug)]
pub struct ArtifactSet {
    pub manifest: ArtifactManifest,
    /// Canonical hash of the manifest, echoed in every response.
    pub manifest_hash: String,
    pub featurizer: Featurizer,
    pub retrieval: TwoTowerModel,
    pub ranker: PairwiseModel,
    pub index: EmbeddingIndex,
}

impl ArtifactSet {
    /// Load a set from `dir`, verifying every manifest-listed file against
    /// its content hash and cross-checking that the pieces fit each other.
    /// Any failure leaves nothing half-loaded: the caller keeps whatever set
    /// it already had.
    pub fn load(dir: &Path) -> Result<ArtifactSet, ServingError> {
        let manifest = ArtifactManifest::load(dir)?;
        for required in [FEATURES_FILE, DSR_CKPT_FILE, DPR_CKPT_FILE, INDEX_FILE] {
            if !manifest.files.contains_key(required) {
                return Err(semstack_core::Error::data(format!(
                    "manifest does not cover required artifact {required}"
                ))
                .into());
            }
        }
        manifest.verify(dir)?;

        let featurizer = Featurizer::load_json(&dir.join(FEATURES_FILE))?;
        // The margin only shapes the training loss; inference never reads it.
        let retrieval = TwoTowerModel::load(&dir.join(DSR_CKPT_FILE), DsrConfig::default().margin)?;
        let ranker = PairwiseModel::load(&dir.join(DPR_CKPT_FILE))?;
        let index = EmbeddingIndex::load(&dir.join(INDEX_FILE))?;
        validate_set(&featurizer, &retrieval, &ranker, &index)?;

        let manifest_hash = manifest.hash();
        Ok(ArtifactSet { manifest, manifest_hash, featurizer, retrieval, ranker, index })
    }
}

/// Refuse sets whose pieces were not produced for each other: checkpoint
/// vocabulary sizes must match the featurizer's bucket spaces and the query
/// tower must emit vectors of the index's dimension.
fn validate_set(
    fz: &Featurizer,
    retrieval: &TwoTowerModel,
    ranker: &PairwiseModel,
    index: &EmbeddingIndex,
) -> semstack_core::Result<()> {
    use semstack_core::Error;

    let cfg = &fz.config;
    let check_rows = |what: &str, got: usize, want: u32| -> semstack_core::Result<()> {
        if got != want as usize {
            return Err(Error::shape(format!(
                "{what} has {got} embedding rows but the featurizer hashes into {want} buckets"
            )));
        }
        Ok(())
    };

    let qt = &retrieval.query_tower;
    if qt.embeddings.len() != 1 || qt.numeric_dim != 0 {
        return Err(Error::shape("query tower must take exactly one token field"));
    }
    check_rows("query tower", qt.embeddings[0].rows, cfg.query_buckets)?;

    let it = &retrieval.item_tower;
    if it.embeddings.len() != 1 || it.numeric_dim != cfg.item_numeric_dim() {
        return Err(Error::shape("item tower shape does not match the feature config"));
    }
    check_rows("item tower", it.embeddings[0].rows, cfg.item_buckets)?;

    let rt = &ranker.tower;
    if rt.embeddings.len() != 3
        || rt.numeric_dim != cfg.user_numeric_dim() + cfg.item_numeric_dim()
    {
        return Err(Error::shape("ranker tower shape does not match the feature config"));
    }
    check_rows("ranker user field", rt.embeddings[0].rows, cfg.user_action_buckets)?;
    check_rows("ranker query field", rt.embeddings[1].rows, cfg.query_buckets)?;
    check_rows("ranker item field", rt.embeddings[2].rows, cfg.item_buckets)?;

    // Probe the real embedding path; this also proves the checkpoint runs.
    let probe = retrieval.query_embed(&fz.query("artifact dim probe")?)?;
    if probe.len() != index.dim {
        return Err(Error::shape(format!(
            "query tower emits {} dims but the index stores {}",
            probe.len(),
            index.dim
        )));
    }
    Ok(())
}

/// Shared service state. The artifact pointer is the only mutable piece and
/// is swapped wholesale, so request handlers never lock: they grab one `Arc`
/// and use it for the whole request.
#[derive(Clone)]
pub struct AppState {
    artifacts: Arc<ArcSwapOption<ArtifactSet>>,
    cfg: Arc<ServeConfig>,
    metrics: Arc<http::ServiceMetrics>,
}

impl AppState {
    /// State with no artifacts yet; /healthz reports not-ready until a
    /// reload installs a set.
    pub fn empty(cfg: ServeConfig) -> AppState {
        AppState {
            artifacts: Arc::new(ArcSwapOption::const_empty()),
            cfg: Arc::new(cfg),
            metrics: Arc::new(http::ServiceMetrics::default()),
        }
    }

    /// Load the configured artifact dir or refuse to construct the state.
    pub fn load(cfg: ServeConfig) -> Result<AppState, ServingError> {
        let set = ArtifactSet::load(&cfg.artifacts_dir)?;
        let state = AppState::empty(cfg);
        state.install(set);
        Ok(state)
    }

    pub fn config(&self) -> &ServeConfig {
        &self.cfg
    }

    /// The immutable set a request should use, or `None` before first load.
    pub fn snapshot(&self) -> Option<Arc<ArtifactSet>> {
        self.artifacts.load_full()
    }

    /// Atomically replace the served set.
    pub fn install(&self, set: ArtifactSet) {
        self.artifacts.store(Some(Arc::new(set)));
    }

    pub(crate) fn metrics(&self) -> &http::ServiceMetrics {
        &self.metrics
    }
}

/// Serve the router on an already-bound listener until the task is dropped.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
) -> Result<(), ServingError> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[cfg(test)]
pub(crate) mod fixtures {
    //! A miniature but complete artifact set for exercising the service
    //! without running the training pipeline.

    use std::path::Path;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use semstack_core::dpr::{DprConfig, PairwiseModel};
    use semstack_core::dsr::{DsrConfig, TwoTowerModel};
    use semstack_core::features::{
        FeatureConfig, FeatureStats, Featurizer, NumericStats, FEATURE_STATS_SCHEMA_VERSION,
    };
    use semstack_core::index::{flatten_embeddings, EmbeddingIndex};
    use semstack_core::manifest::{
        ArtifactManifest, DPR_CKPT_FILE, DSR_CKPT_FILE, FEATURES_FILE, INDEX_FILE,
    };

    pub fn feature_config() -> FeatureConfig {
        FeatureConfig {
            query_buckets: 1 << 8,
            item_buckets: 1 << 8,
            user_action_buckets: 1 << 8,
            ..FeatureConfig::default()
        }
    }

    pub fn catalog() -> Vec<(u64, String, Vec<f64>)> {
        let titles = [
            "wool winter gloves", "leather winter gloves", "fleece scarf", "beach towel",
            "camping stove", "hiking boots", "trail socks", "canvas tent", "rain jacket",
            "thermal base layer", "ski goggles", "snow shovel", "picnic blanket",
            "steel water bottle", "headlamp strap", "merino beanie",
        ];
        titles
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let x = i as f64;
                (i as u64 * 3 + 1, t.to_string(), vec![x * 0.3 - 2.0, x + 0.5, x * 0.05, 0.01 * x])
            })
            .collect()
    }

    pub fn featurizer() -> Featurizer {
        let cfg = feature_config();
        let item_rows: Vec<Vec<f64>> = catalog().into_iter().map(|(_, _, n)| n).collect();
        let user_rows =
            vec![vec![1.0, 0.2], vec![2.5, -0.3], vec![0.7, 1.4], vec![3.1, 0.0]];
        let stats = FeatureStats {
            schema_version: FEATURE_STATS_SCHEMA_VERSION,
            item: NumericStats::fit(&item_rows, &cfg.item_numeric_transforms).unwrap(),
            user: NumericStats::fit(&user_rows, &cfg.user_numeric_transforms).unwrap(),
        };
        Featurizer::new(cfg, stats).unwrap()
    }

    pub fn dsr_config() -> DsrConfig {
        DsrConfig { token_dim: 8, hidden_dims: vec![16], output_dim: 8, ..DsrConfig::default() }
    }

    pub fn dpr_config() -> DprConfig {
        DprConfig {
            user_dim: 4,
            query_dim: 4,
            item_dim: 4,
            hidden_dims: vec![8, 4],
            ..DprConfig::default()
        }
    }

    /// Write a complete artifact set into `dir` (manifest last, so a reader
    /// racing the writes sees either the old consistent set or the new one)
    /// and return its manifest hash. Different seeds give different sets.
    pub fn install_version(dir: &Path, seed: u64) -> String {
        let fz = featurizer();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let retrieval = TwoTowerModel::init(&dsr_config(), &fz.config, &mut rng).unwrap();
        let ranker = PairwiseModel::init(&dpr_config(), &fz.config, &mut rng).unwrap();

        let embedded: Vec<(u64, Vec<f64>)> = catalog()
            .iter()
            .map(|(id, title, numeric)| {
                let item = fz.item(*id, title, numeric).unwrap();
                (*id, retrieval.item_embed(&item).unwrap())
            })
            .collect();
        let (ids, vectors) = flatten_embeddings(&embedded, dsr_config().output_dim).unwrap();
        let index = EmbeddingIndex::build_exact(ids, vectors, dsr_config().output_dim).unwrap();

        fz.save_json(&dir.join(FEATURES_FILE)).unwrap();
        retrieval.save(&dir.join(DSR_CKPT_FILE)).unwrap();
        ranker.save(&dir.join(DPR_CKPT_FILE)).unwrap();
        index.save(&dir.join(INDEX_FILE)).unwrap();
        let manifest = ArtifactManifest::collect(
            dir,
            &[FEATURES_FILE, DSR_CKPT_FILE, DPR_CKPT_FILE, INDEX_FILE],
        )
        .unwrap();
        manifest.write(dir).unwrap();
        manifest.hash()
    }
}
