//! One function per subcommand, plus the bookkeeping every run shares: each
//! command reads its inputs up front, writes its outputs atomically, appends
//! the new output hashes to `manifest.json`, and records the invocation in
//! `run-<command>.json` (command, seed, full config, input/output hashes).
//!
//! Run records are provenance, not artifacts: they are deliberately left out
//! of the manifest so a serving copy of the directory stays valid without
//! them.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use semstack_core::datagen::{
    self as dg, CatalogRow, DataConfig, Dataset, PlantedRow, SessionRow, Split, CATALOG_FILE,
    PAIRS_FILE, PLANTED_FILE, SESSIONS_FILE, TRIPLES_FILE,
};
use semstack_core::dpr::{self, DprConfig, PairwiseModel};
use semstack_core::dsr::{self, DsrConfig, TwoTowerModel};
use semstack_core::eval::{
    self, RankingReport, RetrievalReport, RetrievalSample, RetrievalSampleHit,
    REPORT_SCHEMA_VERSION,
};
use semstack_core::features::{FeatureConfig, Featurizer};
use semstack_core::index::{flatten_embeddings, EmbeddingIndex, IvfParams};
use semstack_core::manifest::{
    sha256_hex_file, ArtifactManifest, RunRecord, DPR_CKPT_FILE, DSR_CKPT_FILE, FEATURES_FILE,
    INDEX_FILE, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION,
};
use semstack_core::nn::AdamConfig;
use semstack_core::Error;
use semstack_serving::{AppState, ServeConfig};

use crate::{
    BenchArgs, BuildIndexArgs, DatagenArgs, EvalRankingArgs, EvalRetrievalArgs, IndexVariant,
    ServeArgs, TrainDprArgs, TrainDsrArgs,
};

pub const DSR_REPORT_FILE: &str = "dsr_train_report.json";
pub const DPR_REPORT_FILE: &str = "dpr_train_report.json";
pub const RETRIEVAL_REPORT_FILE: &str = "retrieval_report.json";
pub const RANKING_REPORT_FILE: &str = "ranking_report.json";
pub const BENCH_REPORT_FILE: &str = "bench_report.json";

/// Global flags shared by every subcommand.
pub struct Ctx {
    pub seed: u64,
    pub dir: PathBuf,
    pub deterministic: bool,
}

pub fn datagen(ctx: &Ctx, args: &DatagenArgs) -> Result<()> {
    let feat = FeatureConfig::default();
    let defaults = DataConfig::default();
    let data_cfg = DataConfig {
        n_items: args.items,
        n_clusters: args.clusters,
        n_users: args.users,
        n_sessions: args.sessions,
        presented_per_session: args.presented,
        same_cluster_prob: args.same_cluster_prob.unwrap_or(defaults.same_cluster_prob),
        noise_scale: args.noise_scale.unwrap_or(defaults.noise_scale),
        click_bias: args.click_bias.unwrap_or(defaults.click_bias),
        ..defaults
    };
    let ds = dg::generate(&data_cfg, &feat, ctx.seed)?;
    fs::create_dir_all(&ctx.dir)?;
    ds.write(&ctx.dir)?;
    let stats = dg::fit_stats(&ds, &feat)?;
    let fz = Featurizer::new(feat, stats)?;
    fz.save_json(&ctx.dir.join(FEATURES_FILE))?;
    println!(
        "wrote {} items, {} sessions, {} triples, {} pairs, featurizer (seed {})",
        ds.catalog.len(),
        ds.sessions.len(),
        ds.triples.len(),
        ds.pairs.len(),
        ctx.seed
    );
    finish_run(
        ctx,
        "datagen",
        serde_json::json!({ "data": data_cfg, "features": fz.config }),
        &[],
        &[CATALOG_FILE, SESSIONS_FILE, TRIPLES_FILE, PAIRS_FILE, PLANTED_FILE, FEATURES_FILE],
    )
}

pub fn train_dsr(ctx: &Ctx, args: &TrainDsrArgs) -> Result<()> {
    let fz = load_featurizer(&ctx.dir)?;
    let ds = Dataset {
        catalog: read_rows(&ctx.dir, CATALOG_FILE)?,
        sessions: Vec::new(),
        triples: read_rows(&ctx.dir, TRIPLES_FILE)?,
        pairs: Vec::new(),
        planted: Vec::new(),
    };
    let cfg = DsrConfig {
        token_dim: args.token_dim,
        hidden_dims: args.hidden.clone(),
        output_dim: args.output_dim,
        margin: args.margin,
        batch_size: args.batch_size,
        epochs: args.epochs,
        adam: AdamConfig { lr: args.lr, ..AdamConfig::default() },
    };
    let triples = dg::featurize_triples(&ds, &fz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut model = TwoTowerModel::init(&cfg, &fz.config, &mut rng)?;
    let report = dsr::train_dsr(&mut model, &triples, &cfg, ctx.seed)?;
    for (epoch, (loss, active)) in
        report.epoch_mean_loss.iter().zip(&report.epoch_active_fraction).enumerate()
    {
        println!(
            "epoch {}/{}: mean hinge {loss:.6}, active triples {active:.3}",
            epoch + 1,
            cfg.epochs
        );
    }
    model.save(&ctx.dir.join(DSR_CKPT_FILE))?;
    write_json(&ctx.dir, DSR_REPORT_FILE, &report)?;
    println!("saved {DSR_CKPT_FILE} after {} steps over {} triples", report.steps, triples.len());
    finish_run(
        ctx,
        "train-dsr",
        serde_json::to_value(&cfg)?,
        &[FEATURES_FILE, CATALOG_FILE, TRIPLES_FILE],
        &[DSR_CKPT_FILE, DSR_REPORT_FILE],
    )
}

pub fn train_dpr(ctx: &Ctx, args: &TrainDprArgs) -> Result<()> {
    let fz = load_featurizer(&ctx.dir)?;
    let ds = Dataset {
        catalog: read_rows(&ctx.dir, CATALOG_FILE)?,
        sessions: Vec::new(),
        triples: Vec::new(),
        pairs: read_rows(&ctx.dir, PAIRS_FILE)?,
        planted: Vec::new(),
    };
    let cfg = DprConfig {
        user_dim: args.user_dim,
        query_dim: args.query_dim,
        item_dim: args.item_dim,
        hidden_dims: args.hidden.clone(),
        batch_size: args.batch_size,
        epochs: args.epochs,
        adam: AdamConfig { lr: args.lr, ..AdamConfig::default() },
    };
    let pairs = dg::featurize_pairs(&ds, &fz)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut model = PairwiseModel::init(&cfg, &fz.config, &mut rng)?;
    let report = dpr::train_dpr(&mut model, &pairs, &cfg, ctx.seed)?;
    for (epoch, (loss, acc)) in
        report.epoch_mean_loss.iter().zip(&report.epoch_pair_accuracy).enumerate()
    {
        println!(
            "epoch {}/{}: mean loss {loss:.6}, pair accuracy {acc:.3}",
            epoch + 1,
            cfg.epochs
        );
    }
    model.save(&ctx.dir.join(DPR_CKPT_FILE))?;
    write_json(&ctx.dir, DPR_REPORT_FILE, &report)?;
    println!("saved {DPR_CKPT_FILE} after {} steps over {} pairs", report.steps, pairs.len());
    finish_run(
        ctx,
        "train-dpr",
        serde_json::to_value(&cfg)?,
        &[FEATURES_FILE, CATALOG_FILE, PAIRS_FILE],
        &[DPR_CKPT_FILE, DPR_REPORT_FILE],
    )
}

pub fn build_index(ctx: &Ctx, args: &BuildIndexArgs) -> Result<()> {
    let fz = load_featurizer(&ctx.dir)?;
    let catalog: Vec<CatalogRow> = read_rows(&ctx.dir, CATALOG_FILE)?;
    // The checkpoint stores no margin; it only shapes the training loss,
    // and inference never reads it.
    let model = TwoTowerModel::load(&ctx.dir.join(DSR_CKPT_FILE), DsrConfig::default().margin)?;
    let start = Instant::now();
    let mut embedded = Vec::with_capacity(catalog.len());
    for row in &catalog {
        let feats = fz.item(row.item_id, &row.title, &row.numeric)?;
        embedded.push((row.item_id, model.item_embed(&feats)?));
    }
    let dim = embedded.first().map_or(0, |(_, v)| v.len());
    let (ids, vectors) = flatten_embeddings(&embedded, dim)?;
    let index = match args.variant {
        IndexVariant::Exact => EmbeddingIndex::build_exact(ids, vectors, dim)?,
        IndexVariant::Ivf => EmbeddingIndex::build_ivf(
            ids,
            vectors,
            dim,
            &IvfParams { n_clusters: args.n_clusters, nprobe: args.nprobe },
            ctx.seed,
        )?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    index.save(&ctx.dir.join(INDEX_FILE))?;
    println!(
        "built {} index: {} items x {}d in {elapsed:.2}s",
        index.variant_name(),
        index.len(),
        index.dim
    );
    finish_run(
        ctx,
        "build-index",
        serde_json::json!({
            "variant": variant_str(args.variant),
            "n_clusters": args.n_clusters,
            "nprobe": args.nprobe,
        }),
        &[FEATURES_FILE, CATALOG_FILE, DSR_CKPT_FILE],
        &[INDEX_FILE],
    )
}

pub fn eval_retrieval(ctx: &Ctx, args: &EvalRetrievalArgs) -> Result<()> {
    let fz = load_featurizer(&ctx.dir)?;
    let catalog: Vec<CatalogRow> = read_rows(&ctx.dir, CATALOG_FILE)?;
    let sessions: Vec<SessionRow> = read_rows(&ctx.dir, SESSIONS_FILE)?;
    let model = TwoTowerModel::load(&ctx.dir.join(DSR_CKPT_FILE), DsrConfig::default().margin)?;
    let index = EmbeddingIndex::load(&ctx.dir.join(INDEX_FILE))?;

    let mut title_by_id: BTreeMap<u64, &str> = BTreeMap::new();
    let mut cluster_by_id: BTreeMap<u64, u32> = BTreeMap::new();
    let mut by_cluster: BTreeMap<u32, BTreeSet<u64>> = BTreeMap::new();
    for row in &catalog {
        title_by_id.insert(row.item_id, &row.title);
        cluster_by_id.insert(row.item_id, row.cluster_id);
        by_cluster.entry(row.cluster_id).or_default().insert(row.item_id);
    }

    let search = |s: &SessionRow| -> Result<Vec<semstack_core::index::SearchResult>> {
        let emb = model.query_embed(&fz.query(&s.query)?)?;
        Ok(index.search(&emb, args.k, args.nprobe)?)
    };
    let sample = |s: &SessionRow, hits: &[semstack_core::index::SearchResult]| RetrievalSample {
        query: s.query.clone(),
        query_cluster: s.query_cluster,
        hits: hits
            .iter()
            .map(|h| RetrievalSampleHit {
                item_id: h.item_id,
                title: title_by_id.get(&h.item_id).map(|t| t.to_string()).unwrap_or_default(),
                score: h.score,
                same_cluster: cluster_by_id.get(&h.item_id) == Some(&s.query_cluster),
            })
            .collect(),
    };

    let mut recall_sum = 0.0;
    let mut capped_sum = 0.0;
    let mut evaluated = 0usize;
    let mut excluded = 0usize;
    let mut samples = Vec::new();
    let mut sampled_clusters = BTreeSet::new();
    let mut sampled_sessions = BTreeSet::new();
    for s in sessions.iter().filter(|s| s.split == Split::Valid) {
        let Some(relevant) = by_cluster.get(&s.query_cluster) else {
            excluded += 1;
            continue;
        };
        let hits = search(s)?;
        let ids: Vec<u64> = hits.iter().map(|h| h.item_id).collect();
        recall_sum += eval::recall_at_k(&ids, relevant, args.k)?;
        capped_sum += eval::capped_recall_at_k(&ids, relevant, args.k)?;
        evaluated += 1;
        // Prefer one sample per distinct query cluster.
        if samples.len() < args.samples && sampled_clusters.insert(s.query_cluster) {
            sampled_sessions.insert(s.session_id);
            samples.push(sample(s, &hits));
        }
    }
    if evaluated == 0 {
        return Err(Error::data("no valid-split sessions to evaluate").into());
    }
    // Top up with repeat clusters when the corpus has fewer distinct ones.
    if samples.len() < args.samples {
        for s in sessions.iter().filter(|s| s.split == Split::Valid) {
            if samples.len() >= args.samples {
                break;
            }
            if by_cluster.contains_key(&s.query_cluster) && sampled_sessions.insert(s.session_id) {
                let hits = search(s)?;
                samples.push(sample(s, &hits));
            }
        }
    }

    let report = RetrievalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        k: args.k,
        nprobe: args.nprobe,
        sessions_evaluated: evaluated,
        sessions_excluded: excluded,
        mean_recall_at_k: recall_sum / evaluated as f64,
        mean_capped_recall_at_k: capped_sum / evaluated as f64,
        samples,
    };
    write_json(&ctx.dir, RETRIEVAL_REPORT_FILE, &report)?;
    println!(
        "recall@{}: {:.4} (capped {:.4}) over {} held-out sessions ({} excluded)",
        report.k,
        report.mean_recall_at_k,
        report.mean_capped_recall_at_k,
        report.sessions_evaluated,
        report.sessions_excluded
    );
    for s in &report.samples {
        let same = s.hits.iter().filter(|h| h.same_cluster).count();
        println!("  cluster {:>3} \"{}\": {}/{} same-cluster", s.query_cluster, s.query, same, s.hits.len());
    }
    finish_run(
        ctx,
        "eval-retrieval",
        serde_json::json!({ "k": args.k, "nprobe": args.nprobe, "samples": args.samples }),
        &[FEATURES_FILE, CATALOG_FILE, SESSIONS_FILE, DSR_CKPT_FILE, INDEX_FILE],
        &[RETRIEVAL_REPORT_FILE],
    )
}

pub fn eval_ranking(ctx: &Ctx, args: &EvalRankingArgs) -> Result<()> {
    let fz = load_featurizer(&ctx.dir)?;
    let catalog: Vec<CatalogRow> = read_rows(&ctx.dir, CATALOG_FILE)?;
    let sessions: Vec<SessionRow> = read_rows(&ctx.dir, SESSIONS_FILE)?;
    let planted: Vec<PlantedRow> = read_rows(&ctx.dir, PLANTED_FILE)?;
    let model = PairwiseModel::load(&ctx.dir.join(DPR_CKPT_FILE))?;

    let item_by_id: BTreeMap<u64, &CatalogRow> =
        catalog.iter().map(|row| (row.item_id, row)).collect();
    let utility: BTreeMap<u64, f64> =
        planted.iter().map(|row| (row.item_id, row.base_utility)).collect();

    let mut model_sessions: Vec<(Vec<f64>, Vec<bool>)> = Vec::new();
    let mut oracle_sessions: Vec<(Vec<f64>, Vec<bool>)> = Vec::new();
    let mut ndcg_sum = 0.0;
    let mut oracle_ndcg_sum = 0.0;
    let mut ndcg_n = 0usize;
    for s in sessions.iter().filter(|s| s.split == Split::Valid) {
        let user = fz.user(&s.user_action_text, &s.user_numeric)?;
        let query = fz.query(&s.query)?;
        let mut items = Vec::with_capacity(s.presented.len());
        let mut ids = Vec::with_capacity(s.presented.len());
        let mut labels = Vec::with_capacity(s.presented.len());
        let mut oracle = Vec::with_capacity(s.presented.len());
        for p in &s.presented {
            let row = item_by_id
                .get(&p.item_id)
                .ok_or_else(|| Error::data(format!("session references unknown item {}", p.item_id)))?;
            items.push(fz.item(row.item_id, &row.title, &row.numeric)?);
            ids.push(p.item_id);
            labels.push(p.ordered);
            oracle.push(*utility.get(&p.item_id).ok_or_else(|| {
                Error::data(format!("no planted utility for item {}", p.item_id))
            })?);
        }
        let logits = model.score_slate(&user, &query, &items)?;
        ndcg_sum += slate_ndcg(&logits, &ids, &labels, args.k)?;
        oracle_ndcg_sum += slate_ndcg(&oracle, &ids, &labels, args.k)?;
        ndcg_n += 1;
        model_sessions.push((logits, labels.clone()));
        oracle_sessions.push((oracle, labels));
    }
    if ndcg_n == 0 {
        return Err(Error::data("no valid-split sessions to evaluate").into());
    }
    let model_auc =
        eval::mean_session_auc(model_sessions.iter().map(|(s, l)| (s.as_slice(), l.as_slice())))?;
    let oracle_auc =
        eval::mean_session_auc(oracle_sessions.iter().map(|(s, l)| (s.as_slice(), l.as_slice())))?;

    let report = RankingReport {
        schema_version: REPORT_SCHEMA_VERSION,
        ndcg_k: args.k,
        sessions_evaluated: model_auc.sessions_used,
        sessions_excluded: model_auc.sessions_skipped,
        session_auc: model_auc.mean_auc,
        ndcg: ndcg_sum / ndcg_n as f64,
        oracle_session_auc: oracle_auc.mean_auc,
        oracle_ndcg: oracle_ndcg_sum / ndcg_n as f64,
    };
    write_json(&ctx.dir, RANKING_REPORT_FILE, &report)?;
    println!(
        "session AUC {:.4} (oracle {:.4}), NDCG@{} {:.4} (oracle {:.4}), {} sessions ({} single-class skipped)",
        report.session_auc,
        report.oracle_session_auc,
        report.ndcg_k,
        report.ndcg,
        report.oracle_ndcg,
        report.sessions_evaluated,
        report.sessions_excluded
    );
    finish_run(
        ctx,
        "eval-ranking",
        serde_json::json!({ "k": args.k }),
        &[FEATURES_FILE, CATALOG_FILE, SESSIONS_FILE, PLANTED_FILE, DPR_CKPT_FILE],
        &[RANKING_REPORT_FILE],
    )
}

pub fn bench(ctx: &Ctx, args: &BenchArgs) -> Result<()> {
    if args.n == 0 || args.dim == 0 || args.queries == 0 {
        return Err(Error::config("bench needs n, dim, and queries all >= 1").into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let ids: Vec<u64> = (0..args.n as u64).collect();
    let mut vectors = Vec::with_capacity(args.n * args.dim);
    for _ in 0..args.n {
        for x in unit_vector(&mut rng, args.dim) {
            vectors.push(x as f32);
        }
    }
    let start = Instant::now();
    let index = match args.variant {
        IndexVariant::Exact => EmbeddingIndex::build_exact(ids, vectors, args.dim)?,
        IndexVariant::Ivf => EmbeddingIndex::build_ivf(
            ids,
            vectors,
            args.dim,
            &IvfParams { n_clusters: args.n_clusters, nprobe: args.nprobe },
            ctx.seed,
        )?,
    };
    let indexing_sec = start.elapsed().as_secs_f64();
    let queries: Vec<Vec<f64>> =
        (0..args.queries).map(|_| unit_vector(&mut rng, args.dim)).collect();
    let mut report =
        eval::bench_search(&index, &queries, args.k, args.nprobe, args.concurrency, indexing_sec)?;

    println!("machine: {}", report.machine);
    println!(
        "{:<8} {:>9} {:>5} {:>17} {:>13} {:>9} {:>11}",
        "variant", "items", "k", "indexing (sec.)", "search (ms)", "QPS", "QPS (conc)"
    );
    println!(
        "{:<8} {:>9} {:>5} {:>17.3} {:>13.4} {:>9.1} {:>11.1}",
        report.index_kind, report.n_items, report.k, report.indexing_sec, report.search_ms,
        report.qps, report.qps_concurrent
    );
    println!(
        "latency p50/p90/p99: {:.4}/{:.4}/{:.4} ms over {} queries (concurrency {})",
        report.search_ms_p50,
        report.search_ms_p90,
        report.search_ms_p99,
        report.n_queries,
        report.concurrency
    );
    if ctx.deterministic {
        report.redact_timings();
        println!("(wall-clock fields redacted in {BENCH_REPORT_FILE})");
    }
    fs::create_dir_all(&ctx.dir)?;
    write_json(&ctx.dir, BENCH_REPORT_FILE, &report)?;
    finish_run(
        ctx,
        "bench",
        serde_json::json!({
            "n": args.n,
            "dim": args.dim,
            "queries": args.queries,
            "k": args.k,
            "variant": variant_str(args.variant),
            "n_clusters": args.n_clusters,
            "nprobe": args.nprobe,
            "concurrency": args.concurrency,
        }),
        &[],
        &[BENCH_REPORT_FILE],
    )
}

pub fn serve(ctx: &Ctx, args: &ServeArgs) -> Result<()> {
    // Resolution order: SEMSTACK_ARTIFACTS env var, then --artifacts, then
    // the shared --out-dir.
    let dir = match std::env::var_os("SEMSTACK_ARTIFACTS") {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => args.artifacts.clone().unwrap_or_else(|| ctx.dir.clone()),
    };
    let mut cfg = ServeConfig::new(dir.clone());
    cfg.port = args.port;
    cfg.nprobe_default = args.nprobe_default;
    cfg.max_k = args.max_k;
    let state = AppState::load(cfg).context("loading artifacts")?;
    let hash = state.snapshot().map(|s| s.manifest_hash.clone()).unwrap_or_default();
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port)).await?;
        println!(
            "serving {} (manifest {hash}) on http://{}",
            dir.display(),
            listener.local_addr()?
        );
        semstack_serving::serve(listener, state).await?;
        Ok(())
    })
}

/// Rank a slate by score (descending, ties by ascending item id) and take
/// NDCG@k of the induced relevance order. Slates with no positive count as
/// zero rather than being skipped.
fn slate_ndcg(scores: &[f64], ids: &[u64], labels: &[bool], k: usize) -> Result<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(ids[a].cmp(&ids[b]))
    });
    let ranked: Vec<bool> = order.iter().map(|&i| labels[i]).collect();
    match eval::ndcg_at_k(&ranked, k) {
        Ok(v) => Ok(v),
        Err(Error::UndefinedMetric(_)) => Ok(0.0),
        Err(e) => Err(e.into()),
    }
}

fn unit_vector<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}

fn variant_str(variant: IndexVariant) -> &'static str {
    match variant {
        IndexVariant::Exact => "exact",
        IndexVariant::Ivf => "ivf",
    }
}

fn read_rows<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>> {
    dg::read_jsonl(&dir.join(name)).with_context(|| format!("reading {name}"))
}

fn load_featurizer(dir: &Path) -> Result<Featurizer> {
    Featurizer::load_json(&dir.join(FEATURES_FILE)).context("loading featurizer")
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let tmp = path.with_extension("tmp");
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    fs::write(&tmp, body)?;
    fs::rename(&tmp, &path)?;
    Ok(())
}

/// Fold `names` into the directory manifest, creating it on first use.
fn update_manifest(dir: &Path, names: &[&str]) -> Result<()> {
    let mut manifest = if dir.join(MANIFEST_FILE).is_file() {
        ArtifactManifest::load(dir)?
    } else {
        ArtifactManifest { schema_version: MANIFEST_SCHEMA_VERSION, files: BTreeMap::new() }
    };
    for name in names {
        manifest.files.insert((*name).to_string(), sha256_hex_file(&dir.join(name))?);
    }
    manifest.write(dir)?;
    Ok(())
}

fn finish_run(
    ctx: &Ctx,
    command: &str,
    config: serde_json::Value,
    inputs: &[&str],
    outputs: &[&str],
) -> Result<()> {
    let mut record = RunRecord::new(command, ctx.seed, config);
    for name in inputs {
        record.add_input(&ctx.dir, name)?;
    }
    for name in outputs {
        record.add_output(&ctx.dir, name)?;
    }
    record.write(&ctx.dir.join(format!("run-{command}.json")))?;
    update_manifest(&ctx.dir, outputs)
}
