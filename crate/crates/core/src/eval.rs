//! Offline quality metrics and the search benchmark harness. AUC is the
//! Mann-Whitney rank-sum with the standard half-credit tie correction;
//! NDCG uses binary gains with 1-based log2 position discounts; recall comes
//! in the textbook form (denominator `|relevant|`) and the capped form
//! (denominator `min(|relevant|, k)`) used when slates are shorter than the
//! relevant set.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::index::EmbeddingIndex;

/// Probability that a random positive outranks a random negative, ties at
/// half credit: `(#concordant + 0.5 #tied) / (P * N)`. Computed via average
/// ranks, so it is O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score in AUC input".into()));
    }
    let p = labels.iter().filter(|&&l| l).count();
    let n = labels.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {p} positives / {n} negatives"
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // Tied block occupies ranks i+1..=j; every member gets the average.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &t in &idx[i..j] {
            if labels[t] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    Ok((rank_sum_pos - (p * (p + 1)) as f64 / 2.0) / (p as f64 * n as f64))
}

/// Mean of per-session AUCs. Sessions with a single class carry no ranking
/// signal and are skipped, not averaged as a fake 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucSummary {
    pub mean_auc: f64,
    pub sessions_used: usize,
    pub sessions_skipped: usize,
}

pub fn mean_session_auc<'a, I>(sessions: I) -> Result<AucSummary>
where
    I: IntoIterator<Item = (&'a [f64], &'a [bool])>,
{
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (scores, labels) in sessions {
        match auc(scores, labels) {
            Ok(a) => {
                sum += a;
                used += 1;
            }
            Err(Error::UndefinedMetric(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(Error::UndefinedMetric(
            "every session was single-class; mean AUC undefined".into(),
        ));
    }
    Ok(AucSummary { mean_auc: sum / used as f64, sessions_used: used, sessions_skipped: skipped })
}

/// Binary-gain NDCG over the first `k` ranks: `DCG = sum 1/log2(p+1)` over
/// relevant positions `p` (1-based), normalized by the ideal prefix
/// `min(|relevant|, k)`.
pub fn ndcg_at_k(ranked_relevance: &[bool], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    let total_relevant = ranked_relevance.iter().filter(|&&r| r).count();
    if total_relevant == 0 {
        return Err(Error::UndefinedMetric("NDCG undefined with no relevant items".into()));
    }
    let dcg: f64 = ranked_relevance
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &rel)| rel)
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let idcg: f64 =
        (0..total_relevant.min(k)).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    Ok(dcg / idcg)
}

/// `|top-k retrieved ∩ relevant| / |relevant|`.
pub fn recall_at_k(retrieved: &[u64], relevant: &BTreeSet<u64>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    if relevant.is_empty() {
        return Err(Error::UndefinedMetric("recall undefined with no relevant items".into()));
    }
    let hits = retrieved.iter().take(k).filter(|id| relevant.contains(id)).count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Recall with the denominator capped at `k`: the score a perfect length-k
/// slate would get when more than `k` items are relevant.
pub fn capped_recall_at_k(retrieved: &[u64], relevant: &BTreeSet<u64>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::config("k must be >= 1"));
    }
    if relevant.is_empty() {
        return Err(Error::UndefinedMetric("recall undefined with no relevant items".into()));
    }
    let hits = retrieved.iter().take(k).filter(|id| relevant.contains(id)).count();
    Ok(hits as f64 / relevant.len().min(k) as f64)
}

/// Nearest-rank percentile of an already sorted sample.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    assert!((0.0..=100.0).contains(&p), "percentile out of range");
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.max(1) - 1]
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Coarse hardware fingerprint recorded in benchmark reports, so numbers
/// from different machines are never compared blindly.
pub fn machine_descriptor() -> String {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "{}-{} / {} logical cores",
        std::env::consts::ARCH,
        std::env::consts::OS,
        cores
    )
}

/// One benchmark row. Serialized field names follow the classic
/// indexing/search/QPS reporting schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub machine: String,
    pub index_kind: String,
    pub n_items: usize,
    pub dim: usize,
    pub k: usize,
    pub nprobe: Option<usize>,
    pub n_queries: usize,
    pub concurrency: usize,
    #[serde(rename = "indexing (sec.)")]
    pub indexing_sec: f64,
    /// Mean single-thread latency per query.
    #[serde(rename = "search (ms)")]
    pub search_ms: f64,
    /// Single-stream throughput, measured around the whole timed loop.
    #[serde(rename = "QPS")]
    pub qps: f64,
    /// Throughput with `concurrency` worker threads over the same queries.
    pub qps_concurrent: f64,
    pub search_ms_p50: f64,
    pub search_ms_p90: f64,
    pub search_ms_p99: f64,
}

impl BenchReport {
    /// Blank out every wall-clock measurement, leaving only fields that are
    /// pure functions of (config, data). Lets two runs of the same benchmark
    /// be compared byte for byte.
    pub fn redact_timings(&mut self) {
        self.indexing_sec = 0.0;
        self.search_ms = 0.0;
        self.qps = 0.0;
        self.qps_concurrent = 0.0;
        self.search_ms_p50 = 0.0;
        self.search_ms_p90 = 0.0;
        self.search_ms_p99 = 0.0;
    }
}

/// Time `queries` against `index`: a warmup pass (excluded from stats), a
/// single-stream timed pass, then a throughput pass with `concurrency`
/// threads splitting the same queries. `indexing_sec` is supplied by the
/// caller, who observed the build.
pub fn bench_search(
    index: &EmbeddingIndex,
    queries: &[Vec<f64>],
    k: usize,
    nprobe: Option<usize>,
    concurrency: usize,
    indexing_sec: f64,
) -> Result<BenchReport> {
    if queries.is_empty() {
        return Err(Error::data("no benchmark queries"));
    }
    if concurrency == 0 {
        return Err(Error::config("concurrency must be >= 1"));
    }
    let mut sink = 0usize;
    for q in queries.iter().take(32) {
        sink = sink.wrapping_add(index.search(q, k, nprobe)?.len());
    }

    let mut latencies_ms = Vec::with_capacity(queries.len());
    let single_started = Instant::now();
    for q in queries {
        let start = Instant::now();
        let hits = index.search(q, k, nprobe)?;
        latencies_ms.push(start.elapsed().as_secs_f64() * 1e3);
        // Fold results into a live value so the search cannot be elided.
        sink = sink.wrapping_add(hits.len());
    }
    let single_elapsed = single_started.elapsed().as_secs_f64();
    std::hint::black_box(sink);

    let qps_concurrent = if concurrency == 1 {
        queries.len() as f64 / single_elapsed
    } else {
        let chunk = queries.len().div_ceil(concurrency);
        let started = Instant::now();
        std::thread::scope(|scope| -> Result<()> {
            let mut workers = Vec::new();
            for part in queries.chunks(chunk) {
                workers.push(scope.spawn(move || -> Result<usize> {
                    let mut local = 0usize;
                    for q in part {
                        local = local.wrapping_add(index.search(q, k, nprobe)?.len());
                    }
                    Ok(local)
                }));
            }
            let mut total = 0usize;
            for w in workers {
                total = total.wrapping_add(w.join().expect("bench worker panicked")?);
            }
            std::hint::black_box(total);
            Ok(())
        })?;
        queries.len() as f64 / started.elapsed().as_secs_f64()
    };

    let mean_ms = latencies_ms.iter().sum::<f64>() / latencies_ms.len() as f64;
    let mut sorted = latencies_ms;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite latency"));
    Ok(BenchReport {
        schema_version: REPORT_SCHEMA_VERSION,
        machine: machine_descriptor(),
        index_kind: index.variant_name().to_string(),
        n_items: index.len(),
        dim: index.dim,
        k,
        nprobe,
        n_queries: queries.len(),
        concurrency,
        indexing_sec,
        search_ms: mean_ms,
        qps: queries.len() as f64 / single_elapsed,
        qps_concurrent,
        search_ms_p50: percentile(&sorted, 50.0),
        search_ms_p90: percentile(&sorted, 90.0),
        search_ms_p99: percentile(&sorted, 99.0),
    })
}

/// One example retrieval in a [`RetrievalReport`], mirroring the classic
/// "query → top items" good-case table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSample {
    pub query: String,
    pub query_cluster: u32,
    pub hits: Vec<RetrievalSampleHit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSampleHit {
    pub item_id: u64,
    pub title: String,
    pub score: f64,
    pub same_cluster: bool,
}

/// Held-out retrieval quality: same-cluster items are the relevant set for
/// each query. Both recall flavors are reported because top-k can never
/// cover a relevant set larger than k: `recall_at_k` divides by the full
/// relevant count, `capped_recall_at_k` by min(|relevant|, k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub schema_version: u32,
    pub k: usize,
    pub nprobe: Option<usize>,
    pub sessions_evaluated: usize,
    pub sessions_excluded: usize,
    pub mean_recall_at_k: f64,
    pub mean_capped_recall_at_k: f64,
    pub samples: Vec<RetrievalSample>,
}

/// Held-out ranking quality with the planted-utility oracle alongside.
/// Sessions lacking both an ordered and a non-ordered item are excluded
/// from AUC (and counted); sessions with no ordered item score 0 NDCG and
/// stay in the NDCG mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub schema_version: u32,
    pub ndcg_k: usize,
    pub sessions_evaluated: usize,
    pub sessions_excluded: usize,
    pub session_auc: f64,
    pub ndcg: f64,
    pub oracle_session_auc: f64,
    pub oracle_ndcg: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Brute-force pairwise AUC oracle.
    fn naive_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_perfect_and_inverted() {
        let labels = vec![true, true, false, false];
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 0.0);
    }

    /// All-tied scores give exactly one half, the frozen degenerate case.
    #[test]
    fn auc_all_ties_is_exactly_half() {
        let scores = vec![0.3; 10];
        let labels: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        assert_eq!(auc(&scores, &labels).unwrap(), 0.5);
    }

    #[test]
    fn auc_single_class_is_undefined() {
        assert!(matches!(
            auc(&[0.1, 0.2], &[true, true]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            auc(&[0.1, 0.2], &[false, false]),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn auc_matches_naive_oracle_with_heavy_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n = rng.random_range(2..40);
            // Coarse score grid forces plenty of exact ties.
            let scores: Vec<f64> =
                (0..n).map(|_| f64::from(rng.random_range(0..6)) / 5.0).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random_range(0..2) == 1).collect();
            let p = labels.iter().filter(|&&l| l).count();
            if p == 0 || p == n {
                continue;
            }
            let fast = auc(&scores, &labels).unwrap();
            let slow = naive_auc(&scores, &labels);
            assert!((fast - slow).abs() < 1e-12, "fast {fast} vs naive {slow}");
        }
    }

    proptest! {
        #[test]
        fn auc_rank_sum_equals_pairwise_counting(
            raw in proptest::collection::vec((0u8..8, proptest::bool::ANY), 2..50)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s) / 7.0).collect();
            let labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
            let p = labels.iter().filter(|&&l| l).count();
            prop_assume!(p > 0 && p < labels.len());
            let fast = auc(&scores, &labels).unwrap();
            let slow = naive_auc(&scores, &labels);
            prop_assert!((fast - slow).abs() < 1e-12);
        }
    }

    /// Frozen reference: relevant at ranks 1 and 3 of a 3-slot slate.
    #[test]
    fn ndcg_frozen_case() {
        let got = ndcg_at_k(&[true, false, true], 3).unwrap();
        assert_eq!(got, 0.9197207891481876);
    }

    #[test]
    fn ndcg_perfect_prefix_is_one() {
        assert_eq!(ndcg_at_k(&[true, true, false, false], 5).unwrap(), 1.0);
        // Ideal is capped at k: two relevant, k=1, best possible prefix.
        assert_eq!(ndcg_at_k(&[true, true], 1).unwrap(), 1.0);
    }

    #[test]
    fn ndcg_worst_placement() {
        // One relevant item parked at rank 4 of k=5.
        let got = ndcg_at_k(&[false, false, false, true], 5).unwrap();
        assert!((got - 1.0 / 5f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn ndcg_no_relevant_is_undefined() {
        assert!(matches!(ndcg_at_k(&[false, false], 2), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn recall_plain_and_capped() {
        let relevant: BTreeSet<u64> = [1, 2, 3, 4, 5].into_iter().collect();
        let retrieved = vec![9, 1, 2, 8, 3];
        // 3 of 5 relevant found in the top 5.
        assert_eq!(recall_at_k(&retrieved, &relevant, 5).unwrap(), 0.6);
        assert_eq!(capped_recall_at_k(&retrieved, &relevant, 5).unwrap(), 0.6);
        // Top-2 window: plain divides by 5, capped by 2.
        assert_eq!(recall_at_k(&retrieved, &relevant, 2).unwrap(), 0.2);
        assert_eq!(capped_recall_at_k(&retrieved, &relevant, 2).unwrap(), 0.5);
        assert!(recall_at_k(&retrieved, &BTreeSet::new(), 5).is_err());
    }

    #[test]
    fn mean_session_auc_skips_single_class() {
        let s1 = (vec![0.9, 0.1], vec![true, false]); // AUC 1
        let s2 = (vec![0.1, 0.9], vec![true, false]); // AUC 0
        let s3 = (vec![0.5, 0.6], vec![true, true]); // skipped
        let sessions = [s1, s2, s3];
        let summary = mean_session_auc(
            sessions.iter().map(|(s, l)| (s.as_slice(), l.as_slice())),
        )
        .unwrap();
        assert_eq!(summary.mean_auc, 0.5);
        assert_eq!(summary.sessions_used, 2);
        assert_eq!(summary.sessions_skipped, 1);
    }

    #[test]
    fn percentile_nearest_rank() {
        let sorted: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&sorted, 50.0), 50.0);
        assert_eq!(percentile(&sorted, 90.0), 90.0);
        assert_eq!(percentile(&sorted, 99.0), 99.0);
        assert_eq!(percentile(&sorted, 100.0), 100.0);
        assert_eq!(percentile(&[7.0], 50.0), 7.0);
    }

    #[test]
    fn bench_report_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let dim = 8;
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        for i in 0..200u64 {
            ids.push(i);
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0_f64)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            vectors.extend(v.iter().map(|x| (x / n) as f32));
        }
        let index = EmbeddingIndex::build_exact(ids, vectors, dim).unwrap();
        let queries: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0_f64)).collect())
            .collect();
        let report = bench_search(&index, &queries, 10, None, 2, 1.25).unwrap();
        assert_eq!(report.n_items, 200);
        assert_eq!(report.n_queries, 30);
        assert_eq!(report.concurrency, 2);
        assert_eq!(report.indexing_sec, 1.25);
        assert!(report.search_ms > 0.0);
        assert!(report.qps > 0.0);
        assert!(report.qps_concurrent > 0.0);
        assert!(!report.machine.is_empty());
        assert!(report.search_ms_p50 <= report.search_ms_p90);
        assert!(report.search_ms_p90 <= report.search_ms_p99);
        // Throughput and mean latency describe the same measurement.
        let implied_qps = 1000.0 / report.search_ms;
        let ratio = report.qps / implied_qps;
        assert!((0.8..=1.25).contains(&ratio), "QPS {} vs implied {implied_qps}", report.qps);
        // The wire names match the reporting schema.
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"indexing (sec.)\""));
        assert!(json.contains("\"search (ms)\""));
        assert!(json.contains("\"QPS\""));

        let mut redacted = report.clone();
        redacted.redact_timings();
        assert_eq!(redacted.search_ms, 0.0);
        assert_eq!(redacted.qps, 0.0);
        assert_eq!(redacted.n_items, 200, "redaction must keep config fields");
    }
}
