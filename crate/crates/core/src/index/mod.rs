//! Offline embedding index with online K-NN search. Vectors are stored as
//! f32 rows (half the footprint of f64 at ~1e-7 relative cost, far below
//! ranking noise); every dot product accumulates in f64. Two variants share
//! one file format: exhaustive scan, and IVF (inverted file) built with
//! spherical k-means, probing only the best `nprobe` cells at query time.
//!
//! Result ordering is total: score descending, then item id ascending.

mod kmeans;

pub use kmeans::{spherical_kmeans, KMeansResult, KMEANS_ITERS};

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::persist::{read_artifact, write_artifact, Reader, Writer};

pub const INDEX_MAGIC: &[u8; 4] = b"EIDX";
pub const INDEX_VERSION: u32 = 1;

/// Unit-norm tolerance for stored f32 rows.
const NORM_TOL: f64 = 1e-3;

/// IVF sizing knobs; `None` picks the defaults `ceil(sqrt(N))` clusters and
/// `max(8, n_clusters/16)` probes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IvfParams {
    pub n_clusters: Option<usize>,
    pub nprobe: Option<usize>,
}

pub fn default_n_clusters(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

pub fn default_nprobe(n_clusters: usize) -> usize {
    (n_clusters / 16).max(8).min(n_clusters.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfData {
    pub n_clusters: usize,
    pub default_nprobe: usize,
    /// `n_clusters x dim` unit rows.
    pub centroids: Vec<f32>,
    /// Member row indices per cluster; every row appears in exactly one.
    pub clusters: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IndexVariant {
    Exact,
    Ivf(IvfData),
}

/// One search hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub item_id: u64,
    pub score: f64,
}

/// In-memory index: ids plus row-major f32 vectors, with an optional IVF
/// acceleration structure over the same storage.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    pub dim: usize,
    pub ids: Vec<u64>,
    pub vectors: Vec<f32>,
    pub variant: IndexVariant,
}

/// Downcast per-item f64 embeddings into the flat (ids, f32 rows) form the
/// builders take.
pub fn flatten_embeddings(items: &[(u64, Vec<f64>)], dim: usize) -> Result<(Vec<u64>, Vec<f32>)> {
    let mut ids = Vec::with_capacity(items.len());
    let mut vectors = Vec::with_capacity(items.len() * dim);
    for (id, v) in items {
        if v.len() != dim {
            return Err(Error::shape(format!(
                "embedding for item {id} has {} dims, expected {dim}",
                v.len()
            )));
        }
        ids.push(*id);
        vectors.extend(v.iter().map(|&x| x as f32));
    }
    Ok((ids, vectors))
}

fn validate_rows(ids: &[u64], vectors: &[f32], dim: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::config("index dim must be >= 1"));
    }
    if ids.len().checked_mul(dim) != Some(vectors.len()) {
        return Err(Error::shape(format!(
            "{} ids do not match {} floats at dim {dim}",
            ids.len(),
            vectors.len()
        )));
    }
    if ids.is_empty() {
        return Err(Error::data("cannot build an empty index"));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    for &id in ids {
        if !seen.insert(id) {
            return Err(Error::data(format!("duplicate item id {id}")));
        }
    }
    for (row, chunk) in vectors.chunks_exact(dim).enumerate() {
        let mut norm2 = 0.0f64;
        for &v in chunk {
            if !v.is_finite() {
                return Err(Error::data(format!("non-finite value in row {row}")));
            }
            norm2 += f64::from(v) * f64::from(v);
        }
        if (norm2.sqrt() - 1.0).abs() > NORM_TOL {
            return Err(Error::data(format!(
                "row {row} has norm {:.6}, index requires unit vectors",
                norm2.sqrt()
            )));
        }
    }
    Ok(())
}

/// Max-heap entry where `Greater` means *worse* (lower score, then higher
/// id), so the heap root is the weakest kept candidate.
#[derive(Debug, PartialEq)]
struct HeapEntry {
    score: f64,
    id: u64,
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .expect("scores are finite")
            .then(self.id.cmp(&other.id))
    }
}

/// Fixed-capacity best-k collector.
struct TopK {
    k: usize,
    heap: BinaryHeap<HeapEntry>,
}

impl TopK {
    fn new(k: usize) -> TopK {
        TopK { k, heap: BinaryHeap::with_capacity(k + 1) }
    }

    #[inline]
    fn push(&mut self, score: f64, id: u64) {
        let entry = HeapEntry { score, id };
        if self.heap.len() < self.k {
            self.heap.push(entry);
        } else if entry.cmp(self.heap.peek().expect("non-empty")) == Ordering::Less {
            self.heap.pop();
            self.heap.push(entry);
        }
    }

    fn into_results(self) -> Vec<SearchResult> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|e| SearchResult { item_id: e.id, score: e.score })
            .collect()
    }
}

#[inline]
fn dot_f64(query: &[f64], row: &[f32]) -> f64 {
    let mut acc = 0.0;
    for (q, &v) in query.iter().zip(row) {
        acc += q * f64::from(v);
    }
    acc
}

impl EmbeddingIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn variant_name(&self) -> &'static str {
        match self.variant {
            IndexVariant::Exact => "exact",
            IndexVariant::Ivf(_) => "ivf",
        }
    }

    pub fn build_exact(ids: Vec<u64>, vectors: Vec<f32>, dim: usize) -> Result<EmbeddingIndex> {
        validate_rows(&ids, &vectors, dim)?;
        Ok(EmbeddingIndex { dim, ids, vectors, variant: IndexVariant::Exact })
    }

    pub fn build_ivf(
        ids: Vec<u64>,
        vectors: Vec<f32>,
        dim: usize,
        params: &IvfParams,
        seed: u64,
    ) -> Result<EmbeddingIndex> {
        validate_rows(&ids, &vectors, dim)?;
        let n = ids.len();
        let n_clusters = params.n_clusters.unwrap_or_else(|| default_n_clusters(n));
        if n_clusters == 0 {
            return Err(Error::config("n_clusters must be >= 1"));
        }
        let km = spherical_kmeans(&vectors, dim, n_clusters, seed);
        let mut clusters: Vec<Vec<u32>> = vec![Vec::new(); km.n_clusters];
        for (row, &c) in km.assignments.iter().enumerate() {
            clusters[c as usize].push(row as u32);
        }
        let nprobe = params.nprobe.unwrap_or_else(|| default_nprobe(km.n_clusters));
        if nprobe == 0 {
            return Err(Error::config("nprobe must be >= 1"));
        }
        let ivf = IvfData {
            n_clusters: km.n_clusters,
            default_nprobe: nprobe.min(km.n_clusters),
            centroids: km.centroids.iter().map(|&v| v as f32).collect(),
            clusters,
        };
        Ok(EmbeddingIndex { dim, ids, vectors, variant: IndexVariant::Ivf(ivf) })
    }

    fn check_query(&self, query: &[f64], k: usize) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::shape(format!(
                "query has {} dims, index has {}",
                query.len(),
                self.dim
            )));
        }
        if k == 0 {
            return Err(Error::config("k must be >= 1"));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite query vector".into()));
        }
        Ok(())
    }

    fn scan_rows<'a>(&self, rows: impl Iterator<Item = usize> + 'a, query: &[f64], k: usize) -> Vec<SearchResult> {
        let mut top = TopK::new(k);
        for row in rows {
            let chunk = &self.vectors[row * self.dim..(row + 1) * self.dim];
            top.push(dot_f64(query, chunk), self.ids[row]);
        }
        top.into_results()
    }

    /// K nearest items by dot product. For IVF, `nprobe_override` widens or
    /// narrows the probe count (clamped to the cluster count); setting it to
    /// `n_clusters` makes IVF scan everything the exact path scans.
    pub fn search(
        &self,
        query: &[f64],
        k: usize,
        nprobe_override: Option<usize>,
    ) -> Result<Vec<SearchResult>> {
        self.check_query(query, k)?;
        match &self.variant {
            IndexVariant::Exact => Ok(self.scan_rows(0..self.len(), query, k)),
            IndexVariant::Ivf(ivf) => {
                let nprobe = nprobe_override
                    .unwrap_or(ivf.default_nprobe)
                    .clamp(1, ivf.n_clusters);
                // Rank cells by centroid dot; ties by lower cell index.
                let mut cells = TopK::new(nprobe);
                for c in 0..ivf.n_clusters {
                    let row = &ivf.centroids[c * self.dim..(c + 1) * self.dim];
                    cells.push(dot_f64(query, row), c as u64);
                }
                let probe = cells.into_results();
                let rows = probe
                    .iter()
                    .flat_map(|cell| ivf.clusters[cell.item_id as usize].iter().map(|&r| r as usize));
                Ok(self.scan_rows(rows, query, k))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = Writer::new();
        w.magic(INDEX_MAGIC);
        w.u32_le(INDEX_VERSION);
        w.u8(match self.variant {
            IndexVariant::Exact => 0,
            IndexVariant::Ivf(_) => 1,
        });
        w.u32_le(self.dim as u32);
        w.u64_le(self.ids.len() as u64);
        for &id in &self.ids {
            w.u64_le(id);
        }
        for &v in &self.vectors {
            w.f32_le(v);
        }
        if let IndexVariant::Ivf(ivf) = &self.variant {
            w.u32_le(ivf.n_clusters as u32);
            w.u32_le(ivf.default_nprobe as u32);
            for &v in &ivf.centroids {
                w.f32_le(v);
            }
            for cluster in &ivf.clusters {
                w.u64_le(cluster.len() as u64);
                for &row in cluster {
                    w.u32_le(row);
                }
            }
        }
        write_artifact(path, w.into_bytes())
    }

    pub fn load(path: &Path) -> Result<EmbeddingIndex> {
        let body = read_artifact(path)?;
        let mut r = Reader::new(&body);
        r.expect_magic(INDEX_MAGIC)?;
        let at = r.pos();
        let version = r.u32_le()?;
        if version != INDEX_VERSION {
            return Err(Error::format(
                at,
                format!("unsupported index version {version}, expected {INDEX_VERSION}"),
            ));
        }
        let at = r.pos();
        let variant_code = r.u8()?;
        let dim = r.u32_le()? as usize;
        let count = r.u64_le()? as usize;
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            ids.push(r.u64_le()?);
        }
        let vectors = r.f32_slice(count * dim)?;
        let variant = match variant_code {
            0 => IndexVariant::Exact,
            1 => {
                let n_clusters = r.u32_le()? as usize;
                let default_nprobe = r.u32_le()? as usize;
                let centroids = r.f32_slice(n_clusters * dim)?;
                let mut clusters = Vec::with_capacity(n_clusters);
                let mut covered = 0usize;
                for _ in 0..n_clusters {
                    let len_at = r.pos();
                    let len = r.u64_le()? as usize;
                    let mut members = Vec::with_capacity(len);
                    for _ in 0..len {
                        let row = r.u32_le()? as usize;
                        if row >= count {
                            return Err(Error::format(
                                len_at,
                                format!("cluster member row {row} out of range (count {count})"),
                            ));
                        }
                        members.push(row as u32);
                    }
                    covered += len;
                    clusters.push(members);
                }
                if covered != count {
                    return Err(Error::format(
                        r.pos(),
                        format!("clusters cover {covered} rows, index has {count}"),
                    ));
                }
                if default_nprobe == 0 || default_nprobe > n_clusters {
                    return Err(Error::format(
                        r.pos(),
                        format!("default_nprobe {default_nprobe} invalid for {n_clusters} cells"),
                    ));
                }
                IndexVariant::Ivf(IvfData { n_clusters, default_nprobe, centroids, clusters })
            }
            other => return Err(Error::format(at, format!("unknown index variant {other}"))),
        };
        r.done()?;
        validate_rows(&ids, &vectors, dim)?;
        if let IndexVariant::Ivf(ivf) = &variant {
            let mut seen = vec![false; count];
            for cluster in &ivf.clusters {
                for &row in cluster {
                    if seen[row as usize] {
                        return Err(Error::format(0, format!("row {row} in two clusters")));
                    }
                    seen[row as usize] = true;
                }
            }
            if ivf.centroids.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(0, "non-finite centroid"));
            }
        }
        Ok(EmbeddingIndex { dim, ids, vectors, variant })
    }
}
