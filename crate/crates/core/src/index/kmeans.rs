//! Spherical k-means over unit vectors: cosine assignment via dot product,
//! mean-then-renormalize updates, a fixed iteration count, and deterministic
//! reseeding of empty clusters from the worst-fit points. Everything is
//! seeded and tie-broken by index, so a given input always yields the same
//! clustering.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed Lloyd iteration count; no convergence test, so runtime and output
/// are input-independent functions of (data, k, seed).
pub const KMEANS_ITERS: usize = 20;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// `n_clusters x dim`, unit rows.
    pub centroids: Vec<f64>,
    /// Cluster id per input row.
    pub assignments: Vec<u32>,
    pub n_clusters: usize,
}

/// Argmax-by-dot assignment; ties go to the lowest cluster index.
fn assign(point: &[f64], centroids: &[f64], dim: usize, n_clusters: usize) -> (u32, f64) {
    let mut best = 0u32;
    let mut best_dot = f64::NEG_INFINITY;
    for c in 0..n_clusters {
        let row = &centroids[c * dim..(c + 1) * dim];
        let mut dot = 0.0;
        for (a, b) in point.iter().zip(row) {
            dot += a * b;
        }
        if dot > best_dot {
            best_dot = dot;
            best = c as u32;
        }
    }
    (best, best_dot)
}

fn renormalize(row: &mut [f64]) {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in row {
            *v /= norm;
        }
    }
}

/// Cluster `n` unit vectors stored row-major as f32. `n_clusters` is clamped
/// to `n`. Accumulation runs in f64.
pub fn spherical_kmeans(
    vectors: &[f32],
    dim: usize,
    n_clusters: usize,
    seed: u64,
) -> KMeansResult {
    let n = vectors.len() / dim;
    assert_eq!(vectors.len(), n * dim, "vectors not a whole number of rows");
    assert!(n > 0, "cannot cluster an empty set");
    let k = n_clusters.clamp(1, n);
    let row64 = |i: usize| -> Vec<f64> {
        vectors[i * dim..(i + 1) * dim].iter().map(|&v| f64::from(v)).collect()
    };

    // Farthest-first init: one seeded pick, then greedily the row least
    // covered by the centroids chosen so far (min over rows of max dot).
    // Unlike plain random sampling this cannot start two centroids inside
    // the same tight bundle while another bundle goes unseeded.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend(row64(first));
    let mut taken = vec![false; n];
    taken[first] = true;
    let mut coverage = vec![f64::NEG_INFINITY; n];
    for j in 1..k {
        let last = centroids[(j - 1) * dim..j * dim].to_vec();
        let mut next = usize::MAX;
        let mut next_sim = f64::INFINITY;
        for i in 0..n {
            let mut dot = 0.0;
            for (&v, &c) in vectors[i * dim..(i + 1) * dim].iter().zip(&last) {
                dot += f64::from(v) * c;
            }
            if dot > coverage[i] {
                coverage[i] = dot;
            }
            // Ties keep the lowest index; `taken` rows are skipped so exact
            // duplicates of a centroid never block distinct rows.
            if !taken[i] && coverage[i] < next_sim {
                next_sim = coverage[i];
                next = i;
            }
        }
        centroids.extend(row64(next));
        taken[next] = true;
    }

    let mut assignments = vec![0u32; n];
    let mut best_dots = vec![0.0f64; n];
    for _ in 0..KMEANS_ITERS {
        for i in 0..n {
            let p = row64(i);
            let (c, d) = assign(&p, &centroids, dim, k);
            assignments[i] = c;
            best_dots[i] = d;
        }

        let mut counts = vec![0usize; k];
        for &a in &assignments {
            counts[a as usize] += 1;
        }
        // Reseed empty clusters from the globally worst-fit points, worst
        // first; ties and iteration order are all index-based.
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empties.is_empty() {
            let mut by_fit: Vec<usize> = (0..n).collect();
            by_fit.sort_by(|&a, &b| {
                best_dots[a].partial_cmp(&best_dots[b]).expect("finite dots").then(a.cmp(&b))
            });
            let mut donor = by_fit.into_iter();
            for &c in &empties {
                // Skip points that are their cluster's sole member; stealing
                // them would just move the hole.
                for i in donor.by_ref() {
                    let from = assignments[i] as usize;
                    if counts[from] > 1 {
                        counts[from] -= 1;
                        counts[c] += 1;
                        assignments[i] = c as u32;
                        break;
                    }
                }
            }
        }

        let mut sums = vec![0.0f64; k * dim];
        for i in 0..n {
            let c = assignments[i] as usize;
            let acc = &mut sums[c * dim..(c + 1) * dim];
            for (s, &v) in acc.iter_mut().zip(&vectors[i * dim..(i + 1) * dim]) {
                *s += f64::from(v);
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue; // keep previous centroid (only if k > n edge cases)
            }
            let row = &mut sums[c * dim..(c + 1) * dim];
            for v in row.iter_mut() {
                *v /= counts[c] as f64;
            }
            renormalize(row);
        }
        centroids = sums;
    }

    // The loop ends on an update step, so the returned centroids are exactly
    // the (renormalized) means of the returned assignments and the reseeding
    // guarantee — no empty cluster — still holds. A trailing re-assignment
    // pass would break both.
    KMeansResult { centroids, assignments, n_clusters: k }
}
