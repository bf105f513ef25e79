//! Initial community labels via regularized spectral clustering, and a
//! spectral estimate of the number of communities.
//!
//! The regularization adds a flat `alpha * mean_degree / n` to every entry
//! of the adjacency matrix before eigendecomposition, which keeps sparse
//! graphs from fragmenting into degree-one noise clusters. The community
//! count comes from the Bethe Hessian `H(rho) = (rho^2 - 1) I - rho A + D`:
//! its negative eigenvalues count detectable communities.

use crate::error::{Error, Result};
use crate::graph::AdjacencyView;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Settings for [`spectral_cluster_perturbed`].
#[derive(Debug, Clone)]
pub struct SpectralConfig {
    /// Scale of the flat perturbation added to the adjacency (default 0.25).
    pub regularizer_scale: f64,
    /// Seeded k-means restarts; the best objective wins (default 20).
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    /// Convergence threshold handed to the symmetric eigensolver.
    pub eig_tolerance: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            regularizer_scale: 0.25,
            kmeans_restarts: 20,
            kmeans_max_iter: 100,
            eig_tolerance: 1e-8,
        }
    }
}

/// Diagnostics from one spectral clustering run.
#[derive(Debug, Clone)]
pub struct SpectralDiagnostics {
    /// The K eigenvalues used, ordered by decreasing magnitude.
    pub eigenvalues: Vec<f64>,
    /// Objective of the winning k-means restart.
    pub kmeans_objective: f64,
    /// Objective after each assignment pass of the winning restart.
    pub kmeans_trace: Vec<f64>,
    /// Labels in 0..K that received no nodes.
    pub empty_clusters: usize,
}

/// Labels plus diagnostics.
#[derive(Debug, Clone)]
pub struct SpectralOutput {
    pub labels: Vec<usize>,
    pub diagnostics: SpectralDiagnostics,
}

/// Clusters nodes into K communities: eigenvectors of the perturbed
/// adjacency with largest-magnitude eigenvalues, rows normalized to unit
/// length, then k-means over seeded restarts. Deterministic given the RNG.
pub fn spectral_cluster_perturbed(
    a: &AdjacencyView,
    k: usize,
    cfg: &SpectralConfig,
    rng: &mut impl Rng,
) -> Result<SpectralOutput> {
    let n = a.n();
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds n = {n}")));
    }
    if k == 1 {
        return Ok(SpectralOutput {
            labels: vec![0; n],
            diagnostics: SpectralDiagnostics {
                eigenvalues: Vec::new(),
                kmeans_objective: 0.0,
                kmeans_trace: Vec::new(),
                empty_clusters: 0,
            },
        });
    }

    let degrees = a.degrees();
    let mean_degree = degrees.iter().map(|&d| d as f64).sum::<f64>() / n as f64;
    let tau = cfg.regularizer_scale * mean_degree / n as f64;
    let mut reg = DMatrix::from_element(n, n, tau);
    for &(i, j) in a.edges() {
        reg[(i as usize, j as usize)] += 1.0;
        reg[(j as usize, i as usize)] += 1.0;
    }

    let eig = reg
        .try_symmetric_eigen(cfg.eig_tolerance, 10 * n.max(100))
        .ok_or(Error::EigenFailure {
            n,
            max_iter: 10 * n.max(100),
        })?;

    // K eigenvectors with largest |eigenvalue|; ties resolved by index.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .abs()
            .partial_cmp(&eig.eigenvalues[x].abs())
            .expect("finite eigenvalues")
            .then(x.cmp(&y))
    });
    let chosen = &order[..k];
    let eigenvalues: Vec<f64> = chosen.iter().map(|&c| eig.eigenvalues[c]).collect();

    // Row-normalized spectral embedding; all-zero rows stay zero.
    let mut embedding = vec![0.0f64; n * k];
    for i in 0..n {
        let mut norm_sq = 0.0;
        for (col, &c) in chosen.iter().enumerate() {
            let v = eig.eigenvectors[(i, c)];
            embedding[i * k + col] = v;
            norm_sq += v * v;
        }
        if norm_sq > 0.0 {
            let norm = norm_sq.sqrt();
            for col in 0..k {
                embedding[i * k + col] /= norm;
            }
        }
    }

    let restart_seeds: Vec<u64> = (0..cfg.kmeans_restarts.max(1)).map(|_| rng.random()).collect();
    let mut best: Option<KmeansRun> = None;
    for seed in restart_seeds {
        let mut restart_rng = ChaCha8Rng::seed_from_u64(seed);
        let run = kmeans(&embedding, n, k, cfg.kmeans_max_iter, &mut restart_rng);
        let better = match &best {
            None => true,
            Some(b) => run.objective < b.objective,
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let mut used = vec![false; k];
    for &l in &best.labels {
        used[l] = true;
    }
    let empty_clusters = used.iter().filter(|&&u| !u).count();

    Ok(SpectralOutput {
        labels: best.labels,
        diagnostics: SpectralDiagnostics {
            eigenvalues,
            kmeans_objective: best.objective,
            kmeans_trace: best.trace,
            empty_clusters,
        },
    })
}

struct KmeansRun {
    labels: Vec<usize>,
    objective: f64,
    trace: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ seeding on row-major `data` (n x k
/// entries, d = k coordinates). Assignment ties break toward the lowest
/// centroid index; empty clusters keep their previous centroid.
fn kmeans(data: &[f64], n: usize, k: usize, max_iter: usize, rng: &mut impl Rng) -> KmeansRun {
    let d = k;
    let point = |i: usize| &data[i * d..(i + 1) * d];
    let sq_dist = |p: &[f64], q: &[f64]| -> f64 {
        p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
    };

    // k-means++ seeding.
    let mut centroids: Vec<f64> = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(point(first));
    let mut min_dist: Vec<f64> = (0..n).map(|i| sq_dist(point(i), &centroids[..d])).collect();
    while centroids.len() < k * d {
        let total: f64 = min_dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in min_dist.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            // All points coincide with a centroid; take the lowest index.
            0
        };
        let start = centroids.len();
        centroids.extend_from_slice(point(next));
        for i in 0..n {
            let dist = sq_dist(point(i), &centroids[start..start + d]);
            if dist < min_dist[i] {
                min_dist[i] = dist;
            }
        }
    }

    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    let mut objective = f64::INFINITY;
    for _ in 0..max_iter {
        // Assignment pass.
        let mut changed = false;
        let mut total = 0.0;
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist = sq_dist(point(i), &centroids[c * d..(c + 1) * d]);
                if dist < best_d {
                    best_d = dist;
                    best_c = c;
                }
            }
            if labels[i] != best_c {
                labels[i] = best_c;
                changed = true;
            }
            total += best_d;
        }
        trace.push(total);
        objective = total;
        if !changed && trace.len() > 1 {
            break;
        }
        // Update pass.
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            let p = point(i);
            for j in 0..d {
                sums[labels[i] * d + j] += p[j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    centroids[c * d + j] = sums[c * d + j] / counts[c] as f64;
                }
            }
        }
    }

    KmeansRun {
        labels,
        objective,
        trace,
    }
}

/// Estimates the number of communities as the count of negative eigenvalues
/// of the Bethe Hessian `H(rho) = (rho^2 - 1) I - rho A + D` with
/// `rho = sqrt(sum d_i^2 / sum d_i - 1)`, floored at one. Deterministic.
pub fn estimate_num_communities(a: &AdjacencyView) -> Result<usize> {
    if a.edge_count() == 0 {
        return Err(Error::EmptyInput(
            "community count needs at least one edge".into(),
        ));
    }
    let n = a.n();
    let degrees = a.degrees();
    let sum_d: f64 = degrees.iter().map(|&d| d as f64).sum();
    let sum_d_sq: f64 = degrees.iter().map(|&d| (d as f64) * (d as f64)).sum();
    let rho = (sum_d_sq / sum_d - 1.0).max(0.0).sqrt();

    let mut h = DMatrix::from_element(n, n, 0.0);
    for i in 0..n {
        h[(i, i)] = rho * rho - 1.0 + degrees[i] as f64;
    }
    for &(i, j) in a.edges() {
        h[(i as usize, j as usize)] -= rho;
        h[(j as usize, i as usize)] -= rho;
    }
    let eigenvalues = h.symmetric_eigenvalues();
    let negatives = eigenvalues.iter().filter(|&&v| v < 0.0).count();
    Ok(negatives.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;

    fn two_cliques(size: usize) -> AdjacencyView {
        let mut edges = Vec::new();
        for block in 0..2 {
            let off = block * size;
            for i in 0..size {
                for j in (i + 1)..size {
                    edges.push((off + i, off + j));
                }
            }
        }
        AdjacencyView::from_edges(2 * size, edges).unwrap()
    }

    #[test]
    fn separates_two_disjoint_cliques() {
        let a = two_cliques(20);
        let mut rng = derived_rng(1, 0);
        let out = spectral_cluster_perturbed(&a, 2, &SpectralConfig::default(), &mut rng).unwrap();
        // Connected components are the oracle: labels constant within each
        // clique and different across cliques.
        assert!(out.labels[..20].iter().all(|&l| l == out.labels[0]));
        assert!(out.labels[20..].iter().all(|&l| l == out.labels[20]));
        assert_ne!(out.labels[0], out.labels[20]);
        assert_eq!(out.diagnostics.empty_clusters, 0);
    }

    #[test]
    fn single_community_labels_everything_zero() {
        let a = two_cliques(5);
        let mut rng = derived_rng(2, 0);
        let out = spectral_cluster_perturbed(&a, 1, &SpectralConfig::default(), &mut rng).unwrap();
        assert!(out.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn k_equal_n_returns_without_error() {
        let a = two_cliques(4);
        let mut rng = derived_rng(3, 0);
        let out = spectral_cluster_perturbed(&a, 8, &SpectralConfig::default(), &mut rng).unwrap();
        assert_eq!(out.labels.len(), 8);
        assert!(out.labels.iter().all(|&l| l < 8));
    }

    #[test]
    fn rejects_k_zero_and_k_above_n() {
        let a = two_cliques(3);
        let mut rng = derived_rng(4, 0);
        assert!(spectral_cluster_perturbed(&a, 0, &SpectralConfig::default(), &mut rng).is_err());
        assert!(spectral_cluster_perturbed(&a, 7, &SpectralConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = two_cliques(10);
        let run = |seed| {
            let mut rng = derived_rng(seed, 0);
            spectral_cluster_perturbed(&a, 2, &SpectralConfig::default(), &mut rng)
                .unwrap()
                .labels
        };
        assert_eq!(run(9), run(9));
    }

    #[test]
    fn kmeans_trace_is_nonincreasing() {
        let a = two_cliques(12);
        let mut rng = derived_rng(5, 0);
        let out = spectral_cluster_perturbed(&a, 3, &SpectralConfig::default(), &mut rng).unwrap();
        for w in out.diagnostics.kmeans_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "k-means objective rose: {w:?}");
        }
    }

    #[test]
    fn community_count_on_disjoint_cliques() {
        // Two clean blocks: the Bethe Hessian sees two communities.
        let a = two_cliques(15);
        assert_eq!(estimate_num_communities(&a).unwrap(), 2);
    }

    #[test]
    fn community_count_errors_on_edgeless_graph() {
        let a = AdjacencyView::from_edges(5, []).unwrap();
        assert!(estimate_num_communities(&a).is_err());
    }

    #[test]
    fn community_count_is_deterministic() {
        let a = two_cliques(8);
        assert_eq!(
            estimate_num_communities(&a).unwrap(),
            estimate_num_communities(&a).unwrap()
        );
    }
}
