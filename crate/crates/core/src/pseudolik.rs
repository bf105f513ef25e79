//! Block-count sufficient statistics and the single-view mixture fits.
//!
//! A network view enters the test only through `(b, d)`: per-node edge
//! counts into each estimated community, conditioned on degree. The mixture
//! of multinomials over those counts is fit by EM, as is the spherical
//! Gaussian mixture for a multivariate view. Both fitters record their
//! log-likelihood trace; the sequence never decreases.

use crate::error::{Error, Result};
use crate::graph::AdjacencyView;
use ndarray::{Array1, Array2, Axis};
use statrs::function::gamma::ln_gamma;

/// Per-node edge counts into estimated communities plus the degree vector.
///
/// Row sums of `b` equal `d` exactly: every edge endpoint lands in some
/// estimated community. Entries are whole numbers stored as `f64`.
#[derive(Debug, Clone)]
pub struct BlockCounts {
    pub b: Array2<f64>,
    pub d: Vec<u32>,
}

impl BlockCounts {
    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn k(&self) -> usize {
        self.b.ncols()
    }
}

/// Counts, for every node, its edges into each estimated community.
pub fn block_counts(a: &AdjacencyView, zhat: &[usize], k: usize) -> Result<BlockCounts> {
    if zhat.len() != a.n() {
        return Err(Error::DimensionMismatch(format!(
            "labels have length {}, view has {} nodes",
            zhat.len(),
            a.n()
        )));
    }
    for &z in zhat {
        if z >= k {
            return Err(Error::LabelOutOfRange { label: z, k });
        }
    }
    let mut b = Array2::zeros((a.n(), k));
    for &(i, j) in a.edges() {
        let (i, j) = (i as usize, j as usize);
        b[[i, zhat[j]]] += 1.0;
        b[[j, zhat[i]]] += 1.0;
    }
    Ok(BlockCounts { b, d: a.degrees() })
}

/// Log pmf of a Multinomial(d, eta) at the count vector `b`:
/// `log d! - sum_m log b_m! + sum_m b_m log eta_m`. An empty multinomial
/// (d = 0) has pmf 1.
pub fn multinomial_log_pmf(b: &[f64], d: u32, eta: &[f64]) -> Result<f64> {
    if b.len() != eta.len() {
        return Err(Error::DimensionMismatch(format!(
            "count vector has {} cells, eta has {}",
            b.len(),
            eta.len()
        )));
    }
    let total: f64 = b.iter().sum();
    if total != d as f64 {
        return Err(Error::InvalidParameter(format!(
            "counts sum to {total}, degree is {d}"
        )));
    }
    if d == 0 {
        return Ok(0.0);
    }
    if eta.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidParameter(
            "multinomial probabilities must be strictly positive".into(),
        ));
    }
    let mut out = ln_gamma(d as f64 + 1.0);
    for (&bm, &em) in b.iter().zip(eta) {
        if bm > 0.0 {
            out += bm * em.ln() - ln_gamma(bm + 1.0);
        }
    }
    Ok(out)
}

/// EM settings shared by both mixture fitters.
#[derive(Debug, Clone)]
pub struct EmConfig {
    /// Absolute log-likelihood change threshold; `None` uses `1e-8 * n`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Multinomial rows are floored here after each M-step, then
    /// renormalized, so the log pmf stays finite for empty communities.
    pub eta_floor: f64,
    /// Hard label initializations are smoothed this far toward uniform.
    pub init_smoothing: f64,
    /// Gaussian component standard deviations may not fall below this.
    pub sigma_floor: f64,
    /// Use one pooled variance for all Gaussian components.
    pub shared_variance: bool,
    /// Largest K tried when selecting the Gaussian K by BIC.
    pub k_max: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 500,
            eta_floor: 1e-10,
            init_smoothing: 0.05,
            sigma_floor: 1e-6,
            shared_variance: false,
            k_max: 10,
        }
    }
}

impl EmConfig {
    fn tolerance(&self, n: usize) -> f64 {
        self.tol.unwrap_or(1e-8 * n as f64)
    }
}

/// Starting point for the multinomial EM.
#[derive(Debug, Clone)]
pub enum MixtureInit<'a> {
    /// Hard labels, smoothed toward uniform by `EmConfig::init_smoothing`.
    Labels(&'a [usize]),
    /// Explicit row-stochastic responsibility matrix.
    Responsibilities(Array2<f64>),
}

/// Fitted mixture of multinomials.
#[derive(Debug, Clone)]
pub struct MultinomialMixtureFit {
    /// K x K row-stochastic component probability matrix.
    pub eta: Array2<f64>,
    pub pi: Vec<f64>,
    pub loglik: f64,
    pub responsibilities: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood after each E-step.
    pub trace: Vec<f64>,
}

fn responsibilities_from_labels(
    labels: &[usize],
    n: usize,
    k: usize,
    smoothing: f64,
) -> Result<Array2<f64>> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "init labels have length {}, data has {n} rows",
            labels.len()
        )));
    }
    let mut resp = Array2::from_elem((n, k), smoothing / k as f64);
    for (i, &z) in labels.iter().enumerate() {
        if z >= k {
            return Err(Error::LabelOutOfRange { label: z, k });
        }
        resp[[i, z]] += 1.0 - smoothing;
    }
    Ok(resp)
}

fn validate_responsibilities(resp: &Array2<f64>, n: usize, k: usize) -> Result<()> {
    if resp.nrows() != n || resp.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "init responsibilities are {}x{}, expected {n}x{k}",
            resp.nrows(),
            resp.ncols()
        )));
    }
    for row in resp.rows() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > 1e-8 || row.iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidParameter(
                "init responsibilities must be row-stochastic and nonnegative".into(),
            ));
        }
    }
    Ok(())
}

/// Per-node log multinomial densities under each component:
/// `out[i, k] = log g(b_i; d_i, eta_k)`.
pub fn network_log_densities(bc: &BlockCounts, eta: &Array2<f64>) -> Array2<f64> {
    let consts = multinomial_row_constants(bc);
    let log_eta = eta.mapv(f64::ln);
    let mut out = bc.b.dot(&log_eta.t());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        row.mapv_inplace(|v| v + consts[i]);
    }
    out
}

/// `log d_i! - sum_m log b_im!` per node; zero for isolated nodes.
fn multinomial_row_constants(bc: &BlockCounts) -> Array1<f64> {
    Array1::from_iter(bc.b.rows().into_iter().zip(&bc.d).map(|(row, &d)| {
        let mut c = ln_gamma(d as f64 + 1.0);
        for &bm in row.iter() {
            if bm > 0.0 {
                c -= ln_gamma(bm + 1.0);
            }
        }
        c
    }))
}

/// Row-wise log-sum-exp; also writes normalized exponentials into `rows`.
fn log_sum_exp_normalize(rows: &mut Array2<f64>) -> Array1<f64> {
    let mut lse = Array1::zeros(rows.nrows());
    for (i, mut row) in rows.rows_mut().into_iter().enumerate() {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - mx).exp()).sum();
        let log_norm = mx + sum.ln();
        lse[i] = log_norm;
        row.mapv_inplace(|v| (v - log_norm).exp());
    }
    lse
}

/// Maximizes the degree-conditioned pseudo-log-likelihood
/// `sum_i log sum_k pi_k g(b_i; d_i, eta_k)` by EM.
///
/// Isolated nodes (d_i = 0) have component density 1 under every component;
/// they contribute zero to the objective, take the prior as their
/// responsibility row, and still count toward `pi`.
pub fn fit_multinomial_mixture(
    bc: &BlockCounts,
    k: usize,
    init: MixtureInit<'_>,
    cfg: &EmConfig,
) -> Result<MultinomialMixtureFit> {
    let n = bc.n();
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("K = {k} exceeds n = {n}")));
    }
    if bc.k() != k {
        return Err(Error::DimensionMismatch(format!(
            "block counts have {} columns, expected K = {k}",
            bc.k()
        )));
    }
    let mut resp = match init {
        MixtureInit::Labels(labels) => {
            responsibilities_from_labels(labels, n, k, cfg.init_smoothing)?
        }
        MixtureInit::Responsibilities(r) => {
            validate_responsibilities(&r, n, k)?;
            r
        }
    };

    let consts = multinomial_row_constants(bc);
    let d_float: Array1<f64> = Array1::from_iter(bc.d.iter().map(|&d| d as f64));
    let tol = cfg.tolerance(n);

    let mut pi = vec![0.0; k];
    let mut eta = Array2::zeros((k, k));
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=cfg.max_iter {
        iterations = iter;
        // M-step from current responsibilities.
        let weights = resp.sum_axis(Axis(0));
        for (kk, &w) in weights.iter().enumerate() {
            pi[kk] = w / n as f64;
        }
        let weighted_counts = resp.t().dot(&bc.b); // K x K
        let weighted_degrees = resp.t().dot(&d_float); // K
        for kk in 0..k {
            let denom = weighted_degrees[kk];
            let mut row = eta.row_mut(kk);
            if denom > 0.0 {
                for m in 0..k {
                    row[m] = weighted_counts[[kk, m]] / denom;
                }
            } else {
                // Component owns no edges; fall back to uniform.
                row.fill(1.0 / k as f64);
            }
            // Floor and renormalize so the log pmf stays finite.
            let mut sum = 0.0;
            for m in 0..k {
                row[m] = row[m].max(cfg.eta_floor);
                sum += row[m];
            }
            for m in 0..k {
                row[m] /= sum;
            }
        }

        // E-step: responsibilities and objective at the new parameters.
        let log_eta = eta.mapv(f64::ln);
        let mut log_weights = bc.b.dot(&log_eta.t());
        for (i, mut row) in log_weights.rows_mut().into_iter().enumerate() {
            for (kk, v) in row.iter_mut().enumerate() {
                *v += consts[i] + pi[kk].ln();
            }
        }
        let lse = log_sum_exp_normalize(&mut log_weights);
        resp = log_weights;
        let loglik: f64 = lse.sum();
        if !loglik.is_finite() {
            return Err(Error::EmFailure(format!(
                "non-finite log-likelihood at iteration {iter}"
            )));
        }
        let previous = trace.last().copied();
        trace.push(loglik);
        if let Some(prev) = previous {
            if (loglik - prev).abs() < tol {
                converged = true;
                break;
            }
        }
    }

    let loglik = *trace.last().expect("at least one EM iteration");
    Ok(MultinomialMixtureFit {
        eta,
        pi,
        loglik,
        responsibilities: resp,
        iterations,
        converged,
        trace,
    })
}

/// Fitted spherical Gaussian mixture.
#[derive(Debug, Clone)]
pub struct GaussianMixtureFit {
    /// p x K matrix whose columns are component means.
    pub mu: Array2<f64>,
    /// Per-component spherical standard deviations (all equal in shared
    /// variance mode).
    pub sigma: Vec<f64>,
    pub pi: Vec<f64>,
    pub loglik: f64,
    pub responsibilities: Array2<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    /// `-2 loglik + #params log n` for the fitted K.
    pub bic: f64,
}

/// Per-node log Gaussian densities: `out[i, k] = log N(y_i; mu_k, sigma_k^2 I)`.
pub fn gaussian_log_densities(y: &Array2<f64>, mu: &Array2<f64>, sigma: &[f64]) -> Array2<f64> {
    let (n, p) = y.dim();
    let k = mu.ncols();
    let y_sq: Array1<f64> = y.rows().into_iter().map(|r| r.dot(&r)).collect();
    let mu_sq: Vec<f64> = (0..k).map(|kk| mu.column(kk).dot(&mu.column(kk))).collect();
    let cross = y.dot(mu); // n x K
    let mut out = Array2::zeros((n, k));
    for kk in 0..k {
        let var = sigma[kk] * sigma[kk];
        let log_norm = -0.5 * p as f64 * (2.0 * std::f64::consts::PI * var).ln();
        for i in 0..n {
            let sq_dist = (y_sq[i] - 2.0 * cross[[i, kk]] + mu_sq[kk]).max(0.0);
            out[[i, kk]] = log_norm - 0.5 * sq_dist / var;
        }
    }
    out
}

/// A few Lloyd passes from given centers; returns hard labels.
fn lloyd_labels(y: &Array2<f64>, mut centers: Vec<Array1<f64>>) -> Vec<usize> {
    let n = y.nrows();
    let k = centers.len();
    let sq_dist = |i: usize, c: &Array1<f64>| -> f64 {
        let diff = &y.row(i) - c;
        diff.dot(&diff)
    };
    let mut labels = vec![0usize; n];
    for _ in 0..10 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = sq_dist(i, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![Array1::<f64>::zeros(y.ncols()); k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums[labels[i]] += &y.row(i);
            counts[labels[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = &sums[c] / counts[c] as f64;
            }
        }
    }
    labels
}

/// Deterministic farthest-first center selection followed by a few Lloyd
/// passes. Good at separated clusters, but seeds on extreme points.
fn farthest_first_labels(y: &Array2<f64>, k: usize) -> Vec<usize> {
    let n = y.nrows();
    let mean = y.mean_axis(Axis(0)).expect("nonempty data");
    let sq_dist = |i: usize, c: &Array1<f64>| -> f64 {
        let diff = &y.row(i) - c;
        diff.dot(&diff)
    };
    // Start from the observation nearest the grand mean, then repeatedly
    // take the point farthest from all chosen centers (ties to lowest index).
    let mut centers: Vec<Array1<f64>> = Vec::with_capacity(k);
    let first = (0..n)
        .min_by(|&a, &b| {
            sq_dist(a, &mean)
                .partial_cmp(&sq_dist(b, &mean))
                .expect("finite distances")
        })
        .expect("nonempty data");
    centers.push(y.row(first).to_owned());
    let mut min_dist: Vec<f64> = (0..n).map(|i| sq_dist(i, &centers[0])).collect();
    while centers.len() < k {
        let far = (0..n)
            .max_by(|&a, &b| {
                min_dist[a]
                    .partial_cmp(&min_dist[b])
                    .expect("finite distances")
            })
            .expect("nonempty data");
        centers.push(y.row(far).to_owned());
        for i in 0..n {
            let dist = sq_dist(i, centers.last().expect("just pushed"));
            if dist < min_dist[i] {
                min_dist[i] = dist;
            }
        }
    }
    lloyd_labels(y, centers)
}

/// Deterministic quantile init along the first principal axis: centers sit
/// at interior points of the cloud, which avoids seeding a component on an
/// outlier.
fn principal_quantile_labels(y: &Array2<f64>, k: usize) -> Vec<usize> {
    let n = y.nrows();
    let p = y.ncols();
    let mean = y.mean_axis(Axis(0)).expect("nonempty data");
    let centered = y - &mean.view().insert_axis(Axis(0));
    // Power iteration for the top principal direction.
    let mut v = Array1::from_elem(p, 1.0 / (p as f64).sqrt());
    for _ in 0..100 {
        let w = centered.t().dot(&centered.dot(&v));
        let norm = w.dot(&w).sqrt();
        if norm < 1e-12 {
            break;
        }
        let w = &w / norm;
        let delta = (&w - &v).mapv(f64::abs).sum().min((&w + &v).mapv(f64::abs).sum());
        v = w;
        if delta < 1e-12 {
            break;
        }
    }
    let scores = centered.dot(&v);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores").then(a.cmp(&b)));
    let mut centers = Vec::with_capacity(k);
    for c in 0..k {
        // Median observation of the c-th quantile block.
        let position = ((2 * c + 1) * n) / (2 * k);
        centers.push(y.row(order[position.min(n - 1)]).to_owned());
    }
    lloyd_labels(y, centers)
}

fn gaussian_num_params(k: usize, p: usize, shared_variance: bool) -> usize {
    let variance_params = if shared_variance { 1 } else { k };
    k * p + variance_params + (k - 1)
}

/// Fits a spherical Gaussian mixture with K components by EM.
///
/// Initialization is deterministic, so identical inputs produce identical
/// fits: EM runs from a farthest-first seeding and from a principal-axis
/// quantile seeding, and the better final log-likelihood wins. Within each
/// run, a component whose standard deviation collapses below the floor is
/// reinitialized once (to the grand mean at pooled scale); a second
/// collapse of the same component fails that run.
pub fn fit_gaussian_mixture(y: &Array2<f64>, k: usize, cfg: &EmConfig) -> Result<GaussianMixtureFit> {
    let (n, _) = y.dim();
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if n <= k {
        return Err(Error::InvalidParameter(format!(
            "need more observations than components (n = {n}, K = {k})"
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("multivariate data".into()));
    }

    let mut best: Option<GaussianMixtureFit> = None;
    let mut first_error: Option<Error> = None;
    let farthest = farthest_first_labels(y, k);
    let inits: Vec<Vec<usize>> = if k == 1 {
        vec![farthest]
    } else {
        vec![farthest, principal_quantile_labels(y, k)]
    };
    for labels in &inits {
        match gaussian_em_from_labels(y, k, labels, cfg) {
            Ok(fit) => {
                let better = best.as_ref().is_none_or(|b| fit.loglik > b.loglik);
                if better {
                    best = Some(fit);
                }
            }
            Err(e) => {
                if first_error.is_none() {
                    first_error = Some(e);
                }
            }
        }
    }
    match best {
        Some(fit) => Ok(fit),
        None => Err(first_error.expect("at least one init attempted")),
    }
}

fn gaussian_em_from_labels(
    y: &Array2<f64>,
    k: usize,
    labels: &[usize],
    cfg: &EmConfig,
) -> Result<GaussianMixtureFit> {
    let (n, p) = y.dim();
    let mut resp = responsibilities_from_labels(labels, n, k, cfg.init_smoothing)?;

    let grand_mean = y.mean_axis(Axis(0)).expect("nonempty data");
    let pooled_var = y
        .rows()
        .into_iter()
        .map(|r| {
            let diff = &r - &grand_mean;
            diff.dot(&diff)
        })
        .sum::<f64>()
        / (n * p) as f64;
    let pooled_sd = pooled_var.sqrt().max(cfg.sigma_floor);

    let tol = cfg.tolerance(n);
    let mut mu = Array2::zeros((p, k));
    let mut sigma = vec![pooled_sd; k];
    let mut pi = vec![1.0 / k as f64; k];
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut reinitialized = vec![false; k];

    for iter in 1..=cfg.max_iter {
        iterations = iter;
        // M-step.
        let weights = resp.sum_axis(Axis(0));
        let mut collapsed: Option<usize> = None;
        for kk in 0..k {
            pi[kk] = weights[kk] / n as f64;
        }
        let weighted_sums = resp.t().dot(y); // K x p
        for kk in 0..k {
            if weights[kk] > 0.0 {
                for j in 0..p {
                    mu[[j, kk]] = weighted_sums[[kk, j]] / weights[kk];
                }
            }
        }
        let mut var_num = vec![0.0f64; k];
        for i in 0..n {
            for kk in 0..k {
                let r = resp[[i, kk]];
                if r > 0.0 {
                    let mut sq = 0.0;
                    for j in 0..p {
                        let diff = y[[i, j]] - mu[[j, kk]];
                        sq += diff * diff;
                    }
                    var_num[kk] += r * sq;
                }
            }
        }
        if cfg.shared_variance {
            let total: f64 = var_num.iter().sum();
            let sd = (total / (n * p) as f64).sqrt();
            if sd < cfg.sigma_floor {
                collapsed = Some(0);
            } else {
                sigma.iter_mut().for_each(|s| *s = sd);
            }
        } else {
            for kk in 0..k {
                if weights[kk] <= 0.0 {
                    collapsed = Some(kk);
                    break;
                }
                let sd = (var_num[kk] / (p as f64 * weights[kk])).sqrt();
                if sd < cfg.sigma_floor {
                    collapsed = Some(kk);
                    break;
                }
                sigma[kk] = sd;
            }
        }

        if let Some(kk) = collapsed {
            if reinitialized[kk] {
                return Err(Error::EmFailure(format!(
                    "component {kk} collapsed twice (sigma below {})",
                    cfg.sigma_floor
                )));
            }
            reinitialized[kk] = true;
            // Reset the collapsed component to a neutral global one: grand
            // mean and pooled scale. The trace restarts so the recorded
            // sequence stays monotone.
            for j in 0..p {
                mu[[j, kk]] = grand_mean[j];
            }
            sigma[kk] = pooled_sd;
            let fill = 1.0 / k as f64;
            let scale: f64 = 1.0 - fill;
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|w| *w *= scale / total);
            pi[kk] += fill;
            trace.clear();
        }

        // E-step.
        let mut log_weights = gaussian_log_densities(y, &mu, &sigma);
        for mut row in log_weights.rows_mut() {
            for (kk, v) in row.iter_mut().enumerate() {
                *v += pi[kk].ln();
            }
        }
        let lse = log_sum_exp_normalize(&mut log_weights);
        resp = log_weights;
        let loglik: f64 = lse.sum();
        if !loglik.is_finite() {
            return Err(Error::EmFailure(format!(
                "non-finite log-likelihood at iteration {iter}"
            )));
        }
        let previous = trace.last().copied();
        trace.push(loglik);
        if let Some(prev) = previous {
            if (loglik - prev).abs() < tol {
                converged = true;
                break;
            }
        }
    }

    let loglik = *trace.last().expect("at least one EM iteration");
    let bic =
        -2.0 * loglik + gaussian_num_params(k, p, cfg.shared_variance) as f64 * (n as f64).ln();
    Ok(GaussianMixtureFit {
        mu,
        sigma,
        pi,
        loglik,
        responsibilities: resp,
        iterations,
        converged,
        trace,
        bic,
    })
}

/// Fits K = 1..=k_max Gaussian mixtures and returns the BIC-minimizing fit
/// together with the chosen K. A K whose EM degenerates (a component
/// collapses twice) is not a candidate; other errors propagate.
pub fn fit_gaussian_mixture_auto(y: &Array2<f64>, cfg: &EmConfig) -> Result<(GaussianMixtureFit, usize)> {
    let n = y.nrows();
    let k_max = cfg.k_max.min(n.saturating_sub(1)).max(1);
    let mut best: Option<(GaussianMixtureFit, usize)> = None;
    for k in 1..=k_max {
        let fit = match fit_gaussian_mixture(y, k, cfg) {
            Ok(fit) => fit,
            Err(Error::EmFailure(_)) if k > 1 => continue,
            Err(e) => return Err(e),
        };
        let better = match &best {
            None => true,
            Some((b, _)) => fit.bic < b.bic,
        };
        if better {
            best = Some((fit, k));
        }
    }
    best.ok_or_else(|| Error::EmFailure("no Gaussian mixture could be fit".into()))
}
