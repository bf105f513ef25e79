//! Generators for coupled latent memberships, SBM and degree-corrected SBM
//! adjacency views, and Gaussian-mixture multivariate views.
//!
//! All generators are pure functions of their inputs and the RNG, so
//! replicates with derived seeds are reproducible and order-independent.

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::graph::AdjacencyView;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Uniform probability vector of length K.
pub fn uniform_pi(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// The one-parameter coupling family with uniform marginals:
/// `C = (1 - delta) * ones + delta * diag(K * ones)`. `delta = 0` is
/// independence, `delta = 1` identical memberships.
pub fn coupling_matrix(delta: f64, k: usize) -> Result<CouplingMatrix> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} must lie in [0, 1]"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let mut c = Array2::from_elem((k, k), 1.0 - delta);
    for kk in 0..k {
        c[[kk, kk]] += delta * k as f64;
    }
    CouplingMatrix::new(c, uniform_pi(k), uniform_pi(k))
}

/// Symmetric K x K edge-probability matrix plus membership weights.
#[derive(Debug, Clone)]
pub struct SbmParams {
    pub theta: Array2<f64>,
    pub pi: Vec<f64>,
}

impl SbmParams {
    pub fn new(theta: Array2<f64>, pi: Vec<f64>) -> Result<Self> {
        let k = pi.len();
        if theta.nrows() != k || theta.ncols() != k {
            return Err(Error::DimensionMismatch(format!(
                "theta is {}x{}, pi has length {k}",
                theta.nrows(),
                theta.ncols()
            )));
        }
        if pi.iter().any(|&p| !(p > 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(
                "pi must be interior to the simplex".into(),
            ));
        }
        for i in 0..k {
            for j in 0..k {
                let v = theta[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidParameter(format!(
                        "theta[{i},{j}] = {v} outside [0, 1]"
                    )));
                }
                if (v - theta[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidParameter("theta must be symmetric".into()));
                }
            }
        }
        Ok(Self { theta, pi })
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }
}

/// Builds `theta[k,k'] = omega + (2r - 1) omega 1{k = k'}` with omega solved
/// so the expected edge density `sum_{k,k'} pi_k pi_k' theta_kk'` equals `s`.
/// Within-community edges are `2r` times likelier than between-community
/// ones.
pub fn block_matrix(r: f64, s: f64, k: usize, pi: &[f64]) -> Result<SbmParams> {
    if r <= 0.0 {
        return Err(Error::InvalidParameter(format!("r = {r} must be positive")));
    }
    if !(0.0 < s && s < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "s = {s} must lie in (0, 1)"
        )));
    }
    if pi.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "pi has length {}, expected K = {k}",
            pi.len()
        )));
    }
    let pi_sq: f64 = pi.iter().map(|&p| p * p).sum();
    let omega = s / (1.0 + (2.0 * r - 1.0) * pi_sq);
    let diagonal = 2.0 * r * omega;
    if !(omega > 0.0) || omega > 1.0 || diagonal > 1.0 {
        return Err(Error::Infeasible(format!(
            "no valid block matrix for (r, s, K) = ({r}, {s}, {k}): omega = {omega}, diagonal = {diagonal}"
        )));
    }
    let mut theta = Array2::from_elem((k, k), omega);
    for kk in 0..k {
        theta[[kk, kk]] = diagonal;
    }
    SbmParams::new(theta, pi.to_vec())
}

/// Draws n i.i.d. membership pairs with
/// `P(z1 = k, z2 = k') = pi1_k pi2_k' C_kk'`. Labels are 0-based.
pub fn sample_joint_memberships(
    coupling: &CouplingMatrix,
    n: usize,
    rng: &mut impl Rng,
) -> (Vec<usize>, Vec<usize>) {
    let (k1, k2) = (coupling.k1(), coupling.k2());
    let joint = coupling.joint();
    let mut cumulative = Vec::with_capacity(k1 * k2);
    let mut total = 0.0;
    for k in 0..k1 {
        for kp in 0..k2 {
            total += joint[[k, kp]];
            cumulative.push(total);
        }
    }
    let mut z1 = Vec::with_capacity(n);
    let mut z2 = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random_range(0.0..total);
        let cell = cumulative.partition_point(|&c| c <= u).min(k1 * k2 - 1);
        z1.push(cell / k2);
        z2.push(cell % k2);
    }
    (z1, z2)
}

fn check_labels(z: &[usize], k: usize) -> Result<()> {
    for &label in z {
        if label >= k {
            return Err(Error::LabelOutOfRange { label, k });
        }
    }
    Ok(())
}

/// Samples an SBM view: independent Bernoulli(theta[z_i, z_j]) edges for
/// i < j; symmetric, no self-loops.
pub fn sample_sbm(z: &[usize], params: &SbmParams, rng: &mut impl Rng) -> Result<AdjacencyView> {
    check_labels(z, params.k())?;
    let n = z.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = params.theta[[z[i], z[j]]];
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    AdjacencyView::from_edges(n, edges)
}

/// Node popularity distributions for the degree-corrected model.
#[derive(Debug, Clone)]
pub enum PopularitySpec {
    /// Two-point distribution: value `values.0` with probability `probs.0`,
    /// else `values.1`.
    TwoPoint { values: (f64, f64), probs: (f64, f64) },
    /// Uniform on `(lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Copy the popularities already drawn for view 1 (maximal dependence
    /// between views). Resolved by the caller that holds both views.
    SharedWithView1,
}

/// Draws n i.i.d. popularities. `SharedWithView1` cannot be sampled here;
/// the caller copies view 1's vector instead.
pub fn sample_popularities(
    spec: &PopularitySpec,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    match spec {
        PopularitySpec::TwoPoint { values, probs } => {
            if values.0 <= 0.0 || values.1 <= 0.0 {
                return Err(Error::InvalidParameter(
                    "popularity values must be positive".into(),
                ));
            }
            if (probs.0 + probs.1 - 1.0).abs() > 1e-12 || probs.0 < 0.0 || probs.1 < 0.0 {
                return Err(Error::InvalidParameter(
                    "two-point probabilities must be nonnegative and sum to 1".into(),
                ));
            }
            Ok((0..n)
                .map(|_| {
                    if rng.random::<f64>() < probs.0 {
                        values.0
                    } else {
                        values.1
                    }
                })
                .collect())
        }
        PopularitySpec::Uniform { lo, hi } => {
            if !(0.0 < *lo && lo <= hi) {
                return Err(Error::InvalidParameter(format!(
                    "uniform popularity range ({lo}, {hi}) must be positive and ordered"
                )));
            }
            Ok((0..n).map(|_| rng.random_range(*lo..*hi)).collect())
        }
        PopularitySpec::SharedWithView1 => Err(Error::InvalidParameter(
            "shared popularities are resolved by copying view 1's vector".into(),
        )),
    }
}

/// Samples a degree-corrected SBM view: Bernoulli(delta_i delta_j
/// theta[z_i, z_j]) edges. Errors before sampling if any pair's probability
/// exceeds one, keeping the sampling law exact.
pub fn sample_dcsbm(
    z: &[usize],
    delta: &[f64],
    params: &SbmParams,
    rng: &mut impl Rng,
) -> Result<AdjacencyView> {
    check_labels(z, params.k())?;
    let n = z.len();
    if delta.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "popularities have length {}, labels {n}",
            delta.len()
        )));
    }
    if delta.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidParameter(
            "popularities must be positive".into(),
        ));
    }
    // Exact feasibility check via the two largest popularities per
    // community: the largest delta_i delta_j over pairs with (z_i, z_j) =
    // (k, k') is top1[k] * top1[k'] (or top1[k] * top2[k] within one
    // community).
    let k = params.k();
    let mut top = vec![(0.0f64, 0.0f64); k]; // (largest, second largest)
    for (&zi, &di) in z.iter().zip(delta) {
        let entry = &mut top[zi];
        if di > entry.0 {
            entry.1 = entry.0;
            entry.0 = di;
        } else if di > entry.1 {
            entry.1 = di;
        }
    }
    for ka in 0..k {
        for kb in ka..k {
            let pair_max = if ka == kb {
                top[ka].0 * top[ka].1
            } else {
                top[ka].0 * top[kb].0
            };
            let p = pair_max * params.theta[[ka, kb]];
            if p > 1.0 {
                return Err(Error::Infeasible(format!(
                    "edge probability {p:.4} > 1 between communities {ka} and {kb}"
                )));
            }
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = delta[i] * delta[j] * params.theta[[z[i], z[j]]];
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    AdjacencyView::from_edges(n, edges)
}

/// Spherical Gaussian mixture parameters: column k of `mu` is the mean of
/// component k; `sigma` is the common spherical standard deviation.
#[derive(Debug, Clone)]
pub struct GmmParams {
    pub mu: Array2<f64>,
    pub sigma: f64,
}

impl GmmParams {
    pub fn new(mu: Array2<f64>, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma = {sigma} must be positive"
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture means".into()));
        }
        Ok(Self { mu, sigma })
    }

    pub fn k(&self) -> usize {
        self.mu.ncols()
    }

    pub fn p(&self) -> usize {
        self.mu.nrows()
    }
}

/// Draws row i from `N(mu[:, z2_i], sigma^2 I)`.
pub fn sample_gmm(z2: &[usize], params: &GmmParams, rng: &mut impl Rng) -> Result<Array2<f64>> {
    check_labels(z2, params.k())?;
    let (n, p) = (z2.len(), params.p());
    let mut y = Array2::zeros((n, p));
    for (i, &zi) in z2.iter().enumerate() {
        for j in 0..p {
            let noise: f64 = StandardNormal.sample(rng);
            y[[i, j]] = params.mu[[j, zi]] + params.sigma * noise;
        }
    }
    Ok(y)
}

/// One simulated pair of network views with their ground truth.
#[derive(Debug, Clone)]
pub struct NetworkPairSample {
    pub z1: Vec<usize>,
    pub z2: Vec<usize>,
    pub delta1: Option<Vec<f64>>,
    pub delta2: Option<Vec<f64>>,
    pub view1: AdjacencyView,
    pub view2: AdjacencyView,
}

/// Draws coupled memberships and two network views; degree correction is
/// applied per view when popularity specs are given. A
/// `PopularitySpec::SharedWithView1` second spec copies view 1's vector.
pub fn sample_network_pair(
    coupling: &CouplingMatrix,
    params1: &SbmParams,
    params2: &SbmParams,
    popularities: Option<(&PopularitySpec, &PopularitySpec)>,
    n: usize,
    rng: &mut impl Rng,
) -> Result<NetworkPairSample> {
    let (z1, z2) = sample_joint_memberships(coupling, n, rng);
    match popularities {
        None => {
            let view1 = sample_sbm(&z1, params1, rng)?;
            let view2 = sample_sbm(&z2, params2, rng)?;
            Ok(NetworkPairSample {
                z1,
                z2,
                delta1: None,
                delta2: None,
                view1,
                view2,
            })
        }
        Some((spec1, spec2)) => {
            let delta1 = sample_popularities(spec1, n, rng)?;
            let delta2 = match spec2 {
                PopularitySpec::SharedWithView1 => delta1.clone(),
                other => sample_popularities(other, n, rng)?,
            };
            let view1 = sample_dcsbm(&z1, &delta1, params1, rng)?;
            let view2 = sample_dcsbm(&z2, &delta2, params2, rng)?;
            Ok(NetworkPairSample {
                z1,
                z2,
                delta1: Some(delta1),
                delta2: Some(delta2),
                view1,
                view2,
            })
        }
    }
}

/// One simulated network view plus a coupled multivariate view.
#[derive(Debug, Clone)]
pub struct NetCovSample {
    pub z1: Vec<usize>,
    pub z2: Vec<usize>,
    pub delta: Option<Vec<f64>>,
    pub view: AdjacencyView,
    pub y: Array2<f64>,
}

/// Draws coupled memberships, a network view (optionally degree-corrected),
/// and a Gaussian-mixture multivariate view.
pub fn sample_net_cov(
    coupling: &CouplingMatrix,
    sbm: &SbmParams,
    popularity: Option<&PopularitySpec>,
    gmm: &GmmParams,
    n: usize,
    rng: &mut impl Rng,
) -> Result<NetCovSample> {
    let (z1, z2) = sample_joint_memberships(coupling, n, rng);
    let (view, delta) = match popularity {
        None => (sample_sbm(&z1, sbm, rng)?, None),
        Some(spec) => {
            let delta = sample_popularities(spec, n, rng)?;
            (sample_dcsbm(&z1, &delta, sbm, rng)?, Some(delta))
        }
    };
    let y = sample_gmm(&z2, gmm, rng)?;
    Ok(NetCovSample {
        z1,
        z2,
        delta,
        view,
        y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derived_rng;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn coupling_matrix_independence_is_all_ones() {
        let cm = coupling_matrix(0.0, 3).unwrap();
        assert!(cm.c.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn coupling_matrix_identity_case() {
        let cm = coupling_matrix(1.0, 2).unwrap();
        assert_eq!(cm.c, array![[2.0, 0.0], [0.0, 2.0]]);
    }

    #[test]
    fn coupling_matrix_half_mix() {
        let cm = coupling_matrix(0.5, 2).unwrap();
        assert_eq!(cm.c, array![[1.5, 0.5], [0.5, 1.5]]);
        assert!(cm.max_marginal_violation() < 1e-12);
    }

    #[test]
    fn coupling_matrix_rejects_bad_delta() {
        assert!(coupling_matrix(-0.1, 2).is_err());
        assert!(coupling_matrix(1.1, 2).is_err());
    }

    #[test]
    fn block_matrix_flat_when_r_half() {
        let p = block_matrix(0.5, 0.1, 4, &uniform_pi(4)).unwrap();
        assert!(p.theta.iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn block_matrix_closed_form_under_uniform_pi() {
        let p = block_matrix(2.0, 0.02, 6, &uniform_pi(6)).unwrap();
        let omega = 0.02 / 1.5;
        assert_abs_diff_eq!(p.theta[[0, 1]], omega, epsilon = 1e-15);
        assert_abs_diff_eq!(p.theta[[0, 0]], 4.0 * omega, epsilon = 1e-15);
        // Expected density recovers s.
        let pi = uniform_pi(6);
        let mut density = 0.0;
        for k in 0..6 {
            for kp in 0..6 {
                density += pi[k] * pi[kp] * p.theta[[k, kp]];
            }
        }
        assert_abs_diff_eq!(density, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn block_matrix_rejects_infeasible_combination() {
        // s near one with strong communities pushes the diagonal past one:
        // omega = 0.9 / (1 + 19 * 0.5), diagonal = 20 * omega = 1.71.
        assert!(matches!(
            block_matrix(10.0, 0.9, 2, &uniform_pi(2)),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn joint_memberships_identical_when_delta_one() {
        let cm = coupling_matrix(1.0, 4).unwrap();
        let mut rng = derived_rng(5, 0);
        let (z1, z2) = sample_joint_memberships(&cm, 500, &mut rng);
        assert_eq!(z1, z2);
    }

    #[test]
    fn joint_memberships_degenerate_single_community() {
        let cm = coupling_matrix(0.3, 1).unwrap();
        let mut rng = derived_rng(6, 0);
        let (z1, z2) = sample_joint_memberships(&cm, 50, &mut rng);
        assert!(z1.iter().all(|&z| z == 0));
        assert!(z2.iter().all(|&z| z == 0));
    }

    #[test]
    fn sbm_extreme_probabilities() {
        let zeros = SbmParams::new(Array2::zeros((2, 2)), uniform_pi(2)).unwrap();
        let ones = SbmParams::new(Array2::ones((2, 2)), uniform_pi(2)).unwrap();
        let z = vec![0, 1, 0, 1, 0];
        let mut rng = derived_rng(7, 0);
        assert_eq!(sample_sbm(&z, &zeros, &mut rng).unwrap().edge_count(), 0);
        assert_eq!(sample_sbm(&z, &ones, &mut rng).unwrap().edge_count(), 10);
    }

    #[test]
    fn dcsbm_rejects_probability_above_one() {
        let params = SbmParams::new(Array2::from_elem((2, 2), 0.5), uniform_pi(2)).unwrap();
        let z = vec![0, 0, 1];
        let delta = vec![2.0, 2.0, 0.5];
        let mut rng = derived_rng(8, 0);
        assert!(matches!(
            sample_dcsbm(&z, &delta, &params, &mut rng),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn dcsbm_feasibility_check_is_per_pair_not_global() {
        // The two largest popularities live in communities whose theta is
        // small, so no actual pair exceeds one even though the global
        // product delta_max^2 * theta_max would.
        let theta = array![[0.01, 0.02], [0.02, 0.9]];
        let params = SbmParams::new(theta, uniform_pi(2)).unwrap();
        let z = vec![0, 0, 1, 1];
        let delta = vec![5.0, 5.0, 1.0, 1.0];
        // max pair within community 0: 25 * 0.01 = 0.25; across: 5 * 0.02
        // * 1 = 0.1; within community 1: 0.9. All feasible.
        let mut rng = derived_rng(9, 0);
        assert!(sample_dcsbm(&z, &delta, &params, &mut rng).is_ok());
    }

    #[test]
    fn gmm_rows_near_component_means_when_sigma_tiny() {
        let mu = array![
            [0.0, 0.0, 12f64.sqrt()],
            [0.0, 0.0, 12f64.sqrt()],
            [2.0, -2.0, 0.0]
        ];
        let params = GmmParams::new(mu.clone(), 1e-6).unwrap();
        let z2 = vec![0, 1, 2];
        let mut rng = derived_rng(10, 0);
        let y = sample_gmm(&z2, &params, &mut rng).unwrap();
        for (i, &zi) in z2.iter().enumerate() {
            for j in 0..3 {
                assert_abs_diff_eq!(y[[i, j]], mu[[j, zi]], epsilon = 1e-4);
            }
        }
    }

    #[test]
    fn gmm_same_seed_identical_output() {
        let params = GmmParams::new(Array2::zeros((4, 1)), 1.0).unwrap();
        let z = vec![0; 20];
        let y1 = sample_gmm(&z, &params, &mut derived_rng(11, 0)).unwrap();
        let y2 = sample_gmm(&z, &params, &mut derived_rng(11, 0)).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn shared_popularities_copy_view1() {
        let cm = coupling_matrix(0.0, 2).unwrap();
        let params = block_matrix(2.0, 0.1, 2, &uniform_pi(2)).unwrap();
        let spec1 = PopularitySpec::Uniform { lo: 0.14, hi: 0.84 };
        let mut rng = derived_rng(12, 0);
        let sample = sample_network_pair(
            &cm,
            &params,
            &params,
            Some((&spec1, &PopularitySpec::SharedWithView1)),
            40,
            &mut rng,
        )
        .unwrap();
        assert_eq!(sample.delta1, sample.delta2);
    }

    #[test]
    fn sample_popularities_rejects_shared_marker() {
        let mut rng = derived_rng(13, 0);
        assert!(sample_popularities(&PopularitySpec::SharedWithView1, 5, &mut rng).is_err());
    }
}
