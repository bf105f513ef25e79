//! The coupling matrix C, the joint pseudo-log-likelihood, the
//! exponentiated-gradient + Sinkhorn optimizer over the constraint set
//! `{C >= 0, C pi2 = 1, C^T pi1 = 1}`, and the resulting test statistic.
//!
//! C parameterizes the dependence between the latent memberships of two
//! views: `C = all-ones` is exactly independence. Component densities are
//! held in log domain with per-row offsets; the offsets cancel in every
//! gradient ratio, so the optimizer never exponentiates an unshifted
//! log-density.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Axis};

/// Tolerance used when validating coupling-matrix invariants. Analytic
/// constructions sit at machine precision; optimizer outputs are balanced
/// to this bound at worst.
const MARGINAL_TOL: f64 = 1e-7;

/// Nonnegative K1 x K2 matrix with weighted-marginal constraints
/// `C pi2 = 1` and `C^T pi1 = 1`.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub c: Array2<f64>,
    pub pi1: Vec<f64>,
    pub pi2: Vec<f64>,
}

fn check_prob_vector(pi: &[f64], name: &str) -> Result<()> {
    if pi.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} is empty")));
    }
    if pi.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} must be strictly positive"
        )));
    }
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > MARGINAL_TOL {
        return Err(Error::InvalidParameter(format!(
            "{name} sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

impl CouplingMatrix {
    /// Validates the invariants and wraps the parts.
    pub fn new(c: Array2<f64>, pi1: Vec<f64>, pi2: Vec<f64>) -> Result<Self> {
        check_prob_vector(&pi1, "pi1")?;
        check_prob_vector(&pi2, "pi2")?;
        if c.nrows() != pi1.len() || c.ncols() != pi2.len() {
            return Err(Error::DimensionMismatch(format!(
                "C is {}x{} but pi lengths are {} and {}",
                c.nrows(),
                c.ncols(),
                pi1.len(),
                pi2.len()
            )));
        }
        if c.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "coupling matrix entries must be finite and nonnegative".into(),
            ));
        }
        let got = Self { c, pi1, pi2 };
        let violation = got.max_marginal_violation();
        if violation > MARGINAL_TOL {
            return Err(Error::InvalidParameter(format!(
                "coupling marginal violation {violation:.3e} exceeds {MARGINAL_TOL:.0e}"
            )));
        }
        Ok(got)
    }

    /// The independence coupling: all entries one.
    pub fn ones(pi1: Vec<f64>, pi2: Vec<f64>) -> Result<Self> {
        let c = Array2::ones((pi1.len(), pi2.len()));
        Self::new(c, pi1, pi2)
    }

    pub fn k1(&self) -> usize {
        self.c.nrows()
    }

    pub fn k2(&self) -> usize {
        self.c.ncols()
    }

    /// Largest violation of `C pi2 = 1` and `C^T pi1 = 1`.
    pub fn max_marginal_violation(&self) -> f64 {
        max_violation(&self.c, &self.pi1, &self.pi2)
    }

    /// Joint probability table `P[k, k'] = pi1[k] * pi2[k'] * C[k, k']`.
    pub fn joint(&self) -> Array2<f64> {
        let mut p = self.c.clone();
        for ((k, kp), v) in p.indexed_iter_mut() {
            *v *= self.pi1[k] * self.pi2[kp];
        }
        p
    }
}

fn max_violation(c: &Array2<f64>, pi1: &[f64], pi2: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..c.nrows() {
        let row: f64 = (0..c.ncols()).map(|kp| c[[k, kp]] * pi2[kp]).sum();
        worst = worst.max((row - 1.0).abs());
    }
    for kp in 0..c.ncols() {
        let col: f64 = (0..c.nrows()).map(|k| c[[k, kp]] * pi1[k]).sum();
        worst = worst.max((col - 1.0).abs());
    }
    worst
}

/// Recovers `(pi1, pi2, C)` from a joint probability table, using that the
/// decomposition `P[k, k'] = pi1[k] pi2[k'] C[k, k']` is unique when the
/// marginals are interior.
pub fn coupling_from_joint(p: &Array2<f64>) -> Result<CouplingMatrix> {
    if p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "joint table entries must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = p.sum();
    if (total - 1.0).abs() > MARGINAL_TOL {
        return Err(Error::InvalidParameter(format!(
            "joint table sums to {total}, expected 1"
        )));
    }
    let pi1: Vec<f64> = p.sum_axis(Axis(1)).to_vec();
    let pi2: Vec<f64> = p.sum_axis(Axis(0)).to_vec();
    if pi1.iter().chain(pi2.iter()).any(|&m| m <= 0.0) {
        return Err(Error::InvalidParameter(
            "joint table has a zero marginal; interior marginals required".into(),
        ));
    }
    let mut c = p.clone();
    for ((k, kp), v) in c.indexed_iter_mut() {
        *v /= pi1[k] * pi2[kp];
    }
    CouplingMatrix::new(c, pi1, pi2)
}

/// Per-node component densities for the two views, in log domain.
///
/// Row i of `log_g1` holds `log g(view-1 observation i | component k)` for
/// each of the K1 components; `log_g2` likewise for view 2 (multinomial for
/// a network view, Gaussian for a multivariate view).
#[derive(Debug, Clone)]
pub struct ComponentDensityMatrix {
    pub log_g1: Array2<f64>,
    pub log_g2: Array2<f64>,
}

impl ComponentDensityMatrix {
    pub fn new(log_g1: Array2<f64>, log_g2: Array2<f64>) -> Result<Self> {
        if log_g1.nrows() != log_g2.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "density matrices have {} and {} rows",
                log_g1.nrows(),
                log_g2.nrows()
            )));
        }
        if log_g1.nrows() == 0 {
            return Err(Error::EmptyInput("density matrices".into()));
        }
        if log_g1.iter().chain(log_g2.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("component log-density".into()));
        }
        Ok(Self { log_g1, log_g2 })
    }

    pub fn n(&self) -> usize {
        self.log_g1.nrows()
    }

    pub fn k1(&self) -> usize {
        self.log_g1.ncols()
    }

    pub fn k2(&self) -> usize {
        self.log_g2.ncols()
    }

    /// Applies a node permutation to the view-2 rows: new row i is old row
    /// `perm[i]`. This is exactly permuting the view-2 sufficient statistics.
    pub fn permuted_view2(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::DimensionMismatch(format!(
                "permutation length {} != n = {}",
                perm.len(),
                self.n()
            )));
        }
        let mut log_g2 = Array2::zeros(self.log_g2.raw_dim());
        for (i, &src) in perm.iter().enumerate() {
            log_g2.row_mut(i).assign(&self.log_g2.row(src));
        }
        Ok(Self {
            log_g1: self.log_g1.clone(),
            log_g2,
        })
    }
}

/// Offset-stabilized workspace shared by the objective and the optimizer.
struct DensityWorkspace {
    /// `exp(log_g1 - rowmax)`, entries in (0, 1].
    a: Array2<f64>,
    /// `exp(log_g2 - rowmax)`.
    b: Array2<f64>,
    /// Sum of the two row offsets, added back to the objective.
    offset_total: f64,
}

impl DensityWorkspace {
    fn new(gd: &ComponentDensityMatrix) -> Self {
        let shift = |m: &Array2<f64>| -> (Array2<f64>, f64) {
            let mut out = Array2::zeros(m.raw_dim());
            let mut offsets = 0.0;
            for (i, row) in m.rows().into_iter().enumerate() {
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                offsets += mx;
                for (j, &v) in row.iter().enumerate() {
                    out[[i, j]] = (v - mx).exp();
                }
            }
            (out, offsets)
        };
        let (a, off1) = shift(&gd.log_g1);
        let (b, off2) = shift(&gd.log_g2);
        Self {
            a,
            b,
            offset_total: off1 + off2,
        }
    }

    /// `pi1-and-pi2-weighted` mixture mass per node:
    /// `D_i = a_i^T diag(pi1) C diag(pi2) b_i`, without offsets.
    fn node_masses(&self, pi1: &[f64], pi2: &[f64], c: &Array2<f64>) -> Array1<f64> {
        let w = weighted_coupling(pi1, pi2, c);
        let aw = self.a.dot(&w);
        (&aw * &self.b).sum_axis(Axis(1))
    }

    /// `sum_i log D_i` without the row offsets. Differences of this value
    /// are exactly invariant to per-row rescaling of the densities.
    fn objective_core(&self, pi1: &[f64], pi2: &[f64], c: &Array2<f64>) -> Result<f64> {
        let masses = self.node_masses(pi1, pi2, c);
        let mut total = 0.0;
        for &m in masses.iter() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::NonFinite("joint pseudo-log-likelihood".into()));
            }
            total += m.ln();
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("joint pseudo-log-likelihood".into()));
        }
        Ok(total)
    }

    fn objective(&self, pi1: &[f64], pi2: &[f64], c: &Array2<f64>) -> Result<f64> {
        Ok(self.objective_core(pi1, pi2, c)? + self.offset_total)
    }

    /// Ascent direction of Algorithm step: `G[k, k'] = sum_i a_ik b_ik' / D_i`.
    fn gradient(&self, pi1: &[f64], pi2: &[f64], c: &Array2<f64>) -> Result<Array2<f64>> {
        let masses = self.node_masses(pi1, pi2, c);
        let mut b_scaled = self.b.clone();
        for (i, mut row) in b_scaled.rows_mut().into_iter().enumerate() {
            let m = masses[i];
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::NonFinite("coupling gradient".into()));
            }
            row.mapv_inplace(|v| v / m);
        }
        Ok(self.a.t().dot(&b_scaled))
    }
}

fn weighted_coupling(pi1: &[f64], pi2: &[f64], c: &Array2<f64>) -> Array2<f64> {
    let mut w = c.clone();
    for ((k, kp), v) in w.indexed_iter_mut() {
        *v *= pi1[k] * pi2[kp];
    }
    w
}

/// Joint pseudo-log-likelihood
/// `sum_i log( g1_i^T diag(pi1) C diag(pi2) g2_i )`, computed in log domain
/// with per-row offsets so no intermediate underflows.
pub fn joint_pseudo_loglik(
    gd: &ComponentDensityMatrix,
    pi1: &[f64],
    pi2: &[f64],
    c: &Array2<f64>,
) -> Result<f64> {
    check_dims(gd, pi1, pi2, c)?;
    DensityWorkspace::new(gd).objective(pi1, pi2, c)
}

fn check_dims(gd: &ComponentDensityMatrix, pi1: &[f64], pi2: &[f64], c: &Array2<f64>) -> Result<()> {
    if gd.k1() != pi1.len() || gd.k2() != pi2.len() || c.nrows() != pi1.len() || c.ncols() != pi2.len()
    {
        return Err(Error::DimensionMismatch(format!(
            "densities are {}x{}/{}x{}, C is {}x{}, pi lengths {}/{}",
            gd.n(),
            gd.k1(),
            gd.n(),
            gd.k2(),
            c.nrows(),
            c.ncols(),
            pi1.len(),
            pi2.len()
        )));
    }
    Ok(())
}

/// Settings for [`optimize_coupling`] and [`sinkhorn_project`].
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Exponentiated-gradient step size; `None` uses `0.05 / n` (the
    /// gradient scales with n).
    pub step_size: Option<f64>,
    /// Relative objective-change threshold for outer-loop convergence.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Largest tolerated violation of the weighted marginals.
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iter: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            step_size: None,
            outer_tol: 1e-9,
            outer_max_iter: 1000,
            sinkhorn_tol: 1e-10,
            sinkhorn_max_iter: 10_000,
        }
    }
}

/// Rescales a positive matrix to the weighted-marginal constraint set by
/// alternating row/column updates. Returns `C = diag(v) O diag(u)` once the
/// largest marginal violation drops below `cfg.sinkhorn_tol`.
pub fn sinkhorn_project(
    o: &Array2<f64>,
    pi1: &[f64],
    pi2: &[f64],
    cfg: &OptimizerConfig,
) -> Result<Array2<f64>> {
    let mut row_scale = vec![1.0f64; o.nrows()];
    let mut col_scale = vec![1.0f64; o.ncols()];
    sinkhorn_project_with_scales(o, pi1, pi2, cfg, &mut row_scale, &mut col_scale)
}

/// [`sinkhorn_project`] with caller-provided starting scales. The balanced
/// matrix is unique for a positive input, so warm starts change only the
/// iteration count; the optimizer reuses scales across its outer loop.
fn sinkhorn_project_with_scales(
    o: &Array2<f64>,
    pi1: &[f64],
    pi2: &[f64],
    cfg: &OptimizerConfig,
    row_scale: &mut [f64],
    col_scale: &mut [f64],
) -> Result<Array2<f64>> {
    if o.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidParameter(
            "sinkhorn input must be entrywise positive and finite".into(),
        ));
    }
    check_prob_vector(pi1, "pi1")?;
    check_prob_vector(pi2, "pi2")?;
    let (k1, k2) = (o.nrows(), o.ncols());
    if pi1.len() != k1 || pi2.len() != k2 {
        return Err(Error::DimensionMismatch(
            "sinkhorn marginals do not match matrix shape".into(),
        ));
    }
    // Scale invariance: normalize so the iteration works near unit magnitude.
    let scale = o.iter().cloned().fold(f64::MIN, f64::max);
    let o_unit = o.mapv(|x| x / scale);

    // Near-degenerate supports put the alternating scaling in a sublinear
    // regime where the last decades of tolerance cost thousands of sweeps.
    // Once the violation is inside the feasibility bound the rest of the
    // library relies on, a stalled iteration is accepted.
    const ACCEPTABLE_VIOLATION: f64 = 1e-7;
    const STAGNATION_WINDOW: usize = 50;

    let mut c = Array2::zeros((k1, k2));
    let mut violation = f64::INFINITY;
    let mut window_start_violation = f64::INFINITY;
    for sweep in 0..cfg.sinkhorn_max_iter {
        // u <- 1 / (O^T diag(pi1) v), then v <- 1 / (O diag(pi2) u).
        for kp in 0..k2 {
            let denom: f64 = (0..k1)
                .map(|k| o_unit[[k, kp]] * pi1[k] * row_scale[k])
                .sum();
            col_scale[kp] = 1.0 / denom;
        }
        for k in 0..k1 {
            let denom: f64 = (0..k2)
                .map(|kp| o_unit[[k, kp]] * pi2[kp] * col_scale[kp])
                .sum();
            row_scale[k] = 1.0 / denom;
        }
        for ((k, kp), v) in c.indexed_iter_mut() {
            *v = row_scale[k] * o_unit[[k, kp]] * col_scale[kp];
        }
        violation = max_violation(&c, pi1, pi2);
        if !violation.is_finite() {
            // Scales overflowed; report as non-convergence so optimizer
            // steps that caused it are rejected rather than fatal.
            return Err(Error::SinkhornNonConvergence {
                violation: f64::INFINITY,
                iterations: cfg.sinkhorn_max_iter,
            });
        }
        if violation < cfg.sinkhorn_tol {
            return Ok(c);
        }
        if sweep % STAGNATION_WINDOW == 0 {
            if violation < ACCEPTABLE_VIOLATION && violation > 0.9 * window_start_violation {
                return Ok(c);
            }
            window_start_violation = violation;
        }
    }
    Err(Error::SinkhornNonConvergence {
        violation,
        iterations: cfg.sinkhorn_max_iter,
    })
}

/// Result of the coupling optimization.
#[derive(Debug, Clone)]
pub struct CouplingFit {
    pub coupling: CouplingMatrix,
    /// Objective value after each accepted iteration; `trace[0]` is the
    /// objective at the all-ones start.
    pub trace: Vec<f64>,
    /// Total objective improvement over the all-ones start, accumulated in
    /// offset-free form: exactly invariant to per-row density rescaling and
    /// nonnegative by construction.
    pub objective_gain: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Set when 30 consecutive step halvings failed to improve the
    /// objective; the returned C is still feasible.
    pub stalled: bool,
}

const MAX_HALVINGS: usize = 30;
const STEP_GROWTH: f64 = 1.5;
const MAX_STEP_GROWTH_FACTOR: f64 = 1e2;

/// Maximizes the joint pseudo-log-likelihood over the coupling constraint
/// set by exponentiated gradient ascent with a Sinkhorn projection after
/// every step. Starts at the all-ones (independence) coupling; accepted
/// iterations never decrease the objective. The step size adapts: it grows
/// after accepted steps and halves when a step overshoots, so convergence
/// does not depend on tuning the initial step.
pub fn optimize_coupling(
    gd: &ComponentDensityMatrix,
    pi1: &[f64],
    pi2: &[f64],
    cfg: &OptimizerConfig,
) -> Result<CouplingFit> {
    let (k1, k2) = (pi1.len(), pi2.len());
    let mut c = Array2::<f64>::ones((k1, k2));
    check_dims(gd, pi1, pi2, &c)?;
    check_prob_vector(pi1, "pi1")?;
    check_prob_vector(pi2, "pi2")?;

    let ws = DensityWorkspace::new(gd);
    // All accept/convergence decisions use the offset-free objective so the
    // trajectory is invariant to per-row density rescaling.
    let mut core = ws.objective_core(pi1, pi2, &c)?;
    let core_start = core;
    let mut trace = vec![core + ws.offset_total];

    // With a single component on either side the constraint set is the
    // single point C = all-ones.
    if k1 == 1 || k2 == 1 {
        return Ok(CouplingFit {
            coupling: CouplingMatrix::new(c, pi1.to_vec(), pi2.to_vec())?,
            trace,
            objective_gain: 0.0,
            outer_iterations: 0,
            converged: true,
            stalled: false,
        });
    }

    let initial_step = cfg.step_size.unwrap_or(0.05 / gd.n() as f64);
    let max_step = initial_step * MAX_STEP_GROWTH_FACTOR;
    let mut step = initial_step;
    let mut halvings = 0usize;
    let mut outer = 0usize;
    let mut converged = false;
    let mut stalled = false;
    // Balancing scales persist across outer iterations (warm start); the
    // balanced matrix itself does not depend on the starting scales.
    let mut row_scale = vec![1.0f64; k1];
    let mut col_scale = vec![1.0f64; k2];

    while outer < cfg.outer_max_iter {
        outer += 1;
        let grad = ws.gradient(pi1, pi2, &c)?;
        // O = C * exp(s G - 1). Entries are floored relative to the largest
        // so the balancing problem keeps a bounded dynamic range: the
        // alternating scaling converges slowly (or not at all in floating
        // point) on nearly-degenerate supports, and entries that far below
        // the maximum are already numerically zero for the objective.
        let mut o = Array2::zeros((k1, k2));
        let mut o_max = 0.0f64;
        for ((k, kp), v) in o.indexed_iter_mut() {
            let e = (step * grad[[k, kp]] - 1.0).min(700.0);
            *v = (c[[k, kp]] * e.exp()).max(1e-300);
            o_max = o_max.max(*v);
        }
        let floor = o_max * 1e-13;
        o.mapv_inplace(|v| v.max(floor));
        // A step the projection cannot balance (extreme magnitudes near
        // the constraint-set boundary) is treated like an objective
        // decrease: halve and retry.
        let candidate =
            match sinkhorn_project_with_scales(&o, pi1, pi2, cfg, &mut row_scale, &mut col_scale) {
                Ok(c) => Some(c),
                Err(Error::SinkhornNonConvergence { .. }) => None,
                Err(e) => return Err(e),
            };
        let evaluation = candidate.map(|cand| {
            let value = ws.objective_core(pi1, pi2, &cand);
            (cand, value)
        });
        match evaluation {
            Some((cand, Ok(new_core))) if new_core >= core => {
                let gain = new_core - core;
                c = cand;
                core = new_core;
                trace.push(core + ws.offset_total);
                halvings = 0;
                step = (step * STEP_GROWTH).min(max_step);
                // Converged when one step moves the accumulated gain by
                // less than `outer_tol` relative (gain is the statistic).
                if gain < cfg.outer_tol * (core - core_start).max(1.0) {
                    converged = true;
                    break;
                }
            }
            _ => {
                halvings += 1;
                step *= 0.5;
                // Drop scales from the rejected proposal.
                row_scale.iter_mut().for_each(|v| *v = 1.0);
                col_scale.iter_mut().for_each(|v| *v = 1.0);
                if halvings >= MAX_HALVINGS {
                    stalled = true;
                    break;
                }
            }
        }
    }

    Ok(CouplingFit {
        coupling: CouplingMatrix::new(c, pi1.to_vec(), pi2.to_vec())?,
        trace,
        objective_gain: core - core_start,
        outer_iterations: outer,
        converged,
        stalled,
    })
}

/// The test statistic: optimized joint pseudo-log-likelihood minus its value
/// at the independence coupling. Nonnegative by construction; values within
/// numerical slack of zero are clamped to exactly zero.
pub fn p2lrt_statistic(
    gd: &ComponentDensityMatrix,
    pi1: &[f64],
    pi2: &[f64],
    cfg: &OptimizerConfig,
) -> Result<(f64, CouplingFit)> {
    let fit = optimize_coupling(gd, pi1, pi2, cfg)?;
    let stat = fit.objective_gain;
    if stat < -1e-9 {
        return Err(Error::NonFinite(format!(
            "negative likelihood-ratio statistic {stat}"
        )));
    }
    Ok((stat.max(0.0), fit))
}
