//! Permutation tests of community association, the G-test baseline, and
//! p-value computation.
//!
//! The observed statistic fits both single-view models once; each
//! permutation replicate only re-optimizes the coupling after permuting the
//! view-2 density rows, since the single-view fits are invariant to node
//! permutation. Replicates draw independent RNG streams keyed by replicate
//! index, so the parallel and serial loops produce identical results.

use crate::coupling::{p2lrt_statistic, ComponentDensityMatrix, CouplingFit, OptimizerConfig};
use crate::error::{Error, Result};
use crate::graph::AdjacencyView;
use crate::pseudolik::{
    block_counts, fit_gaussian_mixture, fit_gaussian_mixture_auto, fit_multinomial_mixture,
    gaussian_log_densities, network_log_densities, EmConfig, MixtureInit,
};
use crate::rng::{derived_rng, streams};
use crate::spectral::{estimate_num_communities, spectral_cluster_perturbed, SpectralConfig, SpectralDiagnostics};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Number of communities/clusters for one view: supplied or estimated from
/// the observed data (then held fixed across permutations).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KChoice {
    Given(usize),
    Auto,
}

/// Where the K actually used came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KSource {
    Given,
    Estimated,
}

/// Convention for turning permutation counts into a p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PValueRule {
    /// `#{perm >= observed} / M`; may return exactly zero.
    PlainCount,
    /// `(1 + #{perm >= observed}) / (1 + M)`; strictly positive.
    AddOne,
}

/// Settings shared by the permutation tests.
#[derive(Debug, Clone)]
pub struct TestConfig {
    pub em: EmConfig,
    pub optimizer: OptimizerConfig,
    pub spectral: SpectralConfig,
    pub pvalue_rule: PValueRule,
    /// Run permutation replicates on the rayon pool.
    pub parallel: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            em: EmConfig::default(),
            optimizer: OptimizerConfig::default(),
            spectral: SpectralConfig::default(),
            pvalue_rule: PValueRule::PlainCount,
            parallel: true,
        }
    }
}

/// Second-view parameters of the fitted null-free model.
#[derive(Debug, Clone)]
pub enum View2Params {
    /// Multinomial mixture over block counts (network view).
    Multinomial { eta: Array2<f64> },
    /// Spherical Gaussian mixture (multivariate view).
    Gaussian { mu: Array2<f64>, sigma: Vec<f64> },
}

/// Plug-in estimates behind the observed statistic.
#[derive(Debug, Clone)]
pub struct FittedModels {
    pub pi1: Vec<f64>,
    pub pi2: Vec<f64>,
    pub c_hat: Array2<f64>,
    pub eta1: Array2<f64>,
    pub view2: View2Params,
}

/// Fit- and optimizer-level details kept for reporting.
#[derive(Debug, Clone, Default)]
pub struct TestDiagnostics {
    /// Estimated community labels that fed the view-1 block counts.
    pub labels1: Option<Vec<usize>>,
    /// Estimated labels for view 2 (network views only).
    pub labels2: Option<Vec<usize>>,
    pub spectral1: Option<SpectralDiagnostics>,
    pub spectral2: Option<SpectralDiagnostics>,
    /// Log-likelihood per EM iteration, view 1.
    pub em1_trace: Vec<f64>,
    pub em1_converged: bool,
    /// View 2: multinomial EM or Gaussian EM trace.
    pub em2_trace: Vec<f64>,
    pub em2_converged: bool,
    pub coupling_outer_iterations: usize,
    pub coupling_converged: bool,
    pub coupling_stalled: bool,
}

/// Outcome of one association test.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub statistic: f64,
    pub perm_statistics: Vec<f64>,
    pub p_value: f64,
    pub m: usize,
    pub seed: u64,
    pub fitted: Option<FittedModels>,
    pub k_used: (usize, usize),
    pub k_source: (KSource, KSource),
    pub diagnostics: TestDiagnostics,
    pub runtime_ms: u64,
}

/// Flat summary for JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct TestResultSummary {
    pub statistic: f64,
    pub p_value: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub k1: usize,
    pub k2: usize,
    pub k_source: String,
    pub runtime_ms: u64,
}

impl TestResult {
    pub fn summary(&self) -> TestResultSummary {
        let k_source = match self.k_source {
            (KSource::Given, KSource::Given) => "given",
            (KSource::Estimated, KSource::Estimated) => "estimated",
            _ => "mixed",
        }
        .to_string();
        TestResultSummary {
            statistic: self.statistic,
            p_value: self.p_value,
            m: self.m,
            seed: self.seed,
            k1: self.k_used.0,
            k2: self.k_used.1,
            k_source,
            runtime_ms: self.runtime_ms,
        }
    }
}

/// Permutation p-value with replicate-side ties counted as extreme.
pub fn compute_pvalue(observed: f64, perms: &[f64], rule: PValueRule) -> f64 {
    let count = perms.iter().filter(|&&p| observed <= p).count();
    match rule {
        PValueRule::PlainCount => count as f64 / perms.len() as f64,
        PValueRule::AddOne => (1.0 + count as f64) / (1.0 + perms.len() as f64),
    }
}

fn resolve_k(choice: KChoice, a: &AdjacencyView) -> Result<(usize, KSource)> {
    match choice {
        KChoice::Given(k) => {
            if k == 0 || k > a.n() {
                return Err(Error::InvalidParameter(format!(
                    "K = {k} must lie in 1..={}",
                    a.n()
                )));
            }
            Ok((k, KSource::Given))
        }
        KChoice::Auto => Ok((estimate_num_communities(a)?, KSource::Estimated)),
    }
}

/// Observed statistic plus permutation replicates: each replicate permutes
/// the view-2 density rows and re-optimizes only the coupling.
fn permutation_stage(
    gd: &ComponentDensityMatrix,
    pi1: &[f64],
    pi2: &[f64],
    m: usize,
    cfg: &TestConfig,
    master_seed: u64,
) -> Result<(f64, CouplingFit, Vec<f64>)> {
    let (observed, fit) = p2lrt_statistic(gd, pi1, pi2, &cfg.optimizer)?;
    let n = gd.n();
    let one_replicate = |replicate: usize| -> Result<f64> {
        let inner = || -> Result<f64> {
            let mut rng = derived_rng(master_seed, streams::PERMUTATION_BASE + replicate as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let gd_perm = gd.permuted_view2(&perm)?;
            let (stat, _) = p2lrt_statistic(&gd_perm, pi1, pi2, &cfg.optimizer)?;
            Ok(stat)
        };
        inner().map_err(|e| Error::ReplicateFailure {
            replicate,
            source: Box::new(e),
        })
    };
    let perm_statistics: Vec<f64> = if cfg.parallel {
        (1..=m)
            .into_par_iter()
            .map(one_replicate)
            .collect::<Result<Vec<f64>>>()?
    } else {
        (1..=m).map(one_replicate).collect::<Result<Vec<f64>>>()?
    };
    Ok((observed, fit, perm_statistics))
}

/// Tests association between the latent community memberships of two
/// network views on a shared node set.
pub fn permutation_test_networks(
    a1: &AdjacencyView,
    a2: &AdjacencyView,
    k1: KChoice,
    k2: KChoice,
    m: usize,
    cfg: &TestConfig,
    master_seed: u64,
) -> Result<TestResult> {
    let start = Instant::now();
    if a1.n() != a2.n() {
        return Err(Error::DimensionMismatch(format!(
            "views have {} and {} nodes",
            a1.n(),
            a2.n()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one permutation".into()));
    }
    let (k1, k1_source) = resolve_k(k1, a1)?;
    let (k2, k2_source) = resolve_k(k2, a2)?;

    let mut rng1 = derived_rng(master_seed, streams::SPECTRAL_VIEW1);
    let spectral1 = spectral_cluster_perturbed(a1, k1, &cfg.spectral, &mut rng1)?;
    let mut rng2 = derived_rng(master_seed, streams::SPECTRAL_VIEW2);
    let spectral2 = spectral_cluster_perturbed(a2, k2, &cfg.spectral, &mut rng2)?;

    let bc1 = block_counts(a1, &spectral1.labels, k1)?;
    let bc2 = block_counts(a2, &spectral2.labels, k2)?;
    let fit1 = fit_multinomial_mixture(&bc1, k1, MixtureInit::Labels(&spectral1.labels), &cfg.em)?;
    let fit2 = fit_multinomial_mixture(&bc2, k2, MixtureInit::Labels(&spectral2.labels), &cfg.em)?;

    let gd = ComponentDensityMatrix::new(
        network_log_densities(&bc1, &fit1.eta),
        network_log_densities(&bc2, &fit2.eta),
    )?;
    let (statistic, coupling_fit, perm_statistics) =
        permutation_stage(&gd, &fit1.pi, &fit2.pi, m, cfg, master_seed)?;
    let p_value = compute_pvalue(statistic, &perm_statistics, cfg.pvalue_rule);

    Ok(TestResult {
        statistic,
        p_value,
        m,
        seed: master_seed,
        fitted: Some(FittedModels {
            pi1: fit1.pi.clone(),
            pi2: fit2.pi.clone(),
            c_hat: coupling_fit.coupling.c.clone(),
            eta1: fit1.eta.clone(),
            view2: View2Params::Multinomial {
                eta: fit2.eta.clone(),
            },
        }),
        k_used: (k1, k2),
        k_source: (k1_source, k2_source),
        diagnostics: TestDiagnostics {
            labels1: Some(spectral1.labels),
            labels2: Some(spectral2.labels),
            spectral1: Some(spectral1.diagnostics),
            spectral2: Some(spectral2.diagnostics),
            em1_trace: fit1.trace,
            em1_converged: fit1.converged,
            em2_trace: fit2.trace,
            em2_converged: fit2.converged,
            coupling_outer_iterations: coupling_fit.outer_iterations,
            coupling_converged: coupling_fit.converged,
            coupling_stalled: coupling_fit.stalled,
        },
        perm_statistics,
        runtime_ms: start.elapsed().as_millis() as u64,
    })
}

/// Tests association between network communities and the latent clusters of
/// a multivariate view on the same nodes.
pub fn permutation_test_net_cov(
    a: &AdjacencyView,
    y: &Array2<f64>,
    k1: KChoice,
    k2: KChoice,
    m: usize,
    cfg: &TestConfig,
    master_seed: u64,
) -> Result<TestResult> {
    let start = Instant::now();
    if a.n() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "network has {} nodes, multivariate view has {} rows",
            a.n(),
            y.nrows()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one permutation".into()));
    }
    let (k1, k1_source) = resolve_k(k1, a)?;
    let (k2, k2_source, gmm) = match k2 {
        KChoice::Given(k) => {
            if k == 0 || k >= y.nrows() {
                return Err(Error::InvalidParameter(format!(
                    "K2 = {k} must lie in 1..{}",
                    y.nrows()
                )));
            }
            (k, KSource::Given, fit_gaussian_mixture(y, k, &cfg.em)?)
        }
        KChoice::Auto => {
            let (fit, k) = fit_gaussian_mixture_auto(y, &cfg.em)?;
            (k, KSource::Estimated, fit)
        }
    };

    let mut rng1 = derived_rng(master_seed, streams::SPECTRAL_VIEW1);
    let spectral1 = spectral_cluster_perturbed(a, k1, &cfg.spectral, &mut rng1)?;
    let bc1 = block_counts(a, &spectral1.labels, k1)?;
    let fit1 = fit_multinomial_mixture(&bc1, k1, MixtureInit::Labels(&spectral1.labels), &cfg.em)?;

    let gd = ComponentDensityMatrix::new(
        network_log_densities(&bc1, &fit1.eta),
        gaussian_log_densities(y, &gmm.mu, &gmm.sigma),
    )?;
    let (statistic, coupling_fit, perm_statistics) =
        permutation_stage(&gd, &fit1.pi, &gmm.pi, m, cfg, master_seed)?;
    let p_value = compute_pvalue(statistic, &perm_statistics, cfg.pvalue_rule);

    Ok(TestResult {
        statistic,
        p_value,
        m,
        seed: master_seed,
        fitted: Some(FittedModels {
            pi1: fit1.pi.clone(),
            pi2: gmm.pi.clone(),
            c_hat: coupling_fit.coupling.c.clone(),
            eta1: fit1.eta.clone(),
            view2: View2Params::Gaussian {
                mu: gmm.mu.clone(),
                sigma: gmm.sigma.clone(),
            },
        }),
        k_used: (k1, k2),
        k_source: (k1_source, k2_source),
        diagnostics: TestDiagnostics {
            labels1: Some(spectral1.labels),
            // Hard cluster assignments of the multivariate view, for
            // comparisons against label-based tests.
            labels2: Some(
                gmm.responsibilities
                    .rows()
                    .into_iter()
                    .map(|row| {
                        (0..k2)
                            .max_by(|&a, &b| {
                                row[a].partial_cmp(&row[b]).expect("finite responsibilities")
                            })
                            .expect("at least one component")
                    })
                    .collect(),
            ),
            spectral1: Some(spectral1.diagnostics),
            spectral2: None,
            em1_trace: fit1.trace,
            em1_converged: fit1.converged,
            em2_trace: gmm.trace,
            em2_converged: gmm.converged,
            coupling_outer_iterations: coupling_fit.outer_iterations,
            coupling_converged: coupling_fit.converged,
            coupling_stalled: coupling_fit.stalled,
        },
        perm_statistics,
        runtime_ms: start.elapsed().as_millis() as u64,
    })
}

/// G statistic `2 sum O log(O / E)` of the contingency table of two hard
/// label vectors; zero cells contribute zero.
fn g_statistic(labels1: &[usize], labels2: &[usize], k1: usize, k2: usize) -> f64 {
    let n = labels1.len() as f64;
    let mut table = vec![0.0f64; k1 * k2];
    let mut rows = vec![0.0f64; k1];
    let mut cols = vec![0.0f64; k2];
    for (&a, &b) in labels1.iter().zip(labels2) {
        table[a * k2 + b] += 1.0;
        rows[a] += 1.0;
        cols[b] += 1.0;
    }
    let mut g = 0.0;
    for a in 0..k1 {
        for b in 0..k2 {
            let o = table[a * k2 + b];
            if o > 0.0 {
                let e = rows[a] * cols[b] / n;
                g += o * (o / e).ln();
            }
        }
    }
    2.0 * g
}

/// Permutation-calibrated G-test of independence between two hard label
/// vectors. A degenerate table (a single label level in either vector)
/// yields statistic zero and p-value one.
pub fn g_test(labels1: &[usize], labels2: &[usize], m: usize, master_seed: u64) -> Result<TestResult> {
    let start = Instant::now();
    if labels1.len() != labels2.len() {
        return Err(Error::DimensionMismatch(format!(
            "label vectors have lengths {} and {}",
            labels1.len(),
            labels2.len()
        )));
    }
    if labels1.is_empty() {
        return Err(Error::EmptyInput("label vectors".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("need at least one permutation".into()));
    }
    let k1 = labels1.iter().max().copied().unwrap_or(0) + 1;
    let k2 = labels2.iter().max().copied().unwrap_or(0) + 1;

    let statistic = g_statistic(labels1, labels2, k1, k2);
    let perm_statistics: Vec<f64> = (1..=m)
        .map(|replicate| {
            let mut rng = derived_rng(master_seed, streams::PERMUTATION_BASE + replicate as u64);
            let mut shuffled = labels2.to_vec();
            shuffled.shuffle(&mut rng);
            g_statistic(labels1, &shuffled, k1, k2)
        })
        .collect();
    let p_value = compute_pvalue(statistic, &perm_statistics, PValueRule::PlainCount);

    Ok(TestResult {
        statistic,
        p_value,
        m,
        seed: master_seed,
        fitted: None,
        k_used: (k1, k2),
        k_source: (KSource::Given, KSource::Given),
        diagnostics: TestDiagnostics::default(),
        perm_statistics,
        runtime_ms: start.elapsed().as_millis() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pvalue_counts_ties_as_extreme() {
        assert_eq!(compute_pvalue(1.0, &[1.0, 2.0], PValueRule::PlainCount), 1.0);
        assert_eq!(
            compute_pvalue(0.25, &[0.1, 0.2, 0.3, 0.4], PValueRule::PlainCount),
            0.5
        );
        assert_eq!(compute_pvalue(5.0, &[1.0, 2.0, 3.0], PValueRule::PlainCount), 0.0);
    }

    #[test]
    fn pvalue_add_one_rule_is_strictly_positive() {
        assert_abs_diff_eq!(
            compute_pvalue(5.0, &[1.0, 2.0, 3.0], PValueRule::AddOne),
            0.25,
            epsilon = 1e-15
        );
    }

    #[test]
    fn g_statistic_diagonal_table() {
        let labels1: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let stat = g_statistic(&labels1, &labels1, 2, 2);
        assert_abs_diff_eq!(stat, 20.0 * 4f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn g_test_constant_second_labels_gives_zero_and_one() {
        let labels1: Vec<usize> = (0..10).map(|i| i % 2).collect();
        let labels2 = vec![0usize; 10];
        let res = g_test(&labels1, &labels2, 25, 3).unwrap();
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn g_test_identical_balanced_labels_beats_all_permutations() {
        for seed in 0..20 {
            let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
            let res = g_test(&labels, &labels, 200, seed).unwrap();
            assert_eq!(res.p_value, 0.0, "seed {seed}");
        }
    }

    #[test]
    fn g_test_is_deterministic() {
        let labels1: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let labels2: Vec<usize> = (0..30).map(|i| (i / 2) % 2).collect();
        let a = g_test(&labels1, &labels2, 50, 11).unwrap();
        let b = g_test(&labels1, &labels2, 50, 11).unwrap();
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.perm_statistics, b.perm_statistics);
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn pvalue_times_m_is_the_tie_inclusive_count() {
        let perms = [0.5, 1.5, 2.5, 1.0, 1.0];
        let observed = 1.0;
        let p = compute_pvalue(observed, &perms, PValueRule::PlainCount);
        let count = perms.iter().filter(|&&x| observed <= x).count();
        assert_eq!((p * perms.len() as f64).round() as usize, count);
    }
}
