//! Association tests for multi-view network data.
//!
//! Given two networks on a common node set — or one network plus a
//! multivariate dataset — this crate tests whether the latent community
//! memberships underlying the views are statistically associated. Each view
//! is reduced to per-node block counts conditioned on degree (or Gaussian
//! component densities for a multivariate view), single-view mixture models
//! are fit by EM, and the dependence between views is captured by a
//! coupling matrix optimized under weighted-marginal constraints. The test
//! statistic is the gain in joint pseudo-log-likelihood over the
//! independence coupling, calibrated by permuting the node alignment of the
//! second view.
//!
//! Modules follow the pipeline:
//! - [`graph`]: edge-list ingestion and cross-view node alignment;
//! - [`simulate`]: SBM / degree-corrected SBM / Gaussian-mixture generators
//!   with coupled memberships;
//! - [`spectral`]: initial labels and community-count estimation;
//! - [`pseudolik`]: block counts and the single-view EM fits;
//! - [`coupling`]: the coupling matrix, its optimizer, and the statistic;
//! - [`inference`]: permutation tests and p-values.

pub mod coupling;
pub mod error;
pub mod graph;
pub mod inference;
pub mod pseudolik;
pub mod rng;
pub mod simulate;
pub mod spectral;

pub use error::{Error, Result};
