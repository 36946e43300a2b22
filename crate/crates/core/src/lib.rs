//! Adaptive spike-and-slab Bayesian sparse factor model.
//!
//! A factor model Y_i = B z_i + eps_i with a doubly sparse p x q loading
//! matrix B: row indicators select which observed variables load on anything,
//! column indicators select how many factors exist. The joint prior penalizes
//! support area, which lets the posterior concentrate on the true number of
//! factors without a preset rank. This crate provides:
//!
//! * the full Gibbs sampler over loadings, scales, indicators, factors and
//!   noise ([`sampler`], [`chain`]),
//! * the prior machinery in ratio form ([`prior`]),
//! * frequentist eigenvalue-based rank estimators for comparison
//!   ([`estimators`]),
//! * synthetic data designs ([`synth`]), posterior diagnostics and loading
//!   alignment ([`diagnostics`], [`align`]),
//! * replicated experiment drivers ([`experiments`]) and file formats
//!   ([`io`]).

pub mod align;
pub mod chain;
pub mod diagnostics;
pub mod dists;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod prior;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod synth;

pub use align::{align_loadings, Alignment};
pub use chain::{run_chain, ChainSettings, ChainTrace, ScalarRecord};
pub use diagnostics::{summarize, Classification, PosteriorSummary};
pub use error::{Error, Result};
pub use estimators::{RankEstimate, RankMethod};
pub use experiments::{ExperimentGrid, StudyMethod};
pub use prior::{FactorCovPrior, IgPair, ModelConfig, NoisePrior};
pub use rng::RngHandle;
pub use sampler::FactorState;
pub use synth::{Design, SyntheticTruth};
