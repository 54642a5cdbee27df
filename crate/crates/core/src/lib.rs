//! Bayesian intransitive Bradley-Terry model on the complete comparison graph.
//!
//! Pairwise match-ups are split into a transitive gradient flow from latent
//! scores and a cyclic curl flow from triangle weights, using the discrete
//! Hodge decomposition of the complete graph. A Pólya-Gamma Gibbs sampler with
//! horseshoe shrinkage on the curl weights fits the model.

pub mod complex;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod measures;
pub mod polya_gamma;
pub mod sampler;
pub mod seed;
pub mod sim;

pub use complex::{
    curl_adjoint_apply, curl_apply, grad_adjoint_apply, grad_apply, ComplexIndex, EdgeFlow,
    HodgeProjection, OperatorSet, TriangleFlow,
};
pub use error::{Error, Result};
pub use polya_gamma::{pg_draw, pg_draw_with, pg_mean, pg_variance, PgMethod, PgParams};
pub use sampler::{
    compute_matchup, run_baseline_chain, run_chain, ComparisonData, Hyperparams, ModelKind,
    PosteriorDraws, SamplerState,
};
pub use measures::{
    global_intransitivity, global_measure_trace, local_vorticity, summarize, summarize_all,
    MeasureSummary, Quantity,
};
pub use sim::{run_study, SimConfig, StudyReport, Trials, Truth};
pub use seed::{derive_seed, rng_from_seed, ChainRng};
