//! Bayesian estimation of linear and generalized linear models under linear
//! equality and inequality constraints on the coefficients.

// `!(x > 0.0)` style checks below also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod constraints;
pub mod error;
pub mod glm;
pub mod io;
pub mod samplers;
pub mod scenario;
pub mod shape;
pub mod tmvn;

pub use constraints::{ConstraintSet, ReparamMap, FEASIBILITY_TOL};
pub use error::{Error, ErrorKind, Result};
pub use glm::{Dataset, GlmFamily};
pub use samplers::{
    estimate_ergodicity_bound, fit_glm, fit_lm, ErgodicityEstimate, PosteriorSamples, Precision, PriorSpec,
    SamplerConfig,
};
pub use tmvn::{gibbs_sample, sample_truncated_std_normal, TmvnSampler, TmvnSpec};
