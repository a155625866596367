//! Model-based clustering of multivariate binary data with a sparse
//! low-dimensional subspace.
//!
//! Each of `K` clusters is a product of Bernoulli distributions whose logits
//! share the low-rank form `theta_kd = mu_d + f_k' a_d`, with `F` (K×L)
//! constrained to orthonormal columns and an L1 penalty on the loadings `A`
//! (D×L). Parameters are estimated by an EM algorithm whose M-step minimizes a
//! quadratic majorizer of the logistic log likelihood:
//!
//! * [`estep`] computes posterior memberships in log space,
//! * [`mstep`] updates the mixing proportions, the centroid `mu` and the
//!   loadings (coordinate-wise soft thresholding),
//! * [`stiefel`] updates `F` by gradient projection onto orthonormal matrices,
//! * [`fit`] drives the outer loop, multi-start runs and BIC selection of the
//!   penalty.
//!
//! [`scores`] estimates per-observation subspace coordinates after a fit,
//! [`eval`] and [`bench`] cover cluster-recovery experiments on data from
//! [`data::simulate`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod error;
pub mod estep;
pub mod eval;
pub mod fit;
pub mod linalg;
pub mod model;
pub mod mstep;
pub mod scores;
pub mod stiefel;

#[cfg(feature = "cli")]
pub mod cli;

pub use data::{Dataset, SimulatedSample, SimulationDesign};
pub use error::{Error, Result};
pub use estep::Responsibilities;
pub use fit::{FitConfig, FitReport, LambdaGrid};
pub use model::{ModelParams, PenaltySpec};
