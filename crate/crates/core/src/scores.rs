//! Per-observation coordinates in the fitted subspace.
//!
//! With `mu` and `A` fixed at their fitted values, each row gets its own
//! logit `theta_nd = mu_d + g_n' a_d` and the N×L score matrix `G` maximizes
//! `S(G) = sum_n sum_d log pi(q_nd theta_nd)` subject to `G'G = I`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estep::responsibilities;
use crate::model::{inverse_logit, log_inverse_logit, ModelParams};
use crate::stiefel::{gp_minimize, project, GpConfig, OrthonormalMatrix};

/// Scale of the fixed perturbation added to a rank-deficient initializer.
const INIT_JITTER: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub g: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ScoreEstimate {
    pub scores: ScoreMatrix,
    /// `S(G)` at the initializer.
    pub initial_objective: f64,
    /// `S(G)` at the returned scores.
    pub objective: f64,
    pub iterations: usize,
    /// The responsibility-weighted initializer was rank deficient and was
    /// perturbed before projection.
    pub jittered_init: bool,
}

fn row_logits(data: &Dataset, fitted: &ModelParams, g: &DMatrix<f64>) -> DMatrix<f64> {
    let mut theta = g * fitted.a.transpose();
    for n in 0..data.n_rows() {
        for d in 0..data.n_cols() {
            theta[(n, d)] += fitted.mu[d];
        }
    }
    theta
}

/// `S(G)`.
pub fn score_objective(data: &Dataset, fitted: &ModelParams, g: &DMatrix<f64>) -> f64 {
    let theta = row_logits(data, fitted, g);
    let mut total = 0.0;
    for n in 0..data.n_rows() {
        for (d, q) in data.q_row(n).iter().enumerate() {
            total += log_inverse_logit(q * theta[(n, d)]);
        }
    }
    total
}

/// Gradient of `-S(G)` written through the working responses of the logistic
/// bound: `(1/4) (Theta - Z) A` with `z_nd = theta_nd + 4 q_nd (1 - pi(q_nd theta_nd))`.
/// The bound is tangent at `Theta`, so this is the exact gradient.
pub fn score_gradient(data: &Dataset, fitted: &ModelParams, g: &DMatrix<f64>) -> DMatrix<f64> {
    let theta = row_logits(data, fitted, g);
    let mut residual = DMatrix::zeros(data.n_rows(), data.n_cols());
    for n in 0..data.n_rows() {
        for (d, q) in data.q_row(n).iter().enumerate() {
            let t = theta[(n, d)];
            let z = t + 4.0 * q * (1.0 - inverse_logit(q * t));
            residual[(n, d)] = t - z;
        }
    }
    residual * &fitted.a / 4.0
}

/// Starting scores: the projection of `U* F`, each row's posterior-weighted
/// cluster position. If that matrix is rank deficient a fixed-seed
/// perturbation of relative size 1e-3 is added first.
pub fn initial_scores(data: &Dataset, fitted: &ModelParams) -> Result<(OrthonormalMatrix, bool)> {
    let resp = responsibilities(data, fitted);
    let weighted = &resp.u * &fitted.f;
    match project(&weighted) {
        Ok(g) => Ok((g, false)),
        Err(Error::RankDeficient { .. }) => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5c0_7e5);
            let scale = INIT_JITTER * weighted.abs().max().max(1.0 / (data.n_rows() as f64).sqrt());
            let noise = DMatrix::from_fn(weighted.nrows(), weighted.ncols(), |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * scale
            });
            Ok((project(&(weighted + noise))?, true))
        }
        Err(e) => Err(e),
    }
}

pub fn estimate_scores(data: &Dataset, fitted: &ModelParams, cfg: &GpConfig) -> Result<ScoreEstimate> {
    fitted.validate()?;
    fitted.check_data(data)?;
    if data.n_rows() < fitted.n_dims() {
        return Err(Error::invalid(format!(
            "need at least L={} rows to estimate orthonormal scores, got {}",
            fitted.n_dims(),
            data.n_rows()
        )));
    }
    let (start, jittered_init) = initial_scores(data, fitted)?;
    let initial_objective = score_objective(data, fitted, start.as_matrix());
    let out = gp_minimize(
        |g| -score_objective(data, fitted, g),
        |g| score_gradient(data, fitted, g),
        start,
        cfg,
    )?;
    Ok(ScoreEstimate {
        scores: ScoreMatrix { g: out.x.into_inner() },
        initial_objective,
        objective: -out.value,
        iterations: out.iterations,
        jittered_init,
    })
}
