//! Gradient projection over matrices with orthonormal columns.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estep::Responsibilities;
use crate::linalg::orthonormality_gap;
use crate::model::{ModelParams, ORTHONORMAL_TOL};
use crate::mstep::MajorizationState;

/// An R×L matrix (R ≥ L) whose columns are orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalMatrix(DMatrix<f64>);

impl OrthonormalMatrix {
    /// Wraps `m` after checking `max |M'M - I| <= 1e-8`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let gap = orthonormality_gap(&m);
        if m.nrows() < m.ncols() || gap > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "{}x{} matrix is not orthonormal (gap {gap:e})",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(OrthonormalMatrix(m))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpConfig {
    pub initial_step: f64,
    pub shrink: f64,
    pub max_iters: usize,
    /// Stop once an accepted step improves the objective by no more than
    /// `tol * (1 + |f|)`.
    pub tol: f64,
    /// Step halvings tried per iteration before declaring a stationary point.
    pub max_halvings: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            initial_step: 1.0,
            shrink: 0.5,
            max_iters: 200,
            tol: 1e-9,
            max_halvings: 60,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0) || !(self.shrink > 0.0 && self.shrink < 1.0) || self.max_iters == 0 || !(self.tol >= 0.0) {
            return Err(Error::invalid(format!("invalid gradient-projection settings {self:?}")));
        }
        Ok(())
    }
}

/// Nearest matrix with orthonormal columns in Frobenius norm: `U V'` from the
/// thin SVD `M = U S V'`.
pub fn project(m: &DMatrix<f64>) -> Result<OrthonormalMatrix> {
    let (r, l) = m.shape();
    if r < l || l == 0 {
        return Err(Error::Dimension(format!("cannot project a {r}x{l} matrix onto orthonormal columns")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("projection input".into()));
    }
    let svd = m.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let smallest = svd.singular_values.min();
    if !(smallest >= 1e-12 * largest) || largest == 0.0 {
        return Err(Error::RankDeficient { smallest, largest });
    }
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    Ok(OrthonormalMatrix(u * v_t))
}

/// Gradient of the `F`-part of the majorizer,
/// `(1/4) diag(N_k) (F A' - Zbar*) A`, with `Zbar*` centered at the current `mu`.
pub fn f_gradient(state: &MajorizationState, resp: &Responsibilities, params: &ModelParams) -> DMatrix<f64> {
    let residual = &params.f * params.a.transpose() - &state.zbar_star;
    DMatrix::from_diagonal(&state.masses(resp)) * residual * &params.a / 4.0
}

/// `(1/8) sum_k N_k |zbar*_k - A f_k|^2`; equals the majorizer up to terms
/// that do not depend on `F`.
pub fn f_objective(state: &MajorizationState, resp: &Responsibilities, a: &DMatrix<f64>, f: &DMatrix<f64>) -> f64 {
    let masses = state.masses(resp);
    let residual = f * a.transpose() - &state.zbar_star;
    residual
        .row_iter()
        .zip(masses.iter())
        .map(|(row, m)| m * row.norm_squared())
        .sum::<f64>()
        / 8.0
}

#[derive(Debug, Clone)]
pub struct GpOutcome {
    pub x: OrthonormalMatrix,
    pub value: f64,
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
}

/// Minimizes `objective` over orthonormal-column matrices by
/// `X <- project(X - alpha grad(X))`, halving `alpha` until the objective
/// decreases. The step that succeeded is doubled for the next iteration.
pub fn gp_minimize<F, G>(objective: F, gradient: G, start: OrthonormalMatrix, cfg: &GpConfig) -> Result<GpOutcome>
where
    F: Fn(&DMatrix<f64>) -> f64,
    G: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    cfg.validate()?;
    let mut x = start.into_inner();
    let mut value = objective(&x);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("objective at the starting point is {value}")));
    }
    let mut trace = vec![value];
    let mut step = cfg.initial_step;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let grad = gradient(&x);
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let mut accepted = None;
        for _ in 0..cfg.max_halvings {
            // an overlong step can leave a numerically rank-deficient
            // candidate; treat it like any other rejected step
            let candidate = match project(&(&x - &grad * step)) {
                Ok(c) => c.into_inner(),
                Err(Error::RankDeficient { .. }) => {
                    step *= cfg.shrink;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let cand_value = objective(&candidate);
            if cand_value.is_nan() {
                return Err(Error::NonFinite("objective evaluated to NaN".into()));
            }
            if cand_value < value {
                accepted = Some((candidate, cand_value));
                break;
            }
            step *= cfg.shrink;
        }
        let Some((candidate, cand_value)) = accepted else {
            break;
        };
        let gain = value - cand_value;
        x = candidate;
        value = cand_value;
        trace.push(value);
        if gain <= cfg.tol * (1.0 + value.abs()) {
            break;
        }
        step /= cfg.shrink;
    }
    Ok(GpOutcome {
        x: OrthonormalMatrix(x),
        value,
        iterations,
        trace,
    })
}

/// Gradient-projection update of `F` against the current majorizer, with `mu`
/// already updated and `A` held fixed.
pub fn update_f(
    state: &MajorizationState,
    resp: &Responsibilities,
    params: &ModelParams,
    cfg: &GpConfig,
) -> Result<GpOutcome> {
    let start = OrthonormalMatrix::new(params.f.clone())?;
    let masses = DMatrix::from_diagonal(&state.masses(resp));
    gp_minimize(
        |f| f_objective(state, resp, &params.a, f),
        |f| &masses * (f * params.a.transpose() - &state.zbar_star) * &params.a / 4.0,
        start,
        cfg,
    )
}
