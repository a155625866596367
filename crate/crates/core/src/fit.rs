//! Outer EM loop, multi-start orchestration and BIC selection of the penalty.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Normal, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estep::Responsibilities;
use crate::linalg::{canonicalize_signs, count_nonzero};
use crate::model::{bic_value, degrees_of_freedom, log_joint, loglik_from_joint, penalty_value, ModelParams, PenaltySpec};
use crate::mstep::{update_loadings, update_mixing, update_mu, LoadingSolver, MajorizationState, EMPTY_CLUSTER_FRACTION};
use crate::stiefel::{project, update_f, GpConfig};

/// Symmetric Dirichlet concentration for initial mixing proportions.
const INIT_DIRICHLET: f64 = 5.0;
/// Standard deviation of initial loadings.
const INIT_LOADING_SD: f64 = 0.1;
/// Number of values in the default penalty grid.
pub const DEFAULT_GRID_SIZE: usize = 20;
/// Lower end of the default penalty grid.
pub const DEFAULT_GRID_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub k: usize,
    pub l: usize,
    pub penalty: PenaltySpec,
    pub max_outer_iters: usize,
    /// Stop when `|S_t - S_{t-1}| <= outer_tol * (1 + |S_{t-1}|)`.
    pub outer_tol: f64,
    pub n_starts: usize,
    pub seed: u64,
    pub gp: GpConfig,
    pub loadings: LoadingSolver,
}

impl FitConfig {
    pub fn new(k: usize, l: usize, lambda: f64) -> Self {
        FitConfig {
            k,
            l,
            penalty: PenaltySpec { lambda },
            max_outer_iters: 500,
            outer_tol: 1e-7,
            n_starts: 50,
            seed: 0,
            gp: GpConfig::default(),
            loadings: LoadingSolver::default(),
        }
    }

    pub fn with_starts(mut self, n_starts: usize) -> Self {
        self.n_starts = n_starts;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.penalty = PenaltySpec { lambda };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.l == 0 || self.n_starts == 0 || self.max_outer_iters == 0 {
            return Err(Error::invalid("k, l, starts and iteration cap must be positive"));
        }
        if self.l > self.k {
            return Err(Error::invalid(format!("l={} must not exceed k={}", self.l, self.k)));
        }
        if !(self.outer_tol >= 0.0) {
            return Err(Error::invalid("outer tolerance must be nonnegative"));
        }
        PenaltySpec::new(self.penalty.lambda)?;
        self.gp.validate()
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: ModelParams,
    pub lambda: f64,
    /// Unpenalized log likelihood at `params`.
    pub loglik: f64,
    /// `loglik - N * lambda * |A|_1`.
    pub penalized: f64,
    pub df: usize,
    pub bic: f64,
    /// Penalized objective at the initial values and after every iteration.
    pub trace: Vec<f64>,
    pub responsibilities: Responsibilities,
    pub hard_labels: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Clusters (1-based) whose mass fell below the empty-cluster threshold
    /// at some iteration.
    pub empty_clusters: Vec<usize>,
    /// Index of the random start that produced this fit.
    pub start: usize,
}

impl FitReport {
    pub fn nonzero_loadings(&self) -> usize {
        count_nonzero(&self.params.a)
    }
}

/// Random starting values for start `start`: `mu = 0`, `xi` from a symmetric
/// Dirichlet(5), `F` the projection of a standard-normal K×L matrix and `A`
/// i.i.d. Normal(0, 0.1^2).
pub fn random_init(n_vars: usize, cfg: &FitConfig, start: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(start as u64);
    let gamma = Gamma::new(INIT_DIRICHLET, 1.0).expect("valid gamma parameters");
    let raw: Vec<f64> = (0..cfg.k).map(|_| rng.sample(gamma)).collect();
    let total: f64 = raw.iter().sum();
    let mut xi = DVector::from_iterator(cfg.k, raw.iter().map(|v| v / total));
    let head: f64 = xi.iter().take(cfg.k - 1).sum();
    xi[cfg.k - 1] = 1.0 - head;
    let f = loop {
        let g = DMatrix::from_fn(cfg.k, cfg.l, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(f) = project(&g) {
            break f.into_inner();
        }
    };
    let normal = Normal::new(0.0, INIT_LOADING_SD).expect("valid normal parameters");
    let a = DMatrix::from_fn(n_vars, cfg.l, |_, _| rng.sample(normal));
    ModelParams {
        xi,
        mu: DVector::zeros(n_vars),
        f,
        a,
    }
}

fn objective_from_joint(joint: &DMatrix<f64>, a: &DMatrix<f64>, spec: PenaltySpec, n: usize) -> (f64, f64) {
    let loglik = loglik_from_joint(joint);
    (loglik, loglik - n as f64 * penalty_value(a, spec))
}

/// Runs EM from `init` until the penalized objective stabilizes. Each
/// iteration recomputes responsibilities, then updates `xi`, `mu`, `F` (by
/// gradient projection) and `A` (by coordinate soft thresholding) once
/// against a majorizer anchored at the current iterate.
pub fn fit_once(data: &Dataset, cfg: &FitConfig, init: ModelParams) -> Result<FitReport> {
    cfg.validate()?;
    init.validate()?;
    init.check_data(data)?;
    if init.dims().0 != cfg.k || init.dims().1 != cfg.l {
        return Err(Error::Dimension(format!(
            "initial values have K={}, L={} but the configuration asks for K={}, L={}",
            init.dims().0,
            init.dims().1,
            cfg.k,
            cfg.l
        )));
    }
    let n = data.n_rows();
    let spec = cfg.penalty;
    let mut params = init;
    let mut joint = log_joint(data, &params);
    let (_, mut current) = objective_from_joint(&joint, &params.a, spec, n);
    if !current.is_finite() {
        return Err(Error::NonFinite(format!("penalized objective at the initial values is {current}")));
    }
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;
    let mut empty = vec![false; cfg.k];

    while iterations < cfg.max_outer_iters {
        iterations += 1;
        let resp = Responsibilities::from_log_joint(&joint);
        let mut state = MajorizationState::new(data, &params, &resp);
        for (flag, active) in empty.iter_mut().zip(&state.active) {
            *flag |= !active;
        }
        params.xi = update_mixing(&resp);
        params.mu = update_mu(&state, &resp, &params);
        state.recenter(&params.mu);
        params.f = update_f(&state, &resp, &params, &cfg.gp)?.x.into_inner();
        state.refresh_coefficients(&resp, &params.f);
        params.a = update_loadings(&state.v, &state.w, &params.a, spec, n, cfg.loadings)?;

        joint = log_joint(data, &params);
        let (_, next) = objective_from_joint(&joint, &params.a, spec, n);
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("penalized objective became {next} at iteration {iterations}")));
        }
        trace.push(next);
        let previous = current;
        current = next;
        if (current - previous).abs() <= cfg.outer_tol * (1.0 + previous.abs()) {
            converged = true;
            break;
        }
    }

    canonicalize_signs(&mut params.f, &mut params.a);
    let joint = log_joint(data, &params);
    let (loglik, penalized) = objective_from_joint(&joint, &params.a, spec, n);
    let responsibilities = Responsibilities::from_log_joint(&joint);
    for (c, flag) in empty.iter_mut().enumerate() {
        *flag |= responsibilities.nk[c] < EMPTY_CLUSTER_FRACTION * n as f64;
    }
    let df = degrees_of_freedom(&params);
    Ok(FitReport {
        hard_labels: responsibilities.hard_labels(),
        responsibilities,
        bic: bic_value(loglik, n, df),
        df,
        loglik,
        penalized,
        lambda: spec.lambda,
        params,
        trace,
        iterations,
        converged,
        empty_clusters: empty.iter().enumerate().filter(|(_, e)| **e).map(|(c, _)| c + 1).collect(),
        start: 0,
    })
}

fn run_starts(data: &Dataset, cfg: &FitConfig, warm: Option<&ModelParams>) -> Vec<Result<FitReport>> {
    let total = cfg.n_starts + usize::from(warm.is_some());
    let one = |s: usize| {
        let init = match warm {
            Some(p) if s == cfg.n_starts => p.clone(),
            _ => random_init(data.n_cols(), cfg, s),
        };
        fit_once(data, cfg, init).map(|mut r| {
            r.start = s;
            r
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..total).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..total).map(one).collect()
    }
}

/// Best of `cfg.n_starts` random starts by final penalized objective; ties go
/// to the lower start index, so parallel and sequential runs agree.
pub fn fit_multistart(data: &Dataset, cfg: &FitConfig) -> Result<FitReport> {
    fit_multistart_from(data, cfg, None)
}

/// [`fit_multistart`] with one extra start from `warm`, given start index
/// `cfg.n_starts`.
pub fn fit_multistart_from(data: &Dataset, cfg: &FitConfig, warm: Option<&ModelParams>) -> Result<FitReport> {
    cfg.validate()?;
    let mut best: Option<FitReport> = None;
    let mut last_err = None;
    for outcome in run_starts(data, cfg, warm) {
        match outcome {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.penalized > b.penalized) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.expect("at least one start was run"))
}

/// Ascending, nonnegative penalty values.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("lambda grid is empty"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("lambda grid values must be finite and nonnegative"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("lambda grid must be strictly ascending"));
        }
        Ok(LambdaGrid { values })
    }

    /// `count` logarithmically spaced values from `lo` to `hi`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || count < 2 {
            return Err(Error::invalid(format!("cannot space {count} values on [{lo}, {hi}]")));
        }
        let (a, b) = (lo.ln(), hi.ln());
        let mut values: Vec<f64> = (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect();
        values[0] = lo;
        values[count - 1] = hi;
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Smallest penalty for which one loading update from `A = 0` at the E-step
/// state of `params` leaves every loading at zero: `max |v_dl| / (4N)`.
pub fn lambda_max(data: &Dataset, params: &ModelParams) -> f64 {
    let joint = log_joint(data, params);
    let resp = Responsibilities::from_log_joint(&joint);
    let mut state = MajorizationState::new(data, params, &resp);
    let mut zeroed = params.clone();
    zeroed.xi = update_mixing(&resp);
    zeroed.a.fill(0.0);
    zeroed.mu = update_mu(&state, &resp, &zeroed);
    state.recenter(&zeroed.mu);
    state.refresh_coefficients(&resp, &zeroed.f);
    state.v.abs().max() / (4.0 * data.n_rows() as f64)
}

/// Unpenalized multi-start fit used to size the default grid and to
/// warm-start every penalized fit.
pub fn unpenalized_pilot(data: &Dataset, cfg: &FitConfig) -> Result<FitReport> {
    fit_multistart(data, &cfg.clone().with_lambda(0.0))
}

/// Default grid: [`DEFAULT_GRID_SIZE`] log-spaced values from
/// [`DEFAULT_GRID_FLOOR`] to the [`lambda_max`] of an unpenalized fit. When
/// that maximum is below the floor the grid spans two decades under it.
pub fn default_grid(data: &Dataset, cfg: &FitConfig) -> Result<LambdaGrid> {
    grid_from_pilot(data, &unpenalized_pilot(data, cfg)?)
}

pub fn grid_from_pilot(data: &Dataset, pilot: &FitReport) -> Result<LambdaGrid> {
    let hi = lambda_max(data, &pilot.params);
    if !(hi > 0.0) {
        return Err(Error::invalid("data carry no loading signal; every penalty gives A = 0"));
    }
    let lo = if hi > DEFAULT_GRID_FLOOR { DEFAULT_GRID_FLOOR } else { hi / 100.0 };
    LambdaGrid::log_spaced(lo, hi, DEFAULT_GRID_SIZE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaRow {
    pub lambda: f64,
    pub loglik: f64,
    pub df: usize,
    pub bic: f64,
    pub nonzeros: usize,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub best_lambda: f64,
    pub report: FitReport,
    pub table: Vec<LambdaRow>,
}

/// Fits every grid value and keeps the minimum-BIC fit; ties resolve to the
/// larger penalty. Each value gets `cfg.n_starts` random starts plus one
/// start from the unpenalized fit: from a random start the first loading
/// update sees no cluster structure yet, and a moderate penalty then sets
/// `A = 0`, which is a fixed point of the algorithm.
pub fn select_lambda(data: &Dataset, cfg: &FitConfig, grid: &LambdaGrid) -> Result<Selection> {
    let pilot = unpenalized_pilot(data, cfg)?;
    select_lambda_with_pilot(data, cfg, grid, &pilot)
}

/// [`select_lambda`] over [`default_grid`], sharing one pilot fit.
pub fn select_lambda_default(data: &Dataset, cfg: &FitConfig) -> Result<Selection> {
    let pilot = unpenalized_pilot(data, cfg)?;
    let grid = grid_from_pilot(data, &pilot)?;
    select_lambda_with_pilot(data, cfg, &grid, &pilot)
}

pub fn select_lambda_with_pilot(data: &Dataset, cfg: &FitConfig, grid: &LambdaGrid, pilot: &FitReport) -> Result<Selection> {
    let fits: Vec<Result<FitReport>> = grid
        .values()
        .iter()
        .map(|&lambda| fit_multistart_from(data, &cfg.clone().with_lambda(lambda), Some(&pilot.params)))
        .collect();
    let mut table = Vec::with_capacity(fits.len());
    let mut best: Option<FitReport> = None;
    for fit in fits {
        let fit = fit?;
        table.push(LambdaRow {
            lambda: fit.lambda,
            loglik: fit.loglik,
            df: fit.df,
            bic: fit.bic,
            nonzeros: fit.nonzero_loadings(),
        });
        if best.as_ref().is_none_or(|b| fit.bic <= b.bic) {
            best = Some(fit);
        }
    }
    let report = best.expect("grid is nonempty");
    Ok(Selection {
        best_lambda: report.lambda,
        report,
        table,
    })
}
