//! M-step updates driven by the quadratic majorizer of the logistic loss.
//!
//! For `q = ±1` the bound `-log pi(x) <= -log pi(y) - (1 - pi(y))(x - y) + (x - y)^2 / 8`
//! turns each `-log pi(q_nd theta_kd)` into a squared residual
//! `(theta_kd - z_nkd)^2 / 8` around the working response
//! `z_nkd = theta_kd + 4 q_nd (1 - pi(q_nd theta_kd))`, all evaluated at the
//! current iterate. The M-step then minimizes
//!
//! ```text
//! h(mu, F, A) = 1/8 sum_n sum_k u_nk |z_nk - mu - A f_k|^2 + N lambda |A|_1
//! ```
//!
//! block-wise: `mu` in closed form, `F` by gradient projection (see
//! [`crate::stiefel`]) and `A` by cyclic coordinate soft thresholding.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estep::Responsibilities;
use crate::linalg::l1_norm;
use crate::model::{inverse_logit, log_inverse_logit, ModelParams, PenaltySpec};

/// Right side of the quadratic bound on `-log pi(x)` anchored at `y`; equal
/// to `-log pi(x)` at `x = y` and above it everywhere else.
pub fn logistic_bound(x: f64, y: f64) -> f64 {
    -log_inverse_logit(y) - (1.0 - inverse_logit(y)) * (x - y) + (x - y) * (x - y) / 8.0
}

/// Clusters with `N_k < EMPTY_CLUSTER_FRACTION * N` are left out of the
/// weighted means and quadratic coefficients.
pub const EMPTY_CLUSTER_FRACTION: f64 = 1e-8;

/// Stopping rule for the coordinate descent over `A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadingSolver {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for LoadingSolver {
    fn default() -> Self {
        LoadingSolver {
            tol: 1e-8,
            max_sweeps: 100,
        }
    }
}

/// `xi_k = N_k / N` for `k < K` and `xi_K = 1 - sum_{k<K} xi_k`.
pub fn update_mixing(resp: &Responsibilities) -> DVector<f64> {
    let n = resp.n_rows() as f64;
    let k = resp.n_clusters();
    let mut xi = DVector::zeros(k);
    let mut head = 0.0;
    for c in 0..k - 1 {
        xi[c] = resp.nk[c] / n;
        head += xi[c];
    }
    xi[k - 1] = 1.0 - head;
    if xi[k - 1] < 0.0 {
        // only reachable through rounding when the last cluster is empty
        xi[k - 1] = 0.0;
        let s = xi.sum();
        xi /= s;
    }
    xi
}

/// Working responses `z_nkd`, stored as an N×K×D tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingResponses {
    n: usize,
    k: usize,
    d: usize,
    z: Vec<f64>,
}

impl WorkingResponses {
    #[inline]
    pub fn get(&self, n: usize, k: usize, d: usize) -> f64 {
        self.z[(n * self.k + k) * self.d + d]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n, self.k, self.d)
    }

    fn slice(&self, n: usize, k: usize) -> &[f64] {
        let start = (n * self.k + k) * self.d;
        &self.z[start..start + self.d]
    }
}

pub fn working_responses(data: &Dataset, params: &ModelParams) -> WorkingResponses {
    let theta = params.theta();
    let (k, _, d) = params.dims();
    // z takes one of two values per (k, d) depending on the sign of q_nd
    let mut up = DMatrix::zeros(k, d);
    let mut down = DMatrix::zeros(k, d);
    for c in 0..k {
        for j in 0..d {
            let t = theta[(c, j)];
            up[(c, j)] = t + 4.0 * (1.0 - inverse_logit(t));
            down[(c, j)] = t - 4.0 * (1.0 - inverse_logit(-t));
        }
    }
    let n = data.n_rows();
    let mut z = Vec::with_capacity(n * k * d);
    for i in 0..n {
        let y = data.y_row(i);
        for c in 0..k {
            z.extend((0..d).map(|j| if y[j] == 1 { up[(c, j)] } else { down[(c, j)] }));
        }
    }
    WorkingResponses { n, k, d, z }
}

/// Everything the M-step needs, anchored at the iterate that produced `z`.
#[derive(Debug, Clone)]
pub struct MajorizationState {
    pub z: WorkingResponses,
    /// K×D weighted means `N_k^-1 sum_n u_nk z_nkd`.
    pub zbar: DMatrix<f64>,
    /// K×D centered means `zbar_kd - mu_d`.
    pub zbar_star: DMatrix<f64>,
    /// D×L linear coefficients of the loading subproblem.
    pub v: DMatrix<f64>,
    /// L×L quadratic coefficients of the loading subproblem.
    pub w: DMatrix<f64>,
    /// Clusters with enough mass to take part in the updates.
    pub active: Vec<bool>,
}

impl MajorizationState {
    pub fn new(data: &Dataset, params: &ModelParams, resp: &Responsibilities) -> Self {
        let z = working_responses(data, params);
        let (n, k, d) = z.shape();
        let active: Vec<bool> = resp.nk.iter().map(|&m| m >= EMPTY_CLUSTER_FRACTION * n as f64).collect();
        let mut zbar = DMatrix::zeros(k, d);
        for c in (0..k).filter(|&c| active[c]) {
            let mut acc = vec![0.0; d];
            for i in 0..n {
                let u = resp.u[(i, c)];
                if u == 0.0 {
                    continue;
                }
                for (a, zv) in acc.iter_mut().zip(z.slice(i, c)) {
                    *a += u * zv;
                }
            }
            for j in 0..d {
                zbar[(c, j)] = acc[j] / resp.nk[c];
            }
        }
        let mut state = MajorizationState {
            z,
            zbar,
            zbar_star: DMatrix::zeros(k, d),
            v: DMatrix::zeros(d, params.n_dims()),
            w: DMatrix::zeros(params.n_dims(), params.n_dims()),
            active,
        };
        state.recenter(&params.mu);
        state.refresh_coefficients(resp, &params.f);
        state
    }

    pub fn recenter(&mut self, mu: &DVector<f64>) {
        self.zbar_star = self.zbar.clone();
        for (c, mut row) in self.zbar_star.row_iter_mut().enumerate() {
            if self.active[c] {
                row -= mu.transpose();
            }
        }
    }

    pub fn refresh_coefficients(&mut self, resp: &Responsibilities, f: &DMatrix<f64>) {
        let (v, w) = quad_coefficients(self, resp, f);
        self.v = v;
        self.w = w;
    }

    /// `N_k` with inactive clusters zeroed.
    pub fn masses(&self, resp: &Responsibilities) -> DVector<f64> {
        DVector::from_fn(resp.nk.len(), |c, _| if self.active[c] { resp.nk[c] } else { 0.0 })
    }

    pub fn empty_clusters(&self) -> Vec<usize> {
        self.active.iter().enumerate().filter(|(_, a)| !**a).map(|(c, _)| c + 1).collect()
    }
}

/// `mu = (sum_k N_k)^-1 sum_k N_k (zbar_k - A f_k)`, the exact minimizer of
/// `h` in `mu`.
pub fn update_mu(state: &MajorizationState, resp: &Responsibilities, params: &ModelParams) -> DVector<f64> {
    let masses = state.masses(resp);
    let total = masses.sum();
    let d = params.n_vars();
    let mut mu = DVector::zeros(d);
    for c in (0..masses.len()).filter(|&c| state.active[c]) {
        let fitted = &params.a * params.f.row(c).transpose();
        for j in 0..d {
            mu[j] += masses[c] * (state.zbar[(c, j)] - fitted[j]);
        }
    }
    mu / total
}

/// `v = Zbar*' diag(N_k) F` (D×L) and `w = F' diag(N_k) F` (L×L).
pub fn quad_coefficients(
    state: &MajorizationState,
    resp: &Responsibilities,
    f: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let weighted = DMatrix::from_diagonal(&state.masses(resp)) * f;
    let v = state.zbar_star.transpose() * &weighted;
    let w = f.transpose() * weighted;
    // symmetric in exact arithmetic; remove rounding asymmetry
    let w = (&w + w.transpose()) * 0.5;
    (v, w)
}

#[inline]
fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Exact minimizer over `a_row[col]` of
/// `1/8 a' w a - 1/4 v' a + N lambda |a|_1` with the other entries of the row
/// fixed: `sign(c) max(0, |c| - 4 N lambda) / w_ll` where
/// `c = v_l - sum_{l' != l} w_ll' a_l'`.
pub fn coordinate_update(v: f64, w: &DMatrix<f64>, a_row: &[f64], col: usize, threshold: f64) -> Result<f64> {
    let wll = w[(col, col)];
    if !(wll > 0.0) {
        return Err(Error::DegenerateColumn { col, value: wll });
    }
    let mut c = v;
    for (lp, a) in a_row.iter().enumerate() {
        if lp != col {
            c -= w[(col, lp)] * a;
        }
    }
    Ok(soft_threshold(c, threshold) / wll)
}

/// Cyclic coordinate descent over `A`, row-major, starting from `a`.
pub fn update_loadings(
    v: &DMatrix<f64>,
    w: &DMatrix<f64>,
    a: &DMatrix<f64>,
    spec: PenaltySpec,
    n: usize,
    solver: LoadingSolver,
) -> Result<DMatrix<f64>> {
    let (d, l) = a.shape();
    let threshold = 4.0 * n as f64 * spec.lambda;
    let mut a = a.clone();
    let mut row = vec![0.0; l];
    for _ in 0..solver.max_sweeps {
        let mut change = 0.0f64;
        for i in 0..d {
            for (j, r) in row.iter_mut().enumerate() {
                *r = a[(i, j)];
            }
            for j in 0..l {
                let new = coordinate_update(v[(i, j)], w, &row, j, threshold)?;
                change = change.max((new - row[j]).abs());
                row[j] = new;
            }
            for (j, r) in row.iter().enumerate() {
                a[(i, j)] = *r;
            }
        }
        // cross terms vanish for a single column, one sweep is exact
        if change <= solver.tol || l == 1 {
            break;
        }
    }
    Ok(a)
}

/// Loading objective `1/8 sum_d a_d' w a_d - 1/4 sum v_dl a_dl + N lambda |A|_1`.
pub fn loading_objective(v: &DMatrix<f64>, w: &DMatrix<f64>, a: &DMatrix<f64>, spec: PenaltySpec, n: usize) -> f64 {
    let quad = (a * w).component_mul(a).sum();
    quad / 8.0 - v.component_mul(a).sum() / 4.0 + n as f64 * spec.lambda * l1_norm(a)
}

/// `h` evaluated over the full working-response tensor.
pub fn majorizer_value(state: &MajorizationState, resp: &Responsibilities, params: &ModelParams, spec: PenaltySpec) -> f64 {
    let (n, k, d) = state.z.shape();
    let theta = params.theta();
    let mut total = 0.0;
    for i in 0..n {
        for c in (0..k).filter(|&c| state.active[c]) {
            let u = resp.u[(i, c)];
            let z = state.z.slice(i, c);
            let mut ss = 0.0;
            for j in 0..d {
                let r = z[j] - theta[(c, j)];
                ss += r * r;
            }
            total += u * ss;
        }
    }
    total / 8.0 + n as f64 * spec.lambda * l1_norm(&params.a)
}

/// Updates `mu` then `A` against a majorizer anchored at `params`; `xi` and
/// `F` are returned unchanged.
pub fn mstep_sweep(
    data: &Dataset,
    params: &ModelParams,
    resp: &Responsibilities,
    spec: PenaltySpec,
) -> Result<ModelParams> {
    let mut state = MajorizationState::new(data, params, resp);
    let mut next = params.clone();
    next.mu = update_mu(&state, resp, &next);
    state.recenter(&next.mu);
    state.refresh_coefficients(resp, &next.f);
    next.a = update_loadings(&state.v, &state.w, &next.a, spec, data.n_rows(), LoadingSolver::default())?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estep::responsibilities;
    use crate::linalg::orthonormalize_columns;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64, n: usize, k: usize, l: usize, d: usize) -> (Dataset, ModelParams, Responsibilities) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = Dataset::from_flat(n, d, (0..n * d).map(|_| rng.random_range(0..2u8)).collect()).unwrap();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.3..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let p = ModelParams {
            xi: DVector::from_iterator(k, raw.iter().map(|v| v / s)),
            mu: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
            f: orthonormalize_columns(&DMatrix::from_fn(k, l, |_, _| rng.random_range(-1.0..1.0))),
            a: DMatrix::from_fn(d, l, |_, _| rng.random_range(-2.0..2.0)),
        };
        let r = responsibilities(&ds, &p);
        (ds, p, r)
    }

    #[test]
    fn mixing_examples() {
        let r = Responsibilities::from_weights(DMatrix::from_element(4, 4, 0.25));
        for x in update_mixing(&r).iter() {
            assert_relative_eq!(*x, 0.25, epsilon = 1e-15);
        }
        let hard = DMatrix::from_row_slice(5, 3, &[1., 0., 0., 0., 1., 0., 1., 0., 0., 0., 0., 1., 1., 0., 0.]);
        let xi = update_mixing(&Responsibilities::from_weights(hard));
        for (x, want) in xi.iter().zip([0.6, 0.2, 0.2]) {
            assert_relative_eq!(*x, want, epsilon = 1e-15);
        }

        let (_, _, r) = instance(4, 9, 3, 2, 4);
        let xi = update_mixing(&r);
        assert_eq!(xi.sum(), 1.0);
        for c in 0..3 {
            let mean = r.u.column(c).iter().sum::<f64>() / 9.0;
            assert_relative_eq!(xi[c], mean, epsilon = 1e-14);
        }
    }

    #[test]
    fn working_response_examples() {
        let ds = Dataset::from_flat(2, 1, vec![1, 0]).unwrap();
        let mut p = ModelParams {
            xi: DVector::from_element(1, 1.0),
            mu: DVector::zeros(1),
            f: DMatrix::from_element(1, 1, 1.0),
            a: DMatrix::zeros(1, 1),
        };
        let z = working_responses(&ds, &p);
        assert_eq!(z.get(0, 0, 0), 2.0);
        assert_eq!(z.get(1, 0, 0), -2.0);
        p.mu[0] = 30.0;
        let z = working_responses(&ds, &p);
        assert!((z.get(0, 0, 0) - 30.0).abs() < 1e-10);
        p.mu[0] = -30.0;
        assert!((working_responses(&ds, &p).get(1, 0, 0) + 30.0).abs() < 1e-10);
    }

    #[test]
    fn working_responses_stay_within_four() {
        let (ds, p, _) = instance(5, 10, 3, 2, 6);
        let z = working_responses(&ds, &p);
        let theta = p.theta();
        for n in 0..10 {
            for k in 0..3 {
                for d in 0..6 {
                    assert!((z.get(n, k, d) - theta[(k, d)]).abs() <= 4.0);
                }
            }
        }
    }

    #[test]
    fn weighted_means_match_closed_form() {
        // zbar_kd = theta_kd + 4 (ybar_kd - pi(theta_kd)) with ybar the weighted column mean
        let (ds, p, r) = instance(6, 12, 3, 2, 5);
        let state = MajorizationState::new(&ds, &p, &r);
        let theta = p.theta();
        for k in 0..3 {
            for d in 0..5 {
                let ybar: f64 = (0..12).map(|n| r.u[(n, k)] * ds.y(n, d) as f64).sum::<f64>() / r.nk[k];
                let want = theta[(k, d)] + 4.0 * (ybar - inverse_logit(theta[(k, d)]));
                assert_relative_eq!(state.zbar[(k, d)], want, epsilon = 1e-10);
                let direct: f64 = (0..12).map(|n| r.u[(n, k)] * state.z.get(n, k, d)).sum::<f64>() / r.nk[k];
                assert_relative_eq!(state.zbar[(k, d)], direct, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn bound_and_completed_square_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let x: f64 = rng.random_range(-10.0..10.0);
            let y: f64 = rng.random_range(-10.0..10.0);
            let py = inverse_logit(y);
            let linear = logistic_bound(x, y);
            let square = -log_inverse_logit(y) + (x - y - 4.0 * (1.0 - py)).powi(2) / 8.0 - 2.0 * (1.0 - py).powi(2);
            assert!((linear - square).abs() <= 1e-10);
            assert!(linear >= -log_inverse_logit(x) - 1e-12);
        }
    }

    #[test]
    fn mu_update_examples() {
        let (ds, mut p, r) = instance(8, 15, 3, 2, 4);
        p.a.fill(0.0);
        let state = MajorizationState::new(&ds, &p, &r);
        let mu = update_mu(&state, &r, &p);
        for d in 0..4 {
            let avg: f64 = (0..3).map(|k| r.nk[k] * state.zbar[(k, d)]).sum::<f64>() / 15.0;
            assert_relative_eq!(mu[d], avg, epsilon = 1e-12);
        }

        let (ds, p, r) = instance(9, 6, 1, 1, 3);
        let state = MajorizationState::new(&ds, &p, &r);
        let mu = update_mu(&state, &r, &p);
        let fitted = &p.a * p.f.row(0).transpose();
        for d in 0..3 {
            assert_relative_eq!(mu[d], state.zbar[(0, d)] - fitted[d], epsilon = 1e-12);
        }
    }

    #[test]
    fn mu_update_solves_normal_equations() {
        // stack rows sqrt(u_nk) (z_nk - A f_k) = sqrt(u_nk) mu and solve by least squares
        let (ds, p, r) = instance(10, 8, 3, 2, 3);
        let state = MajorizationState::new(&ds, &p, &r);
        let mu = update_mu(&state, &r, &p);
        let rows = 8 * 3;
        let design = DMatrix::from_fn(rows, 1, |i, _| r.u[(i / 3, i % 3)].sqrt());
        for d in 0..3 {
            let rhs = DVector::from_fn(rows, |i, _| {
                let (n, k) = (i / 3, i % 3);
                let fitted: f64 = (0..2).map(|l| p.a[(d, l)] * p.f[(k, l)]).sum();
                r.u[(n, k)].sqrt() * (state.z.get(n, k, d) - fitted)
            });
            let sol = (design.transpose() * &design).lu().solve(&(design.transpose() * rhs)).unwrap();
            assert_relative_eq!(mu[d], sol[0], epsilon = 1e-10);
        }
        // directional derivatives of h at mu vanish
        let mut at = p.clone();
        at.mu = mu.clone();
        let spec = PenaltySpec::none();
        for d in 0..3 {
            let step = 1e-5;
            let mut plus = at.clone();
            plus.mu[d] += step;
            let mut minus = at.clone();
            minus.mu[d] -= step;
            let g = (majorizer_value(&state, &r, &plus, spec) - majorizer_value(&state, &r, &minus, spec)) / (2.0 * step);
            assert!(g.abs() <= 1e-6, "d={d} g={g}");
        }
    }

    #[test]
    fn quad_coefficient_examples() {
        let (ds, p, _) = instance(11, 6, 3, 2, 4);
        let r = Responsibilities::from_weights(DMatrix::from_element(6, 3, 1.0 / 3.0));
        let state = MajorizationState::new(&ds, &p, &r);
        let (_, w) = quad_coefficients(&state, &r, &p.f);
        let eye = DMatrix::<f64>::identity(2, 2) * 2.0;
        assert!((w - eye).abs().max() < 1e-12);

        let (v, w) = quad_coefficients(&state, &r, &DMatrix::zeros(3, 2));
        assert!(v.iter().all(|&x| x == 0.0) && w.iter().all(|&x| x == 0.0));

        let (ds, p, r) = instance(12, 7, 3, 2, 5);
        let state = MajorizationState::new(&ds, &p, &r);
        let (v, w) = quad_coefficients(&state, &r, &p.f);
        for d in 0..5 {
            for l in 0..2 {
                let mut acc = 0.0;
                for n in 0..7 {
                    for k in 0..3 {
                        acc += r.u[(n, k)] * (state.z.get(n, k, d) - p.mu[d]) * p.f[(k, l)];
                    }
                }
                assert_relative_eq!(v[(d, l)], acc, epsilon = 1e-10);
            }
        }
        for l in 0..2 {
            for lp in 0..2 {
                let acc: f64 = (0..3).map(|k| r.nk[k] * p.f[(k, l)] * p.f[(k, lp)]).sum();
                assert_relative_eq!(w[(l, lp)], acc, epsilon = 1e-10);
            }
        }
        assert_eq!(w[(0, 1)], w[(1, 0)]);
    }

    #[test]
    fn loading_update_examples() {
        let solver = LoadingSolver::default();
        let w = DMatrix::from_element(1, 1, 2.0);
        let v = DMatrix::from_element(1, 1, 10.0);
        let a = update_loadings(&v, &w, &DMatrix::zeros(1, 1), PenaltySpec { lambda: 1.0 }, 1, solver).unwrap();
        assert_relative_eq!(a[(0, 0)], 3.0, epsilon = 1e-15);
        // the 1-D objective w a^2/8 - v a/4 + |a| has its minimum at 3
        let obj = |x: f64| 2.0 * x * x / 8.0 - 10.0 * x / 4.0 + x.abs();
        assert!(obj(3.0) < obj(2.999) && obj(3.0) < obj(3.001));

        let w = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
        let v = DMatrix::from_row_slice(3, 2, &[1.0, -2.0, 0.5, 0.1, -3.0, 2.0]);
        let start = DMatrix::from_element(3, 2, 1.0);
        let a = update_loadings(&v, &w, &start, PenaltySpec { lambda: 1.0 }, 10, solver).unwrap();
        assert!(a.iter().all(|&x| x == 0.0));

        let w = DMatrix::from_element(1, 1, 4.0);
        let v = DMatrix::from_column_slice(3, 1, &[1.0, -8.0, 2.0]);
        let a = update_loadings(&v, &w, &DMatrix::zeros(3, 1), PenaltySpec::none(), 5, solver).unwrap();
        assert_eq!(a.as_slice(), &[0.25, -2.0, 0.5]);

        let w = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let err = update_loadings(&DMatrix::zeros(1, 2), &w, &DMatrix::zeros(1, 2), PenaltySpec::none(), 1, solver);
        assert!(matches!(err, Err(Error::DegenerateColumn { col: 1, .. })));
    }

    #[test]
    fn coordinate_descent_never_increases_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let b = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            let w = b.transpose() * &b + DMatrix::identity(3, 3) * 0.1;
            let v = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-5.0..5.0));
            let a0 = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-2.0..2.0));
            let spec = PenaltySpec { lambda: rng.random_range(0.0..0.2) };
            let before = loading_objective(&v, &w, &a0, spec, 4);
            let one = update_loadings(&v, &w, &a0, spec, 4, LoadingSolver { tol: 0.0, max_sweeps: 1 }).unwrap();
            let mid = loading_objective(&v, &w, &one, spec, 4);
            let full = update_loadings(&v, &w, &a0, spec, 4, LoadingSolver::default()).unwrap();
            let after = loading_objective(&v, &w, &full, spec, 4);
            assert!(mid <= before + 1e-12 && after <= mid + 1e-12);
        }
    }

    #[test]
    fn sweep_decreases_majorizer_and_keeps_xi_f() {
        let spec = PenaltySpec { lambda: 0.02 };
        for seed in 0..10 {
            let (ds, p, r) = instance(100 + seed, 20, 3, 2, 6);
            let state = MajorizationState::new(&ds, &p, &r);
            let before = majorizer_value(&state, &r, &p, spec);
            let next = mstep_sweep(&ds, &p, &r, spec).unwrap();
            let after = majorizer_value(&state, &r, &next, spec);
            assert!(after <= before + 1e-9 * (1.0 + before.abs()), "seed {seed}: {before} -> {after}");
            assert_eq!(next.xi, p.xi);
            assert_eq!(next.f, p.f);
        }
    }

    #[test]
    fn sweep_fixed_point_and_full_shrinkage() {
        let (ds, p, r) = instance(31, 25, 3, 2, 5);
        let spec = PenaltySpec { lambda: 0.01 };
        // iterate mu/A against one fixed majorizer until stationary
        let state = MajorizationState::new(&ds, &p, &r);
        let mut cur = p.clone();
        for _ in 0..500 {
            let mut s = state.clone();
            cur.mu = update_mu(&s, &r, &cur);
            s.recenter(&cur.mu);
            s.refresh_coefficients(&r, &cur.f);
            cur.a = update_loadings(&s.v, &s.w, &cur.a, spec, 25, LoadingSolver::default()).unwrap();
        }
        let mut s = state.clone();
        let mu = update_mu(&s, &r, &cur);
        s.recenter(&mu);
        s.refresh_coefficients(&r, &cur.f);
        let a = update_loadings(&s.v, &s.w, &cur.a, spec, 25, LoadingSolver::default()).unwrap();
        assert!((mu - &cur.mu).abs().max() <= 1e-10);
        assert!((a - &cur.a).abs().max() <= 1e-10);

        let big = mstep_sweep(&ds, &p, &r, PenaltySpec { lambda: 1e6 }).unwrap();
        assert!(big.a.iter().all(|&x| x == 0.0));
    }
}
