//! Parameter state and the probability / objective computations of the
//! low-rank Bernoulli mixture.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{count_nonzero, l1_norm, matrix_to_rows, orthonormality_gap, rows_to_matrix};

/// Tolerance on `|sum(xi) - 1|`.
pub const XI_SUM_TOL: f64 = 1e-12;
/// Tolerance on `max |F'F - I|` for a parameter set.
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Logistic function `1 / (1 + exp(-x))`, evaluated without overflow.
#[inline]
pub fn inverse_logit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(inverse_logit(x))` via `log1p`, branching on the sign of `x`.
#[inline]
pub fn log_inverse_logit(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub(crate) fn logsumexp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Full parameter state: mixing proportions `xi` (K), centroid `mu` (D),
/// cluster scores `f` (K×L, orthonormal columns) and loadings `a` (D×L).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub xi: DVector<f64>,
    pub mu: DVector<f64>,
    pub f: DMatrix<f64>,
    pub a: DMatrix<f64>,
}

impl ModelParams {
    pub fn new(xi: DVector<f64>, mu: DVector<f64>, f: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        let params = ModelParams { xi, mu, f, a };
        params.validate()?;
        Ok(params)
    }

    pub fn n_clusters(&self) -> usize {
        self.xi.len()
    }

    pub fn n_dims(&self) -> usize {
        self.f.ncols()
    }

    pub fn n_vars(&self) -> usize {
        self.mu.len()
    }

    /// `(K, L, D)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_clusters(), self.n_dims(), self.n_vars())
    }

    pub fn validate(&self) -> Result<()> {
        let (k, l, d) = self.dims();
        if k == 0 || l == 0 || d == 0 {
            return Err(Error::Dimension(format!("K={k}, L={l}, D={d} must all be positive")));
        }
        if l > k {
            return Err(Error::invalid(format!("subspace dimension L={l} exceeds cluster count K={k}")));
        }
        if self.f.nrows() != k {
            return Err(Error::Dimension(format!("F has {} rows, expected K={k}", self.f.nrows())));
        }
        if self.a.nrows() != d || self.a.ncols() != l {
            return Err(Error::Dimension(format!(
                "A is {}x{}, expected {d}x{l}",
                self.a.nrows(),
                self.a.ncols()
            )));
        }
        let finite = self.xi.iter().chain(self.mu.iter()).chain(self.f.iter()).chain(self.a.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("parameters contain non-finite values"));
        }
        if self.xi.iter().any(|&x| x < 0.0) {
            return Err(Error::invalid("mixing proportions must be nonnegative"));
        }
        let total: f64 = self.xi.sum();
        if (total - 1.0).abs() > XI_SUM_TOL {
            return Err(Error::invalid(format!("mixing proportions sum to {total}, not 1")));
        }
        let gap = orthonormality_gap(&self.f);
        if gap > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!("F'F deviates from the identity by {gap:e}")));
        }
        Ok(())
    }

    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.n_cols() != self.n_vars() {
            return Err(Error::Dimension(format!(
                "data has {} columns but the model has D={}",
                data.n_cols(),
                self.n_vars()
            )));
        }
        Ok(())
    }

    /// Canonical parameters `theta_kd = mu_d + f_k' a_d` as a K×D matrix.
    pub fn theta(&self) -> DMatrix<f64> {
        let mut theta = &self.f * self.a.transpose();
        for mut row in theta.row_iter_mut() {
            row += self.mu.transpose();
        }
        theta
    }
}

/// Single regularization parameter applied to every loading column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda: f64,
}

impl PenaltySpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be a finite nonnegative number, got {lambda}")));
        }
        Ok(PenaltySpec { lambda })
    }

    pub fn none() -> Self {
        PenaltySpec { lambda: 0.0 }
    }
}

pub fn canonical_theta(params: &ModelParams) -> DMatrix<f64> {
    params.theta()
}

/// Per-row `sum_d log pi(q_nd theta_d)` for one component's logits.
pub fn log_component_prob(data: &Dataset, theta_k: &[f64]) -> Vec<f64> {
    assert_eq!(theta_k.len(), data.n_cols(), "theta row length must equal D");
    let on: Vec<f64> = theta_k.iter().map(|&t| log_inverse_logit(t)).collect();
    let off: Vec<f64> = theta_k.iter().map(|&t| log_inverse_logit(-t)).collect();
    (0..data.n_rows())
        .map(|n| {
            data.y_row(n)
                .iter()
                .enumerate()
                .map(|(d, &y)| if y == 1 { on[d] } else { off[d] })
                .sum()
        })
        .collect()
}

/// N×K matrix of `log xi_k + log p_k(y_n)`.
pub fn log_joint(data: &Dataset, params: &ModelParams) -> DMatrix<f64> {
    let theta = params.theta();
    let (k, _, _) = params.dims();
    let mut out = DMatrix::zeros(data.n_rows(), k);
    for c in 0..k {
        let row: Vec<f64> = theta.row(c).iter().copied().collect();
        let log_xi = params.xi[c].ln();
        for (n, lp) in log_component_prob(data, &row).into_iter().enumerate() {
            out[(n, c)] = log_xi + lp;
        }
    }
    out
}

pub(crate) fn loglik_from_joint(joint: &DMatrix<f64>) -> f64 {
    joint.row_iter().map(|r| logsumexp(r.iter().copied())).sum()
}

/// Mixture log likelihood, summed over rows with a per-row log-sum-exp.
pub fn log_likelihood(data: &Dataset, params: &ModelParams) -> f64 {
    loglik_from_joint(&log_joint(data, params))
}

/// `lambda * sum |a_dl|`.
pub fn penalty_value(a: &DMatrix<f64>, spec: PenaltySpec) -> f64 {
    if spec.lambda == 0.0 {
        return 0.0;
    }
    spec.lambda * l1_norm(a)
}

/// Log likelihood minus `N` times the penalty.
pub fn penalized_objective(data: &Dataset, params: &ModelParams, spec: PenaltySpec) -> f64 {
    log_likelihood(data, params) - data.n_rows() as f64 * penalty_value(&params.a, spec)
}

/// `K + D + K*L + #{a_dl != 0}`; all K mixing proportions are counted.
pub fn degrees_of_freedom(params: &ModelParams) -> usize {
    let (k, l, d) = params.dims();
    k + d + k * l + count_nonzero(&params.a)
}

pub fn bic_value(loglik: f64, n: usize, df: usize) -> f64 {
    -2.0 * loglik + (n as f64).ln() * df as f64
}

/// `-2 loglik + log(N) df`. With a single row the penalty term vanishes;
/// callers that care should check `data.n_rows() >= 2`.
pub fn bic(data: &Dataset, params: &ModelParams) -> f64 {
    bic_value(log_likelihood(data, params), data.n_rows(), degrees_of_freedom(params))
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// JSON form of a fitted (or generating) model. Matrices are stored as arrays
/// of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub lambda: f64,
    pub loglik: f64,
    pub bic: f64,
}

impl ModelDocument {
    pub fn new(params: &ModelParams, lambda: f64, loglik: f64, bic: f64) -> Self {
        let (k, l, d) = params.dims();
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            k,
            l,
            d,
            xi: params.xi.iter().copied().collect(),
            mu: params.mu.iter().copied().collect(),
            f: matrix_to_rows(&params.f),
            a: matrix_to_rows(&params.a),
            lambda,
            loglik,
            bic,
        }
    }

    /// Rebuilds and validates the parameter set.
    pub fn params(&self) -> Result<ModelParams> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported model format_version {}", self.format_version)));
        }
        if self.xi.len() != self.k || self.mu.len() != self.d || self.f.len() != self.k || self.a.len() != self.d {
            return Err(Error::Dimension("model document lengths disagree with K, L, D".into()));
        }
        let f = rows_to_matrix(&self.f, self.l).ok_or_else(|| Error::Dimension("F rows must have L entries".into()))?;
        let a = rows_to_matrix(&self.a, self.l).ok_or_else(|| Error::Dimension("A rows must have L entries".into()))?;
        PenaltySpec::new(self.lambda)?;
        ModelParams::new(DVector::from_vec(self.xi.clone()), DVector::from_vec(self.mu.clone()), f, a)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.params()?;
        Ok(doc)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, k: usize, l: usize, d: usize, scale: f64) -> ModelParams {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
        let s: f64 = raw.iter().sum();
        let xi = DVector::from_iterator(k, raw.iter().map(|v| v / s));
        let mu = DVector::from_fn(d, |_, _| rng.random_range(-scale..scale));
        let f = crate::linalg::orthonormalize_columns(&DMatrix::from_fn(k, l, |_, _| rng.random_range(-1.0..1.0)));
        let a = DMatrix::from_fn(d, l, |_, _| rng.random_range(-scale..scale));
        ModelParams { xi, mu, f, a }
    }

    fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
        Dataset::from_flat(n, d, (0..n * d).map(|_| rng.random_range(0..2u8)).collect()).unwrap()
    }

    #[test]
    fn logistic_basics() {
        assert_eq!(inverse_logit(0.0), 0.5);
        for x in [-30.0, -2.5, 0.3, 7.0, 40.0] {
            assert_relative_eq!(inverse_logit(x) + inverse_logit(-x), 1.0, epsilon = 1e-15);
        }
        let p = inverse_logit(700.0);
        assert!(p.is_finite() && p >= 1.0 - 1e-300);
        assert!(inverse_logit(-700.0) > 0.0);
        assert!(log_inverse_logit(-700.0).is_finite());
    }

    #[test]
    fn log_pi_pair_identity() {
        for i in 0..=600 {
            let x = -30.0 + i as f64 * 0.1;
            let lhs = log_inverse_logit(x) + log_inverse_logit(-x);
            // log(pi(x) pi(-x)) = -|x| - 2 log(1 + e^-|x|)
            let want = -x.abs() - 2.0 * (-x.abs()).exp().ln_1p();
            assert!((lhs - want).abs() <= 1e-12, "x={x}");
        }
    }

    #[test]
    fn theta_examples() {
        let p = ModelParams {
            xi: DVector::from_vec(vec![0.5, 0.5]),
            mu: DVector::from_vec(vec![0.3, -1.0, 2.0]),
            f: DMatrix::from_row_slice(2, 1, &[1.0, 0.0]),
            a: DMatrix::zeros(3, 1),
        };
        let t = p.theta();
        for k in 0..2 {
            assert_eq!(t.row(k).iter().copied().collect::<Vec<_>>(), vec![0.3, -1.0, 2.0]);
        }
        let p = ModelParams {
            xi: DVector::from_vec(vec![1.0]),
            mu: DVector::zeros(2),
            f: DMatrix::from_element(1, 1, 1.0),
            a: DMatrix::from_element(2, 1, 2.0),
        };
        assert!(p.theta().iter().all(|&v| v == 2.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&mut rng, 4, 2, 5, 2.0);
        let t = canonical_theta(&p);
        for k in 0..4 {
            for d in 0..5 {
                let mut v = p.mu[d];
                for l in 0..2 {
                    v += p.f[(k, l)] * p.a[(d, l)];
                }
                assert_relative_eq!(t[(k, d)], v, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn component_prob_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = random_data(&mut rng, 3, 4);
        let zero = log_component_prob(&data, &[0.0; 4]);
        assert!(zero.iter().all(|v| (v - 4.0 * 0.5f64.ln()).abs() < 1e-14));

        let ones = Dataset::from_flat(2, 3, vec![1; 6]).unwrap();
        assert!(log_component_prob(&ones, &[35.0; 3]).iter().all(|v| v.abs() < 1e-12));

        let theta: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let got = log_component_prob(&data, &theta);
        for n in 0..3 {
            let mut prod = 1.0;
            for d in 0..4 {
                let p = 1.0 / (1.0 + (-theta[d]).exp());
                prod *= if data.y(n, d) == 1 { p } else { 1.0 - p };
            }
            assert_relative_eq!(got[n], prod.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn loglik_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = random_data(&mut rng, 5, 3);
        let single = ModelParams {
            xi: DVector::from_vec(vec![1.0]),
            mu: DVector::zeros(3),
            f: DMatrix::from_element(1, 1, 1.0),
            a: DMatrix::zeros(3, 1),
        };
        assert_relative_eq!(log_likelihood(&data, &single), 15.0 * 0.5f64.ln(), epsilon = 1e-12);

        let p = random_params(&mut rng, 2, 1, 3, 1.5);
        let doubled = Dataset::from_flat(
            10,
            3,
            (0..2).flat_map(|_| (0..5).flat_map(|n| data.y_row(n).to_vec())).collect(),
        )
        .unwrap();
        assert_relative_eq!(log_likelihood(&doubled, &p), 2.0 * log_likelihood(&data, &p), epsilon = 1e-10);
    }

    #[test]
    fn loglik_matches_naive_mixture_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let data = random_data(&mut rng, 4, 3);
            let p = random_params(&mut rng, 2, 2, 3, 1.5);
            let theta = p.theta();
            let mut naive = 0.0;
            for n in 0..4 {
                let mut mix = 0.0;
                for k in 0..2 {
                    let mut prod = 1.0;
                    for d in 0..3 {
                        let pr = 1.0 / (1.0 + (-theta[(k, d)]).exp());
                        prod *= if data.y(n, d) == 1 { pr } else { 1.0 - pr };
                    }
                    mix += p.xi[k] * prod;
                }
                naive += mix.ln();
            }
            assert_relative_eq!(log_likelihood(&data, &p), naive, max_relative = 1e-9);
        }
    }

    #[test]
    fn penalty_and_objective() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.0, 3.0]);
        assert_eq!(penalty_value(&DMatrix::zeros(2, 2), PenaltySpec { lambda: 2.0 }), 0.0);
        assert_eq!(penalty_value(&a, PenaltySpec::none()), 0.0);
        assert_eq!(penalty_value(&a, PenaltySpec { lambda: 0.5 }), 3.0);
        assert!(PenaltySpec::new(-1.0).is_err());
        assert!(PenaltySpec::new(f64::NAN).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = random_data(&mut rng, 6, 4);
        let p = random_params(&mut rng, 3, 2, 4, 1.0);
        let ll = log_likelihood(&data, &p);
        assert_eq!(penalized_objective(&data, &p, PenaltySpec::none()), ll);
        let s1 = penalized_objective(&data, &p, PenaltySpec { lambda: 0.1 });
        let s2 = penalized_objective(&data, &p, PenaltySpec { lambda: 0.2 });
        assert!(s2 < s1 && s1 < ll);
        assert_relative_eq!(ll - s1, 6.0 * 0.1 * l1_norm(&p.a), epsilon = 1e-12);
    }

    #[test]
    fn df_and_bic() {
        let mut a = DMatrix::zeros(10, 2);
        for i in 0..12 {
            a[(i % 10, i / 10)] = 1.0;
        }
        let p = ModelParams {
            xi: DVector::from_element(3, 1.0 / 3.0),
            mu: DVector::zeros(10),
            f: crate::linalg::orthonormalize_columns(&DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0])),
            a,
        };
        assert_eq!(degrees_of_freedom(&p), 31);
        let mut z = p.clone();
        z.a.fill(0.0);
        assert_eq!(degrees_of_freedom(&z), 19);
        z.a.fill(0.1);
        assert_eq!(degrees_of_freedom(&z), 39);

        assert_relative_eq!(bic_value(-100.0, 100, 31), 200.0 + 100f64.ln() * 31.0, epsilon = 1e-12);
        assert_relative_eq!(bic_value(-50.0, 100, 31) - bic_value(-100.0, 100, 31), -100.0, epsilon = 1e-9);
        assert!(bic_value(-100.0, 100, 20) < bic_value(-100.0, 100, 31));
    }

    #[test]
    fn objective_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = random_data(&mut rng, 8, 5);
        let p = random_params(&mut rng, 3, 2, 5, 1.5);
        let spec = PenaltySpec { lambda: 0.05 };
        let base = penalized_objective(&data, &p, spec);

        let mut flipped = p.clone();
        flipped.f.column_mut(1).neg_mut();
        flipped.a.column_mut(1).neg_mut();
        assert_relative_eq!(penalized_objective(&data, &flipped, spec), base, epsilon = 1e-10);

        let perm = [2usize, 0, 1];
        let permuted = ModelParams {
            xi: DVector::from_fn(3, |i, _| p.xi[perm[i]]),
            mu: p.mu.clone(),
            f: DMatrix::from_fn(3, 2, |i, j| p.f[(perm[i], j)]),
            a: p.a.clone(),
        };
        assert_relative_eq!(penalized_objective(&data, &permuted, spec), base, epsilon = 1e-10);
    }

    #[test]
    fn document_round_trip_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(&mut rng, 3, 2, 4, 1.0);
        let doc = ModelDocument::new(&p, 0.1, -12.5, 40.0);
        let back = ModelDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(back.params().unwrap(), p);

        let mut bad = doc.clone();
        bad.f[0][0] += 0.1;
        assert!(ModelDocument::from_json(&bad.to_json()).is_err());
        let mut bad = doc.clone();
        bad.xi[0] += 0.01;
        assert!(ModelDocument::from_json(&bad.to_json()).is_err());
        let mut bad = doc;
        bad.a.pop();
        assert!(ModelDocument::from_json(&bad.to_json()).is_err());
    }
}
