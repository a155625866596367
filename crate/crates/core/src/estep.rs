//! Posterior cluster memberships.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::model::{log_joint, logsumexp, ModelParams};

/// Posterior weights `u*_nk` (N×K) and the cluster masses `N_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub u: DMatrix<f64>,
    pub nk: DVector<f64>,
}

impl Responsibilities {
    /// Normalizes each row of an N×K matrix of `log xi_k + log p_k(y_n)`.
    /// Each row is shifted by its maximum before exponentiation and divided by
    /// its own sum, so rows sum to one regardless of the magnitude of the
    /// log probabilities.
    pub fn from_log_joint(joint: &DMatrix<f64>) -> Self {
        let (n, k) = joint.shape();
        let mut u = DMatrix::zeros(n, k);
        for i in 0..n {
            let row = joint.row(i);
            let lse = logsumexp(row.iter().copied());
            let mut total = 0.0;
            for j in 0..k {
                let v = (row[j] - lse).exp();
                u[(i, j)] = v;
                total += v;
            }
            for j in 0..k {
                u[(i, j)] /= total;
            }
        }
        Self::from_weights(u)
    }

    pub fn from_weights(u: DMatrix<f64>) -> Self {
        let nk = DVector::from_iterator(u.ncols(), u.column_iter().map(|c| c.sum()));
        Responsibilities { u, nk }
    }

    pub fn n_rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.u.ncols()
    }

    /// Argmax per row; ties resolve to the lowest index. Labels are 1-based.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.u
            .row_iter()
            .map(|r| {
                let mut best = 0;
                for j in 1..r.len() {
                    if r[j] > r[best] {
                        best = j;
                    }
                }
                best + 1
            })
            .collect()
    }
}

pub fn responsibilities(data: &Dataset, params: &ModelParams) -> Responsibilities {
    Responsibilities::from_log_joint(&log_joint(data, params))
}
