//! Small dense-matrix helpers shared by the estimation modules.

use nalgebra::DMatrix;

/// `max |M'M - I|` over all entries.
pub fn orthonormality_gap(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let mut gap = 0.0f64;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            gap = gap.max((gram[(i, j)] - target).abs());
        }
    }
    gap
}

/// Thin QR orthonormalization with the first nonzero entry of every column
/// made positive.
pub fn orthonormalize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut q = m.clone().qr().q();
    q = q.columns(0, m.ncols()).into_owned();
    for mut col in q.column_iter_mut() {
        let lead = col.iter().copied().find(|v| v.abs() > 1e-14).unwrap_or(0.0);
        if lead < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// Flip column signs of `f` and `a` together so that the largest-magnitude
/// entry of each column of `f` is positive. `F A'` is unchanged.
pub fn canonicalize_signs(f: &mut DMatrix<f64>, a: &mut DMatrix<f64>) {
    for l in 0..f.ncols() {
        let mut best = 0.0f64;
        for v in f.column(l).iter() {
            if v.abs() > best.abs() {
                best = *v;
            }
        }
        if best < 0.0 {
            f.column_mut(l).neg_mut();
            a.column_mut(l).neg_mut();
        }
    }
}

/// Sum of absolute values of all entries.
pub fn l1_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// Number of entries that are not exactly zero.
pub fn count_nonzero(m: &DMatrix<f64>) -> usize {
    m.iter().filter(|v| **v != 0.0).count()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>], ncols: usize) -> Option<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
