//! Cluster-recovery and sparsity-recovery metrics.

use std::collections::HashMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Adjusted Rand Index of two labelings plus a flag set when the chance
/// correction was undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AriOutcome {
    pub value: f64,
    /// Both labelings were all-singletons or both were a single cluster, so the
    /// expected and maximal indices coincide; `value` is then 1 for identical
    /// partitions and 0 otherwise.
    pub degenerate: bool,
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1) / 2) as f64
}

/// Hubert–Arabie ARI from the contingency table of `a` against `b`.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<AriOutcome> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("label vectors have lengths {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("ARI needs at least two observations"));
    }
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(a.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        let identical = sum_a == index && sum_b == index;
        return Ok(AriOutcome {
            value: if identical { 1.0 } else { 0.0 },
            degenerate: true,
        });
    }
    Ok(AriOutcome {
        value: (index - expected) / (max - expected),
        degenerate: false,
    })
}

/// Shorthand for [`adjusted_rand_index`] returning only the value.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    adjusted_rand_index(a, b).map(|o| o.value)
}

/// Fraction of truly-zero loadings estimated as exactly zero and fraction of
/// truly-nonzero loadings estimated as nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportRecovery {
    pub true_zero_rate: f64,
    pub true_nonzero_rate: f64,
    /// `perm[l]` is the estimated column matched to true column `l`.
    pub perm: Vec<usize>,
}

fn abs_cosine(x: &DMatrix<f64>, i: usize, y: &DMatrix<f64>, j: usize) -> f64 {
    let (cx, cy) = (x.column(i), y.column(j));
    let denom = cx.norm() * cy.norm();
    if denom == 0.0 {
        0.0
    } else {
        cx.dot(&cy).abs() / denom
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Matches estimated columns to true columns (sign is irrelevant for
/// supports) by maximizing the summed absolute cosine: exhaustively for
/// `L <= 3`, greedily otherwise.
pub fn align_columns(true_a: &DMatrix<f64>, est_a: &DMatrix<f64>) -> Vec<usize> {
    let l = true_a.ncols();
    let score = |perm: &[usize]| -> f64 { (0..l).map(|c| abs_cosine(true_a, c, est_a, perm[c])).sum() };
    if l <= 3 {
        let mut best = (0..l).collect::<Vec<_>>();
        let mut best_score = score(&best);
        for p in permutations(l) {
            let s = score(&p);
            if s > best_score + 1e-12 {
                best = p;
                best_score = s;
            }
        }
        return best;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(l * l);
    for i in 0..l {
        for j in 0..l {
            pairs.push((abs_cosine(true_a, i, est_a, j), i, j));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut perm = vec![usize::MAX; l];
    let mut used = vec![false; l];
    for (_, i, j) in pairs {
        if perm[i] == usize::MAX && !used[j] {
            perm[i] = j;
            used[j] = true;
        }
    }
    perm
}

pub fn support_recovery(true_a: &DMatrix<f64>, est_a: &DMatrix<f64>) -> Result<SupportRecovery> {
    if true_a.shape() != est_a.shape() {
        return Err(Error::Dimension(format!(
            "loading shapes {:?} and {:?} differ",
            true_a.shape(),
            est_a.shape()
        )));
    }
    let perm = align_columns(true_a, est_a);
    let (mut zeros, mut zeros_hit, mut nonzeros, mut nonzeros_hit) = (0usize, 0usize, 0usize, 0usize);
    for (l, &pl) in perm.iter().enumerate() {
        for d in 0..true_a.nrows() {
            let est = est_a[(d, pl)];
            if true_a[(d, l)] == 0.0 {
                zeros += 1;
                zeros_hit += usize::from(est == 0.0);
            } else {
                nonzeros += 1;
                nonzeros_hit += usize::from(est != 0.0);
            }
        }
    }
    let rate = |hit: usize, total: usize| if total == 0 { 1.0 } else { hit as f64 / total as f64 };
    Ok(SupportRecovery {
        true_zero_rate: rate(zeros_hit, zeros),
        true_nonzero_rate: rate(nonzeros_hit, nonzeros),
        perm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Rand-index pieces by enumerating every pair of observations.
    pub(crate) fn pair_count_ari(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let (mut both, mut only_a, mut only_b, mut pairs) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            for j in i + 1..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                pairs += 1.0;
                if sa && sb {
                    both += 1.0;
                }
                if sa {
                    only_a += 1.0;
                }
                if sb {
                    only_b += 1.0;
                }
            }
        }
        let expected = only_a * only_b / pairs;
        let max = 0.5 * (only_a + only_b);
        (both - expected) / (max - expected)
    }

    #[test]
    fn ari_examples() {
        let a = [1, 1, 2, 2, 3, 3];
        assert_eq!(ari(&a, &a).unwrap(), 1.0);
        assert_eq!(ari(&a, &[7, 7, 4, 4, 9, 9]).unwrap(), 1.0);
        let x = [1, 1, 2, 2];
        let y = [1, 2, 1, 2];
        let want = pair_count_ari(&x, &y);
        assert_eq!(ari(&x, &y).unwrap(), want);
        // 6 pairs, 2 within-a, 2 within-b, 0 shared: E = 4/6, M = 2 -> -0.5
        assert!((want + 0.5).abs() < 1e-15);
    }

    #[test]
    fn ari_degenerate_and_errors() {
        let ones = [1, 1, 1, 1];
        let o = adjusted_rand_index(&ones, &ones).unwrap();
        assert!(o.degenerate && o.value == 1.0);
        let singles = [1, 2, 3, 4];
        let o = adjusted_rand_index(&singles, &[4, 3, 2, 1]).unwrap();
        assert!(o.degenerate && o.value == 1.0);
        assert!(!adjusted_rand_index(&ones, &singles).unwrap().degenerate);
        assert!(ari(&[1, 2], &[1]).is_err());
        assert!(ari(&[1], &[1]).is_err());
    }

    #[test]
    fn chance_level_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut total = 0.0;
        for _ in 0..200 {
            let a: Vec<usize> = (0..300).map(|_| rng.random_range(1..=3)).collect();
            let b: Vec<usize> = (0..300).map(|_| rng.random_range(1..=3)).collect();
            total += ari(&a, &b).unwrap();
        }
        assert!((total / 200.0).abs() <= 0.05);
    }

    proptest! {
        #[test]
        fn ari_symmetric_and_relabel_invariant(seed in 0u64..2000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(3..40);
            let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let b: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
            let v = ari(&a, &b).unwrap();
            prop_assert_eq!(v, ari(&b, &a).unwrap());
            let relabeled: Vec<usize> = a.iter().map(|x| 10 + 3 * (3 - x)).collect();
            prop_assert!((ari(&relabeled, &b).unwrap() - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn support_examples() {
        let truth = DMatrix::from_row_slice(4, 2, &[2.0, 0.0, 2.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let s = support_recovery(&truth, &truth).unwrap();
        assert_eq!((s.true_zero_rate, s.true_nonzero_rate), (1.0, 1.0));
        let s = support_recovery(&truth, &DMatrix::zeros(4, 2)).unwrap();
        assert_eq!((s.true_zero_rate, s.true_nonzero_rate), (1.0, 0.0));
        let mut swapped = truth.clone();
        swapped.swap_columns(0, 1);
        swapped.column_mut(0).neg_mut();
        let s = support_recovery(&truth, &swapped).unwrap();
        assert_eq!((s.true_zero_rate, s.true_nonzero_rate), (1.0, 1.0));
        assert_eq!(s.perm, vec![1, 0]);
        assert!(support_recovery(&truth, &DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn greedy_alignment_for_wide_loadings() {
        let truth = DMatrix::from_fn(8, 4, |d, l| if d / 2 == l { 1.0 } else { 0.0 });
        let perm = [2usize, 0, 3, 1];
        let est = DMatrix::from_fn(8, 4, |d, l| {
            let src = perm.iter().position(|&p| p == l).unwrap();
            truth[(d, src)] * 0.7
        });
        assert_eq!(align_columns(&truth, &est), perm.to_vec());
        let s = support_recovery(&truth, &est).unwrap();
        assert_eq!((s.true_zero_rate, s.true_nonzero_rate), (1.0, 1.0));
    }
}
