//! Dense helpers shared by the operator modules.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::C64;

pub type CMatrix = DMatrix<C64>;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Largest singular value (ℓ²→ℓ² operator norm).
pub fn spectral_norm(m: &CMatrix) -> f64 {
    spectral_norm_view(m.as_view())
}

pub fn spectral_norm_view(m: DMatrixView<'_, C64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.iter().all(|v| *v == ZERO) {
        return 0.0;
    }
    if m.ncols() == 1 || m.nrows() == 1 {
        return crate::space::euclid(&m.iter().copied().collect::<Vec<_>>());
    }
    // zero rows and columns do not change singular values; dropping them
    // keeps SVDs of sparse corner blocks small
    let rows: Vec<usize> = (0..m.nrows()).filter(|&i| m.row(i).iter().any(|v| *v != ZERO)).collect();
    let cols: Vec<usize> = (0..m.ncols()).filter(|&j| m.column(j).iter().any(|v| *v != ZERO)).collect();
    if rows.len() == 1 || cols.len() == 1 {
        let entries: Vec<C64> = rows.iter().flat_map(|&i| cols.iter().map(move |&j| m[(i, j)])).collect();
        return crate::space::euclid(&entries);
    }
    if rows.len() < m.nrows() || cols.len() < m.ncols() {
        return CMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
            .singular_values()
            .max();
    }
    m.into_owned().singular_values().max()
}

/// Largest singular value and a unit right singular vector attaining it.
pub fn top_singular(m: &CMatrix) -> (f64, DVector<C64>) {
    let cols = m.ncols();
    if m.nrows() == 0 || cols == 0 || m.iter().all(|v| *v == C64::new(0.0, 0.0)) {
        let mut v = DVector::zeros(cols);
        if cols > 0 {
            v[0] = C64::new(1.0, 0.0);
        }
        return (0.0, v);
    }
    let svd = m.clone().svd(false, true);
    let (idx, s) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| {
            if s > acc.1 {
                (i, s)
            } else {
                acc
            }
        });
    let v_t = svd.v_t.expect("requested right vectors");
    let v = v_t.row(idx).adjoint();
    (s, v)
}

/// All singular values, sorted ascending.
pub fn singular_values_sorted(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

pub fn matvec(m: &CMatrix, x: &[C64]) -> Vec<C64> {
    let mut y = vec![C64::new(0.0, 0.0); m.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == C64::new(0.0, 0.0) {
            continue;
        }
        for (yi, a) in y.iter_mut().zip(m.column(j).iter()) {
            *yi += a * xj;
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_of_small_matrices() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(3.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, -4.0),
            ],
        );
        assert!((spectral_norm(&m) - 4.0).abs() < 1e-14);
        let (s, v) = top_singular(&m);
        assert!((s - 4.0).abs() < 1e-14);
        assert!((v[1].norm() - 1.0).abs() < 1e-14);
        let col = CMatrix::from_column_slice(2, 1, &[C64::new(3.0, 0.0), C64::new(0.0, 4.0)]);
        assert!((spectral_norm(&col) - 5.0).abs() < 1e-14);
        assert_eq!(spectral_norm(&CMatrix::zeros(0, 3)), 0.0);
        let mut sparse = CMatrix::zeros(5, 4);
        sparse[(1, 2)] = C64::new(0.0, 2.0);
        sparse[(3, 0)] = C64::new(-1.0, 0.0);
        sparse[(3, 2)] = C64::new(1.0, 0.0);
        let compact = sparse.clone().singular_values().max();
        assert!((spectral_norm(&sparse) - compact).abs() < 1e-14);
        let sv = singular_values_sorted(&m);
        assert!((sv[0] - 3.0).abs() < 1e-14 && (sv[1] - 4.0).abs() < 1e-14);
    }
}
