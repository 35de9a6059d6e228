//! Dense least squares by Householder QR.

use crate::error::{Error, Result};

/// Relative threshold on `|R_ii|` below which a column is treated as dependent.
const RANK_TOLERANCE: f64 = 1e-10;

/// Minimizes `‖A x − b‖₂` for a row-major `rows x cols` matrix `A`, `rows ≥ cols`.
pub fn least_squares(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(a.len(), rows * cols, "matrix size");
    assert_eq!(b.len(), rows, "rhs size");
    if rows < cols || cols == 0 {
        return Err(Error::SingularFit);
    }
    let mut r = a.to_vec();
    let mut rhs = b.to_vec();
    let at = |i: usize, j: usize| i * cols + j;

    let col_norm_max = (0..cols)
        .map(|j| (0..rows).map(|i| r[at(i, j)].powi(2)).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if col_norm_max == 0.0 {
        return Err(Error::SingularFit);
    }

    for j in 0..cols {
        let norm = (j..rows).map(|i| r[at(i, j)].powi(2)).sum::<f64>().sqrt();
        if norm <= RANK_TOLERANCE * col_norm_max {
            return Err(Error::SingularFit);
        }
        let alpha = if r[at(j, j)] > 0.0 { -norm } else { norm };
        // v = x − alpha e1, stored in place of column j
        let mut v: Vec<f64> = (j..rows).map(|i| r[at(i, j)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for c in j..cols {
                let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * r[at(j + t, c)]).sum();
                let f = 2.0 * dot / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    r[at(j + t, c)] -= f * vi;
                }
            }
            let dot: f64 = v.iter().enumerate().map(|(t, vi)| vi * rhs[j + t]).sum();
            let f = 2.0 * dot / vnorm2;
            for (t, vi) in v.iter().enumerate() {
                rhs[j + t] -= f * vi;
            }
        }
    }

    let mut x = vec![0.0; cols];
    for j in (0..cols).rev() {
        let s: f64 = ((j + 1)..cols).map(|c| r[at(j, c)] * x[c]).sum();
        x[j] = (rhs[j] - s) / r[at(j, j)];
    }
    Ok(x)
}
