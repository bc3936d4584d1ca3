//! Dense least squares by Householder QR.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Solves `min ||x b - y||` for full-column-rank `x`.
///
/// On rank deficiency returns the indices of every column that is numerically
/// a linear combination of the columns before it.
pub fn lstsq_indices<S: Scalar>(
    x: ArrayView2<S>,
    y: ArrayView1<S>,
) -> std::result::Result<Vec<S>, Vec<usize>> {
    let (m, n) = x.dim();
    assert_eq!(m, y.len(), "design rows and response length differ");
    let mut a: Array2<S> = x.to_owned();
    let mut b: Array1<S> = y.to_owned();
    let tol = S::rank_tol();

    let mut pivots: Vec<usize> = Vec::with_capacity(n);
    let mut collinear = Vec::new();
    let mut k = 0;
    for j in 0..n {
        let norm0 = column_norm(&x, j, 0);
        if k >= m {
            collinear.push(j);
            continue;
        }
        let norm = column_norm(&a.view(), j, k);
        if norm0 == S::zero() || norm <= tol * norm0 {
            collinear.push(j);
            continue;
        }
        // Householder vector for a[k.., j]
        let alpha = if a[[k, j]] > S::zero() { -norm } else { norm };
        let mut v: Vec<S> = (k..m).map(|i| a[[i, j]]).collect();
        v[0] = v[0] - alpha;
        let vnorm2: S = v.iter().map(|&t| t * t).sum();
        if vnorm2 > S::zero() {
            let two = S::lit(2.0);
            for c in j..n {
                let dot: S = (k..m).map(|i| v[i - k] * a[[i, c]]).sum();
                let f = two * dot / vnorm2;
                for i in k..m {
                    a[[i, c]] = a[[i, c]] - f * v[i - k];
                }
            }
            let dot: S = (k..m).map(|i| v[i - k] * b[i]).sum();
            let f = two * dot / vnorm2;
            for i in k..m {
                b[i] = b[i] - f * v[i - k];
            }
        }
        pivots.push(j);
        k += 1;
    }
    if !collinear.is_empty() {
        return Err(collinear);
    }

    let r = pivots.len();
    let mut coef = vec![S::zero(); n];
    for row in (0..r).rev() {
        let col = pivots[row];
        let mut acc = b[row];
        for later in row + 1..r {
            acc = acc - a[[row, pivots[later]]] * coef[pivots[later]];
        }
        coef[col] = acc / a[[row, col]];
    }
    Ok(coef)
}

/// [`lstsq_indices`] with collinear columns reported by name.
pub fn lstsq<S: Scalar>(x: ArrayView2<S>, y: ArrayView1<S>, names: &[String]) -> Result<Vec<S>> {
    lstsq_indices(x, y).map_err(|cols| Error::RankDeficient {
        columns: cols
            .into_iter()
            .map(|c| names.get(c).cloned().unwrap_or_else(|| format!("column {c}")))
            .collect(),
    })
}

fn column_norm<S: Scalar>(a: &ArrayView2<S>, j: usize, from: usize) -> S {
    let scale = (from..a.nrows()).fold(S::zero(), |acc, i| acc.max(a[[i, j]].abs()));
    if scale == S::zero() {
        return S::zero();
    }
    let ss: S = (from..a.nrows())
        .map(|i| {
            let t = a[[i, j]] / scale;
            t * t
        })
        .sum();
    scale * ss.sqrt()
}
