//! Small dense least squares via one-sided Jacobi SVD.
//!
//! Problems here have at most a handful of columns (quadratic surrogates,
//! expression constants), so an O(m n^2) Jacobi sweep is plenty and gives
//! the minimum-norm solution for rank-deficient designs.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Lstsq<T> {
    pub coef: Vec<T>,
    pub rank: usize,
    pub singular_values: Vec<T>,
}

/// Minimum-norm solution of `min ||A x - b||` where `rows` holds `A` row by row.
///
/// Singular values below `max(m, n) * eps * s_max` are treated as zero.
pub fn lstsq_min_norm<T: Scalar>(rows: &[Vec<T>], b: &[T]) -> Lstsq<T> {
    let m = rows.len();
    assert_eq!(m, b.len(), "design/target length mismatch");
    let n = rows.first().map_or(0, |r| r.len());
    if n == 0 {
        return Lstsq {
            coef: Vec::new(),
            rank: 0,
            singular_values: Vec::new(),
        };
    }
    // column-major working copy
    let mut a: Vec<Vec<T>> = (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();

    let dot = |x: &[T], y: &[T]| x.iter().zip(y).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<T> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    let s_max = sigma.iter().fold(T::zero(), |acc, &s| acc.max(s));
    let tol = T::from_usize_lossy(m.max(n)) * eps * s_max;
    let mut coef = vec![T::zero(); n];
    let mut rank = 0;
    for j in 0..n {
        if sigma[j] <= tol || sigma[j] == T::zero() {
            continue;
        }
        rank += 1;
        // u_j^T b / s_j  ==  (a_j^T b) / s_j^2
        let w = dot(&a[j], b) / (sigma[j] * sigma[j]);
        for k in 0..n {
            coef[k] = coef[k] + w * v[j][k];
        }
    }
    Lstsq {
        coef,
        rank,
        singular_values: sigma,
    }
}

/// Givens rotation of columns `p < q`.
fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    for (xp, xq) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let (a, b) = (*xp, *xq);
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}
