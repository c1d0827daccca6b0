//! Small dense linear algebra kernels over any [`Real`] scalar.
//!
//! Dimensions in this crate are desk-sized (n ≤ 10), so the routines favour
//! simplicity: partial-pivot LU and one-sided Jacobi SVD.

use nalgebra::{DMatrix, DVector};

use crate::Real;

pub fn dot<T: Real>(a: &DVector<T>, b: &DVector<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn euclid<T: Real>(v: &DVector<T>) -> T {
    // scaled to avoid overflow on large entries
    let m = max_abs(v.as_slice());
    if m == T::zero() || !m.is_finite() {
        return m;
    }
    let s = v.iter().fold(T::zero(), |acc, &x| acc + (x / m) * (x / m));
    m * s.sqrt()
}

pub fn max_abs<T: Real>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

pub fn all_finite<T: Real>(xs: &[T]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Solve `A x = b` by LU with partial pivoting. `None` when a pivot falls
/// below `tol * max|A|`.
pub fn lu_solve<T: Real>(a: &DMatrix<T>, b: &DVector<T>, tol: T) -> Option<DVector<T>> {
    let n = a.nrows();
    if n != a.ncols() || b.len() != n {
        return None;
    }
    let mut m = a.clone();
    let mut rhs = b.clone();
    let scale = max_abs(a.as_slice()).max(T::min_positive_value());
    for k in 0..n {
        let (piv, pmax) = (k..n)
            .map(|i| (i, m[(i, k)].abs()))
            .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pmax <= tol * scale {
            return None;
        }
        if piv != k {
            m.swap_rows(piv, k);
            rhs.swap_rows(piv, k);
        }
        for i in k + 1..n {
            let f = m[(i, k)] / m[(k, k)];
            if f != T::zero() {
                for j in k..n {
                    let v = m[(k, j)];
                    m[(i, j)] -= f * v;
                }
                let v = rhs[k];
                rhs[i] -= f * v;
            }
        }
    }
    let mut x = DVector::zeros(n);
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= m[(i, j)] * x[j];
        }
        x[i] = s / m[(i, i)];
    }
    Some(x)
}

pub fn inverse<T: Real>(a: &DMatrix<T>, tol: T) -> Option<DMatrix<T>> {
    let n = a.nrows();
    if n != a.ncols() {
        return None;
    }
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = T::one();
        let col = lu_solve(a, &e, tol)?;
        inv.set_column(j, &col);
    }
    Some(inv)
}

/// Thin singular value decomposition `A = U diag(sigma) Vᵀ` with `sigma`
/// sorted in decreasing order; `U` is m×k, `V` is n×k, k = min(m, n).
#[derive(Debug, Clone)]
pub struct Svd<T: Real> {
    pub u: DMatrix<T>,
    pub sigma: DVector<T>,
    pub v: DMatrix<T>,
}

pub fn svd<T: Real>(a: &DMatrix<T>) -> Svd<T> {
    if a.nrows() < a.ncols() {
        let t = jacobi_tall(&a.transpose());
        return Svd { u: t.v, sigma: t.sigma, v: t.u };
    }
    jacobi_tall(a)
}

pub fn singular_values<T: Real>(a: &DMatrix<T>) -> DVector<T> {
    svd(a).sigma
}

/// One-sided (Hestenes) Jacobi on a tall matrix, m ≥ n.
fn jacobi_tall<T: Real>(a: &DMatrix<T>) -> Svd<T> {
    let (m, n) = a.shape();
    let mut u = a.clone();
    let mut v = DMatrix::<T>::identity(n, n);
    let eps = T::epsilon();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    let (up, uq) = (u[(i, p)], u[(i, q)]);
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::c(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (up, uq) = (u[(i, p)], u[(i, q)]);
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<(T, usize)> = (0..n)
        .map(|j| (euclid(&u.column(j).into_owned()), j))
        .collect();
    sigma.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut uo = DMatrix::zeros(m, n);
    let mut vo = DMatrix::zeros(n, n);
    let mut so = DVector::zeros(n);
    for (k, &(s, j)) in sigma.iter().enumerate() {
        so[k] = s;
        if s > T::zero() {
            uo.set_column(k, &(u.column(j) / s));
        }
        vo.set_column(k, &v.column(j));
    }
    Svd { u: uo, sigma: so, v: vo }
}

/// Minimum-norm least-squares solution of `A x ≈ b` through the
/// pseudo-inverse, discarding singular values below `rcond * σ_max`.
pub fn pinv_solve<T: Real>(a: &DMatrix<T>, b: &DVector<T>, rcond: T) -> DVector<T> {
    let d = svd(a);
    let smax = if d.sigma.is_empty() { T::zero() } else { d.sigma[0] };
    let mut x = DVector::zeros(a.ncols());
    for k in 0..d.sigma.len() {
        let s = d.sigma[k];
        if s > rcond * smax && s > T::zero() {
            let coef = dot(&d.u.column(k).into_owned(), b) / s;
            x += d.v.column(k) * coef;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn lu_solves_small_system() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = lu_solve(&a, &b, 1e-14).unwrap();
        assert_relative_eq!(&a * &x, b, epsilon = 1e-12);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(lu_solve(&a, &DVector::from_vec(vec![1.0, 1.0]), 1e-12).is_none());
    }

    #[test]
    fn svd_matches_nalgebra() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 3.0, 4.0, 0.25]);
        let ours = singular_values(&a);
        let theirs = a.clone().svd(false, false).singular_values;
        let mut t: Vec<f64> = theirs.iter().copied().collect();
        t.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (x, y) in ours.iter().zip(t.iter()) {
            assert_relative_eq!(*x, *y, epsilon = 1e-12);
        }
        let wide = a.transpose();
        let d = svd(&wide);
        let rebuilt = &d.u * DMatrix::from_diagonal(&d.sigma) * d.v.transpose();
        assert_relative_eq!(rebuilt, wide, epsilon = 1e-12);
    }

    #[test]
    fn pinv_handles_rank_deficiency() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let x = pinv_solve(&a, &DVector::from_vec(vec![3.0, 5.0]), 1e-12);
        assert_relative_eq!(x, DVector::from_vec(vec![3.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn works_in_single_precision() {
        let a = DMatrix::<f32>::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let s = singular_values(&a);
        assert!((s[1] - 2.0).abs() < 1e-6);
    }
}
