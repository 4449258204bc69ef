//! Dense linear algebra on [`Array`] backed by nalgebra.

use nalgebra::DMatrix;

use crate::array::Array;
use crate::error::{Error, Result};

pub fn to_matrix(a: &Array) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.data())
}

pub fn from_matrix(m: &DMatrix<f64>) -> Array {
    let (r, c) = m.shape();
    let mut data = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            data.push(m[(i, j)]);
        }
    }
    Array::matrix(r, c, data).expect("matrix shape")
}

pub fn singular_values(a: &Array) -> Vec<f64> {
    let mut s: Vec<f64> = to_matrix(a).singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Ratio of extreme singular values; infinite when rank deficient.
pub fn condition_number(a: &Array) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Numerical rank: singular values above `rel_tol * max`.
pub fn rank(a: &Array, rel_tol: f64) -> usize {
    let s = singular_values(a);
    let Some(&hi) = s.first() else { return 0 };
    if hi == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > rel_tol * hi).count()
}

/// `X^T X`.
pub fn gram(x: &Array) -> Array {
    let m = to_matrix(x);
    from_matrix(&(m.transpose() * &m))
}

/// Solves `A Z = B` by LU with partial pivoting.
pub fn solve(a: &Array, b: &Array) -> Result<Array> {
    let lu = to_matrix(a).lu();
    let rhs = to_matrix(b);
    match lu.solve(&rhs) {
        Some(z) if z.iter().all(|v| v.is_finite()) => Ok(from_matrix(&z)),
        _ => Err(Error::Singular {
            condition: condition_number(a),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_and_solve() {
        let a = Array::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(rank(&a, 1e-10), 2);
        assert_eq!(condition_number(&a), 2.0);
        let z = solve(&a, &Array::eye(2)).unwrap();
        assert_eq!(z.data(), &[0.5, 0.0, 0.0, 0.25]);
        let s = Array::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert_eq!(rank(&s, 1e-10), 1);
        assert!(solve(&s, &Array::eye(2)).is_err());
    }
}
