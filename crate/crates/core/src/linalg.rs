//! Dense helpers and the cyclic Jacobi eigensolver for symmetric matrices.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EigenError {
    #[error("matrix is not square: {0} entries")]
    NotSquare(usize),
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("Jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Eigenpairs of a symmetric matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

const MAX_SWEEPS: usize = 100;

/// Diagonalizes the symmetric `n x n` row-major matrix `a` by cyclic Jacobi
/// rotations. Stops once the off-diagonal Frobenius norm drops below
/// `1e-12 * |trace|` (or reaches zero).
///
/// Only the symmetric part of `a` is meaningful; the input is not checked for symmetry.
pub fn jacobi_eigen(a: &[f64], n: usize) -> Result<SymmetricEigen, EigenError> {
    if a.len() != n * n {
        return Err(EigenError::NotSquare(a.len()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(EigenError::NonFinite);
    }
    let mut m = a.to_vec();
    // Rows of `v` are accumulated eigenvectors (v = Vᵀ).
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let trace: f64 = (0..n).map(|i| m[i * n + i]).sum();
    let tol = 1e-12 * trace.abs();

    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[i * n + j] * m[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let off = off_norm(&m);
        if off == 0.0 || off < tol {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(EigenError::NoConvergence(MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                m[p * n + p] -= t * apq;
                m[q * n + q] += t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = m[r * n + p];
                    let arq = m[r * n + q];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    m[r * n + p] = new_rp;
                    m[p * n + r] = new_rp;
                    m[r * n + q] = new_rq;
                    m[q * n + r] = new_rq;
                }
                let (vp, vq) = (p * n, q * n);
                for r in 0..n {
                    let a = v[vp + r];
                    let b = v[vq + r];
                    v[vp + r] = c * a - s * b;
                    v[vq + r] = s * a + c * b;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    Ok(SymmetricEigen {
        values: order.iter().map(|&i| m[i * n + i]).collect(),
        vectors: order.iter().map(|&i| v[i * n..(i + 1) * n].to_vec()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        // [[2,1],[1,2]] has eigenvalues 3 and 1.
        let e = jacobi_eigen(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors[0][0].abs() - r).abs() < 1e-14);
        assert!((e.vectors[0][0] - e.vectors[0][1]).abs() < 1e-14);
    }

    #[test]
    fn diagonal_is_already_converged() {
        let e = jacobi_eigen(&[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0], 3).unwrap();
        assert_eq!(e.values, vec![5.0, 3.0, 1.0]);
        assert_eq!(e.vectors[0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn reconstructs_matrix() {
        let a = [4.0, 1.0, -2.0, 2.0, 1.0, 2.0, 0.0, 1.0, -2.0, 0.0, 3.0, -2.0, 2.0, 1.0, -2.0, -1.0];
        let n = 4;
        let e = jacobi_eigen(&a, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let rec: f64 = (0..n).map(|k| e.values[k] * e.vectors[k][i] * e.vectors[k][j]).sum();
                assert!((rec - a[i * n + j]).abs() < 1e-12);
            }
        }
        for k in 0..n {
            for l in 0..n {
                let want = if k == l { 1.0 } else { 0.0 };
                assert!((dot(&e.vectors[k], &e.vectors[l]) - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(jacobi_eigen(&[1.0, 2.0, 3.0], 2).unwrap_err(), EigenError::NotSquare(3));
        assert_eq!(jacobi_eigen(&[f64::NAN], 1).unwrap_err(), EigenError::NonFinite);
    }
}
