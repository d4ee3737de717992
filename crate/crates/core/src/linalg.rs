//! Dense complex LU factorization with partial pivoting and a 1-norm
//! condition estimate.
//!
//! The interconnection matrices solved here are small (tens of ports), so a
//! straightforward row-major Doolittle factorization is used. Both `A x = b`
//! and `A^H x = b` are solved from the same factors, which the condition
//! estimator and the adjoint noise-propagation path rely on.

use num_complex::Complex64;

use crate::units::{CMatrix, CVector};

/// Relative pivot magnitude below which the matrix is treated as singular.
const PIVOT_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    /// Packed factors, row-major: strict lower part holds L (unit diagonal),
    /// upper part holds U.
    lu: Vec<Complex64>,
    /// `perm[i]` is the original row stored at factor row `i`.
    perm: Vec<usize>,
    singular: bool,
    norm1: f64,
}

impl DenseLu {
    pub fn factor(a: &CMatrix) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "LU of a non-square matrix");
        let n = a.nrows();
        let mut lu = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                lu[i * n + j] = a[(i, j)];
            }
        }
        let norm1 = one_norm(a);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut singular = false;

        for k in 0..n {
            let (p, pmag) =
                (k..n)
                    .map(|i| (i, lu[i * n + k].norm()))
                    .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pmag <= PIVOT_FLOOR * norm1.max(1.0) {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for i in (k + 1)..n {
                let factor = lu[i * n + k] / pivot;
                lu[i * n + k] = factor;
                if factor == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in (k + 1)..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= factor * u;
                }
            }
        }

        Self {
            n,
            lu,
            perm,
            singular,
            norm1,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &CVector) -> CVector {
        let n = self.n;
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in (i + 1)..n {
                acc -= self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        CVector::from_vec(x)
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint(&self, b: &CVector) -> CVector {
        // A = P^T L U, so A^H = U^H L^H P and x = P^T L^-H U^-H b.
        let n = self.n;
        let mut y: Vec<Complex64> = b.iter().copied().collect();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[j * n + i].conj() * y[j];
            }
            y[i] = acc / self.lu[i * n + i].conj();
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in (i + 1)..n {
                acc -= self.lu[j * n + i].conj() * y[j];
            }
            y[i] = acc;
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        CVector::from_vec(x)
    }

    pub fn inverse(&self) -> CMatrix {
        let n = self.n;
        let mut inv = CMatrix::zeros(n, n);
        let mut e = CVector::zeros(n);
        for j in 0..n {
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.solve(&e);
            inv.set_column(j, &col);
            e[j] = Complex64::new(0.0, 0.0);
        }
        inv
    }

    /// Lower-bound estimate of `‖A^-1‖₁` (Hager's method with Higham's
    /// complex sign vectors and extra alternating-sign probe).
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        if self.singular {
            return f64::INFINITY;
        }
        let mut x = CVector::from_element(n, Complex64::new(1.0 / n as f64, 0.0));
        let mut estimate = 0.0_f64;
        let mut last_j = usize::MAX;
        for iteration in 0..5 {
            let y = self.solve(&x);
            let y_norm: f64 = y.iter().map(|z| z.norm()).sum();
            if iteration > 0 && y_norm <= estimate {
                break;
            }
            estimate = estimate.max(y_norm);
            let signs = y.map(|z| {
                let m = z.norm();
                if m == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    z / m
                }
            });
            let z = self.solve_adjoint(&signs);
            let (j, z_max) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            let zx = z.dotc(&x).re;
            if iteration > 0 && (z_max <= zx || j == last_j) {
                break;
            }
            last_j = j;
            x = CVector::zeros(n);
            x[j] = Complex64::new(1.0, 0.0);
        }

        let probe = CVector::from_fn(n, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let scale = if n > 1 { 1.0 + i as f64 / (n - 1) as f64 } else { 1.0 };
            Complex64::new(sign * scale, 0.0)
        });
        let alt: f64 = self.solve(&probe).iter().map(|z| z.norm()).sum();
        let alt = 2.0 * alt / (3.0 * n as f64);
        estimate.max(alt)
    }

    /// Estimated 1-norm condition number `‖A‖₁ ‖A^-1‖₁`.
    pub fn condition_estimate(&self) -> f64 {
        if self.singular {
            return f64::INFINITY;
        }
        self.norm1 * self.inverse_norm1_estimate()
    }
}

pub fn one_norm(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn inf_norm(a: &CMatrix) -> f64 {
    a.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample() -> CMatrix {
        CMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.1, 0.2),
                c(2.0, -1.0),
                c(0.0, 0.5),
                c(1.5, 0.0),
                c(0.3, 0.3),
                c(-1.0, 0.0),
                c(0.0, -2.0),
                c(0.7, 0.1),
                c(1.0, 1.0),
            ],
        )
    }

    #[test]
    fn solves_match_residual() {
        let a = sample();
        let lu = DenseLu::factor(&a);
        let b = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 1.0), c(-2.0, 0.5)]);
        let x = lu.solve(&b);
        assert!((&a * &x - &b).norm() < 1e-13);
        let xa = lu.solve_adjoint(&b);
        assert!((a.adjoint() * &xa - &b).norm() < 1e-13);
    }

    #[test]
    fn inverse_of_identity_is_identity() {
        let lu = DenseLu::factor(&CMatrix::identity(4, 4));
        assert!((lu.inverse() - CMatrix::identity(4, 4)).norm() < 1e-15);
        assert!((lu.condition_estimate() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn condition_estimate_brackets_exact_value() {
        let a = sample();
        let lu = DenseLu::factor(&a);
        let exact = one_norm(&a) * one_norm(&lu.inverse());
        let est = lu.condition_estimate();
        assert!(est <= exact * (1.0 + 1e-12));
        assert!(est >= exact / 3.0, "estimate {est} vs exact {exact}");
    }

    #[test]
    fn singular_matrix_flagged() {
        let mut a = sample();
        let row = a.row(0).into_owned();
        a.set_row(2, &(row * c(2.0, 0.0)));
        let lu = DenseLu::factor(&a);
        assert!(lu.condition_estimate() > 1e12);
    }

    #[test]
    fn nearly_singular_has_large_condition() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0 + 1e-14, 0.0)]);
        let lu = DenseLu::factor(&a);
        assert!(lu.condition_estimate() > 1e13);
    }
}
