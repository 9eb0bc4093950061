//! Small dense square matrices, enough for flow Jacobians.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Row-major entries; `None` when `data.len() != n²`.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == n * n).then_some(Self { n, data })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    out.data[i * n + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        Matrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let n = self.n;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.get(i, j);
            }
        }
        out
    }

    /// Gaussian elimination with partial pivoting.
    pub fn determinant(&self) -> f64 {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r, &s| libm::fabs(a[r * n + col]).total_cmp(&libm::fabs(a[s * n + col])))
                .unwrap();
            if a[pivot * n + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(pivot * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for r in col + 1..n {
                let factor = a[r * n + col] / p;
                if factor != 0.0 {
                    for j in col..n {
                        a[r * n + j] -= factor * a[col * n + j];
                    }
                }
            }
        }
        det
    }

    /// Largest singular value, from the eigenvalues of `AᵀA` (cyclic Jacobi).
    pub fn operator_norm(&self) -> f64 {
        let n = self.n;
        let mut s = self.transpose().mul(self).data;
        for _sweep in 0..64 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| s[i * n + j] * s[i * n + j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = s[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (s[q * n + q] - s[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                    let c = 1.0 / libm::sqrt(t * t + 1.0);
                    let sn = t * c;
                    for k in 0..n {
                        let skp = s[k * n + p];
                        let skq = s[k * n + q];
                        s[k * n + p] = c * skp - sn * skq;
                        s[k * n + q] = sn * skp + c * skq;
                    }
                    for k in 0..n {
                        let spk = s[p * n + k];
                        let sqk = s[q * n + k];
                        s[p * n + k] = c * spk - sn * sqk;
                        s[q * n + k] = sn * spk + c * sqk;
                    }
                }
            }
        }
        let top = (0..n).map(|i| s[i * n + i]).fold(0.0, f64::max);
        libm::sqrt(top.max(0.0))
    }

    /// Sufficient condition for `det > 0`: `‖A − I‖ < 1` in operator norm.
    /// Every `A = I + E` with `‖E‖ < 1` is invertible, and the segment
    /// `I + sE` never crosses a singular matrix.
    pub fn near_identity(&self) -> bool {
        self.sub(&Matrix::identity(self.n)).operator_norm() < 1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn determinant_and_norm() {
        let r = Matrix::from_row_major(2, vec![0.0, -1.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.determinant(), 1.0);
        assert!((r.operator_norm() - 1.0).abs() < 1e-14);
        let d =
            Matrix::from_row_major(3, vec![2.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, 0.5]).unwrap();
        assert!((d.determinant() + 3.0).abs() < 1e-14);
        assert!((d.operator_norm() - 3.0).abs() < 1e-12);
        let shear = Matrix::from_row_major(2, vec![1.0, 1.0, 0.0, 1.0]).unwrap();
        // σ_max of [[1,1],[0,1]] is the golden ratio
        assert!((shear.operator_norm() - 1.618_033_988_749_895).abs() < 1e-12);
        assert_eq!(Matrix::zeros(2).determinant(), 0.0);
    }

    proptest! {
        #[test]
        fn near_identity_has_positive_determinant(
            entries in proptest::collection::vec(-1.0f64..1.0, 9),
            scale in 0.0f64..0.999,
        ) {
            let e = Matrix::from_row_major(3, entries).unwrap();
            let norm = e.operator_norm();
            prop_assume!(norm > 0.0);
            let mut a = Matrix::identity(3);
            for i in 0..3 {
                for j in 0..3 {
                    a.set(i, j, a.get(i, j) + scale * e.get(i, j) / norm);
                }
            }
            prop_assert!(a.near_identity());
            prop_assert!(a.determinant() > 0.0);
        }

        #[test]
        fn operator_norm_dominates_entries_and_bounds_products(
            a in proptest::collection::vec(-2.0f64..2.0, 4),
            b in proptest::collection::vec(-2.0f64..2.0, 4),
        ) {
            let a = Matrix::from_row_major(2, a).unwrap();
            let b = Matrix::from_row_major(2, b).unwrap();
            let na = a.operator_norm();
            for v in a.as_slice() {
                prop_assert!(v.abs() <= na + 1e-12);
            }
            prop_assert!(a.mul(&b).operator_norm() <= na * b.operator_norm() + 1e-12);
            prop_assert!(a.determinant().abs() <= na * na + 1e-12);
        }
    }
}
