//! Small dense square matrices on the truncated basis.
//!
//! Sizes are the spectral truncation (tens of modes), so plain row-major
//! storage with cyclic Jacobi and partial-pivot LU is all that is needed.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    pub fn from_row_major(n: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::invalid(format!("matrix of order {n} needs {} entries", n * n)));
        }
        Ok(Self { n, data })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn mul_mat(&self, other: &Self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// `M M^T`.
    pub fn gram(&self) -> Self {
        self.mul_mat(&self.transpose())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&x| x * s).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect() }
    }

    pub fn symmetrized(&self) -> Self {
        let t = self.transpose();
        Self {
            n: self.n,
            data: self.data.iter().zip(&t.data).map(|(&a, &b)| (a + b) / T::lit(2.0)).collect(),
        }
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_diagonal(&self, tol: T) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self[(i, j)].abs() <= tol))
    }

    /// Solves `M x = b` by LU with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p * n + col].abs().partial_cmp(&a[q * n + col].abs()).unwrap())
                .unwrap();
            if a[pivot * n + col].abs() <= T::epsilon() * T::lit(1e-3) {
                return Err(Error::invalid("singular matrix in linear solve"));
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                x.swap(col, pivot);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let factor = a[r * n + col] / d;
                if factor == T::zero() {
                    continue;
                }
                for j in col..n {
                    let pivot_row = a[col * n + j];
                    a[r * n + j] -= factor * pivot_row;
                }
                let xc = x[col];
                x[r] -= factor * xc;
            }
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for j in r + 1..n {
                s -= a[r * n + j] * x[j];
            }
            x[r] = s / a[r * n + r];
        }
        Ok(x)
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut inv = Self::identity(n).data;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&p, &q| a[p * n + col].abs().partial_cmp(&a[q * n + col].abs()).unwrap())
                .unwrap();
            if a[pivot * n + col].abs() <= T::epsilon() * T::lit(1e-3) {
                return Err(Error::invalid("singular matrix in inversion"));
            }
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
            let d = a[col * n + col];
            for j in 0..n {
                a[col * n + j] /= d;
                inv[col * n + j] /= d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a[r * n + col];
                if factor == T::zero() {
                    continue;
                }
                for j in 0..n {
                    let (pa, pi) = (a[col * n + j], inv[col * n + j]);
                    a[r * n + j] -= factor * pa;
                    inv[r * n + j] -= factor * pi;
                }
            }
        }
        Ok(Self { n, data: inv })
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns eigenvalues (ascending) and the matching eigenvectors as columns.
    pub fn symmetric_eigen(&self) -> (Vec<T>, Matrix<T>) {
        let n = self.n;
        let mut a = self.symmetrized();
        let mut v = Self::identity(n);
        let scale = a.frobenius().max(T::min_positive_value());
        for _sweep in 0..100 {
            let mut off = T::zero();
            for i in 0..n {
                for j in 0..i {
                    off += a[(i, j)] * a[(i, j)];
                }
            }
            if off.sqrt() <= T::epsilon() * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq.abs() <= T::min_positive_value() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
        let values = order.iter().map(|&i| a[(i, i)]).collect();
        let mut vectors = Self::zeros(n);
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                vectors[(k, new)] = v[(k, old)];
            }
        }
        (values, vectors)
    }

    /// `V diag(g(w)) V^T` from a symmetric eigen-decomposition.
    pub fn spectral_map(values: &[T], vectors: &Matrix<T>, g: impl Fn(T) -> T) -> Matrix<T> {
        let n = values.len();
        let mut out = Self::zeros(n);
        for (k, &w) in values.iter().enumerate() {
            let gw = g(w);
            if gw == T::zero() {
                continue;
            }
            for i in 0..n {
                let vik = vectors[(i, k)] * gw;
                for j in 0..n {
                    out.data[i * n + j] += vik * vectors[(j, k)];
                }
            }
        }
        out
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_small_system() {
        let m = Matrix::from_row_major(3, vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]).unwrap();
        let x = m.solve(&[3.0, 2.0, 4.0]).unwrap();
        let back = m.mul_vec(&x);
        for (a, b) in back.iter().zip([3.0_f64, 2.0, 4.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(Matrix::<f64>::zeros(2).solve(&[1.0, 1.0]).is_err());
        let inv = m.inverse().unwrap();
        assert!(inv.mul_mat(&m).sub(&Matrix::identity(3)).frobenius() < 1e-12);
        assert!(Matrix::<f64>::zeros(2).inverse().is_err());
    }

    #[test]
    fn jacobi_reconstructs_symmetric_matrix() {
        let m = Matrix::from_row_major(3, vec![4.0, 1.0, -2.0, 1.0, 3.0, 0.5, -2.0, 0.5, 1.0]).unwrap();
        let (w, v) = m.symmetric_eigen();
        assert!(w.windows(2).all(|p| p[0] <= p[1]));
        let back = Matrix::spectral_map(&w, &v, |x| x);
        assert!(back.sub(&m).frobenius() < 1e-12);
        let vtv = v.transpose().mul_mat(&v);
        assert!(vtv.sub(&Matrix::identity(3)).frobenius() < 1e-12);
    }
}
