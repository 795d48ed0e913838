//! Small dense symmetric matrices and a cyclic Jacobi eigenvalue solver.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense symmetric `n × n` matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, T::one())
    }

    pub fn scaled_identity(n: usize, s: T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    pub fn diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds from row-major entries, symmetrizing `(A + Aᵀ)/2`.
    pub fn from_rows(n: usize, rows: &[T]) -> Result<Self> {
        if rows.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, got: rows.len() });
        }
        let mut m = Self::zeros(n);
        let half = T::lit(0.5);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = half * (rows[i * n + j] + rows[j * n + i]);
            }
        }
        Ok(m)
    }

    /// `p ⊗ p`.
    pub fn outer(p: &[T]) -> Self {
        let n = p.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = p[i] * p[j];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        Self { n: self.n, data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect() }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&a| a * s).collect() }
    }

    /// Frobenius inner product `A : B`.
    pub fn frobenius(&self, other: &Self) -> T {
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    /// Quadratic form `zᵀ A z`.
    pub fn quad(&self, z: &[T]) -> T {
        let n = self.n;
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                s = s + z[i] * self.data[i * n + j] * z[j];
            }
        }
        s
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Eigenvalues in ascending order by cyclic Jacobi rotations.
    pub fn eigenvalues(&self) -> Vec<T> {
        let n = self.n;
        let mut a = self.data.clone();
        let off = |a: &[T]| -> T {
            let mut s = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    s = s + a[i * n + j] * a[i * n + j];
                }
            }
            s
        };
        let scale: T = a.iter().map(|&v| v * v).sum::<T>();
        let eps = T::epsilon() * T::epsilon() * scale;
        for _sweep in 0..64 {
            if off(&a) <= eps {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == T::zero() {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    let theta = (aqq - app) / (T::lit(2.0) * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let t = if theta == T::zero() { T::one() } else { t };
                    let c = T::one() / (t * t + T::one()).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<T> = (0..n).map(|i| a[i * n + i]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// Smallest eigenvalue; nonnegative iff the matrix is positive semidefinite.
    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues().first().copied().unwrap_or(T::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_known_matrix() {
        let m = SymMatrix::from_rows(2, &[2.0, 1.0, 1.0, 2.0]).unwrap();
        let ev: Vec<f64> = m.eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn trace_is_eigenvalue_sum() {
        let m = SymMatrix::from_rows(3, &[4.0, -2.0, 0.5, -2.0, 1.0, 3.0, 0.5, 3.0, -6.0]).unwrap();
        let s: f64 = m.eigenvalues().iter().sum();
        assert!((s - m.trace()).abs() < 1e-12);
    }
}
