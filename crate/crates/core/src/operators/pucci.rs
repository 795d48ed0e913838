use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::Real;

/// Ellipticity constants `0 ≤ λ < Λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PucciParams<T> {
    pub lambda: T,
    pub big_lambda: T,
}

impl<T: Real> PucciParams<T> {
    pub fn new(lambda: T, big_lambda: T) -> Result<Self> {
        if !(lambda >= T::zero() && big_lambda > lambda) {
            return Err(Error::InvalidParameter(format!("Pucci constants need 0 <= lambda < Lambda, got ({lambda}, {big_lambda})")));
        }
        Ok(Self { lambda, big_lambda })
    }
}

/// `M⁺(X) = Λ Σ_{λⱼ>0} λⱼ + λ Σ_{λⱼ<0} λⱼ`.
pub fn pucci_plus<T: Real>(x: &SymMatrix<T>, p: &PucciParams<T>) -> T {
    x.eigenvalues().into_iter().fold(T::zero(), |acc, e| if e > T::zero() { acc + p.big_lambda * e } else { acc + p.lambda * e })
}

/// `M⁻(X) = -M⁺(-X)`.
pub fn pucci_minus<T: Real>(x: &SymMatrix<T>, p: &PucciParams<T>) -> T {
    -pucci_plus(&x.scale(-T::one()), p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let p = PucciParams::new(1.0, 3.0).unwrap();
        assert_eq!(pucci_plus(&SymMatrix::<f64>::zeros(3), &p), 0.0);
        assert!((pucci_plus(&SymMatrix::<f64>::identity(2), &p) - 6.0).abs() < 1e-14);
        assert!((pucci_plus(&SymMatrix::diag(&[2.0, -1.0]), &p) - 5.0).abs() < 1e-14);
        assert!((pucci_minus(&SymMatrix::diag(&[2.0, -1.0]), &p) - (2.0 - 3.0)).abs() < 1e-14);
        assert!(PucciParams::new(2.0, 1.0).is_err());
    }
}
