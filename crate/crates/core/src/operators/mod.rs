//! Nonlocal operators, the Pucci extremal operator, and the catalogue of
//! nonlinearities `F(x, t, p, X, l)`.

pub mod nonlinearity;
pub mod nonlocal;
pub mod pucci;

pub use nonlinearity::{ellipticity_probe, nonlocal_argument, Coefficient, DiffusionMatrix, EllipticityReport, Nonlinearity};
pub use nonlocal::{
    eval_compensated, eval_levy_ito, eval_restricted, eval_zero_order, eval_zero_order_estimate, NonlocalConfig, SplitValue,
};
pub use pucci::{pucci_minus, pucci_plus, PucciParams};
