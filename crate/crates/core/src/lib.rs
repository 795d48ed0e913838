//! Numerical checks of strong maximum principles for parabolic
//! integro-differential equations
//! `u_t + F(x, t, Du, D²u, I[x,t,u]) = 0`.
//!
//! * [`measures`]: Lévy measures, cone integrals and the integrability and
//!   scaling conditions.
//! * [`operators`]: the compensated, Lévy–Itô and zero-order nonlocal
//!   operators, the nonlinearity catalogue and Pucci operators.
//! * [`barriers`]: the auxiliary functions of the propagation arguments and
//!   checks of their nonlocal estimates.
//! * [`reachability`]: support-translation sets on grids.
//! * [`scheme`]: a monotone explicit scheme for the equations.
//! * [`diagnostics`]: propagation tests and nondegeneracy and scaling probes.
//! * [`cli`]: the config-driven experiment runner.
//!
//! Everything numerical is generic over [`Real`]; the `*64` aliases below
//! fix the scalar to `f64`.

// Negated comparisons reject NaN parameters along with out-of-range ones.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barriers;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod field;
pub mod linalg;
pub mod measures;
pub mod operators;
pub mod output;
pub mod quadrature;
pub mod reachability;
pub mod scalar;
pub mod scheme;

pub use error::{Error, Result};
pub use expr::Expr;
pub use field::{Analytic, Boundary, Exterior, Field, Grid, GridField};
pub use linalg::SymMatrix;
pub use measures::{ConeSpec, JumpMap, MeasureSpec};
pub use operators::{Coefficient, DiffusionMatrix, Nonlinearity, NonlocalConfig, PucciParams};
pub use quadrature::{Estimate, QuadratureConfig};
pub use scalar::Real;

pub type MeasureSpec64 = MeasureSpec<f64>;
pub type JumpMap64 = JumpMap<f64>;
pub type ConeSpec64 = ConeSpec<f64>;
pub type Nonlinearity64 = Nonlinearity<f64>;
pub type NonlocalConfig64 = NonlocalConfig<f64>;
pub type QuadratureConfig64 = QuadratureConfig<f64>;
pub type Grid64 = Grid<f64>;
pub type GridField64 = GridField<f64>;
pub type SymMatrix64 = SymMatrix<f64>;
pub type HorizontalBarrier64 = barriers::HorizontalBarrier<f64>;
pub type VerticalBarrier64 = barriers::VerticalBarrier<f64>;
pub type SchemeConfig64 = scheme::SchemeConfig<f64>;
pub type Trajectory64 = scheme::Trajectory<f64>;
