//! TOML experiment files.
//!
//! ```toml
//! seed = 7
//!
//! [measure]
//! kind = "radial-stable"
//! beta = 1.5
//! dim = 1
//!
//! [nonlinearity]
//! kind = "pure-nonlocal"
//!
//! [grid]
//! lower = [0.0]
//! upper = [6.283185307179586]
//! cells = [512]
//! boundary = "periodic"
//! initial = "cos(x)"
//! t_end = 0.1
//! ```
//!
//! Coefficients, initial data and exterior data are expressions in
//! `x1..x3` and `t` (see [`crate::expr`]).

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::{Boundary, Exterior, Grid, GridField};
use crate::measures::{JumpMap, MeasureSpec};
use crate::operators::{Coefficient, DiffusionMatrix, Nonlinearity, PucciParams};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must match the command given on the command line.
    pub command: Option<String>,
    pub seed: Option<u64>,
    pub measure: Option<MeasureTable>,
    pub nonlinearity: Option<NonlinearityTable>,
    pub grid: Option<GridTable>,
    pub reachability: Option<ReachTable>,
    pub barrier: Option<BarrierTable>,
    pub appendix: Option<AppendixTable>,
    pub probe: Option<ProbeTable>,
    pub scaling: Option<ScalingTable>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureTable {
    RadialStable { beta: f64, dim: usize },
    HalfSpaceStable { beta: f64, dim: usize, axis: usize },
    ConeRestricted { base: Box<MeasureTable>, alpha: f64, axes: [usize; 2] },
    AxisCharging { beta: f64, alpha: f64 },
    ZeroOrder { dim: usize, g: String },
    PushForward { base: Box<MeasureTable>, jump: JumpTable },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum JumpTable {
    Identity,
    Scale { s: f64 },
    Modulated { a: f64 },
    EmbedAxis { dim: usize, axis: usize },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NonlinearityTable {
    PureNonlocal,
    GrowingInterface,
    GradientPower {
        b: String,
        m: f64,
    },
    /// `a` gives `a(x,t) I`; `entries` gives a row-major `n × n` matrix.
    Quasilinear {
        a: Option<String>,
        entries: Option<Vec<String>>,
    },
    MixedLocalNonlocal {
        d: usize,
    },
    MixedWeighted {
        d: usize,
        a: String,
        c: String,
    },
    Dislocation {
        c: String,
    },
    LinearizedComparison {
        c: f64,
        lambda: f64,
        big_lambda: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    Periodic,
    Dirichlet,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridTable {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
    pub boundary: BoundaryMode,
    /// Exterior data `φ(x, t)` for Dirichlet grids.
    #[serde(default = "zero_expr")]
    pub exterior: String,
    pub initial: String,
    /// Second initial datum for `compare`.
    pub initial_v: Option<String>,
    #[serde(default)]
    pub t0: f64,
    pub t_end: f64,
    pub dt: Option<f64>,
    #[serde(default = "default_stride")]
    pub stride: usize,
}

fn zero_expr() -> String {
    "0".into()
}

fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachTable {
    /// A point; the seed is the cell containing it.
    pub seed: Vec<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "yes")]
    pub expect_cover: bool,
}

fn default_max_iter() -> usize {
    10_000
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierTable {
    pub xbar: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default = "half")]
    pub eta: f64,
    /// Defaults to the largest admissible constant for `eta`.
    pub c: Option<f64>,
    #[serde(default = "default_multipliers")]
    pub gamma_multipliers: Vec<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_derivative_points")]
    pub derivative_points: usize,
    #[serde(default = "default_derivative_step")]
    pub derivative_step: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn default_multipliers() -> Vec<f64> {
    vec![1.0, 2.0, 10.0]
}

fn default_samples() -> usize {
    1000
}

fn default_derivative_points() -> usize {
    16
}

fn default_derivative_step() -> f64 {
    1.0e-2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppendixTable {
    #[serde(default = "default_delta_bars")]
    pub delta_bars: Vec<f64>,
    #[serde(default = "default_scalar_points")]
    pub scalar_points: usize,
    #[serde(default = "default_y_max")]
    pub y_max: f64,
    /// Test functions `φ`; the measure comes from `[measure]`.
    #[serde(default)]
    pub phi: Vec<String>,
    #[serde(default = "default_points")]
    pub points: usize,
    /// Sample points are drawn from `[-x_range, x_range]^N`.
    #[serde(default = "one")]
    pub x_range: f64,
    #[serde(default)]
    pub t: f64,
}

fn default_delta_bars() -> Vec<f64> {
    vec![0.0, 1.0, 3.0]
}

fn default_scalar_points() -> usize {
    10_000
}

fn default_y_max() -> f64 {
    10.0
}

fn default_points() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedVerdict {
    Diverges,
    Bounded,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeTable {
    pub xbar: Vec<f64>,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "half")]
    pub eta: f64,
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default = "one")]
    pub gamma_min: f64,
    #[serde(default = "default_gamma_max")]
    pub gamma_max: f64,
    #[serde(default = "default_gamma_count")]
    pub gamma_count: usize,
    #[serde(default = "default_probe_samples")]
    pub samples: usize,
    #[serde(default = "default_verdict")]
    pub expect: ExpectedVerdict,
    /// `λ` grid of the vertical check: `lambda_count` points on
    /// `[lambda_min, lambda_max]`.
    #[serde(default = "default_lambda_min")]
    pub lambda_min: f64,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    #[serde(default = "default_lambda_count")]
    pub lambda_count: usize,
    /// Expected `γ`-growth exponent and tolerance, when checked.
    pub expect_exponent: Option<f64>,
    #[serde(default = "default_exponent_tol")]
    pub exponent_tol: f64,
}

fn default_gamma_max() -> f64 {
    1.0e8
}

fn default_gamma_count() -> usize {
    17
}

fn default_probe_samples() -> usize {
    16
}

fn default_verdict() -> ExpectedVerdict {
    ExpectedVerdict::Diverges
}

fn default_lambda_min() -> f64 {
    0.01
}

fn default_lambda_max() -> f64 {
    100.0
}

fn default_lambda_count() -> usize {
    10_000
}

fn default_exponent_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingTable {
    pub dim: usize,
    #[serde(default = "default_scaling_samples")]
    pub samples: usize,
    #[serde(default = "default_eps_min")]
    pub eps_min: f64,
    #[serde(default = "one")]
    pub eps_max: f64,
    #[serde(default = "default_eps_count")]
    pub eps_count: usize,
}

fn default_scaling_samples() -> usize {
    256
}

fn default_eps_min() -> f64 {
    1.0e-3
}

fn default_eps_count() -> usize {
    7
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let src =
            std::fs::read_to_string(path).map_err(|e| Error::InvalidParameter(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&src)
    }

    pub fn parse(src: &str) -> Result<Self> {
        toml::from_str(src).map_err(|e| Error::InvalidParameter(format!("config parse error: {e}")))
    }

    pub fn measure(&self) -> Result<MeasureSpec<f64>> {
        require(&self.measure, "measure")?.build()
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity<f64>> {
        require(&self.nonlinearity, "nonlinearity")?.build()
    }

    pub fn grid(&self) -> Result<&GridTable> {
        require(&self.grid, "grid")
    }
}

/// The table `name`, or an error naming it.
pub fn require<'a, T>(t: &'a Option<T>, name: &str) -> Result<&'a T> {
    t.as_ref().ok_or_else(|| Error::InvalidParameter(format!("missing [{name}] table")))
}

fn expr(src: &str) -> Result<Expr> {
    Expr::parse(src)
}

impl MeasureTable {
    pub fn build(&self) -> Result<MeasureSpec<f64>> {
        match self {
            MeasureTable::RadialStable { beta, dim } => MeasureSpec::radial_stable(*beta, *dim),
            MeasureTable::HalfSpaceStable { beta, dim, axis } => MeasureSpec::half_space_stable(*beta, *dim, *axis),
            MeasureTable::ConeRestricted { base, alpha, axes } => MeasureSpec::cone_restricted(base.build()?, *alpha, (axes[0], axes[1])),
            MeasureTable::AxisCharging { beta, alpha } => MeasureSpec::axis_charging(*beta, *alpha),
            MeasureTable::ZeroOrder { dim, g } => MeasureSpec::zero_order(*dim, expr(g)?),
            MeasureTable::PushForward { base, jump } => {
                let j = match jump {
                    JumpTable::Identity => JumpMap::identity(),
                    JumpTable::Scale { s } => JumpMap::scale(*s)?,
                    JumpTable::Modulated { a } => JumpMap::modulated(*a)?,
                    JumpTable::EmbedAxis { dim, axis } => JumpMap::embed_axis(*dim, *axis)?,
                };
                MeasureSpec::push_forward(base.build()?, j)
            }
        }
    }
}

impl NonlinearityTable {
    pub fn build(&self) -> Result<Nonlinearity<f64>> {
        let coef = |s: &str| Coefficient::parse(s);
        Ok(match self {
            NonlinearityTable::PureNonlocal => Nonlinearity::PureNonlocal,
            NonlinearityTable::GrowingInterface => Nonlinearity::GrowingInterface,
            NonlinearityTable::GradientPower { b, m } => Nonlinearity::GradientPower { b: coef(b)?, m: *m },
            NonlinearityTable::Quasilinear { a, entries } => {
                let a = match (a, entries) {
                    (Some(a), None) => DiffusionMatrix::Scalar(coef(a)?),
                    (None, Some(e)) => {
                        let n = (e.len() as f64).sqrt().round() as usize;
                        if n * n != e.len() || n == 0 {
                            return Err(Error::InvalidParameter(format!("quasilinear entries must be n*n, got {}", e.len())));
                        }
                        DiffusionMatrix::Full { n, entries: e.iter().map(|s| coef(s)).collect::<Result<_>>()? }
                    }
                    _ => return Err(Error::InvalidParameter("quasilinear needs exactly one of `a` and `entries`".into())),
                };
                Nonlinearity::Quasilinear { a }
            }
            NonlinearityTable::MixedLocalNonlocal { d } => Nonlinearity::MixedLocalNonlocal { d: *d },
            NonlinearityTable::MixedWeighted { d, a, c } => Nonlinearity::MixedWeighted { d: *d, a: coef(a)?, c: coef(c)? },
            NonlinearityTable::Dislocation { c } => Nonlinearity::Dislocation { c: coef(c)? },
            NonlinearityTable::LinearizedComparison { c, lambda, big_lambda } => {
                Nonlinearity::LinearizedComparison { c: *c, pucci: PucciParams::new(*lambda, *big_lambda)? }
            }
        })
    }
}

impl GridTable {
    pub fn grid(&self) -> Result<Grid<f64>> {
        Grid::new(self.lower.clone(), self.upper.clone(), self.cells.clone(), self.boundary == BoundaryMode::Periodic)
    }

    pub fn boundary(&self) -> Result<Boundary<f64>> {
        Ok(match self.boundary {
            BoundaryMode::Periodic => Boundary::Periodic,
            BoundaryMode::Dirichlet => Boundary::Dirichlet(Exterior::from_expr(expr(&self.exterior)?)),
        })
    }

    fn field(&self, src: &str) -> Result<GridField<f64>> {
        let e = expr(src)?;
        let t0 = self.t0;
        GridField::sample(self.grid()?, self.boundary()?, t0, |x| e.eval(x, t0))
    }

    pub fn initial(&self) -> Result<GridField<f64>> {
        self.field(&self.initial)
    }

    pub fn initial_v(&self) -> Result<GridField<f64>> {
        self.field(require(&self.initial_v, "grid.initial_v")?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > self.t0) {
            return Err(Error::InvalidParameter("grid.t_end must exceed grid.t0".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::InvalidParameter("grid.dt must be positive".into()));
            }
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("grid.stride must be positive".into()));
        }
        Ok(())
    }
}
