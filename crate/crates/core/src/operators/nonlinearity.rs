//! The example nonlinearities `F(x, t, p, X, l)` and a randomized
//! degenerate-ellipticity probe.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::field::Field;
use crate::linalg::SymMatrix;
use crate::measures::{JumpMap, MeasureSpec};
use crate::operators::nonlocal::{eval_compensated, eval_zero_order_estimate, NonlocalConfig};
use crate::operators::pucci::{pucci_plus, PucciParams};
use crate::quadrature::Estimate;
use crate::scalar::{norm, Real};

/// Scalar coefficient `a(x, t)` given by an expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient(pub Expr);

impl Coefficient {
    pub fn constant(v: f64) -> Self {
        Self(Expr::constant(v))
    }

    pub fn parse(src: &str) -> Result<Self> {
        Ok(Self(Expr::parse(src)?))
    }

    #[inline]
    pub fn eval<T: Real>(&self, x: &[T], t: T) -> T {
        self.0.eval(x, t)
    }
}

/// Diffusion matrix `A(x, t)` of the quasilinear form.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionMatrix {
    /// `a(x,t) I`.
    Scalar(Coefficient),
    /// Row-major `n × n` entries, symmetrized on evaluation.
    Full { n: usize, entries: Vec<Coefficient> },
}

impl DiffusionMatrix {
    pub fn eval<T: Real>(&self, x: &[T], t: T, n: usize) -> Result<SymMatrix<T>> {
        match self {
            DiffusionMatrix::Scalar(a) => Ok(SymMatrix::scaled_identity(n, a.eval(x, t))),
            DiffusionMatrix::Full { n: m, entries } => {
                if *m != n {
                    return Err(Error::DimensionMismatch { expected: n, got: *m });
                }
                let rows: Vec<T> = entries.iter().map(|c| c.eval(x, t)).collect();
                SymMatrix::from_rows(n, &rows)
            }
        }
    }
}

/// The catalogue of nonlinearities. In every form `l` is the value of the
/// nonlocal term (for the mixed forms, of the directional operator acting on
/// the first `d` coordinates).
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity<T> {
    /// `F = -l`.
    PureNonlocal,
    /// `F = ½|p|² - l`.
    GrowingInterface,
    /// `F = b(x,t)|p|^m - l`.
    GradientPower { b: Coefficient, m: T },
    /// `F = -tr(A(x,t) X) - l`.
    Quasilinear { a: DiffusionMatrix },
    /// `F = -l - Σ_{i ≥ d} X_ii`: nonlocal in `x₁ ∈ ℝ^d`, Laplacian in `x₂`.
    MixedLocalNonlocal { d: usize },
    /// `F = -a(x) l - c(x) Σ_{i ≥ d} X_ii`.
    MixedWeighted { d: usize, a: Coefficient, c: Coefficient },
    /// `F = -(c(x) + l)|p|`, with `l` the zero-order term `M[u]`.
    Dislocation { c: Coefficient },
    /// `F = -c|p| - M⁺(X) - c l`.
    LinearizedComparison { c: T, pucci: PucciParams<T> },
}

impl<T: Real> Nonlinearity<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Nonlinearity::PureNonlocal => "PureNonlocal",
            Nonlinearity::GrowingInterface => "GrowingInterface",
            Nonlinearity::GradientPower { .. } => "GradientPower",
            Nonlinearity::Quasilinear { .. } => "Quasilinear",
            Nonlinearity::MixedLocalNonlocal { .. } => "MixedLocalNonlocal",
            Nonlinearity::MixedWeighted { .. } => "MixedWeighted",
            Nonlinearity::Dislocation { .. } => "Dislocation",
            Nonlinearity::LinearizedComparison { .. } => "LinearizedComparison",
        }
    }

    /// Whether the nonlocal argument is the zero-order operator `M[u]`.
    pub fn uses_zero_order(&self) -> bool {
        matches!(self, Nonlinearity::Dislocation { .. })
    }

    /// Number of leading coordinates the nonlocal term acts on, for the
    /// mixed forms.
    pub fn nonlocal_block(&self) -> Option<usize> {
        match self {
            Nonlinearity::MixedLocalNonlocal { d } | Nonlinearity::MixedWeighted { d, .. } => Some(*d),
            _ => None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Nonlinearity::GradientPower { m, .. } if !(*m > T::zero()) => {
                Err(Error::InvalidParameter("gradient power m must be positive".into()))
            }
            Nonlinearity::MixedLocalNonlocal { d } | Nonlinearity::MixedWeighted { d, .. } if *d == 0 || *d >= dim => {
                Err(Error::InvalidParameter(format!("mixed forms need 0 < d < N (d = {d}, N = {dim})")))
            }
            Nonlinearity::Quasilinear { a: DiffusionMatrix::Full { n, .. } } if *n != dim => {
                Err(Error::DimensionMismatch { expected: dim, got: *n })
            }
            Nonlinearity::LinearizedComparison { c, .. } if !(*c >= T::zero()) => {
                Err(Error::InvalidParameter("linearized comparison constant c must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }

    /// `F(x, t, p, X, l)`.
    pub fn eval(&self, x: &[T], t: T, p: &[T], xm: &SymMatrix<T>, l: T) -> T {
        let local_trace = |d: usize| (d..xm.dim()).map(|i| xm.get(i, i)).sum::<T>();
        match self {
            Nonlinearity::PureNonlocal => -l,
            Nonlinearity::GrowingInterface => T::lit(0.5) * p.iter().map(|&v| v * v).sum::<T>() - l,
            Nonlinearity::GradientPower { b, m } => b.eval(x, t) * norm(p).powf(*m) - l,
            Nonlinearity::Quasilinear { a } => {
                let am = a.eval(x, t, xm.dim()).unwrap_or_else(|_| SymMatrix::zeros(xm.dim()));
                -am.frobenius(xm) - l
            }
            Nonlinearity::MixedLocalNonlocal { d } => -l - local_trace(*d),
            Nonlinearity::MixedWeighted { d, a, c } => -a.eval(x, t) * l - c.eval(x, t) * local_trace(*d),
            Nonlinearity::Dislocation { c } => -(c.eval(x, t) + l) * norm(p),
            Nonlinearity::LinearizedComparison { c, pucci } => -*c * norm(p) - pucci_plus(xm, pucci) - *c * l,
        }
    }
}

/// The value `l` that `f` expects as its nonlocal argument at `(x, t)`:
/// the zero-order term for [`Nonlinearity::Dislocation`], the directional
/// operator on the leading block for the mixed forms (a `d`-dimensional `m`
/// is embedded into the first `d` coordinates), and the compensated operator
/// otherwise.
pub fn nonlocal_argument<T: Real>(
    f: &Nonlinearity<T>,
    u: &dyn Field<T>,
    x: &[T],
    t: T,
    m: &MeasureSpec<T>,
    cfg: &NonlocalConfig<T>,
) -> Result<Estimate<T>> {
    if f.uses_zero_order() {
        return eval_zero_order_estimate(u, x, t, m, cfg);
    }
    if let Some(d) = f.nonlocal_block() {
        if m.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
        }
        let n = x.len();
        let embed = JumpMap::custom(format!("embed(first {d} of {n})"), T::one(), true, move |_, z: &[T]| {
            let mut w = vec![T::zero(); n];
            w[..z.len()].copy_from_slice(z);
            w
        })?;
        let pf = MeasureSpec::push_forward(m.clone(), embed)?;
        return Ok(eval_compensated(u, x, t, &pf, cfg)?.total());
    }
    Ok(eval_compensated(u, x, t, m, cfg)?.total())
}

/// One monotonicity violation found by [`ellipticity_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityViolation<T> {
    pub x: Vec<T>,
    pub t: T,
    /// `F(X, l₁) - F(Y, l₂)`, positive when violated.
    pub excess: T,
}

/// Outcome of the randomized ellipticity probe.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticityReport<T> {
    pub samples: usize,
    /// Ordered pairs `X ≥ Y`, `l₁ ≥ l₂` with `F(X,l₁) > F(Y,l₂)`.
    pub violations: Vec<EllipticityViolation<T>>,
    /// `l` values with `F(x,t,0,O,l) ≤ 0` but `l < 0`.
    pub e_prime_violations: Vec<T>,
}

impl<T: Real> EllipticityReport<T> {
    pub fn e_holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn e_prime_holds(&self) -> bool {
        self.e_prime_violations.is_empty()
    }
}

fn random_symmetric<T: Real, R: Rng>(rng: &mut R, n: usize, scale: f64) -> SymMatrix<T> {
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            m.set(i, j, T::lit(rng.gen_range(-scale..scale)));
        }
    }
    m
}

/// Samples ordered pairs and checks that `F` is nonincreasing in `X` and in
/// `l`; then checks `F(x,t,0,O,l) ≤ 0 ⇒ l ≥ 0` on an `l`-grid.
pub fn ellipticity_probe<T: Real>(f: &Nonlinearity<T>, dim: usize, samples: usize, seed: u64) -> Result<EllipticityReport<T>> {
    f.validate(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = T::lit(1.0e-10);
    let mut violations = Vec::new();
    for _ in 0..samples {
        let x: Vec<T> = (0..dim).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        let t = T::lit(rng.gen_range(0.0..1.0));
        let p: Vec<T> = (0..dim).map(|_| T::lit(rng.gen_range(-2.0..2.0))).collect();
        let y = random_symmetric::<T, _>(&mut rng, dim, 2.0);
        // X = Y + B Bᵀ is above Y in the PSD order.
        let b: Vec<T> = (0..dim * dim).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        let mut bbt = SymMatrix::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let s: T = (0..dim).map(|k| b[i * dim + k] * b[j * dim + k]).sum();
                bbt.set(i, j, s);
            }
        }
        let xm = y.add(&bbt);
        let l2 = T::lit(rng.gen_range(-3.0..3.0));
        let l1 = l2 + T::lit(rng.gen_range(0.0..2.0));
        let fx = f.eval(&x, t, &p, &xm, l1);
        let fy = f.eval(&x, t, &p, &y, l2);
        let scale = T::one().max(fx.abs()).max(fy.abs());
        if fx - fy > tol * scale {
            violations.push(EllipticityViolation { x, t, excess: fx - fy });
        }
    }
    let mut e_prime_violations = Vec::new();
    let zero_p = vec![T::zero(); dim];
    let zero_m = SymMatrix::zeros(dim);
    let x0 = vec![T::zero(); dim];
    for k in 0..=40 {
        let l = T::lit(-2.0 + 0.1 * k as f64);
        if f.eval(&x0, T::zero(), &zero_p, &zero_m, l) <= T::zero() && l < T::zero() {
            e_prime_violations.push(l);
        }
    }
    Ok(EllipticityReport { samples, violations, e_prime_violations })
}
