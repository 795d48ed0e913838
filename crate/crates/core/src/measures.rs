//! Lévy measure families and the integrals behind the integrability and
//! cone-nondegeneracy conditions.
//!
//! Every absolutely continuous kind in the catalogue factors in polar
//! coordinates as an angular part times `r^{-1-β} dr`. In one dimension, and
//! for measures charging lines, the angular part is a finite set of atoms; in
//! two dimensions it is a density on the circle. All integrals are computed
//! ray by ray on that structure.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quadrature::{adaptive, indicator_intervals, radial, Estimate, QuadratureConfig};
use crate::scalar::{dot, norm, Real};

type JumpFn<T> = Arc<dyn Fn(&[T], &[T]) -> Vec<T> + Send + Sync>;

/// Jump displacement `j(x, z)` of a Lévy–Itô operator.
#[derive(Clone)]
pub struct JumpMap<T> {
    label: String,
    c0: T,
    x_independent: bool,
    f: JumpFn<T>,
}

impl<T> fmt::Debug for JumpMap<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JumpMap({})", self.label)
    }
}

impl<T: Real> JumpMap<T> {
    /// General jump map. `c0` is the constant in `|j(x,z)| ≤ C₀|z|` and
    /// `|j(x,z) - j(y,z)| ≤ C₀|z||x - y|`.
    pub fn custom(
        label: impl Into<String>,
        c0: T,
        x_independent: bool,
        f: impl Fn(&[T], &[T]) -> Vec<T> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(c0 > T::zero()) {
            return Err(Error::InvalidParameter("jump constant C0 must be positive".into()));
        }
        Ok(Self { label: label.into(), c0, x_independent, f: Arc::new(f) })
    }

    pub fn identity() -> Self {
        Self { label: "identity".into(), c0: T::one(), x_independent: true, f: Arc::new(|_, z| z.to_vec()) }
    }

    /// `j(x, z) = s z`.
    pub fn scale(s: T) -> Result<Self> {
        if s == T::zero() {
            return Err(Error::InvalidParameter("jump scale must be nonzero".into()));
        }
        Self::custom(format!("scale({s})"), s.abs(), true, move |_, z| z.iter().map(|&v| s * v).collect())
    }

    /// `j(x, z) = (1 + a sin x₁) z`, an x-dependent map with `C₀ = 1 + |a|`.
    pub fn modulated(a: T) -> Result<Self> {
        if !(a.abs() < T::one()) {
            return Err(Error::InvalidParameter("modulation amplitude must satisfy |a| < 1".into()));
        }
        Self::custom(format!("modulated({a})"), T::one() + a.abs(), false, move |x, z| {
            let s = T::one() + a * x[0].sin();
            z.iter().map(|&v| s * v).collect()
        })
    }

    /// Embeds a 1-d jump into coordinate `axis` of `dim`-space.
    pub fn embed_axis(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::InvalidParameter(format!("axis {axis} out of range for dimension {dim}")));
        }
        Self::custom(format!("embed(axis {axis} of {dim})"), T::one(), true, move |_, z| {
            let mut w = vec![T::zero(); dim];
            w[axis] = z[0];
            w
        })
    }

    #[inline]
    pub fn apply(&self, x: &[T], z: &[T]) -> Vec<T> {
        (self.f)(x, z)
    }

    pub fn c0(&self) -> T {
        self.c0
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_x_independent(&self) -> bool {
        self.x_independent
    }

    pub fn is_identity(&self) -> bool {
        self.label == "identity"
    }

    /// Largest excess over the two jump bounds on the given samples:
    /// `max(|j(x,z)| - C₀|z|, |j(x,z) - j(y,z)| - C₀|z||x-y|)`, the second
    /// term only for `|z| ≤ 1`. Nonpositive means both bounds hold.
    pub fn invariant_excess(&self, samples: &[(Vec<T>, Vec<T>, Vec<T>)]) -> T {
        let mut worst = T::neg_infinity();
        for (x, y, z) in samples {
            let jx = self.apply(x, z);
            let nz = norm(z);
            worst = worst.max(norm(&jx) - self.c0 * nz);
            if nz <= T::one() {
                let jy = self.apply(y, z);
                let diff: Vec<T> = jx.iter().zip(&jy).map(|(&a, &b)| a - b).collect();
                let dxy: Vec<T> = x.iter().zip(y).map(|(&a, &b)| a - b).collect();
                worst = worst.max(norm(&diff) - self.c0 * nz * norm(&dxy));
            }
        }
        worst
    }
}

/// Catalogue of measure kinds.
#[derive(Debug, Clone)]
pub enum MeasureKind<T> {
    /// `|z|^{-(N+β)} dz`.
    RadialStable { beta: T, dim: usize },
    /// `1_{z_axis ≥ 0} |z|^{-(N+β)} dz`.
    HalfSpaceStable { beta: T, dim: usize, axis: usize },
    /// `1_{|z_a| > α|z_b|} ν(dz)` for a planar base `ν`.
    ConeRestricted { base: Box<MeasureSpec<T>>, alpha: T, axes: (usize, usize) },
    /// Planar measure on the lines `z₁ = ±α z₂` with density `|s|^{-1-β}` in
    /// the arc-length coordinate `s` of each line.
    AxisCharging { beta: T, alpha: T },
    /// `g(z/|z|) |z|^{-(N+1)} dz`, used without compensation.
    ZeroOrderDirectional { dim: usize, g: Expr },
    /// `j(x, ·)` push-forward of a base measure.
    PushForward { base: Box<MeasureSpec<T>>, jump: JumpMap<T> },
}

/// A Lévy measure (family member) `μ`.
#[derive(Debug, Clone)]
pub struct MeasureSpec<T> {
    kind: MeasureKind<T>,
}

/// Angular factor of the polar decomposition.
#[derive(Clone)]
pub(crate) enum Angular<T> {
    /// Directions with weights.
    Atoms(Vec<(Vec<T>, T)>),
    /// Density on the unit circle with known discontinuity angles in `[0, 2π]`.
    Circle { density: Arc<dyn Fn(&[T]) -> T + Send + Sync>, breaks: Vec<T> },
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if beta > T::zero() && beta < T::lit(2.0) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("singularity order beta must lie in (0,2), got {beta}")))
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (1..=3).contains(&dim) {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(dim))
    }
}

#[inline]
pub(crate) fn unit_circle<T: Real>(phi: T) -> [T; 2] {
    [phi.cos(), phi.sin()]
}

/// Angle of a planar vector in `[0, 2π)`.
pub(crate) fn angle_of<T: Real>(v: &[T]) -> T {
    let a = v[1].atan2(v[0]);
    if a < T::zero() {
        a + T::TAU()
    } else {
        a
    }
}

fn wrap_angle<T: Real>(a: T) -> T {
    let tau = T::TAU();
    let r = a % tau;
    if r < T::zero() {
        r + tau
    } else {
        r
    }
}

impl<T: Real> MeasureSpec<T> {
    pub fn radial_stable(beta: T, dim: usize) -> Result<Self> {
        check_beta(beta)?;
        check_dim(dim)?;
        Ok(Self { kind: MeasureKind::RadialStable { beta, dim } })
    }

    pub fn half_space_stable(beta: T, dim: usize, axis: usize) -> Result<Self> {
        check_beta(beta)?;
        check_dim(dim)?;
        if axis >= dim {
            return Err(Error::InvalidParameter(format!("axis {axis} out of range for dimension {dim}")));
        }
        Ok(Self { kind: MeasureKind::HalfSpaceStable { beta, dim, axis } })
    }

    pub fn cone_restricted(base: MeasureSpec<T>, alpha: T, axes: (usize, usize)) -> Result<Self> {
        if !(alpha > T::zero()) {
            return Err(Error::InvalidParameter("cone aperture alpha must be positive".into()));
        }
        let dim = base.dim();
        if dim < 2 || axes.0 >= dim || axes.1 >= dim || axes.0 == axes.1 {
            return Err(Error::InvalidParameter("cone axes must be two distinct coordinates".into()));
        }
        match base.kind {
            MeasureKind::RadialStable { .. } | MeasureKind::HalfSpaceStable { .. } | MeasureKind::ZeroOrderDirectional { .. } => {}
            _ => return Err(Error::InvalidParameter("cone restriction needs an absolutely continuous base".into())),
        }
        Ok(Self { kind: MeasureKind::ConeRestricted { base: Box::new(base), alpha, axes } })
    }

    pub fn axis_charging(beta: T, alpha: T) -> Result<Self> {
        check_beta(beta)?;
        if !(alpha > T::zero()) {
            return Err(Error::InvalidParameter("axis slope alpha must be positive".into()));
        }
        Ok(Self { kind: MeasureKind::AxisCharging { beta, alpha } })
    }

    /// Zero-order kernel with angular density `g`, an expression in the
    /// direction components `x1, x2, x3`.
    pub fn zero_order(dim: usize, g: Expr) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { kind: MeasureKind::ZeroOrderDirectional { dim, g } })
    }

    pub fn push_forward(base: MeasureSpec<T>, jump: JumpMap<T>) -> Result<Self> {
        if matches!(base.kind, MeasureKind::PushForward { .. }) {
            return Err(Error::InvalidParameter("nested push-forwards are not supported".into()));
        }
        Ok(Self { kind: MeasureKind::PushForward { base: Box::new(base), jump } })
    }

    pub fn kind(&self) -> &MeasureKind<T> {
        &self.kind
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            MeasureKind::RadialStable { .. } => "RadialStable",
            MeasureKind::HalfSpaceStable { .. } => "HalfSpaceStable",
            MeasureKind::ConeRestricted { .. } => "ConeRestricted",
            MeasureKind::AxisCharging { .. } => "AxisCharging",
            MeasureKind::ZeroOrderDirectional { .. } => "ZeroOrderDirectional",
            MeasureKind::PushForward { .. } => "PushForward",
        }
    }

    /// Singularity order `β`.
    pub fn beta(&self) -> T {
        match &self.kind {
            MeasureKind::RadialStable { beta, .. } | MeasureKind::HalfSpaceStable { beta, .. } | MeasureKind::AxisCharging { beta, .. } => {
                *beta
            }
            MeasureKind::ZeroOrderDirectional { .. } => T::one(),
            MeasureKind::ConeRestricted { base, .. } | MeasureKind::PushForward { base, .. } => base.beta(),
        }
    }

    /// Dimension of the jump variable `z`.
    pub fn dim(&self) -> usize {
        match &self.kind {
            MeasureKind::RadialStable { dim, .. }
            | MeasureKind::HalfSpaceStable { dim, .. }
            | MeasureKind::ZeroOrderDirectional { dim, .. } => *dim,
            MeasureKind::AxisCharging { .. } => 2,
            MeasureKind::ConeRestricted { base, .. } | MeasureKind::PushForward { base, .. } => base.dim(),
        }
    }

    /// Jump map for push-forwards, `None` otherwise.
    pub fn jump(&self) -> Option<&JumpMap<T>> {
        match &self.kind {
            MeasureKind::PushForward { jump, .. } => Some(jump),
            _ => None,
        }
    }

    /// Measure the `z` variable is integrated against: the base for
    /// push-forwards, `self` otherwise.
    pub fn base(&self) -> &MeasureSpec<T> {
        match &self.kind {
            MeasureKind::PushForward { base, .. } => base,
            _ => self,
        }
    }

    pub fn is_zero_order(&self) -> bool {
        matches!(self.base().kind, MeasureKind::ZeroOrderDirectional { .. })
    }

    /// Whether `μ(-A) = μ(A)` for every set `A`.
    pub fn is_symmetric(&self) -> bool {
        match &self.kind {
            MeasureKind::RadialStable { .. } | MeasureKind::AxisCharging { .. } => true,
            MeasureKind::HalfSpaceStable { .. } => false,
            MeasureKind::ZeroOrderDirectional { dim, g } => (0..64).all(|k| {
                let phi = T::TAU() * T::from_usize_lossy(k) / T::lit(64.0);
                let th: Vec<T> = if *dim == 1 { vec![phi.cos().signum()] } else { vec![phi.cos(), phi.sin(), T::zero()] };
                let neg: Vec<T> = th.iter().map(|&v| -v).collect();
                (g.eval(&th, T::zero()) - g.eval(&neg, T::zero())).abs() <= T::lit(1.0e-12)
            }),
            MeasureKind::ConeRestricted { base, .. } => base.is_symmetric(),
            MeasureKind::PushForward { base, jump } => base.is_symmetric() && jump.is_identity(),
        }
    }

    /// Angular density or atom weight, without the radial factor.
    fn angular_weight(&self, theta: &[T]) -> T {
        match &self.kind {
            MeasureKind::RadialStable { .. } => T::one(),
            MeasureKind::HalfSpaceStable { axis, .. } => {
                if theta[*axis] >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            MeasureKind::ConeRestricted { base, alpha, axes } => {
                if theta[axes.0].abs() > *alpha * theta[axes.1].abs() {
                    base.angular_weight(theta)
                } else {
                    T::zero()
                }
            }
            MeasureKind::ZeroOrderDirectional { g, .. } => g.eval(theta, T::zero()).max(T::zero()),
            MeasureKind::AxisCharging { .. } => T::one(),
            MeasureKind::PushForward { base, .. } => base.angular_weight(theta),
        }
    }

    /// Radon–Nikodym density at `z ≠ 0`. For line measures this is the 1-d
    /// density along the charged line (zero off the lines).
    pub fn density_at(&self, z: &[T]) -> Result<T> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: z.len() });
        }
        let r = norm(z);
        if r == T::zero() {
            return Err(Error::UndefinedAtOrigin);
        }
        let theta: Vec<T> = z.iter().map(|&v| v / r).collect();
        let n = T::from_usize_lossy(self.dim());
        match &self.kind {
            MeasureKind::PushForward { .. } => Err(Error::UnsupportedKind("PushForward")),
            MeasureKind::AxisCharging { beta, alpha } => {
                if on_charged_line(z, *alpha) {
                    Ok(r.powf(-(T::one() + *beta)))
                } else {
                    Ok(T::zero())
                }
            }
            _ => Ok(self.angular_weight(&theta) * r.powf(-(n + self.beta()))),
        }
    }

    /// Support predicate of `μ` (of the base measure for push-forwards).
    /// The origin is never in the support.
    pub fn in_support(&self, z: &[T]) -> bool {
        let r = norm(z);
        if r == T::zero() {
            return false;
        }
        match &self.kind {
            MeasureKind::AxisCharging { alpha, .. } => on_charged_line(z, *alpha),
            MeasureKind::PushForward { base, .. } => base.in_support(z),
            _ => {
                let theta: Vec<T> = z.iter().map(|&v| v / r).collect();
                self.angular_weight(&theta) > T::zero()
            }
        }
    }

    /// Polar structure of the base measure. Integration is supported for
    /// `N ≤ 2`.
    pub(crate) fn angular(&self) -> Result<Angular<T>> {
        let m = self.base();
        let dim = m.dim();
        if let MeasureKind::AxisCharging { alpha, .. } = m.kind {
            let s = T::one() / (T::one() + alpha * alpha).sqrt();
            let dirs = [[alpha * s, s], [-alpha * s, -s], [-alpha * s, s], [alpha * s, -s]];
            return Ok(Angular::Atoms(dirs.iter().map(|d| (d.to_vec(), T::one())).collect()));
        }
        match dim {
            1 => {
                let mut atoms = Vec::new();
                for d in [T::one(), -T::one()] {
                    let w = m.angular_weight(&[d]);
                    if w > T::zero() {
                        atoms.push((vec![d], w));
                    }
                }
                Ok(Angular::Atoms(atoms))
            }
            2 => {
                let breaks = m.angular_breaks();
                let mm = m.clone();
                Ok(Angular::Circle { density: Arc::new(move |th: &[T]| mm.angular_weight(th)), breaks })
            }
            d => Err(Error::UnsupportedDimension(d)),
        }
    }

    /// Angles in `[0, 2π]` where the planar angular density may jump.
    fn angular_breaks(&self) -> Vec<T> {
        let half_pi = T::FRAC_PI_2();
        let pi = T::PI();
        match &self.kind {
            MeasureKind::HalfSpaceStable { axis, .. } => {
                if *axis == 0 {
                    vec![half_pi, pi + half_pi]
                } else {
                    vec![pi]
                }
            }
            MeasureKind::ConeRestricted { base, alpha, axes } => {
                let mut b = base.angular_breaks();
                for sa in [T::one(), -T::one()] {
                    for sb in [T::one(), -T::one()] {
                        let mut d = [T::zero(); 2];
                        d[axes.0] = sa * *alpha;
                        d[axes.1] = sb;
                        b.push(angle_of(&d));
                    }
                }
                b
            }
            _ => Vec::new(),
        }
    }

    /// `∫ f(θ) μ_angular(dθ)` where `f` typically wraps a radial integral
    /// along the ray `θ`. `extra_breaks` are angles where `f` is nonsmooth.
    pub(crate) fn integrate_angular<F>(&self, mut f: F, extra_breaks: &[T], cfg: &QuadratureConfig<T>) -> Result<Estimate<T>>
    where
        F: FnMut(&[T]) -> Result<Estimate<T>>,
    {
        match self.angular()? {
            Angular::Atoms(atoms) => {
                let mut total = Estimate::zero();
                for (d, w) in &atoms {
                    total += f(d)?.scaled(*w);
                }
                Ok(total)
            }
            Angular::Circle { density, breaks } => {
                let tau = T::TAU();
                let panels = cfg.angular_panels.max(1);
                let mut grid: Vec<T> = (0..=panels).map(|k| tau * T::from_usize_lossy(k) / T::from_usize_lossy(panels)).collect();
                grid.extend(breaks.iter().map(|&b| wrap_angle(b)));
                grid.extend(extra_breaks.iter().map(|&b| wrap_angle(b)));
                grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                grid.dedup_by(|a, b| (*a - *b).abs() <= T::epsilon() * T::lit(16.0));
                adaptive(
                    |phi| {
                        let th = unit_circle(phi);
                        let w = density(&th);
                        if w == T::zero() {
                            return Ok(Estimate::zero());
                        }
                        Ok(f(&th)?.scaled(w))
                    },
                    &grid,
                    cfg,
                )
            }
        }
    }

    /// `∫ g(z, j(x,z)) μ(dz)` over the region whose radial extent along each
    /// base ray `θ` is given by `region(θ)` as a list of `(lo, hi)` intervals
    /// (`hi` may be infinite). `g` receives the base jump `z` and the
    /// displacement `w = j(x, z)` (equal to `z` unless this is a push-forward).
    pub fn integrate_region<G, Reg>(&self, x: &[T], g: G, region: Reg, angle_breaks: &[T], cfg: &QuadratureConfig<T>) -> Result<Estimate<T>>
    where
        G: Fn(&[T], &[T]) -> Result<T>,
        Reg: Fn(&[T]) -> Vec<(T, T)>,
    {
        let beta = self.beta();
        let jump = self.jump();
        self.integrate_angular(
            |theta| {
                let mut total = Estimate::zero();
                let mut z = vec![T::zero(); theta.len()];
                for (lo, hi) in region(theta) {
                    let est = radial(
                        |r| {
                            for (zi, &ti) in z.iter_mut().zip(theta) {
                                *zi = r * ti;
                            }
                            match jump {
                                Some(j) => {
                                    let w = j.apply(x, &z);
                                    g(&z, &w)
                                }
                                None => g(&z, &z),
                            }
                        },
                        beta,
                        lo,
                        hi,
                        &[],
                        cfg,
                    )?;
                    total += est;
                }
                Ok(total)
            },
            angle_breaks,
            cfg,
        )
    }
}

fn on_charged_line<T: Real>(z: &[T], alpha: T) -> bool {
    let tol = T::lit(1.0e-9) * norm(z).max(T::one());
    (z[0] - alpha * z[1]).abs() <= tol || (z[0] + alpha * z[1]).abs() <= tol
}

/// Cone `C_{η,γ}(p) = {(1-η)|z||p| ≤ |p·z| ≤ 1/γ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSpec<T> {
    pub p: Vec<T>,
    pub eta: T,
    pub gamma: T,
}

impl<T: Real> ConeSpec<T> {
    pub fn new(p: Vec<T>, eta: T, gamma: T) -> Result<Self> {
        let c = Self { p, eta, gamma };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(norm(&self.p) > T::zero()) {
            return Err(Error::InvalidParameter("cone direction p must be nonzero".into()));
        }
        if !(self.eta >= T::zero() && self.eta < T::one()) {
            return Err(Error::InvalidParameter("cone flatness eta must lie in [0,1)".into()));
        }
        if !(self.gamma > T::zero()) {
            return Err(Error::InvalidParameter("cone scale gamma must be positive".into()));
        }
        Ok(())
    }

    /// Membership of a displacement `w` (`w = z`, or `w = j(x,z)` in the
    /// Lévy–Itô form).
    pub fn contains(&self, w: &[T]) -> bool {
        let pw = dot(&self.p, w).abs();
        (T::one() - self.eta) * norm(w) * norm(&self.p) <= pw && pw <= T::one() / self.gamma
    }

    /// Whether the ray through unit `theta` meets the cone, and if so the
    /// radius where it leaves.
    fn ray_limit(&self, theta: &[T]) -> Option<T> {
        let pt = dot(&self.p, theta).abs();
        if pt > T::zero() && (T::one() - self.eta) * norm(&self.p) <= pt {
            Some(T::one() / (self.gamma * pt))
        } else {
            None
        }
    }

    /// Planar angles bounding the two arcs of the cone.
    fn planar_breaks(&self) -> Vec<T> {
        if self.p.len() != 2 {
            return Vec::new();
        }
        let a = angle_of(&self.p);
        let half = (T::one() - self.eta).min(T::one()).acos();
        let pi = T::PI();
        vec![a - half, a + half, a + pi - half, a + pi + half, a + T::FRAC_PI_2(), a - T::FRAC_PI_2()]
    }
}

/// Weight in [`cone_weighted_mass`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeWeight {
    /// `|p·w|²`.
    ProjSquared,
    /// `|w|²`.
    NormSquared,
}

/// Result of a cone integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeMass<T> {
    pub mass: Estimate<T>,
    /// The support missed the cone entirely; `mass` is then exactly zero.
    pub empty: bool,
}

/// `∫_{C_{η,γ}(p)} weight μ(dz)`, with the Lévy–Itô cone for push-forwards.
pub fn cone_weighted_mass<T: Real>(
    m: &MeasureSpec<T>,
    x: &[T],
    cone: &ConeSpec<T>,
    weight: ConeWeight,
    cfg: &QuadratureConfig<T>,
) -> Result<ConeMass<T>> {
    cone.validate()?;
    if cone.p.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: cone.p.len() });
    }
    if m.is_zero_order() {
        return Err(Error::UnsupportedKind("ZeroOrderDirectional"));
    }
    let g = |_z: &[T], w: &[T]| -> Result<T> {
        Ok(match weight {
            ConeWeight::ProjSquared => {
                let pw = dot(&cone.p, w);
                pw * pw
            }
            ConeWeight::NormSquared => dot(w, w),
        })
    };
    let est = m.integrate_region(x, g, |theta| cone_intervals(m, x, cone, theta, cfg), &cone_angle_breaks(m, x, cone, cfg), cfg)?;
    let empty = est.value == T::zero() && est.error == T::zero();
    Ok(ConeMass { mass: est, empty })
}

/// Radial intervals of the base ray `theta` whose jumps land in the cone.
pub(crate) fn cone_intervals<T: Real>(
    m: &MeasureSpec<T>,
    x: &[T],
    cone: &ConeSpec<T>,
    theta: &[T],
    cfg: &QuadratureConfig<T>,
) -> Vec<(T, T)> {
    match m.jump() {
        None => match cone.ray_limit(theta) {
            Some(hi) => vec![(T::zero(), hi)],
            None => Vec::new(),
        },
        Some(jump) => {
            let mut z = vec![T::zero(); theta.len()];
            indicator_intervals(
                |r| {
                    for (zi, &ti) in z.iter_mut().zip(theta) {
                        *zi = r * ti;
                    }
                    cone.contains(&jump.apply(x, &z))
                },
                T::zero(),
                cfg.tail_radius,
                cfg.breakpoint_samples,
            )
        }
    }
}

/// Planar angles where the cone's angular section changes.
pub(crate) fn cone_angle_breaks<T: Real>(m: &MeasureSpec<T>, x: &[T], cone: &ConeSpec<T>, cfg: &QuadratureConfig<T>) -> Vec<T> {
    match m.jump() {
        None => cone.planar_breaks(),
        Some(_) => pushforward_angle_breaks(m, x, cone, cfg),
    }
}

/// Angles where the Lévy–Itô cone's angular section changes, located at a
/// small probe radius (exact for jump maps linear in `z`).
fn pushforward_angle_breaks<T: Real>(m: &MeasureSpec<T>, x: &[T], cone: &ConeSpec<T>, cfg: &QuadratureConfig<T>) -> Vec<T> {
    if m.dim() != 2 {
        return Vec::new();
    }
    let Some(jump) = m.jump() else { return Vec::new() };
    let r_probe = T::lit(1.0e-6) / cone.gamma;
    let pred = |phi: T| {
        let th = unit_circle(phi);
        let z = [r_probe * th[0], r_probe * th[1]];
        cone.contains(&jump.apply(x, &z))
    };
    let iv = indicator_intervals(pred, T::zero(), T::TAU(), 4 * cfg.breakpoint_samples);
    iv.iter().flat_map(|&(a, b)| [a, b]).collect()
}

/// Status of the integrability condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundStatus {
    /// Both parts finite: the condition holds with `C̃ = near + tail`.
    Holds,
    /// Zero-order kernel: the condition does not apply; the pair (tail mass,
    /// near second moment) is reported instead.
    NotApplicable,
}

/// Integrability constant `C̃_μ` and its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureBound<T> {
    /// `∫_B |w|² μ` (with `w = j(x,z)` for push-forwards).
    pub near_second_moment: Estimate<T>,
    /// `∫_{B^c} μ` (of the base measure for push-forwards).
    pub tail_mass: Estimate<T>,
    pub c_tilde: T,
    pub error: T,
    pub status: BoundStatus,
}

impl<T: Real> MeasureBound<T> {
    pub fn passes(&self) -> bool {
        self.c_tilde.is_finite() && self.status == BoundStatus::Holds
    }
}

/// Computes `∫_B |z|² μ + ∫_{B^c} μ` at the point `x` (only push-forwards
/// depend on `x`).
pub fn measure_bound<T: Real>(m: &MeasureSpec<T>, x: &[T], cfg: &QuadratureConfig<T>) -> Result<MeasureBound<T>> {
    cfg.validate()?;
    let one = T::one();
    let near = m.integrate_region(x, |_z, w| Ok(dot(w, w)), |_| vec![(T::zero(), one)], &[], cfg)?;
    let tail = m.integrate_region(x, |_z, _w| Ok(one), |_| vec![(one, T::infinity())], &[], cfg)?;
    let c_tilde = near.value + tail.value;
    let status = if m.is_zero_order() { BoundStatus::NotApplicable } else { BoundStatus::Holds };
    Ok(MeasureBound { near_second_moment: near, tail_mass: tail, c_tilde, error: near.error + tail.error, status })
}

/// Least-squares fit of `log(cone mass)` against `log γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit<T> {
    pub slope: T,
    pub intercept: T,
    /// `exp(intercept)`, the fitted `C_μ(η)`.
    pub constant: T,
    pub expected_slope: T,
    pub gammas: Vec<T>,
    pub masses: Vec<T>,
}

/// Fits the decay exponent of `∫_{C_{η,γ}(p)} |w|² μ` over `gammas`.
pub fn mc_scaling_probe<T: Real>(
    m: &MeasureSpec<T>,
    x: &[T],
    p: &[T],
    eta: T,
    gammas: &[T],
    cfg: &QuadratureConfig<T>,
) -> Result<ScalingFit<T>> {
    if gammas.len() < 2 {
        return Err(Error::DegenerateFit("need at least two gamma values".into()));
    }
    let gmin = gammas.iter().fold(T::infinity(), |a, &b| a.min(b));
    let gmax = gammas.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    if !(gmax / gmin >= T::lit(100.0) * (T::one() - T::lit(1.0e-9))) {
        return Err(Error::DegenerateFit("gamma grid must span at least two decades".into()));
    }
    let mut masses = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let cone = ConeSpec::new(p.to_vec(), eta, g)?;
        let cm = cone_weighted_mass(m, x, &cone, ConeWeight::NormSquared, cfg)?;
        if !(cm.mass.value > T::zero()) {
            return Err(Error::DegenerateFit(format!("cone mass vanishes at gamma = {g}; the support misses the cone")));
        }
        masses.push(cm.mass.value);
    }
    let xs: Vec<T> = gammas.iter().map(|g| g.ln()).collect();
    let ys: Vec<T> = masses.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys)?;
    Ok(ScalingFit { slope, intercept, constant: intercept.exp(), expected_slope: m.beta() - T::lit(2.0), gammas: gammas.to_vec(), masses })
}

/// Ordinary least-squares line `y = slope x + intercept`.
pub fn least_squares<T: Real>(xs: &[T], ys: &[T]) -> Result<(T, T)> {
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    let sxy: T = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    if !(sxx > T::zero()) || !sxy.is_finite() {
        return Err(Error::DegenerateFit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Geometric grid of `n ≥ 2` points from `a` to `b`.
pub fn geometric_grid<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    let n = n.max(2);
    let ratio = (b / a).ln();
    (0..n).map(|k| a * (ratio * T::from_usize_lossy(k) / T::from_usize_lossy(n - 1)).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> QuadratureConfig<f64> {
        QuadratureConfig::default()
    }

    #[test]
    fn density_examples() {
        let m = MeasureSpec::radial_stable(1.5, 1).unwrap();
        assert!((m.density_at(&[2.0]).unwrap() - 2f64.powf(-2.5)).abs() < 1e-15);
        assert_eq!(MeasureSpec::radial_stable(1.0, 1).unwrap().density_at(&[1.0]).unwrap(), 1.0);
        let h = MeasureSpec::half_space_stable(1.5, 2, 0).unwrap();
        assert_eq!(h.density_at(&[-1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(m.density_at(&[0.0]), Err(Error::UndefinedAtOrigin));
        let pf = MeasureSpec::push_forward(m, JumpMap::identity()).unwrap();
        assert_eq!(pf.density_at(&[1.0]), Err(Error::UnsupportedKind("PushForward")));
    }

    #[test]
    fn bound_examples() {
        let b = measure_bound(&MeasureSpec::radial_stable(1.5, 1).unwrap(), &[0.0], &cfg()).unwrap();
        assert!((b.c_tilde - 16.0 / 3.0).abs() < 1e-8, "{b:?}");
        let b = measure_bound(&MeasureSpec::half_space_stable(1.5, 1, 0).unwrap(), &[0.0], &cfg()).unwrap();
        assert!((b.c_tilde - 8.0 / 3.0).abs() < 1e-8);
        let z = MeasureSpec::zero_order(1, Expr::parse("1").unwrap()).unwrap();
        let b = measure_bound(&z, &[0.0], &cfg()).unwrap();
        assert_eq!(b.status, BoundStatus::NotApplicable);
        assert!((b.tail_mass.value - 2.0).abs() < 1e-8 && (b.near_second_moment.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn cone_examples() {
        let m = MeasureSpec::radial_stable(1.5, 1).unwrap();
        let c = ConeSpec::new(vec![1.0], 0.5, 100.0).unwrap();
        let v = cone_weighted_mass(&m, &[0.0], &c, ConeWeight::ProjSquared, &cfg()).unwrap();
        assert!((v.mass.value - 0.4).abs() < 1e-9);
        let h = MeasureSpec::half_space_stable(1.5, 1, 0).unwrap();
        let v = cone_weighted_mass(&h, &[0.0], &c, ConeWeight::ProjSquared, &cfg()).unwrap();
        assert!((v.mass.value - 0.2).abs() < 1e-9);
    }

    #[test]
    fn axis_charging_orthogonal_cone_is_degenerate() {
        let m = MeasureSpec::axis_charging(1.5, 1.0).unwrap();
        // p orthogonal to (1,1) and (-1,1) cannot exist in the plane, so use a
        // narrow cone (eta = 0) around a direction off both lines.
        let cone = ConeSpec::new(vec![1.0, 0.0], 0.0, 10.0).unwrap();
        let cm = cone_weighted_mass(&m, &[0.0, 0.0], &cone, ConeWeight::NormSquared, &cfg()).unwrap();
        assert!(cm.empty);
        let err = mc_scaling_probe(&m, &[0.0, 0.0], &[1.0, 0.0], 0.0, &geometric_grid(10.0, 1e4, 5), &cfg());
        assert!(matches!(err, Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn planar_radial_scaling() {
        let m = MeasureSpec::radial_stable(1.2, 2).unwrap();
        let fit = mc_scaling_probe(&m, &[0.0, 0.0], &[0.6, 0.8], 0.5, &geometric_grid(10.0, 1e4, 7), &cfg()).unwrap();
        assert!((fit.slope + 0.8).abs() < 0.01, "{fit:?}");
    }
}
