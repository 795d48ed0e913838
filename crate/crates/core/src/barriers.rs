//! Auxiliary functions for the horizontal and vertical propagation arguments,
//! and numerical checks of the nonlocal estimates they satisfy.
//!
//! The horizontal barrier `v = e^{-γR²} - e^{-γd}` is exponentially small
//! away from its center, so all nonlocal quantities are computed for the
//! normalized function `w(y) = e^{-γ(d(y,t) - d(x,t))}`. Since
//! `I[x,t,v] = -e^{-γd(x,t)} I[x,t,w]`, each estimate divides through by
//! `e^{-γd(x,t)}` and the margins below are reported in that scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::linalg::SymMatrix;
use crate::measures::{angle_of, cone_angle_breaks, cone_intervals, cone_weighted_mass, measure_bound, ConeSpec, ConeWeight, MeasureSpec};
use crate::operators::nonlocal::taylor_remainder;
use crate::operators::{eval_restricted, nonlocal_argument, Nonlinearity, NonlocalConfig};
use crate::quadrature::{Estimate, QuadratureConfig};
use crate::scalar::{dot, norm, sub, Real};

/// Value and derivatives of a barrier at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierValue<T> {
    pub v: T,
    pub vt: T,
    pub dv: Vec<T>,
    pub d2v: SymMatrix<T>,
}

/// A barrier with closed-form time and space derivatives.
pub trait Barrier<T: Real>: Field<T> {
    fn eval(&self, x: &[T], t: T) -> BarrierValue<T>;
}

/// `v(x,t) = e^{-γR²} - e^{-γd(x,t)}` with `d = |x - x̄|² + λ|t - t₀|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizontalBarrier<T> {
    pub xbar: Vec<T>,
    pub t0: T,
    pub r: T,
    pub lambda: T,
    pub gamma: T,
}

impl<T: Real> HorizontalBarrier<T> {
    pub fn new(xbar: Vec<T>, t0: T, r: T, lambda: T, gamma: T) -> Result<Self> {
        if xbar.is_empty() {
            return Err(Error::InvalidParameter("barrier center must have at least one coordinate".into()));
        }
        for (name, v) in [("R", r), ("lambda", lambda), ("gamma", gamma)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("barrier parameter {name} must be positive, got {v}")));
            }
        }
        Ok(Self { xbar, t0, r, lambda, gamma })
    }

    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        Self::new(self.xbar.clone(), self.t0, self.r, self.lambda, gamma)
    }

    pub fn d(&self, x: &[T], t: T) -> T {
        let q = sub(x, &self.xbar);
        let dt = t - self.t0;
        dot(&q, &q) + self.lambda * dt * dt
    }

    /// Inside the ellipsoid `E_R = {d < R²}`.
    pub fn in_ellipsoid(&self, x: &[T], t: T) -> bool {
        self.d(x, t) < self.r * self.r
    }

    /// Inside `D_R = E_R ∩ {|x - x̄| > R/2}`.
    pub fn in_region(&self, x: &[T], t: T) -> bool {
        self.in_ellipsoid(x, t) && norm(&sub(x, &self.xbar)) > self.r / T::lit(2.0)
    }

    /// Threshold `γ₀ = 4 / (R²(1-η)²)`.
    pub fn gamma0(&self, eta: T) -> T {
        let s = self.r * (T::one() - eta);
        T::lit(4.0) / (s * s)
    }

    /// `δ̄ = 2 + 2/((1-η)R)`, the bound on `γ(d(x+z) - d(x))` over the cone.
    pub fn delta_bar(&self, eta: T) -> T {
        T::lit(2.0) + T::lit(2.0) / ((T::one() - eta) * self.r)
    }

    /// `c = ½ e^{-δ̄}`.
    pub fn default_c(&self, eta: T) -> T {
        T::lit(0.5) * (-self.delta_bar(eta)).exp()
    }

    /// Draws `n` points of `D_R` from a seeded generator.
    pub fn sample_region(&self, n: usize, seed: u64) -> Vec<(Vec<T>, T)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.r.as_f64();
        let tr = r / self.lambda.as_f64().sqrt();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x: Vec<T> = self.xbar.iter().map(|&c| c + T::lit(rng.gen_range(-r..r))).collect();
            let t = self.t0 + T::lit(rng.gen_range(-tr..tr));
            if self.in_region(&x, t) {
                out.push((x, t));
            }
        }
        out
    }
}

impl<T: Real> Barrier<T> for HorizontalBarrier<T> {
    fn eval(&self, x: &[T], t: T) -> BarrierValue<T> {
        let q = sub(x, &self.xbar);
        let g = self.gamma;
        let e = (-g * self.d(x, t)).exp();
        let two_ge = T::lit(2.0) * g * e;
        let mut d2v = SymMatrix::outer(&q).scale(-T::lit(2.0) * g);
        for i in 0..q.len() {
            d2v.set(i, i, d2v.get(i, i) + T::one());
        }
        BarrierValue {
            v: (-g * self.r * self.r).exp() - e,
            vt: two_ge * self.lambda * (t - self.t0),
            dv: q.iter().map(|&qi| two_ge * qi).collect(),
            d2v: d2v.scale(two_ge),
        }
    }
}

impl<T: Real> Field<T> for HorizontalBarrier<T> {
    fn dim(&self) -> usize {
        self.xbar.len()
    }
    fn value(&self, x: &[T], t: T) -> T {
        (-self.gamma * self.r * self.r).exp() - (-self.gamma * self.d(x, t)).exp()
    }
    fn gradient(&self, x: &[T], t: T) -> Vec<T> {
        self.eval(x, t).dv
    }
    fn hessian(&self, x: &[T], t: T) -> SymMatrix<T> {
        self.eval(x, t).d2v
    }
}

/// `v(x,t) = 1 - e^{-h}` with `h = ½|x - x₀|² + λ(t - t₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalBarrier<T> {
    pub x0: Vec<T>,
    pub t0: T,
    pub lambda: T,
}

impl<T: Real> VerticalBarrier<T> {
    pub fn new(x0: Vec<T>, t0: T, lambda: T) -> Result<Self> {
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("vertical barrier lambda must be positive, got {lambda}")));
        }
        Ok(Self { x0, t0, lambda })
    }

    pub fn h(&self, x: &[T], t: T) -> T {
        let q = sub(x, &self.x0);
        T::lit(0.5) * dot(&q, &q) + self.lambda * (t - self.t0)
    }
}

impl<T: Real> Barrier<T> for VerticalBarrier<T> {
    fn eval(&self, x: &[T], t: T) -> BarrierValue<T> {
        let q = sub(x, &self.x0);
        let e = (-self.h(x, t)).exp();
        let mut d2v = SymMatrix::outer(&q).scale(-T::one());
        for i in 0..q.len() {
            d2v.set(i, i, d2v.get(i, i) + T::one());
        }
        BarrierValue { v: T::one() - e, vt: self.lambda * e, dv: q.iter().map(|&qi| e * qi).collect(), d2v: d2v.scale(e) }
    }
}

impl<T: Real> Field<T> for VerticalBarrier<T> {
    fn dim(&self) -> usize {
        self.x0.len()
    }
    fn value(&self, x: &[T], t: T) -> T {
        -(-self.h(x, t)).exp_m1()
    }
    fn gradient(&self, x: &[T], t: T) -> Vec<T> {
        self.eval(x, t).dv
    }
    fn hessian(&self, x: &[T], t: T) -> SymMatrix<T> {
        self.eval(x, t).d2v
    }
}

/// Observed convergence orders of centered differences against the
/// closed-form derivatives, from the errors at `step` and `step / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeOrders<T> {
    pub vt: T,
    pub dv: T,
    pub d2v: T,
    /// Errors at the coarse step, in the same order.
    pub errors: [T; 3],
}

impl<T: Real> DerivativeOrders<T> {
    pub fn min(&self) -> T {
        self.vt.min(self.dv).min(self.d2v)
    }
}

fn centered_errors<T: Real>(b: &dyn Barrier<T>, x: &[T], t: T, s: T) -> [T; 3] {
    let exact = b.eval(x, t);
    let two = T::lit(2.0);
    let vt = (b.value(x, t + s) - b.value(x, t - s)) / (two * s);
    let n = x.len();
    let mut y = x.to_vec();
    let mut at = |d: &[(usize, T)]| {
        for &(i, h) in d {
            y[i] = y[i] + h;
        }
        let v = b.value(&y, t);
        y.copy_from_slice(x);
        v
    };
    let f0 = at(&[]);
    let mut e_dv = T::zero();
    let mut e_d2 = T::zero();
    for i in 0..n {
        let g = (at(&[(i, s)]) - at(&[(i, -s)])) / (two * s);
        e_dv = e_dv.max((g - exact.dv[i]).abs());
        for j in i..n {
            let h = if i == j {
                (at(&[(i, s)]) - two * f0 + at(&[(i, -s)])) / (s * s)
            } else {
                (at(&[(i, s), (j, s)]) - at(&[(i, s), (j, -s)]) - at(&[(i, -s), (j, s)]) + at(&[(i, -s), (j, -s)])) / (T::lit(4.0) * s * s)
            };
            e_d2 = e_d2.max((h - exact.d2v.get(i, j)).abs());
        }
    }
    [(vt - exact.vt).abs(), e_dv, e_d2]
}

/// Step-halving order of second-order centered differences for `v_t`, `Dv`
/// and `D²v`. An error that is already at rounding level counts as order 2.
pub fn derivative_convergence_order<T: Real>(b: &dyn Barrier<T>, x: &[T], t: T, step: T) -> DerivativeOrders<T> {
    let coarse = centered_errors(b, x, t, step);
    let fine = centered_errors(b, x, t, step / T::lit(2.0));
    let floor = T::lit(16.0) * T::epsilon() / (step * step);
    let order = |a: T, b: T| {
        if a <= floor && b <= floor {
            T::lit(2.0)
        } else {
            (a / b).log2()
        }
    };
    DerivativeOrders { vt: order(coarse[0], fine[0]), dv: order(coarse[1], fine[1]), d2v: order(coarse[2], fine[2]), errors: coarse }
}

/// `e^y - 1 - y`, accurate near `y = 0`.
pub fn expm1_minus_linear<T: Real>(y: T) -> T {
    if y.abs() < T::lit(1.0e-2) {
        let y2 = y * y;
        y2 * (T::lit(0.5) + y * (T::lit(1.0 / 6.0) + y * (T::lit(1.0 / 24.0) + y * (T::lit(1.0 / 120.0) + y * T::lit(1.0 / 720.0)))))
    } else {
        y.exp_m1() - y
    }
}

/// Pieces of the split `I[x,t,w] = T¹ + T² + T³` of the normalized barrier,
/// with the measure integrals the bounds need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedSplit<T> {
    /// `∫_{|z|≥1} (w(x+z) - 1) μ`.
    pub t1: Estimate<T>,
    /// Compensated integral over `B \ C_{η,γ}(x - x̄)`.
    pub t2: Estimate<T>,
    /// Compensated integral over `C_{η,γ}(x - x̄)`.
    pub t3: Estimate<T>,
    /// `∫_C |(x - x̄)·z|² μ`.
    pub cone_proj: Estimate<T>,
    /// `∫_B |z|² μ`.
    pub near_second_moment: Estimate<T>,
    /// `∫_{B^c} μ`.
    pub tail_mass: Estimate<T>,
}

impl<T: Real> NormalizedSplit<T> {
    pub fn total(&self) -> Estimate<T> {
        self.t1 + self.t2 + self.t3
    }

    pub fn c_tilde(&self) -> T {
        self.near_second_moment.value + self.tail_mass.value
    }
}

fn complement_in_unit<T: Real>(iv: &[(T, T)]) -> Vec<(T, T)> {
    let mut out = Vec::new();
    let mut lo = T::zero();
    for &(a, b) in iv {
        let a = a.min(T::one());
        if a > lo {
            out.push((lo, a));
        }
        lo = lo.max(b);
    }
    if lo < T::one() {
        out.push((lo, T::one()));
    }
    out
}

fn clip_to_unit<T: Real>(iv: &[(T, T)]) -> Vec<(T, T)> {
    iv.iter().filter(|(a, _)| *a < T::one()).map(|&(a, b)| (a, b.min(T::one()))).collect()
}

/// Computes [`NormalizedSplit`] at `(x, t)`.
pub fn normalized_split<T: Real>(
    b: &HorizontalBarrier<T>,
    m: &MeasureSpec<T>,
    x: &[T],
    eta: T,
    cfg: &QuadratureConfig<T>,
) -> Result<NormalizedSplit<T>> {
    if x.len() != b.xbar.len() {
        return Err(Error::DimensionMismatch { expected: b.xbar.len(), got: x.len() });
    }
    let p = sub(x, &b.xbar);
    let g = b.gamma;
    let cone = ConeSpec::new(p.clone(), eta, g)?;
    // y = -γ(d(x+w) - d(x)) = -γ(2p·w + |w|²).
    let y_of = |w: &[T]| -g * (T::lit(2.0) * dot(&p, w) + dot(w, w));
    let one = T::one();
    let breaks = cone_angle_breaks(m, x, &cone, cfg);
    let t1 = m.integrate_region(x, |_z, w| Ok(y_of(w).exp_m1()), |_| vec![(one, T::infinity())], &[], cfg)?;
    let compensated = |_z: &[T], w: &[T]| Ok(expm1_minus_linear(y_of(w)) - g * dot(w, w));
    let t2 = m.integrate_region(x, compensated, |th| complement_in_unit(&cone_intervals(m, x, &cone, th, cfg)), &breaks, cfg)?;
    let t3 = m.integrate_region(x, compensated, |th| clip_to_unit(&cone_intervals(m, x, &cone, th, cfg)), &breaks, cfg)?;
    let cone_proj = cone_weighted_mass(m, x, &cone, ConeWeight::ProjSquared, cfg)?.mass;
    let mb = measure_bound(m, x, cfg)?;
    Ok(NormalizedSplit { t1, t2, t3, cone_proj, near_second_moment: mb.near_second_moment, tail_mass: mb.tail_mass })
}

/// One sampled point of a bound check, in the normalized scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSample<T> {
    pub x: Vec<T>,
    pub t: T,
    /// Normalized left side (the operator piece acting on `v`).
    pub lhs: T,
    /// Normalized bound.
    pub rhs: T,
    /// `rhs - lhs`.
    pub margin: T,
    /// Certified quadrature error of `margin`.
    pub tolerance: T,
}

impl<T: Real> BoundSample<T> {
    fn new(x: &[T], t: T, lhs: T, rhs: T, err: T) -> Self {
        let margin = rhs - lhs;
        let scale = lhs.abs().max(rhs.abs()).max(T::one());
        Self { x: x.to_vec(), t, lhs, rhs, margin, tolerance: err + T::lit(64.0) * T::epsilon() * scale }
    }

    pub fn passes(&self) -> bool {
        self.margin >= -self.tolerance
    }
}

/// Outcome of a sampled bound check.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<T> {
    pub name: &'static str,
    pub gamma: T,
    pub c: T,
    pub samples: Vec<BoundSample<T>>,
}

impl<T: Real> BoundReport<T> {
    pub fn passes(&self) -> bool {
        self.samples.iter().all(BoundSample::passes)
    }

    /// Smallest `margin + tolerance`; nonnegative iff the check passes.
    pub fn worst_slack(&self) -> T {
        self.samples.iter().map(|s| s.margin + s.tolerance).fold(T::infinity(), T::min)
    }

    pub fn worst_margin(&self) -> T {
        self.samples.iter().map(|s| s.margin).fold(T::infinity(), T::min)
    }
}

fn check_preconditions<T: Real>(b: &HorizontalBarrier<T>, eta: T, c: T, samples: &[(Vec<T>, T)]) -> Result<()> {
    if !(eta >= T::zero() && eta < T::one()) {
        return Err(Error::InvalidParameter(format!("eta must lie in [0,1), got {eta}")));
    }
    let g0 = b.gamma0(eta);
    if b.gamma < g0 * (T::one() - T::lit(1.0e-12)) {
        return Err(Error::Precondition(format!("gamma = {} is below the threshold gamma0 = {}", b.gamma, g0)));
    }
    let cmax = b.default_c(eta);
    if !(c > T::zero() && c <= cmax * (T::one() + T::lit(1.0e-12))) {
        return Err(Error::Precondition(format!("c = {c} must lie in (0, {cmax}]")));
    }
    for (x, t) in samples {
        if !b.in_region(x, *t) {
            return Err(Error::SampleOutsideRegion(format!("({x:?}, {t}) is not in D_R")));
        }
    }
    Ok(())
}

/// Checks `I[x,t,v] ≤ 2γe^{-γd}{C̃_μ - cγ∫_C |(x-x̄)·z|² μ}` at each sample.
pub fn verify_nl_estimate<T: Real>(
    b: &HorizontalBarrier<T>,
    m: &MeasureSpec<T>,
    eta: T,
    c: T,
    samples: &[(Vec<T>, T)],
    cfg: &QuadratureConfig<T>,
) -> Result<BoundReport<T>> {
    check_preconditions(b, eta, c, samples)?;
    let g = b.gamma;
    let two = T::lit(2.0);
    let out = samples
        .par_iter()
        .map(|(x, t)| {
            let s = normalized_split(b, m, x, eta, cfg)?;
            let total = s.total();
            let lhs = -total.value;
            let rhs = two * g * (s.c_tilde() - c * g * s.cone_proj.value);
            let err = total.error + two * g * (s.near_second_moment.error + s.tail_mass.error + c * g * s.cone_proj.error);
            Ok(BoundSample::new(x, *t, lhs, rhs, err))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport { name: "nl_estimate", gamma: g, c, samples: out })
}

/// Checks the three component bounds
/// `T¹ ≤ e^{-γd}∫_{B^c} μ`, `T² ≤ γe^{-γd}∫_B|z|²μ` and
/// `T³ ≤ e^{-γd}(γ∫_B|z|²μ - 2cγ²∫_C|(x-x̄)·z|²μ)` with `c = ½e^{-δ̄}`.
pub fn verify_component_lemmas<T: Real>(
    b: &HorizontalBarrier<T>,
    m: &MeasureSpec<T>,
    eta: T,
    samples: &[(Vec<T>, T)],
    cfg: &QuadratureConfig<T>,
) -> Result<[BoundReport<T>; 3]> {
    let c = b.default_c(eta);
    check_preconditions(b, eta, c, samples)?;
    let g = b.gamma;
    let two = T::lit(2.0);
    let rows = samples
        .par_iter()
        .map(|(x, t)| {
            let s = normalized_split(b, m, x, eta, cfg)?;
            let m2 = s.near_second_moment;
            let r1 = BoundSample::new(x, *t, -s.t1.value, s.tail_mass.value, s.t1.error + s.tail_mass.error);
            let r2 = BoundSample::new(x, *t, -s.t2.value, g * m2.value, s.t2.error + g * m2.error);
            let r3 = BoundSample::new(
                x,
                *t,
                -s.t3.value,
                g * m2.value - two * c * g * g * s.cone_proj.value,
                s.t3.error + g * m2.error + two * c * g * g * s.cone_proj.error,
            );
            Ok([r1, r2, r3])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut reports = [("lemma_t1", Vec::new()), ("lemma_t2", Vec::new()), ("lemma_t3", Vec::new())];
    for row in rows {
        for (k, r) in row.into_iter().enumerate() {
            reports[k].1.push(r);
        }
    }
    Ok(reports.map(|(name, samples)| BoundReport { name, gamma: g, c, samples }))
}

/// Pointwise check behind the third lemma: for `z` in the cone,
/// `|2(x-x̄)·z + |z|²| ≥ |(x-x̄)·z|` and `γ(2(x-x̄)·z + |z|²) ≤ δ̄`.
/// Returns the smallest slack of the two inequalities over a dense sample of
/// cone points.
pub fn cone_pointwise_slack<T: Real>(b: &HorizontalBarrier<T>, x: &[T], eta: T, samples: usize) -> Result<(T, T)> {
    let p = sub(x, &b.xbar);
    let cone = ConeSpec::new(p.clone(), eta, b.gamma)?;
    let pn = norm(&p);
    let dbar = b.delta_bar(eta);
    let mut worst = (T::infinity(), T::infinity());
    let mut probe = |z: &[T]| {
        if !cone.contains(z) {
            return;
        }
        let pz = dot(&p, z);
        let q = T::lit(2.0) * pz + dot(z, z);
        worst.0 = worst.0.min(q.abs() - pz.abs());
        worst.1 = worst.1.min(dbar - b.gamma * q);
    };
    let rmax = T::one() / (b.gamma * (T::one() - eta) * pn);
    let n = samples.max(2);
    match x.len() {
        1 => {
            for k in 1..=n {
                let r = rmax * T::from_usize_lossy(k) / T::from_usize_lossy(n);
                probe(&[r]);
                probe(&[-r]);
            }
        }
        2 => {
            let a = angle_of(&p);
            let half = (T::one() - eta).acos();
            let na = (n as f64).sqrt().ceil() as usize;
            for i in 0..=na {
                for side in [T::zero(), T::PI()] {
                    let phi = a + side - half + T::lit(2.0) * half * T::from_usize_lossy(i) / T::from_usize_lossy(na);
                    for k in 1..=na {
                        let r = rmax * T::from_usize_lossy(k) / T::from_usize_lossy(na);
                        probe(&[r * phi.cos(), r * phi.sin()]);
                    }
                }
            }
        }
        d => return Err(Error::UnsupportedDimension(d)),
    }
    Ok(worst)
}

/// Worst margin of `e^y - 1 - y - c y²` on `n` evenly spaced points of
/// `[-δ̄, y_max]`, with `c = ½e^{-δ̄}`.
pub fn verify_exp_scalar<T: Real>(delta_bar: T, y_max: T, n: usize) -> Result<(T, T)> {
    if !(delta_bar >= T::zero()) || !(y_max > -delta_bar) || n < 2 {
        return Err(Error::InvalidParameter("need delta_bar >= 0, y_max > -delta_bar and at least two points".into()));
    }
    let c = T::lit(0.5) * (-delta_bar).exp();
    let mut worst = (T::infinity(), T::zero());
    for k in 0..n {
        let y = -delta_bar + (y_max + delta_bar) * T::from_usize_lossy(k) / T::from_usize_lossy(n - 1);
        let margin = expm1_minus_linear(y) - c * y * y;
        if margin < worst.0 {
            worst = (margin, y);
        }
    }
    Ok(worst)
}

/// One sample of the functional exponential inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpSample<T> {
    pub x: Vec<T>,
    /// `I_D[x,t,e^φ] / e^{φ(x)}`.
    pub lhs: Estimate<T>,
    /// `I_D[x,t,φ] + c∫_D (φ(x+z) - φ(x))² μ`.
    pub rhs: Estimate<T>,
}

impl<T: Real> ExpSample<T> {
    pub fn margin(&self) -> T {
        self.lhs.value - self.rhs.value
    }

    pub fn tolerance(&self) -> T {
        let scale = self.lhs.value.abs().max(self.rhs.value.abs()).max(T::one());
        self.lhs.error + self.rhs.error + T::lit(64.0) * T::epsilon() * scale
    }

    pub fn passes(&self) -> bool {
        self.margin() >= -self.tolerance()
    }
}

/// Checks `I[x,t,e^φ] ≥ e^φ (I[x,t,φ] + c∫_D (φ(x+z)-φ(x))² μ)` with all
/// integrals over `D = {φ(x+z) - φ(x) ≥ -δ̄}` and `c = ½e^{-δ̄}`. Both sides
/// are divided by `e^{φ(x)}` and computed separately. For push-forward
/// measures `z` is replaced by `j(x,z)`.
pub fn verify_exp_inequality<T: Real>(
    phi: &dyn Field<T>,
    m: &MeasureSpec<T>,
    t: T,
    delta_bar: T,
    xs: &[Vec<T>],
    cfg: &QuadratureConfig<T>,
) -> Result<Vec<ExpSample<T>>> {
    if !(delta_bar >= T::zero()) {
        return Err(Error::InvalidParameter("delta_bar must be nonnegative".into()));
    }
    let c = T::lit(0.5) * (-delta_bar).exp();
    xs.par_iter()
        .map(|x| {
            let fx = phi.value(x, t);
            let du = phi.gradient(x, t);
            let y_buf = std::cell::RefCell::new(vec![T::zero(); x.len()]);
            let delta = |w: &[T]| {
                let mut y = y_buf.borrow_mut();
                for (yi, (&xi, &wi)) in y.iter_mut().zip(x.iter().zip(w)) {
                    *yi = xi + wi;
                }
                phi.value(&y, t) - fx
            };
            // Δ = Dφ·w + rem on the unit ball, where the Taylor remainder keeps
            // the O(|z|²) cancellation exact.
            let parts = |z: &[T], w: &[T]| {
                if dot(z, z) <= T::one() {
                    let rem = taylor_remainder(phi, x, w, t);
                    (dot(&du, w) + rem, Some(rem))
                } else {
                    (delta(w), None)
                }
            };
            let keep = |w: &[T]| delta(w) >= -delta_bar;
            let breaks: Vec<T> = if x.len() == 2 && norm(&du) > T::zero() {
                let a = angle_of(&du);
                vec![a + T::FRAC_PI_2(), a - T::FRAC_PI_2()]
            } else {
                Vec::new()
            };
            let lhs = eval_restricted(
                m,
                x,
                |z, w| {
                    Ok(match parts(z, w) {
                        (d, Some(rem)) => expm1_minus_linear(d) + rem,
                        (d, None) => d.exp_m1(),
                    })
                },
                keep,
                &breaks,
                cfg,
            )?;
            let rhs = eval_restricted(
                m,
                x,
                |z, w| {
                    Ok(match parts(z, w) {
                        (d, Some(rem)) => rem + c * d * d,
                        (d, None) => d + c * d * d,
                    })
                },
                keep,
                &breaks,
                cfg,
            )?;
            Ok(ExpSample { x: x.clone(), lhs, rhs })
        })
        .collect()
}

/// One sample of the strict-supersolution check.
#[derive(Debug, Clone, PartialEq)]
pub struct SupersolutionSample<T> {
    pub x: Vec<T>,
    pub t: T,
    /// `ε v_t + F(x, t, εDv, εD²v, εI[v])`.
    pub value: T,
    /// `value` divided by `ε` times the barrier's derivative scale
    /// (`2γe^{-γd}` for the horizontal barrier, `e^{-h}` for the vertical one).
    pub normalized: T,
    /// Quadrature error of `I[v]`.
    pub nonlocal_error: T,
}

/// Evaluates the scaled equation on a barrier at the given samples.
pub fn strict_supersolution_margin<T: Real>(
    f: &Nonlinearity<T>,
    barrier: &dyn Barrier<T>,
    scale_at: &(dyn Fn(&[T], T) -> T + Sync),
    m: &MeasureSpec<T>,
    eps: T,
    samples: &[(Vec<T>, T)],
    cfg: &NonlocalConfig<T>,
) -> Result<Vec<SupersolutionSample<T>>> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidParameter("scale eps must be positive".into()));
    }
    f.validate(barrier.dim())?;
    samples
        .par_iter()
        .map(|(x, t)| {
            let bv = barrier.eval(x, *t);
            let l = nonlocal_argument(f, barrier, x, *t, m, cfg)?;
            let p: Vec<T> = bv.dv.iter().map(|&v| eps * v).collect();
            let value = eps * bv.vt + f.eval(x, *t, &p, &bv.d2v.scale(eps), eps * l.value);
            let s = scale_at(x, *t);
            Ok(SupersolutionSample { x: x.clone(), t: *t, value, normalized: value / (eps * s), nonlocal_error: l.error })
        })
        .collect()
}

/// `2γe^{-γd(x,t)}`, the scale of the horizontal barrier's derivatives.
pub fn horizontal_scale<T: Real>(b: &HorizontalBarrier<T>) -> impl Fn(&[T], T) -> T + Sync + '_ {
    move |x, t| T::lit(2.0) * b.gamma * (-b.gamma * b.d(x, t)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hb(gamma: f64) -> HorizontalBarrier<f64> {
        HorizontalBarrier::new(vec![0.0], 0.0, 1.0, 1.0, gamma).unwrap()
    }

    #[test]
    fn horizontal_examples() {
        let b = hb(1.0);
        let at_center = b.eval(&[0.0], 0.0);
        assert!((at_center.v - ((-1.0f64).exp() - 1.0)).abs() < 1e-15);
        assert_eq!(at_center.dv, vec![0.0]);
        assert_eq!(at_center.vt, 0.0);
        assert!(b.value(&[1.0], 0.0).abs() < 1e-15);
        let v = b.value(&[0.8], 0.0);
        assert!((v - ((-1.0f64).exp() - (-0.64f64).exp())).abs() < 1e-15);
        assert!((v + 0.1594).abs() < 1e-4);
    }

    #[test]
    fn vertical_examples() {
        let b = VerticalBarrier::new(vec![0.3, -0.2], 0.5, 2.0).unwrap();
        let e = b.eval(&[0.3, -0.2], 0.5);
        assert_eq!(e.v, 0.0);
        assert_eq!(e.vt, 2.0);
        assert_eq!(e.dv, vec![0.0, 0.0]);
        assert_eq!(e.d2v, SymMatrix::identity(2));
    }

    #[test]
    fn thresholds() {
        let b = hb(16.0);
        assert_eq!(b.gamma0(0.5), 16.0);
        assert_eq!(b.delta_bar(0.5), 6.0);
        assert!((b.default_c(0.5) - 0.5 * (-6.0f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn orders_are_two() {
        let b = HorizontalBarrier::new(vec![0.1, -0.3], 0.2, 1.0, 1.5, 3.0).unwrap();
        let o = derivative_convergence_order(&b, &[0.5, 0.2], 0.6, 1e-2);
        assert!(o.min() >= 1.9, "{o:?}");
        let v = VerticalBarrier::new(vec![0.0, 0.0], 0.0, 1.0).unwrap();
        let o = derivative_convergence_order(&v, &[0.4, -0.7], -0.3, 1e-2);
        assert!(o.min() >= 1.9, "{o:?}");
    }

    #[test]
    fn below_threshold_is_rejected() {
        let b = hb(10.0);
        let m = MeasureSpec::radial_stable(1.5, 1).unwrap();
        let s = [(vec![0.7], 0.0)];
        let r = verify_nl_estimate(&b, &m, 0.5, b.default_c(0.5), &s, &QuadratureConfig::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
        let b = hb(16.0);
        let r = verify_nl_estimate(&b, &m, 0.5, b.default_c(0.5), &[(vec![0.2], 0.0)], &QuadratureConfig::default());
        assert!(matches!(r, Err(Error::SampleOutsideRegion(_))));
    }

    #[test]
    fn split_matches_direct_operator() {
        let b = hb(32.0);
        let m = MeasureSpec::radial_stable(1.5, 1).unwrap();
        let x = [0.7];
        let s = normalized_split(&b, &m, &x, 0.5, &QuadratureConfig::default()).unwrap();
        let direct = crate::operators::eval_compensated(&b, &x, 0.0, &m, &NonlocalConfig::default()).unwrap().total();
        let scale = (-32.0f64 * 0.49).exp();
        let lhs = -scale * s.total().value;
        assert!((lhs - direct.value).abs() <= 1e-7 * direct.value.abs() + direct.error + scale * s.total().error, "{lhs} {direct:?}");
    }

    #[test]
    fn nl_estimate_one_dimensional() {
        let b = hb(32.0);
        let m = MeasureSpec::radial_stable(1.5, 1).unwrap();
        let samples = b.sample_region(20, 7);
        let r = verify_nl_estimate(&b, &m, 0.5, b.default_c(0.5), &samples, &QuadratureConfig::default()).unwrap();
        assert!(r.passes(), "{}", r.worst_slack());
        for rep in verify_component_lemmas(&b, &m, 0.5, &samples, &QuadratureConfig::default()).unwrap() {
            assert!(rep.passes(), "{} {}", rep.name, rep.worst_slack());
        }
    }

    #[test]
    fn cone_pointwise_at_threshold() {
        let b = hb(16.0);
        for x in [0.51, 0.75, 0.99] {
            let (a, c) = cone_pointwise_slack(&b, &[x], 0.5, 400).unwrap();
            assert!(a >= -1e-12 && c >= 0.0);
        }
        let b2 = HorizontalBarrier::new(vec![0.0, 0.0], 0.0, 1.0, 1.0, 16.0).unwrap();
        let (a, c) = cone_pointwise_slack(&b2, &[0.4, 0.45], 0.5, 400).unwrap();
        assert!(a >= -1e-12 && c >= 0.0);
    }

    #[test]
    fn exp_scalar() {
        for d in [0.0, 1.0, 3.0] {
            let (w, _) = verify_exp_scalar(d, 10.0, 10_000).unwrap();
            assert!(w >= -1e-12);
        }
        assert_eq!(expm1_minus_linear(0.0), 0.0);
        assert!((expm1_minus_linear(1.0f64) - 0.5 - (1f64.exp() - 2.5)).abs() < 1e-15);
    }

    #[test]
    fn exp_functional_quadratic() {
        let phi = crate::field::Analytic::quadratic(vec![0.0], -1.0);
        let m = MeasureSpec::radial_stable(1.5, 1).unwrap();
        let xs: Vec<Vec<f64>> = (0..5).map(|k| vec![-1.0 + 0.5 * k as f64]).collect();
        for d in [0.0, 1.0, 3.0] {
            for s in verify_exp_inequality(&phi, &m, 0.0, d, &xs, &QuadratureConfig::default()).unwrap() {
                assert!(s.passes(), "{s:?}");
            }
        }
    }

    #[test]
    fn pure_nonlocal_margin_grows() {
        let m = MeasureSpec::radial_stable(1.5, 1).unwrap();
        let f = Nonlinearity::PureNonlocal;
        let mut prev = f64::NEG_INFINITY;
        for g in [16.0, 64.0, 256.0] {
            let b = hb(g);
            let s = [(vec![0.75], 0.0)];
            let r = strict_supersolution_margin(&f, &b, &horizontal_scale(&b), &m, 1.0, &s, &NonlocalConfig::default()).unwrap();
            assert!(r[0].normalized > prev);
            prev = r[0].normalized;
        }
        assert!(prev > 0.0);
    }
}
