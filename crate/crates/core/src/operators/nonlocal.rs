//! Quadrature evaluation of the compensated operator
//! `I[x,t,u] = ∫ (u(x+z) - u(x) - Du(x)·z 1_B(z)) μ(dz)`, its Lévy–Itô
//! variant, and the uncompensated zero-order operator.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::measures::{unit_circle, Angular, MeasureKind, MeasureSpec};
use crate::quadrature::{adaptive, indicator_intervals, radial, Estimate, QuadratureConfig};
use crate::scalar::{dot, Real};

/// Split radius and quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlocalConfig<T> {
    /// `δ ∈ (0, 1)` separating `I¹_δ` (|z| ≤ δ) from `I²_δ`.
    pub delta: T,
    pub quad: QuadratureConfig<T>,
}

impl<T: Real> Default for NonlocalConfig<T> {
    fn default() -> Self {
        Self { delta: T::lit(0.1), quad: QuadratureConfig::default() }
    }
}

impl<T: Real> NonlocalConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero() && self.delta < T::one()) {
            return Err(Error::InvalidParameter(format!("split radius delta must lie in (0,1), got {}", self.delta)));
        }
        self.quad.validate()
    }
}

/// `(I¹_δ, I²_δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitValue<T> {
    pub near: Estimate<T>,
    pub far: Estimate<T>,
}

impl<T: Real> SplitValue<T> {
    pub fn total(&self) -> Estimate<T> {
        self.near + self.far
    }
}

// 8-point Gauss–Legendre rule on [0, 1].
const GL8_X: [f64; 8] = [
    0.019_855_071_751_231_88,
    0.101_666_761_293_186_6,
    0.237_233_795_041_835_5,
    0.408_282_678_752_175_1,
    0.591_717_321_247_825,
    0.762_766_204_958_164_5,
    0.898_333_238_706_813_4,
    0.980_144_928_248_768_1,
];
const GL8_W: [f64; 8] = [
    0.050_614_268_145_188_13,
    0.111_190_517_226_687_2,
    0.156_853_322_938_943_6,
    0.181_341_891_689_180_9,
    0.181_341_891_689_180_9,
    0.156_853_322_938_943_6,
    0.111_190_517_226_687_2,
    0.050_614_268_145_188_13,
];

/// `u(x+w) - u(x) - Du(x)·w = ∫₀¹ (1-s) wᵀ D²u(x+sw) w ds`.
pub(crate) fn taylor_remainder<T: Real>(u: &dyn Field<T>, x: &[T], w: &[T], t: T) -> T {
    let mut y = x.to_vec();
    let mut acc = T::zero();
    for k in 0..8 {
        let s = T::lit(GL8_X[k]);
        for (yi, (&xi, &wi)) in y.iter_mut().zip(x.iter().zip(w)) {
            *yi = xi + s * wi;
        }
        acc = acc + T::lit(GL8_W[k]) * (T::one() - s) * u.hessian(&y, t).quad(w);
    }
    acc
}

fn check_point<T: Real>(u: &dyn Field<T>, x: &[T], m: &MeasureSpec<T>) -> Result<()> {
    if x.len() != u.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), got: x.len() });
    }
    let target = match m.jump() {
        Some(j) => j.apply(x, &vec![T::zero(); m.dim()]).len(),
        None => m.dim(),
    };
    if target != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: target });
    }
    Ok(())
}

/// Evaluates `(I¹_δ, I²_δ)` at `(x, t)`. For push-forward measures this is
/// the Lévy–Itô operator, with the compensation indicator on the base jump.
pub fn eval_compensated<T: Real>(u: &dyn Field<T>, x: &[T], t: T, m: &MeasureSpec<T>, cfg: &NonlocalConfig<T>) -> Result<SplitValue<T>> {
    cfg.validate()?;
    check_point(u, x, m)?;
    let ux = u.value(x, t);
    let du = u.gradient(x, t);
    let delta = cfg.delta;
    let one = T::one();
    let near = m.integrate_region(x, |_z, w| Ok(taylor_remainder(u, x, w, t)), |_| vec![(T::zero(), delta)], &[], &cfg.quad)?;
    let mut y = vec![T::zero(); x.len()];
    let y = std::cell::RefCell::new(&mut y);
    let far = m.integrate_region(
        x,
        |z, w| {
            let mut y = y.borrow_mut();
            for (yi, (&xi, &wi)) in y.iter_mut().zip(x.iter().zip(w)) {
                *yi = xi + wi;
            }
            let d = u.value(&y, t) - ux;
            Ok(if dot(z, z) <= one { d - dot(&du, w) } else { d })
        },
        |_| vec![(delta, one), (one, T::infinity())],
        &[],
        &cfg.quad,
    )?;
    Ok(SplitValue { near, far })
}

/// Lévy–Itô operator `J[x,t,u]` with jump map `jump` over `base`.
pub fn eval_levy_ito<T: Real>(
    u: &dyn Field<T>,
    x: &[T],
    t: T,
    base: &MeasureSpec<T>,
    jump: &crate::measures::JumpMap<T>,
    cfg: &NonlocalConfig<T>,
) -> Result<SplitValue<T>> {
    let pf = MeasureSpec::push_forward(base.clone(), jump.clone())?;
    eval_compensated(u, x, t, &pf, cfg)
}

/// Zero-order operator `M[u](x,t) = ∫ (u(x+z) - u(x)) μ(dz)`.
///
/// Each direction is paired with its antipode so that the first-order terms
/// of a Lipschitz `u` cancel for even angular densities. An odd part of the
/// density against a nonzero gradient leaves a `1/|z|` singularity, which is
/// reported as a near-origin divergence.
pub fn eval_zero_order<T: Real>(u: &dyn Field<T>, x: &[T], t: T, m: &MeasureSpec<T>, cfg: &NonlocalConfig<T>) -> Result<T> {
    Ok(eval_zero_order_estimate(u, x, t, m, cfg)?.value)
}

/// [`eval_zero_order`] with its error estimate.
pub fn eval_zero_order_estimate<T: Real>(
    u: &dyn Field<T>,
    x: &[T],
    t: T,
    m: &MeasureSpec<T>,
    cfg: &NonlocalConfig<T>,
) -> Result<Estimate<T>> {
    cfg.validate()?;
    if !matches!(m.kind(), MeasureKind::ZeroOrderDirectional { .. }) {
        return Err(Error::UnsupportedKind(m.kind_name()));
    }
    check_point(u, x, m)?;
    let ux = u.value(x, t);
    let du = u.gradient(x, t);
    let delta = cfg.delta;
    let beta = T::one();
    let n = x.len();

    let pair = |theta: &[T], gp: T, gm: T| -> Result<Estimate<T>> {
        let neg: Vec<T> = theta.iter().map(|&v| -v).collect();
        let slope = (gp - gm) * dot(&du, theta);
        let mut w = vec![T::zero(); n];
        let mut y = vec![T::zero(); n];
        let near = radial(
            |r| {
                let mut acc = slope * r;
                for (dir, g) in [(theta, gp), (&neg[..], gm)] {
                    if g != T::zero() {
                        for k in 0..n {
                            w[k] = r * dir[k];
                        }
                        acc = acc + g * taylor_remainder(u, x, &w, t);
                    }
                }
                Ok(acc)
            },
            beta,
            T::zero(),
            delta,
            &[],
            &cfg.quad,
        )?;
        let far = radial(
            |r| {
                let mut acc = T::zero();
                for (dir, g) in [(theta, gp), (&neg[..], gm)] {
                    if g != T::zero() {
                        for k in 0..n {
                            y[k] = x[k] + r * dir[k];
                        }
                        acc = acc + g * (u.value(&y, t) - ux);
                    }
                }
                Ok(acc)
            },
            beta,
            delta,
            T::infinity(),
            &[],
            &cfg.quad,
        )?;
        Ok(near + far)
    };

    match m.angular()? {
        Angular::Atoms(atoms) => {
            let weight = |d: T| atoms.iter().find(|(a, _)| a[0] == d).map(|(_, w)| *w).unwrap_or(T::zero());
            pair(&[T::one()], weight(T::one()), weight(-T::one()))
        }
        Angular::Circle { density, .. } => {
            let panels = cfg.quad.angular_panels.max(2) / 2;
            let pi = T::PI();
            let grid: Vec<T> = (0..=panels).map(|k| pi * T::from_usize_lossy(k) / T::from_usize_lossy(panels)).collect();
            adaptive(
                |phi| {
                    let th = unit_circle(phi);
                    let neg = [-th[0], -th[1]];
                    pair(&th, density(&th), density(&neg))
                },
                &grid,
                &cfg.quad,
            )
        }
    }
}

/// `∫_D g(z, w) μ(dz)` over `D = {z : keep(j(x,z))}`, splitting every ray at
/// `|z| = 1` so integrands carrying `1_B(z)` stay piecewise smooth.
pub fn eval_restricted<T, G, K>(
    m: &MeasureSpec<T>,
    x: &[T],
    g: G,
    keep: K,
    angle_breaks: &[T],
    cfg: &QuadratureConfig<T>,
) -> Result<Estimate<T>>
where
    T: Real,
    G: Fn(&[T], &[T]) -> Result<T>,
    K: Fn(&[T]) -> bool,
{
    let rmax = cfg.tail_radius;
    let samples = cfg.breakpoint_samples;
    let jump = m.jump();
    let region = |theta: &[T]| {
        let mut z = vec![T::zero(); theta.len()];
        let iv = indicator_intervals(
            |r| {
                for (zi, &ti) in z.iter_mut().zip(theta) {
                    *zi = r * ti;
                }
                match jump {
                    Some(j) => keep(&j.apply(x, &z)),
                    None => keep(&z),
                }
            },
            T::zero(),
            rmax,
            samples,
        );
        let mut out = Vec::with_capacity(iv.len() + 1);
        for (a, b) in iv {
            let b = if b >= rmax { T::infinity() } else { b };
            if a < T::one() && b > T::one() {
                out.push((a, T::one()));
                out.push((T::one(), b));
            } else {
                out.push((a, b));
            }
        }
        out
    };
    m.integrate_region(x, g, region, angle_breaks, cfg)
}
