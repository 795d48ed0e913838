//! Empirical checks of the propagation results: horizontal and vertical
//! propagation on simulated trajectories, and probes of the nondegeneracy
//! and scaling conditions on the nonlinearity catalogue.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::GridField;
use crate::linalg::SymMatrix;
use crate::measures::{cone_angle_breaks, cone_intervals, least_squares, measure_bound, ConeSpec, MeasureSpec};
use crate::operators::Nonlinearity;
use crate::quadrature::QuadratureConfig;
use crate::scalar::{dot, norm, Real};
use crate::scheme::Trajectory;

/// Propagation flags at one stored time level.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationLevel<T> {
    pub step: usize,
    pub t: T,
    pub max: T,
    /// Cells within `tol` of `max`; never empty.
    pub attaining: Vec<usize>,
    /// Every cell of the component is within `tol` of `max`.
    pub horizontal: bool,
    /// Every earlier level has a cell within `tol` of this level's `max`.
    pub vertical: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationReport<T> {
    pub tol: T,
    pub levels: Vec<PropagationLevel<T>>,
}

impl<T: Real> PropagationReport<T> {
    pub fn all_horizontal(&self) -> bool {
        self.levels.iter().all(|l| l.horizontal)
    }

    pub fn all_vertical(&self) -> bool {
        self.levels.iter().all(|l| l.vertical)
    }
}

/// Default tolerance `1e-8 · (max - min)` of the initial data.
pub fn default_tolerance<T: Real>(initial: &GridField<T>) -> T {
    let (lo, hi) = initial.values().iter().fold((T::infinity(), T::neg_infinity()), |(a, b), &v| (a.min(v), b.max(v)));
    T::lit(1.0e-8) * (hi - lo)
}

/// Horizontal and vertical propagation flags over the stored snapshots of
/// `traj`. `component` restricts the horizontal test to a set of cells (the
/// reachable set of the maximum point, say); `None` uses the whole grid.
pub fn propagation_test<T: Real>(traj: &Trajectory<T>, tol: T, component: Option<&[bool]>) -> Result<PropagationReport<T>> {
    if traj.snapshots.is_empty() {
        return Err(Error::InvalidParameter("trajectory has no stored states".into()));
    }
    if !(tol >= T::zero()) {
        return Err(Error::InvalidParameter(format!("tolerance must be nonnegative, got {tol}")));
    }
    if let Some(c) = component {
        if c.len() != traj.snapshots[0].1.values().len() {
            return Err(Error::DimensionMismatch { expected: traj.snapshots[0].1.values().len(), got: c.len() });
        }
    }
    let mut levels: Vec<PropagationLevel<T>> = Vec::with_capacity(traj.snapshots.len());
    for (k, (step, u)) in traj.snapshots.iter().enumerate() {
        let vals = u.values();
        let max = vals.iter().copied().fold(T::neg_infinity(), T::max);
        let attaining: Vec<usize> = (0..vals.len()).filter(|&i| max - vals[i] <= tol).collect();
        let horizontal = (0..vals.len()).filter(|&i| component.is_none_or(|c| c[i])).all(|i| max - vals[i] <= tol);
        let vertical = traj.snapshots[..k].iter().all(|(_, e)| e.values().iter().any(|&v| (v - max).abs() <= tol));
        levels.push(PropagationLevel { step: *step, t: u.time(), max, attaining, horizontal, vertical });
    }
    Ok(PropagationReport { tol, levels })
}

/// Settings of [`nondegeneracy_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig<T> {
    pub xbar: Vec<T>,
    pub t0: T,
    pub r: T,
    pub eta: T,
    pub c: T,
    pub gammas: Vec<T>,
    pub samples: usize,
    pub seed: u64,
    pub quad: QuadratureConfig<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Diverges,
    Bounded,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Diverges => "diverges",
            Verdict::Bounded => "bounded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport<T> {
    pub gammas: Vec<T>,
    /// `min` over samples of `F(x,t,p,I-γp⊗p, C̃ - cγK)`.
    pub worst: Vec<T>,
    /// `min` over samples of the growth `F(γ) - F(x,t,p,I,C̃)`.
    pub growth: Vec<T>,
    /// Log-log slope of `growth` against `γ` over its positive entries.
    pub exponent: Option<T>,
    pub verdict: Verdict,
    /// Lowering `l` never lowered `F` at any sample.
    pub monotone_in_l: bool,
    pub c_tilde: T,
}

/// Sample of `(x, t, p)` from the box of radius `R` around `(x̄, t₀)` with
/// `R/2 ≤ |p| ≤ R`.
fn sample_points<T: Real>(cfg: &ProbeConfig<T>) -> Vec<(Vec<T>, T, Vec<T>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.xbar.len();
    let r = cfg.r.as_f64();
    (0..cfg.samples)
        .map(|_| {
            let x: Vec<T> = cfg.xbar.iter().map(|&c| c + T::lit(rng.gen_range(-r..=r))).collect();
            let t = cfg.t0 + T::lit(rng.gen_range(-r..=r));
            let dir: Vec<f64> = loop {
                let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
                let s = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                if s > 1e-3 && s <= 1.0 {
                    break d.iter().map(|v| v / s).collect();
                }
            };
            let len = rng.gen_range(0.5 * r..=r);
            (x, t, dir.iter().map(|&v| T::lit(v * len)).collect())
        })
        .collect()
}

/// `∫_{C_{η,γ}(p)} |p·w|² μ`; zero when `p` vanishes.
fn cone_projection<T: Real>(m: &MeasureSpec<T>, x: &[T], p: &[T], eta: T, gamma: T, quad: &QuadratureConfig<T>) -> Result<T> {
    if norm(p) == T::zero() {
        return Ok(T::zero());
    }
    let cone = ConeSpec::new(p.to_vec(), eta, gamma)?;
    let est = m.integrate_region(
        x,
        |_z, w| {
            let pw = dot(p, w);
            Ok(pw * pw)
        },
        |theta| cone_intervals(m, x, &cone, theta, quad),
        &cone_angle_breaks(m, x, &cone, quad),
        quad,
    )?;
    Ok(est.value)
}

/// Evaluates the nondegeneracy expression
/// `F(x, t, p, I - γ p⊗p, C̃ - cγ ∫_{C_{η,γ}(p)} |p·w|² μ)` over `gammas` at
/// sampled `(x, t, p)`. For the mixed forms the measure acts on the leading
/// `d` coordinates and the cone uses the leading part of `p`.
pub fn nondegeneracy_probe<T: Real>(f: &Nonlinearity<T>, m: &MeasureSpec<T>, cfg: &ProbeConfig<T>) -> Result<ProbeReport<T>> {
    let n = cfg.xbar.len();
    f.validate(n)?;
    let d = f.nonlocal_block().unwrap_or(n);
    if m.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
    }
    if cfg.gammas.len() < 2 || cfg.samples == 0 {
        return Err(Error::InvalidParameter("probe needs at least two gammas and one sample".into()));
    }
    let gmin = cfg.gammas.iter().copied().fold(T::infinity(), T::min);
    let gmax = cfg.gammas.iter().copied().fold(T::neg_infinity(), T::max);
    if !(gmin > T::zero() && gmax / gmin >= T::lit(100.0) * (T::one() - T::lit(1.0e-9))) {
        return Err(Error::InvalidParameter("gamma grid must be positive and span at least two decades".into()));
    }
    if !(cfg.r > T::zero() && cfg.eta >= T::zero() && cfg.eta < T::one() && cfg.c > T::zero()) {
        return Err(Error::InvalidParameter("probe needs R > 0, eta in [0,1) and c > 0".into()));
    }
    let points = sample_points(cfg);
    let id = SymMatrix::identity(n);
    // Per sample: (values over gammas, growth over gammas, monotone flag).
    let rows: Vec<(Vec<T>, Vec<T>, bool)> = points
        .par_iter()
        .map(|(x, t, p)| {
            let xm = &x[..d];
            let c_tilde = measure_bound(m, xm, &cfg.quad)?.c_tilde;
            let base = f.eval(x, *t, p, &id, c_tilde);
            let mut vals = Vec::with_capacity(cfg.gammas.len());
            let mut growth = Vec::with_capacity(cfg.gammas.len());
            let mut monotone = true;
            for &g in &cfg.gammas {
                let k = cone_projection(m, xm, &p[..d], cfg.eta, g, &cfg.quad)?;
                let l = c_tilde - cfg.c * g * k;
                let xmat = id.sub(&SymMatrix::outer(p).scale(g));
                let v = f.eval(x, *t, p, &xmat, l);
                let lowered = f.eval(x, *t, p, &xmat, l - T::one());
                monotone &= lowered >= v - T::lit(1.0e-12) * v.abs().max(T::one());
                vals.push(v);
                growth.push(v - base);
            }
            Ok((vals, growth, monotone))
        })
        .collect::<Result<_>>()?;
    let ng = cfg.gammas.len();
    let worst: Vec<T> = (0..ng).map(|j| rows.iter().map(|r| r.0[j]).fold(T::infinity(), T::min)).collect();
    let growth: Vec<T> = (0..ng).map(|j| rows.iter().map(|r| r.1[j]).fold(T::infinity(), T::min)).collect();
    let monotone_in_l = rows.iter().all(|r| r.2);

    let ten = T::lit(10.0);
    let decade_min =
        |lo: T, hi: T| cfg.gammas.iter().zip(&worst).filter(|(g, _)| **g >= lo && **g <= hi).map(|(_, &v)| v).fold(T::infinity(), T::min);
    let first = decade_min(gmin, gmin * ten);
    let last = decade_min(gmax / ten, gmax);
    let verdict = if last > T::zero() && last >= ten * first { Verdict::Diverges } else { Verdict::Bounded };

    let (xs, ys): (Vec<T>, Vec<T>) =
        cfg.gammas.iter().zip(&growth).filter(|(_, &v)| v > T::zero() && v.is_finite()).map(|(&g, &v)| (g.ln(), v.ln())).unzip();
    let exponent = if xs.len() >= 2 { least_squares(&xs, &ys).ok().map(|(s, _)| s) } else { None };
    let c_tilde = measure_bound(m, &cfg.xbar[..d], &cfg.quad)?.c_tilde;
    Ok(ProbeReport { gammas: cfg.gammas.clone(), worst, growth, exponent, verdict, monotone_in_l, c_tilde })
}

/// Result of [`vertical_nondegeneracy_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerticalReport<T> {
    pub c_tilde: T,
    /// `(λ, λ + F(x₀, t₀, 0, I, C̃))`.
    pub values: Vec<(T, T)>,
    pub smallest_passing: Option<T>,
}

impl<T: Real> VerticalReport<T> {
    pub fn all_pass(&self) -> bool {
        self.values.iter().all(|&(_, v)| v > T::zero())
    }

    pub fn none_pass(&self) -> bool {
        self.smallest_passing.is_none()
    }
}

/// Smallest `λ` on `lambdas` with `λ + F(x₀, t₀, 0, I, C̃_μ) > 0`.
pub fn vertical_nondegeneracy_check<T: Real>(
    f: &Nonlinearity<T>,
    m: &MeasureSpec<T>,
    x0: &[T],
    t0: T,
    lambdas: &[T],
    quad: &QuadratureConfig<T>,
) -> Result<VerticalReport<T>> {
    let n = x0.len();
    f.validate(n)?;
    let d = f.nonlocal_block().unwrap_or(n);
    if m.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
    }
    let c_tilde = measure_bound(m, &x0[..d], quad)?.c_tilde;
    let f0 = f.eval(x0, t0, &vec![T::zero(); n], &SymMatrix::identity(n), c_tilde);
    let mut values: Vec<(T, T)> = lambdas.iter().map(|&l| (l, l + f0)).collect();
    values.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let smallest_passing = values.iter().find(|(_, v)| *v > T::zero()).map(|&(l, _)| l);
    Ok(VerticalReport { c_tilde, values, smallest_passing })
}

/// Settings of [`scaling_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig<T> {
    pub dim: usize,
    pub samples: usize,
    pub seed: u64,
    /// `ε` values in `(0, 1]` for the literal check.
    pub eps: Vec<T>,
    /// Box `[-x_range, x_range]^N` for `x`, `[0, 1]` for `t`.
    pub x_range: T,
    pub r: T,
    pub l_range: T,
    pub gamma_range: (T, T),
}

impl<T: Real> ScalingConfig<T> {
    pub fn new(dim: usize, samples: usize, seed: u64) -> Self {
        Self {
            dim,
            samples,
            seed,
            eps: crate::measures::geometric_grid(T::lit(1.0e-3), T::one(), 7),
            x_range: T::one(),
            r: T::one(),
            l_range: T::lit(5.0),
            gamma_range: (T::one(), T::lit(100.0)),
        }
    }
}

/// Worst defects of one scaling condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingDefect<T> {
    /// `min` of `F(εp, εX, εl) - εF(p, X, l)` over samples and `ε`.
    pub literal: T,
    /// The same defect for the linearization `F(ε₀ ·)/ε₀` at `ε₀ = 1e-6`.
    pub linearized_coarse: T,
    /// ... and at `ε₀ = 1e-8`.
    pub linearized_fine: T,
    pub scale: T,
}

impl<T: Real> ScalingDefect<T> {
    pub fn literal_passes(&self) -> bool {
        self.literal >= -self.tol()
    }

    /// The linearized defect is negligible or shrinks as `ε₀ → 0`.
    pub fn linearized_passes(&self) -> bool {
        self.linearized_fine >= -self.tol() || self.linearized_fine.abs() <= T::lit(0.5) * self.linearized_coarse.abs()
    }

    pub fn passes(&self) -> bool {
        self.literal_passes() || self.linearized_passes()
    }

    fn tol(&self) -> T {
        T::lit(1.0e-12) * self.scale.max(T::one())
    }

    /// The reported violation: the smaller of the literal and fine
    /// linearized defects' magnitudes, as a nonpositive number.
    pub fn violation(&self) -> T {
        let lit = self.literal.min(T::zero());
        let lin = self.linearized_fine.min(T::zero());
        if self.literal_passes() {
            lit.max(-self.tol())
        } else {
            lit.max(lin)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingReport<T> {
    /// Condition with `X = I - γ p⊗p`.
    pub s: ScalingDefect<T>,
    /// Condition with `X = I`.
    pub s_prime: ScalingDefect<T>,
}

/// Samples `(x, t, p, l, γ)` and reports the worst defects of both scaling
/// conditions. A form passes when either the literal inequality holds or
/// its linearization at `p = 0` does.
pub fn scaling_check<T: Real>(f: &Nonlinearity<T>, cfg: &ScalingConfig<T>) -> Result<ScalingReport<T>> {
    let n = cfg.dim;
    f.validate(n)?;
    if cfg.samples == 0 || cfg.eps.is_empty() || cfg.eps.iter().any(|&e| !(e > T::zero() && e <= T::one())) {
        return Err(Error::InvalidParameter("scaling check needs samples and eps values in (0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xr = cfg.x_range.as_f64();
    let r = cfg.r.as_f64();
    let lr = cfg.l_range.as_f64();
    let (g0, g1) = (cfg.gamma_range.0.as_f64().ln(), cfg.gamma_range.1.as_f64().ln());
    let samples: Vec<_> = (0..cfg.samples)
        .map(|_| {
            let x: Vec<T> = (0..n).map(|_| T::lit(rng.gen_range(-xr..=xr))).collect();
            let t = T::lit(rng.gen_range(0.0..=1.0));
            let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let s = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3);
            let len = rng.gen_range(0.5 * r..=r);
            let p: Vec<T> = dir.iter().map(|&v| T::lit(v / s * len)).collect();
            let l = T::lit(rng.gen_range(-lr..=lr));
            let g = T::lit(rng.gen_range(g0..=g1).exp());
            (x, t, p, l, g)
        })
        .collect();
    let id = SymMatrix::identity(n);
    let defect = |use_gamma: bool, e0: Option<T>| -> (T, T) {
        let mut worst = T::infinity();
        let mut scale = T::zero();
        for (x, t, p, l, g) in &samples {
            let xm = if use_gamma { id.sub(&SymMatrix::outer(p).scale(*g)) } else { id.clone() };
            let lin = |s: T| -> T {
                match e0 {
                    None => f.eval(x, *t, &p.iter().map(|&v| s * v).collect::<Vec<_>>(), &xm.scale(s), s * *l),
                    Some(e) => {
                        let se = s * e;
                        f.eval(x, *t, &p.iter().map(|&v| se * v).collect::<Vec<_>>(), &xm.scale(se), se * *l) / e
                    }
                }
            };
            let full = lin(T::one());
            scale = scale.max(full.abs());
            for &e in &cfg.eps {
                worst = worst.min(lin(e) - e * full);
            }
        }
        (worst, scale)
    };
    let build = |use_gamma: bool| {
        let (literal, scale) = defect(use_gamma, None);
        let (coarse, _) = defect(use_gamma, Some(T::lit(1.0e-6)));
        let (fine, _) = defect(use_gamma, Some(T::lit(1.0e-8)));
        ScalingDefect { literal, linearized_coarse: coarse, linearized_fine: fine, scale }
    };
    Ok(ScalingReport { s: build(true), s_prime: build(false) })
}
