//! Monotone explicit Euler scheme for `u_t + F(x, t, Du, D²u, I[x,t,u]) = 0`
//! on a grid, with Dirichlet exterior data or periodic wrap.
//!
//! The nonlocal term is discretized with split radius `δ = h` (the smallest
//! spacing):
//!
//! * `|z| ≤ δ`: `½ Σ_δ : D²_h u` with `Σ_δ = ∫_{|z|≤δ} z⊗z μ`;
//! * `δ < |z| ≤ L`: `Σ_k w_k (u(x + kh) - u(x))` where `w_k` is the μ-mass
//!   of the multilinear hat function at lattice offset `k`, so `w_k ≥ 0`;
//! * the compensation `-Du·z` on `δ < |z| ≤ 1` becomes a drift `b·Du`,
//!   upwinded by the sign of each `b_a`;
//! * `|z| > L`: for Dirichlet data `L` exceeds the box diameter, so every
//!   such jump lands outside and `∫_{|z|>L} (φ(x+z,t) - u(x)) μ` is
//!   integrated exactly; for periodic data the far field is replaced by
//!   `m_L (mean(u) - u(x))`, which is exact for the zero mode and the mean.
//!
//! Gradient terms are upwinded in Rouy–Tourin fashion, choosing the
//! one-sided differences by the sign of `∂F/∂|p|`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Boundary, Grid, GridField};
use crate::linalg::SymMatrix;
use crate::measures::{Angular, MeasureSpec};
use crate::operators::{Nonlinearity, NonlocalConfig};
use crate::quadrature::gauss_legendre;
use crate::scalar::Real;

/// Inputs of a simulation.
#[derive(Debug, Clone)]
pub struct SchemeConfig<T> {
    pub initial: GridField<T>,
    pub f: Nonlinearity<T>,
    /// Measure of the nonlocal term. For the mixed forms it lives on the
    /// first `d` coordinates.
    pub m: MeasureSpec<T>,
    /// Quadrature for the moments of the kernel; its `delta` is ignored
    /// (the scheme splits at the grid spacing).
    pub nlcfg: NonlocalConfig<T>,
    /// Time step; `None` uses [`stability_dt`].
    pub dt: Option<T>,
    pub t_end: T,
    /// Store every `stride`-th state.
    pub stride: usize,
}

impl<T: Real> SchemeConfig<T> {
    pub fn new(initial: GridField<T>, f: Nonlinearity<T>, m: MeasureSpec<T>, t_end: T) -> Self {
        Self { initial, f, m, nlcfg: NonlocalConfig::default(), dt: None, t_end, stride: 10 }
    }
}

/// Discretized nonlocal operator on a grid.
#[derive(Debug, Clone)]
pub struct DiscreteKernel<T> {
    dim: usize,
    /// `Σ_δ` embedded in the grid dimension.
    sigma: SymMatrix<T>,
    /// Drift `b` of the term `b·Du`.
    drift: Vec<T>,
    /// Lattice offsets with positive weights; folded modulo the grid for
    /// periodic grids.
    stencil: Vec<(Vec<isize>, T)>,
    /// Mass of `|z| > L`.
    far_mass: T,
    radius: T,
    delta: T,
}

impl<T: Real> DiscreteKernel<T> {
    /// Total mass of the jump part, `Σ_k w_k + m_L`.
    pub fn jump_mass(&self) -> T {
        self.stencil.iter().map(|(_, w)| *w).sum::<T>() + self.far_mass
    }

    pub fn sigma(&self) -> &SymMatrix<T> {
        &self.sigma
    }

    pub fn drift(&self) -> &[T] {
        &self.drift
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    /// Rate contributed to the diagonal of the update, per unit of `|∂F/∂l|`.
    fn rate(&self, h: &[T]) -> T {
        let mut r = self.jump_mass();
        for a in 0..self.dim {
            r = r + self.sigma.get(a, a) / (h[a] * h[a]) + self.drift[a].abs() / h[a];
        }
        r
    }
}

/// Builds the discrete kernel of `m` (embedded into the first `m.dim()`
/// coordinates) on `grid`.
pub fn build_kernel<T: Real>(m: &MeasureSpec<T>, grid: &Grid<T>, cfg: &NonlocalConfig<T>) -> Result<DiscreteKernel<T>> {
    let n = grid.dim();
    let d = m.dim();
    if d > n {
        return Err(Error::DimensionMismatch { expected: n, got: d });
    }
    if d > 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    if m.jump().is_some() {
        return Err(Error::UnsupportedKind("PushForward"));
    }
    cfg.quad.validate()?;
    let h = grid.spacings();
    let hmin = h[..d].iter().fold(T::infinity(), |a, &b| a.min(b));
    let delta = hmin;
    let origin = vec![T::zero(); d];
    let q = &cfg.quad;

    let mut sigma = SymMatrix::zeros(n);
    for a in 0..d {
        for b in a..d {
            let v = m.integrate_region(&origin, |z, _| Ok(z[a] * z[b]), |_| vec![(T::zero(), delta)], &[], q)?;
            sigma.set(a, b, v.value);
        }
    }
    let mut drift = vec![T::zero(); n];
    if m.is_zero_order() {
        if !m.is_symmetric() {
            return Err(Error::NearOriginDivergence { exponent: 1.0, beta: 1.0 });
        }
    } else {
        let one = T::one();
        let (lo, hi, sign) = if delta < one { (delta, one, -one) } else { (one, delta, one) };
        if hi > lo {
            for (a, da) in drift.iter_mut().enumerate().take(d) {
                let v = m.integrate_region(&origin, |z, _| Ok(z[a]), |_| vec![(lo, hi)], &[], q)?;
                *da = sign * v.value;
            }
        }
    }

    let lengths: Vec<T> = (0..d).map(|a| grid.upper()[a] - grid.lower()[a]).collect();
    let radius = if grid.is_periodic() {
        let periods = if d == 1 { T::lit(64.0) } else { T::lit(2.0) };
        periods * lengths.iter().fold(T::zero(), |a, &b| a.max(b))
    } else {
        lengths.iter().map(|&l| l * l).sum::<T>().sqrt() * (T::one() + T::lit(1.0e-9))
    };
    let kmax: Vec<isize> = (0..d).map(|a| (radius / h[a]).ceil().to_isize().unwrap_or(1) + 1).collect();
    let weights = deposit(m, &h[..d], &kmax, delta, radius)?;
    let far_mass = m.integrate_region(&origin, |_, _| Ok(T::one()), |_| vec![(radius, T::infinity())], &[], q)?.value;

    let mut stencil: Vec<(Vec<isize>, T)> = Vec::new();
    let width: Vec<usize> = kmax.iter().map(|&k| (2 * k + 1) as usize).collect();
    for (flat, &w) in weights.iter().enumerate() {
        if w <= T::zero() {
            continue;
        }
        let mut rem = flat;
        let mut off = vec![0isize; n];
        for a in (0..d).rev() {
            off[a] = (rem % width[a]) as isize - kmax[a];
            rem /= width[a];
        }
        stencil.push((off, w));
    }
    if grid.is_periodic() {
        let cells = grid.cells();
        let mut folded: std::collections::BTreeMap<Vec<isize>, T> = std::collections::BTreeMap::new();
        for (off, w) in stencil {
            let key: Vec<isize> = off.iter().enumerate().map(|(a, &k)| k.rem_euclid(cells[a] as isize)).collect();
            if key.iter().all(|&k| k == 0) {
                continue;
            }
            let e = folded.entry(key).or_insert(T::zero());
            *e = *e + w;
        }
        stencil = folded.into_iter().collect();
    }
    Ok(DiscreteKernel { dim: n, sigma, drift, stencil, far_mass, radius, delta })
}

/// μ-masses of the hat functions on the lattice `|k_a| ≤ kmax_a`, over
/// `δ < |z| ≤ L`. Row-major over the offset box.
fn deposit<T: Real>(m: &MeasureSpec<T>, h: &[T], kmax: &[isize], delta: T, radius: T) -> Result<Vec<T>> {
    let d = h.len();
    let width: Vec<usize> = kmax.iter().map(|&k| (2 * k + 1) as usize).collect();
    let mut out = vec![T::zero(); width.iter().product()];
    let beta = m.beta();
    let hmin = h.iter().fold(T::infinity(), |a, &b| a.min(b));
    let (gx, gw) = gauss_legendre::<T>(8);
    let half = T::lit(0.5);
    let mut add = |z: &[T], w: T| {
        let mut base = [0isize; 2];
        let mut frac = [T::zero(); 2];
        for a in 0..d {
            let s = z[a] / h[a];
            let f = s.floor();
            base[a] = f.to_isize().unwrap_or(0);
            frac[a] = s - f;
        }
        for corner in 0..(1usize << d) {
            let mut wc = w;
            let mut flat = 0usize;
            let mut inside = true;
            for a in 0..d {
                let bit = (corner >> a) & 1;
                let k = base[a] + bit as isize;
                if k.abs() > kmax[a] {
                    inside = false;
                    break;
                }
                wc = wc * if bit == 1 { frac[a] } else { T::one() - frac[a] };
                flat = flat * width[a] + (k + kmax[a]) as usize;
            }
            if inside && wc != T::zero() {
                out[flat] = out[flat] + wc;
            }
        }
    };
    // Radial segments: lattice multiples in 1-d (where the hats have their
    // kinks), quarter spacings in 2-d.
    let seg = if d == 1 { hmin } else { hmin / T::lit(4.0) };
    let mut edges = vec![delta];
    loop {
        let next = *edges.last().unwrap() + seg;
        if next >= radius * (T::one() - T::lit(1.0e-12)) {
            edges.push(radius);
            break;
        }
        edges.push(next);
    }
    let radial_nodes: Vec<(T, T)> = edges
        .windows(2)
        .flat_map(|e| {
            let (a, b) = (e[0], e[1]);
            let mid = half * (a + b);
            let hl = half * (b - a);
            gx.iter().zip(&gw).map(move |(&x, &w)| (mid + hl * x, hl * w)).collect::<Vec<_>>()
        })
        .map(|(r, w)| (r, w * r.powf(-T::one() - beta)))
        .collect();
    match m.angular()? {
        Angular::Atoms(atoms) => {
            for (dir, aw) in atoms {
                for &(r, w) in &radial_nodes {
                    let z: Vec<T> = dir.iter().map(|&v| r * v).collect();
                    add(&z, w * aw);
                }
            }
        }
        Angular::Circle { density, breaks } => {
            let tau = T::TAU();
            let mut cuts: Vec<T> = vec![T::zero(), tau];
            cuts.extend(breaks.iter().map(|&b| b - (b / tau).floor() * tau));
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            cuts.dedup_by(|a, b| (*a - *b).abs() <= T::lit(1.0e-14));
            let (ax, aw) = gauss_legendre::<T>(2);
            for &(r, w) in &radial_nodes {
                let pieces = (r * tau / (hmin * half)).ceil().to_usize().unwrap_or(1).max(8);
                for arc in cuts.windows(2) {
                    let (a0, a1) = (arc[0], arc[1]);
                    let len = a1 - a0;
                    if len <= T::zero() {
                        continue;
                    }
                    let np = ((len / tau) * T::from_usize_lossy(pieces)).ceil().to_usize().unwrap_or(1).max(1);
                    let step = len / T::from_usize_lossy(np);
                    for p in 0..np {
                        let mid = a0 + step * (T::from_usize_lossy(p) + half);
                        for (&x, &wq) in ax.iter().zip(&aw) {
                            let phi = mid + half * step * x;
                            let th = [phi.cos(), phi.sin()];
                            let dens = density(&th);
                            if dens > T::zero() {
                                add(&[r * th[0], r * th[1]], w * dens * half * step * wq);
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-step record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub step: usize,
    pub t: T,
    pub max: T,
    pub argmax: usize,
    pub min: T,
}

/// Result of [`simulate`].
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub dt: T,
    /// `dt*` was infinite: `F` contributes nothing and the run is a single
    /// step to the horizon.
    pub horizon_limited: bool,
    pub records: Vec<StepRecord<T>>,
    /// `(step, state)` every `stride` steps, plus the first and last.
    pub snapshots: Vec<(usize, GridField<T>)>,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> &GridField<T> {
        &self.snapshots.last().expect("trajectory has an initial snapshot").1
    }
}

/// Time-stepping engine with its discretized kernel.
#[derive(Debug, Clone)]
pub struct Scheme<T> {
    f: Nonlinearity<T>,
    kernel: DiscreteKernel<T>,
    m: MeasureSpec<T>,
    nlcfg: NonlocalConfig<T>,
}

/// Discrete derivatives at one node.
struct Stencil<T> {
    dminus: Vec<T>,
    dplus: Vec<T>,
    hess: SymMatrix<T>,
    l: T,
}

impl<T: Real> Scheme<T> {
    pub fn new(f: Nonlinearity<T>, m: MeasureSpec<T>, grid: &Grid<T>, nlcfg: NonlocalConfig<T>) -> Result<Self> {
        f.validate(grid.dim())?;
        if let Some(d) = f.nonlocal_block() {
            if m.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
            }
        } else if m.dim() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: grid.dim(), got: m.dim() });
        }
        if f.uses_zero_order() != m.is_zero_order() {
            return Err(Error::InvalidParameter(format!(
                "{} needs a {} measure",
                f.name(),
                if f.uses_zero_order() { "zero-order" } else { "compensated" }
            )));
        }
        let kernel = build_kernel(&m, grid, &nlcfg)?;
        Ok(Self { f, kernel, m, nlcfg })
    }

    pub fn kernel(&self) -> &DiscreteKernel<T> {
        &self.kernel
    }

    /// `∫_{|z|>L} φ(x + z, t) μ(dz)` for each node (zero for periodic grids).
    fn far_exterior(&self, u: &GridField<T>, t: T) -> Result<Vec<T>> {
        let Boundary::Dirichlet(phi) = u.boundary() else {
            return Ok(vec![T::zero(); u.grid().len()]);
        };
        let grid = u.grid();
        let d = self.m.dim();
        let origin = vec![T::zero(); d];
        let radius = self.kernel.radius;
        (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.node(i);
                let mut y = x.clone();
                let v = self.m.integrate_region(
                    &origin,
                    |z, _| {
                        let mut y = y.clone();
                        for a in 0..d {
                            y[a] = x[a] + z[a];
                        }
                        Ok(phi.eval(&y, t))
                    },
                    |_| vec![(radius, T::infinity())],
                    &[],
                    &self.nlcfg.quad,
                )?;
                y.clear();
                Ok(v.value)
            })
            .collect()
    }

    fn stencil_at(&self, u: &GridField<T>, i: usize, t: T, far: T, mean: T) -> Stencil<T> {
        let grid = u.grid();
        let n = grid.dim();
        let h = grid.spacings();
        let base: Vec<isize> = grid.unravel(i).iter().map(|&v| v as isize).collect();
        let ui = u.values()[i];
        let mut idx = base.clone();
        let mut at = |shift: &[(usize, isize)]| {
            idx.copy_from_slice(&base);
            for &(a, s) in shift {
                idx[a] += s;
            }
            u.at_index(&idx, t)
        };
        let mut dminus = vec![T::zero(); n];
        let mut dplus = vec![T::zero(); n];
        let mut hess = SymMatrix::zeros(n);
        for a in 0..n {
            let up = at(&[(a, 1)]);
            let um = at(&[(a, -1)]);
            dminus[a] = (ui - um) / h[a];
            dplus[a] = (up - ui) / h[a];
            hess.set(a, a, (up - T::lit(2.0) * ui + um) / (h[a] * h[a]));
            for b in (a + 1)..n {
                let v = (at(&[(a, 1), (b, 1)]) - at(&[(a, 1), (b, -1)]) - at(&[(a, -1), (b, 1)]) + at(&[(a, -1), (b, -1)]))
                    / (T::lit(4.0) * h[a] * h[b]);
                hess.set(a, b, v);
            }
        }
        let k = &self.kernel;
        let mut l = T::lit(0.5) * k.sigma.frobenius(&hess);
        for a in 0..n {
            let b = k.drift[a];
            if b > T::zero() {
                l = l + b * dplus[a];
            } else if b < T::zero() {
                l = l + b * dminus[a];
            }
        }
        let mut acc = T::zero();
        for (off, w) in &k.stencil {
            for a in 0..n {
                idx[a] = base[a] + off[a];
            }
            acc = acc + *w * (u.at_index(&idx, t) - ui);
        }
        l = l + acc;
        l = l + if grid.is_periodic() { k.far_mass * (mean - ui) } else { far - k.far_mass * ui };
        Stencil { dminus, dplus, hess, l }
    }

    /// Upwinded gradient whose norm is the monotone approximation of `|Du|`
    /// for an `F` with the given sign of `∂F/∂|p|`.
    fn upwind(s: &Stencil<T>, increasing: bool) -> Vec<T> {
        s.dminus
            .iter()
            .zip(&s.dplus)
            .map(|(&m, &p)| if increasing { m.max(-p).max(T::zero()) } else { (-m).max(p).max(T::zero()) })
            .collect()
    }

    fn f_at(&self, x: &[T], t: T, s: &Stencil<T>) -> T {
        let n = x.len();
        let mut e1 = vec![T::zero(); n];
        e1[0] = T::one();
        let zero_p = vec![T::zero(); n];
        let zm = SymMatrix::zeros(n);
        let slope = self.f.eval(x, t, &e1, &zm, s.l) - self.f.eval(x, t, &zero_p, &zm, s.l);
        let p = if slope == T::zero() { zero_p } else { Self::upwind(s, slope > T::zero()) };
        self.f.eval(x, t, &p, &s.hess, s.l)
    }

    /// Discrete `F` and nonlocal value at every node.
    pub fn residual(&self, u: &GridField<T>, t: T) -> Result<(Vec<T>, Vec<T>)> {
        let far = self.far_exterior(u, t)?;
        self.residual_with(u, t, &far)
    }

    fn residual_with(&self, u: &GridField<T>, t: T, far: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let grid = u.grid();
        let mean = u.values().iter().copied().sum::<T>() / T::from_usize_lossy(grid.len());
        let out: Vec<(T, T)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let s = self.stencil_at(u, i, t, far[i], mean);
                let x = grid.node(i);
                (self.f_at(&x, t, &s), s.l)
            })
            .collect();
        Ok(out.into_iter().unzip())
    }

    /// Sum of the diagonal rates of the update at `u`; `dt* = 0.9 / rate`.
    pub fn max_rate(&self, u: &GridField<T>, t_end: T) -> Result<T> {
        let grid = u.grid();
        let n = grid.dim();
        let h = grid.spacings();
        let (_, ls) = self.residual(u, u.time())?;
        let far = self.far_exterior(u, u.time())?;
        let mean = u.values().iter().copied().sum::<T>() / T::from_usize_lossy(grid.len());
        let kr = self.kernel.rate(&h);
        let inv_h: T = h.iter().map(|&v| T::one() / v).sum();
        let two = T::lit(2.0);
        let pmax = (0..grid.len())
            .map(|i| {
                let s = self.stencil_at(u, i, u.time(), far[i], mean);
                s.dminus.iter().chain(&s.dplus).map(|&v| v * v).sum::<T>().sqrt()
            })
            .fold(T::zero(), T::max);
        let lmax = ls.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
        let times: Vec<T> = (0..=4).map(|k| u.time() + (t_end - u.time()) * T::from_usize_lossy(k) / T::lit(4.0)).collect();
        let mut worst = T::zero();
        for i in 0..grid.len() {
            let x = grid.node(i);
            for &t in &times {
                let rate = match &self.f {
                    Nonlinearity::PureNonlocal => kr,
                    Nonlinearity::GrowingInterface => kr + two * pmax * inv_h,
                    Nonlinearity::GradientPower { b, m } => {
                        let bv = b.eval(&x, t).abs();
                        if bv > T::zero() && *m < T::one() {
                            return Err(Error::UnboundedCoefficient(format!(
                                "|p|^{m} has unbounded slope at p = 0; no explicit monotone step exists"
                            )));
                        }
                        kr + bv * *m * (two * pmax).max(T::one()).powf(*m - T::one()) * inv_h
                    }
                    Nonlinearity::Quasilinear { a } => {
                        let am = a.eval(&x, t, n)?;
                        let mut r = kr;
                        for k in 0..n {
                            r = r + two * am.get(k, k).abs() / (h[k] * h[k]);
                        }
                        r
                    }
                    Nonlinearity::MixedLocalNonlocal { d } => kr + (*d..n).map(|k| two / (h[k] * h[k])).sum::<T>(),
                    Nonlinearity::MixedWeighted { d, a, c } => {
                        let av = a.eval(&x, t);
                        let cv = c.eval(&x, t);
                        if av < T::zero() || cv < T::zero() {
                            return Err(Error::InvalidParameter("weighted mixed form needs a, c >= 0 for monotonicity".into()));
                        }
                        av * kr + cv * (*d..n).map(|k| two / (h[k] * h[k])).sum::<T>()
                    }
                    Nonlinearity::Dislocation { c } => (two * pmax).max(T::one()) * kr + (c.eval(&x, t).abs() + two * lmax) * inv_h,
                    Nonlinearity::LinearizedComparison { c, pucci } => {
                        *c * kr + *c * inv_h + (0..n).map(|k| two * pucci.big_lambda / (h[k] * h[k])).sum::<T>()
                    }
                };
                if !rate.is_finite() {
                    return Err(Error::UnboundedCoefficient(format!("rate at node {i} is not finite")));
                }
                worst = worst.max(rate);
            }
        }
        Ok(worst)
    }
}

/// Largest monotone time step `0.9 / (sum of the diagonal rates)`.
/// `+∞` when `F` contributes no rate at all.
pub fn stability_dt<T: Real>(c: &SchemeConfig<T>) -> Result<T> {
    let s = Scheme::new(c.f.clone(), c.m.clone(), c.initial.grid(), c.nlcfg)?;
    let rate = s.max_rate(&c.initial, c.t_end)?;
    Ok(if rate > T::zero() { T::lit(0.9) / rate } else { T::infinity() })
}

fn extrema<T: Real>(v: &[T]) -> (T, usize, T) {
    let mut mx = T::neg_infinity();
    let mut arg = 0;
    let mut mn = T::infinity();
    for (i, &x) in v.iter().enumerate() {
        if x > mx {
            mx = x;
            arg = i;
        }
        mn = mn.min(x);
    }
    (mx, arg, mn)
}

/// Largest exterior value the stencil can read, for the instability check.
fn exterior_sup<T: Real>(u: &GridField<T>, t: T) -> T {
    let Boundary::Dirichlet(phi) = u.boundary() else { return T::neg_infinity() };
    let g = u.grid();
    let n = g.dim();
    let mut worst = T::neg_infinity();
    // Sample the box boundary layer and a coarse ring outside it.
    for i in 0..g.len() {
        let idx = g.unravel(i);
        for a in 0..n {
            for side in [-1isize, g.cells()[a] as isize] {
                let mut ix: Vec<isize> = idx.iter().map(|&v| v as isize).collect();
                ix[a] = side;
                let x: Vec<T> = ix.iter().enumerate().map(|(k, &v)| g.coord(k, v)).collect();
                worst = worst.max(phi.eval(&x, t));
            }
        }
    }
    worst
}

/// One explicit step of size `dt` from `state`.
pub fn step<T: Real>(state: &GridField<T>, scheme: &Scheme<T>, dt: T) -> Result<GridField<T>> {
    let t = state.time();
    let (fv, _) = scheme.residual(state, t)?;
    let mut next = state.clone();
    for (v, f) in next.values_mut().iter_mut().zip(&fv) {
        *v = *v - dt * *f;
    }
    next.set_time(t + dt);
    Ok(next)
}

/// Runs to `t_end`, recording extrema every step and states every
/// `stride` steps.
pub fn simulate<T: Real>(c: &SchemeConfig<T>) -> Result<Trajectory<T>> {
    if !(c.t_end > c.initial.time()) {
        return Err(Error::InvalidParameter("t_end must exceed the initial time".into()));
    }
    let scheme = Scheme::new(c.f.clone(), c.m.clone(), c.initial.grid(), c.nlcfg)?;
    let rate = scheme.max_rate(&c.initial, c.t_end)?;
    let bound = if rate > T::zero() { T::lit(0.9) / rate } else { T::infinity() };
    let horizon_limited = !bound.is_finite();
    let span = c.t_end - c.initial.time();
    let dt = match c.dt {
        Some(dt) if dt > bound => return Err(Error::UnstableTimeStep { dt: dt.as_f64(), bound: bound.as_f64() }),
        Some(dt) if dt > T::zero() => dt,
        Some(_) => return Err(Error::InvalidParameter("time step must be positive".into())),
        None => bound.min(span),
    };
    let steps = (span / dt - T::lit(1.0e-9)).ceil().to_usize().unwrap_or(1).max(1);
    let dt = span / T::from_usize_lossy(steps);
    let stride = c.stride.max(1);
    let time_dependent = matches!(c.initial.boundary(), Boundary::Dirichlet(phi) if phi.is_time_dependent());

    let mut state = c.initial.clone();
    let (mx, arg, mn) = extrema(state.values());
    let mut records = vec![StepRecord { step: 0, t: state.time(), max: mx, argmax: arg, min: mn }];
    let mut snapshots = vec![(0, state.clone())];
    let mut far = scheme.far_exterior(&state, state.time())?;
    let ext_sup = exterior_sup(&state, state.time());
    let scale = mx.abs().max(mn.abs()).max(T::one());
    let tol = T::lit(1.0e-9) * scale;
    for k in 1..=steps {
        let t = state.time();
        if time_dependent && k > 1 {
            far = scheme.far_exterior(&state, t)?;
        }
        let (fv, _) = scheme.residual_with(&state, t, &far)?;
        let old_max = records.last().map(|r| r.max).unwrap_or(mx);
        let mut next = state.clone();
        for (v, f) in next.values_mut().iter_mut().zip(&fv) {
            *v = *v - dt * *f;
        }
        next.set_time(c.initial.time() + dt * T::from_usize_lossy(k));
        let (nmx, narg, nmn) = extrema(next.values());
        let cap = if time_dependent { T::infinity() } else { old_max.max(ext_sup) + tol };
        if !nmx.is_finite() || !nmn.is_finite() || nmx > cap {
            return Err(Error::Instability { step: k, new_max: nmx.as_f64(), bound: cap.as_f64() });
        }
        records.push(StepRecord { step: k, t: next.time(), max: nmx, argmax: narg, min: nmn });
        state = next;
        if k % stride == 0 || k == steps {
            snapshots.push((k, state.clone()));
        }
    }
    Ok(Trajectory { dt, horizon_limited, records, snapshots })
}

/// Ordering of two trajectories over their common snapshot steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport<T> {
    /// `(step, max_i (u - v))`.
    pub max_diff: Vec<(usize, T)>,
    /// Largest rise of `max(u - v)` above `max(max(u₀ - v₀), 0)`.
    pub violation: T,
}

/// Compares `u_traj` against `v_traj` snapshot by snapshot.
pub fn discrete_comparison_check<T: Real>(u: &Trajectory<T>, v: &Trajectory<T>) -> Result<ComparisonReport<T>> {
    let mut max_diff = Vec::new();
    for ((su, fu), (sv, fv)) in u.snapshots.iter().zip(&v.snapshots) {
        if su != sv || fu.values().len() != fv.values().len() {
            return Err(Error::InvalidParameter("trajectories do not share steps and grid".into()));
        }
        let d = fu.values().iter().zip(fv.values()).map(|(&a, &b)| a - b).fold(T::neg_infinity(), T::max);
        max_diff.push((*su, d));
    }
    let base = max_diff.first().map(|&(_, d)| d.max(T::zero())).unwrap_or(T::zero());
    let violation = max_diff.iter().map(|&(_, d)| d - base).fold(T::zero(), T::max);
    Ok(ComparisonReport { max_diff, violation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Exterior;
    use crate::operators::{Coefficient, DiffusionMatrix};

    fn periodic(n: usize) -> Grid<f64> {
        Grid::new(vec![0.0], vec![std::f64::consts::TAU], vec![n], true).unwrap()
    }

    #[test]
    fn constants_are_fixed() {
        let g = periodic(32);
        let u = GridField::sample(g, Boundary::Periodic, 0.0, |_| 1.5).unwrap();
        let c = SchemeConfig::new(u.clone(), Nonlinearity::PureNonlocal, MeasureSpec::radial_stable(1.0, 1).unwrap(), 0.05);
        let tr = simulate(&c).unwrap();
        assert!(tr.last().values().iter().all(|&v: &f64| (v - 1.5).abs() <= 1e-14));
    }

    #[test]
    fn heat_bound_matches() {
        let g = Grid::new(vec![0.0], vec![1.0], vec![100], false).unwrap();
        let u = GridField::sample(g, Boundary::Dirichlet(Exterior::constant(0.0)), 0.0, |x| x[0] * (1.0 - x[0])).unwrap();
        let q = Nonlinearity::Quasilinear { a: DiffusionMatrix::Scalar(Coefficient::constant(1.0)) };
        let s = Scheme::new(q, MeasureSpec::radial_stable(1.5, 1).unwrap(), u.grid(), NonlocalConfig::default()).unwrap();
        let kr: f64 = s.kernel().rate(&[0.01]);
        let rate = s.max_rate(&u, 0.1).unwrap();
        assert!((rate - kr - 2.0 / 1e-4).abs() < 1e-6 * rate);
    }

    #[test]
    fn fractional_heat_decay() {
        let g = periodic(128);
        let u = GridField::sample(g, Boundary::Periodic, 0.0, |x| x[0].cos()).unwrap();
        let c = SchemeConfig::new(u, Nonlinearity::PureNonlocal, MeasureSpec::radial_stable(1.0, 1).unwrap(), 0.1);
        let tr = simulate(&c).unwrap();
        let amp = tr.records.last().unwrap().max;
        let exact = (-0.1 * std::f64::consts::PI).exp();
        assert!((amp - exact).abs() / exact < 0.02, "{amp} vs {exact}");
    }

    #[test]
    fn kernel_mass_matches_measure() {
        let g = periodic(64);
        let m = MeasureSpec::radial_stable(1.5, 1).unwrap();
        let k = build_kernel(&m, &g, &NonlocalConfig::default()).unwrap();
        let h = std::f64::consts::TAU / 64.0;
        // Folding drops only the mass landing on multiples of the period.
        let exact = 2.0 * h.powf(-1.5) / 1.5;
        assert!(k.jump_mass() <= exact && k.jump_mass() > 0.9 * exact);
    }

    #[test]
    fn gradient_power_below_one_is_rejected() {
        let g = periodic(16);
        let u = GridField::sample(g, Boundary::Periodic, 0.0, |x| x[0].sin()).unwrap();
        let f = Nonlinearity::GradientPower { b: Coefficient::constant(1.0), m: 0.5 };
        let c = SchemeConfig::new(u, f, MeasureSpec::radial_stable(1.5, 1).unwrap(), 0.1);
        assert!(matches!(stability_dt(&c), Err(Error::UnboundedCoefficient(_))));
    }

    fn config(f: Nonlinearity<f64>, m: MeasureSpec<f64>, g: Grid<f64>, b: Boundary<f64>, u0: impl Fn(&[f64]) -> f64) -> SchemeConfig<f64> {
        SchemeConfig::new(GridField::sample(g, b, 0.0, u0).unwrap(), f, m, 0.1)
    }

    #[test]
    fn heat_step_is_the_explicit_bound() {
        // β = 0.5 keeps the kernel rate below 0.3% of 2/h².
        let g = Grid::new(vec![0.0], vec![1.0], vec![100], false).unwrap();
        let q = Nonlinearity::Quasilinear { a: DiffusionMatrix::Scalar(Coefficient::constant(1.0)) };
        let c = config(q, MeasureSpec::radial_stable(0.5, 1).unwrap(), g, Boundary::Dirichlet(Exterior::constant(0.0)), |x| x[0]);
        let dt = stability_dt(&c).unwrap();
        assert!((dt - 4.5e-5).abs() < 0.01 * 4.5e-5, "{dt}");
    }

    #[test]
    fn nonlocal_step_shrinks_with_kernel_mass() {
        let g = periodic(512);
        let mut prev = f64::INFINITY;
        for beta in [0.5, 1.0, 1.5] {
            let m = MeasureSpec::radial_stable(beta, 1).unwrap();
            let c = config(Nonlinearity::PureNonlocal, m.clone(), g.clone(), Boundary::Periodic, |x| x[0].cos());
            let dt = stability_dt(&c).unwrap();
            let k = build_kernel(&m, &g, &NonlocalConfig::default()).unwrap();
            assert!(dt.is_finite() && dt > 0.0 && dt < prev);
            assert!(dt * k.jump_mass() < 0.9);
            prev = dt;
        }
    }

    #[test]
    fn zero_rate_is_horizon_limited() {
        let f = Nonlinearity::MixedWeighted { d: 1, a: Coefficient::constant(0.0), c: Coefficient::constant(0.0) };
        let g2 = Grid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![4, 4], true).unwrap();
        let c = config(f, MeasureSpec::radial_stable(1.0, 1).unwrap(), g2, Boundary::Periodic, |x| x[0] + x[1]);
        assert!(stability_dt(&c).unwrap().is_infinite());
        let tr = simulate(&c).unwrap();
        assert!(tr.horizon_limited);
        assert_eq!(tr.records.len(), 2);
    }

    #[test]
    fn dislocation_front_moves_with_zero_order_term() {
        let g = periodic(128);
        let m = MeasureSpec::zero_order(1, crate::expr::Expr::constant(1.0)).unwrap();
        let f = Nonlinearity::Dislocation { c: Coefficient::constant(0.0) };
        let u0 = |x: &[f64]| x[0].sin() + 0.3 * (2.0 * x[0]).sin();
        let c = config(f, m.clone(), g, Boundary::Periodic, u0);
        let s = Scheme::new(c.f.clone(), m.clone(), c.initial.grid(), c.nlcfg).unwrap();
        let dt = stability_dt(&c).unwrap();
        let next = step(&c.initial, &s, dt).unwrap();
        let (_, l) = s.residual(&c.initial, 0.0).unwrap();
        let exact = crate::field::Analytic::from_fns(
            1,
            "u0",
            move |x: &[f64], _| u0(x),
            |x: &[f64], _| vec![x[0].cos() + 0.6 * (2.0 * x[0]).cos()],
            |x: &[f64], _| SymMatrix::diag(&[-x[0].sin() - 1.2 * (2.0 * x[0]).sin()]),
        );
        let cfg = NonlocalConfig::default();
        let mut checked = 0;
        for i in (0..128).step_by(8) {
            let x = c.initial.grid().node(i);
            let oracle = crate::operators::eval_zero_order(&exact, &x, 0.0, &m, &cfg).unwrap();
            assert!((l[i] - oracle).abs() < 0.05 * oracle.abs().max(0.1), "node {i}: {} vs {oracle}", l[i]);
            let du = next.values()[i] - c.initial.values()[i];
            if oracle.abs() > 0.05 && du.abs() > 1e-12 {
                assert_eq!(du > 0.0, oracle > 0.0, "node {i}");
                checked += 1;
            }
        }
        assert!(checked > 8);
    }

    #[test]
    fn mixed_form_decays_per_mode() {
        let n = 64;
        let tau = std::f64::consts::TAU;
        let g = Grid::new(vec![0.0, 0.0], vec![tau, tau], vec![n, n], true).unwrap();
        let c =
            config(Nonlinearity::MixedLocalNonlocal { d: 1 }, MeasureSpec::radial_stable(1.5, 1).unwrap(), g, Boundary::Periodic, |x| {
                x[0].cos() + x[1].cos()
            });
        let tr = simulate(&c).unwrap();
        let u = tr.last();
        let (mut a1, mut a2) = (0.0, 0.0);
        for i in 0..u.grid().len() {
            let x = u.grid().node(i);
            a1 += u.values()[i] * x[0].cos();
            a2 += u.values()[i] * x[1].cos();
        }
        let norm = (n * n) as f64 / 2.0;
        let (a1, a2) = (a1 / norm, a2 / norm);
        // ∫(1 - cos z)|z|^{-2.5} dz = (4/3)√(2π) for the fractional mode.
        let psi = 4.0 / 3.0 * tau.sqrt();
        assert!((a1 - (-psi * 0.1).exp()).abs() < 0.03, "{a1}");
        assert!((a2 - (-0.1f64).exp()).abs() < 0.01, "{a2}");
        assert!(a1 < a2);
    }
}
