//! Support-translation sets on a grid: `A₀ = {x₀}`,
//! `A_{n+1} = ∪_{x ∈ A_n} (x + supp μ_x)`, iterated to a fixpoint.
//!
//! Supports are discretized by cell offsets. An offset `k` belongs to the
//! support when the cell center `k·h` does, except for measures charging
//! lines, where an offset is kept when the closed cell meets a charged line
//! (a line has no cell centers on a generic grid).

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::measures::{Angular, MeasureKind, MeasureSpec};
use crate::scalar::{norm, Real};

/// Sampling knobs for push-forward supports, whose image `j(x, supp μ)` is
/// approximated by sampling the base support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachConfig<T> {
    /// Directions sampled on the circle for planar base measures.
    pub pushforward_angles: usize,
    /// Base radii are sampled up to this multiple of the box diameter.
    pub pushforward_radius_factor: T,
}

impl<T: Real> Default for ReachConfig<T> {
    fn default() -> Self {
        Self { pushforward_angles: 720, pushforward_radius_factor: T::lit(4.0) }
    }
}

/// Cell offsets of `supp μ_x` (the zero offset excluded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMask {
    pub offsets: Vec<Vec<isize>>,
}

impl SupportMask {
    pub fn contains(&self, k: &[isize]) -> bool {
        self.offsets.binary_search_by(|o| o.as_slice().cmp(k)).is_ok()
    }
}

/// `x ↦ μ_x`, either one measure for every point or a function of the point.
#[derive(Clone)]
pub enum MeasureFamily<T> {
    Constant(MeasureSpec<T>),
    Varying(Arc<dyn Fn(&[T]) -> Result<MeasureSpec<T>> + Send + Sync>),
}

impl<T: Real> MeasureFamily<T> {
    fn at(&self, x: &[T]) -> Result<MeasureSpec<T>> {
        match self {
            MeasureFamily::Constant(m) => Ok(m.clone()),
            MeasureFamily::Varying(f) => f(x),
        }
    }

    /// A single mask serves every cell.
    fn is_uniform(&self) -> bool {
        match self {
            MeasureFamily::Constant(m) => m.jump().is_none_or(|j| j.is_x_independent()),
            MeasureFamily::Varying(_) => false,
        }
    }
}

fn offset_range<T: Real>(grid: &Grid<T>) -> Vec<Vec<isize>> {
    let n = grid.dim();
    let spans: Vec<isize> = grid.cells().iter().map(|&c| c as isize - 1).collect();
    let mut out = vec![Vec::new()];
    for s in spans.iter().take(n) {
        let mut next = Vec::with_capacity(out.len() * (2 * *s as usize + 1));
        for o in &out {
            for k in -s..=*s {
                let mut v = o.clone();
                v.push(k);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

fn cell_meets_lines<T: Real>(center: &[T], h: &[T], alpha: T) -> bool {
    let tol = T::lit(1.0e-12) * (h[0] + h[1]);
    [T::one(), -T::one()].iter().any(|&s| {
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for a in [-T::lit(0.5), T::lit(0.5)] {
            for b in [-T::lit(0.5), T::lit(0.5)] {
                let v = (center[0] + a * h[0]) - s * alpha * (center[1] + b * h[1]);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        lo <= tol && hi >= -tol
    })
}

/// Discretized support of `m` seen from `x`.
pub fn support_mask<T: Real>(m: &MeasureSpec<T>, x: &[T], grid: &Grid<T>, cfg: &ReachConfig<T>) -> Result<SupportMask> {
    if m.dim() != grid.dim() && m.jump().is_none() {
        return Err(Error::DimensionMismatch { expected: grid.dim(), got: m.dim() });
    }
    let h = grid.spacings();
    let mut offsets: Vec<Vec<isize>> = match m.kind() {
        MeasureKind::PushForward { base, jump } => {
            let diam = norm(&grid.upper().iter().zip(grid.lower()).map(|(&u, &l)| u - l).collect::<Vec<_>>());
            let hmin = h.iter().fold(T::infinity(), |a, &b| a.min(b));
            let rmax = diam * cfg.pushforward_radius_factor;
            let steps = (rmax / (hmin / T::lit(4.0))).ceil().to_usize().unwrap_or(1).max(1);
            let dirs: Vec<Vec<T>> = match base.angular()? {
                Angular::Atoms(a) => a.into_iter().map(|(d, _)| d).collect(),
                Angular::Circle { density, .. } => (0..cfg.pushforward_angles.max(4))
                    .map(|k| {
                        let phi = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(cfg.pushforward_angles.max(4));
                        vec![phi.cos(), phi.sin()]
                    })
                    .filter(|d| density(d) > T::zero())
                    .collect(),
            };
            let mut set = BTreeSet::new();
            for d in &dirs {
                for s in 1..=steps {
                    let r = rmax * T::from_usize_lossy(s) / T::from_usize_lossy(steps);
                    let z: Vec<T> = d.iter().map(|&v| r * v).collect();
                    let w = jump.apply(x, &z);
                    if w.len() != grid.dim() {
                        return Err(Error::DimensionMismatch { expected: grid.dim(), got: w.len() });
                    }
                    let k: Option<Vec<isize>> = w.iter().zip(&h).map(|(&wi, &hi)| (wi / hi).round().to_isize()).collect();
                    if let Some(k) = k {
                        if k.iter().any(|&v| v != 0) {
                            set.insert(k);
                        }
                    }
                }
            }
            let spans: Vec<isize> = grid.cells().iter().map(|&c| c as isize - 1).collect();
            set.into_iter().filter(|k| k.iter().zip(&spans).all(|(&v, &s)| v.abs() <= s)).collect()
        }
        MeasureKind::AxisCharging { alpha, .. } => offset_range(grid)
            .into_iter()
            .filter(|k| {
                if k.iter().all(|&v| v == 0) {
                    return false;
                }
                let c: Vec<T> = k.iter().zip(&h).map(|(&v, &hi)| T::from_isize(v).unwrap_or(T::zero()) * hi).collect();
                cell_meets_lines(&c, &h, *alpha)
            })
            .collect(),
        _ => offset_range(grid)
            .into_iter()
            .filter(|k| {
                let z: Vec<T> = k.iter().zip(&h).map(|(&v, &hi)| T::from_isize(v).unwrap_or(T::zero()) * hi).collect();
                m.in_support(&z)
            })
            .collect(),
    };
    offsets.sort();
    Ok(SupportMask { offsets })
}

/// Fixpoint of the translation iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachabilityResult {
    pub mask: Vec<bool>,
    /// Iteration at which each cell was first reached (0 for the seed).
    pub first_reach: Vec<Option<usize>>,
    /// Iterations performed.
    pub iterations: usize,
    /// An iteration added no cell, or every cell is reached.
    pub converged: bool,
}

impl ReachabilityResult {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }
}

/// Iterates `A_{n+1} = ∪_{x ∈ A_n} (x + supp μ_x)` from the cell `seed`.
/// With `omega` given, only cells of `Ω` generate translates; reached cells
/// outside `Ω` stay marked.
pub fn iterate_reachable<T: Real>(
    family: &MeasureFamily<T>,
    seed: &[usize],
    grid: &Grid<T>,
    omega: Option<&[bool]>,
    max_iter: usize,
    cfg: &ReachConfig<T>,
) -> Result<ReachabilityResult> {
    let n = grid.len();
    if seed.len() != grid.dim() || seed.iter().zip(grid.cells()).any(|(&s, &c)| s >= c) {
        return Err(Error::InvalidParameter(format!("seed {seed:?} is not a cell of the grid")));
    }
    if let Some(o) = omega {
        if o.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: o.len() });
        }
    }
    let shared = if family.is_uniform() { Some(support_mask(&family.at(&grid.node(0))?, &grid.node(0), grid, cfg)?) } else { None };
    let s0 = grid.ravel(seed);
    let mut first_reach = vec![None; n];
    first_reach[s0] = Some(0);
    let mut reached = 1usize;
    let mut frontier = vec![s0];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        if reached == n {
            converged = true;
            break;
        }
        let snapshot = &first_reach;
        let found: Vec<Vec<usize>> = frontier
            .par_iter()
            .filter(|&&c| omega.is_none_or(|o| o[c]))
            .map(|&c| {
                let x = grid.node(c);
                let local;
                let mask = match &shared {
                    Some(m) => m,
                    None => {
                        local = support_mask(&family.at(&x)?, &x, grid, cfg)?;
                        &local
                    }
                };
                let base: Vec<isize> = grid.unravel(c).iter().map(|&i| i as isize).collect();
                let mut out = Vec::new();
                let mut idx = vec![0isize; base.len()];
                for k in &mask.offsets {
                    for (d, (&b, &o)) in idx.iter_mut().zip(base.iter().zip(k)) {
                        *d = b + o;
                    }
                    if let Some(f) = grid.resolve(&idx) {
                        if snapshot[f].is_none() {
                            out.push(f);
                        }
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        iterations += 1;
        let mut next = Vec::new();
        for f in found.into_iter().flatten() {
            if first_reach[f].is_none() {
                first_reach[f] = Some(iterations);
                next.push(f);
            }
        }
        if next.is_empty() {
            converged = true;
            break;
        }
        reached += next.len();
        next.sort_unstable();
        frontier = next;
    }
    if reached == n {
        converged = true;
    }
    Ok(ReachabilityResult { mask: first_reach.iter().map(Option::is_some).collect(), first_reach, iterations, converged })
}

/// Whether every cell of `omega` is reached, with the uncovered cells.
pub fn covers_domain(r: &ReachabilityResult, omega: &[bool]) -> Result<(bool, Vec<usize>)> {
    if omega.len() != r.mask.len() {
        return Err(Error::DimensionMismatch { expected: r.mask.len(), got: omega.len() });
    }
    let uncovered: Vec<usize> = (0..omega.len()).filter(|&i| omega[i] && !r.mask[i]).collect();
    Ok((uncovered.is_empty(), uncovered))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_line_leaves_negative_cells() {
        let grid = Grid::new(vec![-1.0], vec![1.0], vec![21], false).unwrap();
        let m = MeasureSpec::half_space_stable(1.5, 1, 0).unwrap();
        let r = iterate_reachable(&MeasureFamily::Constant(m), &[10], &grid, None, 100, &ReachConfig::default()).unwrap();
        assert!(r.converged);
        for i in 0..21 {
            assert_eq!(r.mask[i], i >= 10);
        }
        let (ok, unc) = covers_domain(&r, &[true; 21]).unwrap();
        assert!(!ok);
        assert_eq!(unc, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn full_support_one_step() {
        let grid = Grid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![9, 9], false).unwrap();
        let m = MeasureSpec::radial_stable(1.0, 2).unwrap();
        let r = iterate_reachable(&MeasureFamily::Constant(m), &[3, 4], &grid, None, 10, &ReachConfig::default()).unwrap();
        assert!(r.mask.iter().all(|&b| b));
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn cone_mask() {
        let grid = Grid::new(vec![0.0, 0.0], vec![1.0, 1.0], vec![5, 5], false).unwrap();
        let m = MeasureSpec::cone_restricted(MeasureSpec::radial_stable(1.0, 2).unwrap(), 1.0, (0, 1)).unwrap();
        let s = support_mask(&m, &[0.5, 0.5], &grid, &ReachConfig::default()).unwrap();
        for k in offset_range(&grid) {
            assert_eq!(s.contains(&k), k[0].abs() > k[1].abs(), "{k:?}");
        }
    }
}
