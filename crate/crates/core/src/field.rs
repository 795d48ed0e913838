//! Functions the nonlocal operators act on: closed-form test functions with
//! exact derivatives, and grid functions with an exterior extension.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::SymMatrix;
use crate::scalar::{dot, Real};

/// A `C²` function of `(x, t)` with access to its spatial derivatives.
pub trait Field<T: Real>: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T], t: T) -> T;
    fn gradient(&self, x: &[T], t: T) -> Vec<T>;
    fn hessian(&self, x: &[T], t: T) -> SymMatrix<T>;
}

type ScalarFn<T> = Arc<dyn Fn(&[T], T) -> T + Send + Sync>;
type VectorFn<T> = Arc<dyn Fn(&[T], T) -> Vec<T> + Send + Sync>;
type MatrixFn<T> = Arc<dyn Fn(&[T], T) -> SymMatrix<T> + Send + Sync>;

/// Closed-form field given by value, gradient and Hessian closures.
#[derive(Clone)]
pub struct Analytic<T> {
    dim: usize,
    label: String,
    value: ScalarFn<T>,
    gradient: VectorFn<T>,
    hessian: MatrixFn<T>,
}

impl<T> fmt::Debug for Analytic<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Analytic({}, dim={})", self.label, self.dim)
    }
}

impl<T: Real> Analytic<T> {
    pub fn from_fns(
        dim: usize,
        label: impl Into<String>,
        value: impl Fn(&[T], T) -> T + Send + Sync + 'static,
        gradient: impl Fn(&[T], T) -> Vec<T> + Send + Sync + 'static,
        hessian: impl Fn(&[T], T) -> SymMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        Self { dim, label: label.into(), value: Arc::new(value), gradient: Arc::new(gradient), hessian: Arc::new(hessian) }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self::from_fns(dim, "constant", move |_, _| c, move |_, _| vec![T::zero(); dim], move |_, _| SymMatrix::zeros(dim))
    }

    /// `a·x + b`.
    pub fn linear(a: Vec<T>, b: T) -> Self {
        let dim = a.len();
        let a2 = a.clone();
        Self::from_fns(dim, "linear", move |x, _| dot(&a, x) + b, move |_, _| a2.clone(), move |_, _| SymMatrix::zeros(dim))
    }

    /// `k |x - c|²`.
    pub fn quadratic(center: Vec<T>, k: T) -> Self {
        let dim = center.len();
        let c1 = center.clone();
        let c2 = center;
        let two = T::lit(2.0);
        Self::from_fns(
            dim,
            "quadratic",
            move |x, _| k * x.iter().zip(&c1).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>(),
            move |x, _| x.iter().zip(&c2).map(|(&a, &b)| two * k * (a - b)).collect(),
            move |_, _| SymMatrix::scaled_identity(dim, two * k),
        )
    }

    /// `A cos(ω·x + φ)`.
    pub fn cosine(omega: Vec<T>, amplitude: T, phase: T) -> Self {
        let dim = omega.len();
        let (w1, w2, w3) = (omega.clone(), omega.clone(), omega);
        Self::from_fns(
            dim,
            "cosine",
            move |x, _| amplitude * (dot(&w1, x) + phase).cos(),
            move |x, _| {
                let s = -amplitude * (dot(&w2, x) + phase).sin();
                w2.iter().map(|&w| s * w).collect()
            },
            move |x, _| SymMatrix::outer(&w3).scale(-amplitude * (dot(&w3, x) + phase).cos()),
        )
    }

    /// Field from a parsed expression; derivatives by fourth-order centered
    /// differences with step `1e-3`.
    pub fn from_expr(expr: Expr, dim: usize) -> Self {
        let e = Arc::new(expr);
        let label = e.source().to_string();
        let (e1, e2, e3) = (e.clone(), e.clone(), e);
        Self::from_fns(
            dim,
            label,
            move |x, t| e1.eval(x, t),
            move |x, t| fd_gradient(&|y: &[T]| e2.eval(y, t), x, T::lit(1.0e-3)),
            move |x, t| fd_hessian(&|y: &[T]| e3.eval(y, t), x, T::lit(1.0e-3)),
        )
    }
}

impl<T: Real> Field<T> for Analytic<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[T], t: T) -> T {
        (self.value)(x, t)
    }
    fn gradient(&self, x: &[T], t: T) -> Vec<T> {
        (self.gradient)(x, t)
    }
    fn hessian(&self, x: &[T], t: T) -> SymMatrix<T> {
        (self.hessian)(x, t)
    }
}

/// Fourth-order centered-difference gradient.
pub fn fd_gradient<T: Real>(f: &dyn Fn(&[T]) -> T, x: &[T], h: T) -> Vec<T> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let xi = x[i];
            let mut at = |s: T| {
                y[i] = xi + s * h;
                let v = f(&y);
                y[i] = xi;
                v
            };
            let (p1, m1, p2, m2) = (at(T::one()), at(-T::one()), at(T::lit(2.0)), at(T::lit(-2.0)));
            (T::lit(8.0) * (p1 - m1) - (p2 - m2)) / (T::lit(12.0) * h)
        })
        .collect()
}

/// Centered-difference Hessian (fourth order on the diagonal, second order
/// off the diagonal).
pub fn fd_hessian<T: Real>(f: &dyn Fn(&[T]) -> T, x: &[T], h: T) -> SymMatrix<T> {
    let n = x.len();
    let mut m = SymMatrix::zeros(n);
    let mut y = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        for j in i..n {
            if i == j {
                let mut at = |s: T| {
                    y[i] = x[i] + s * h;
                    let v = f(&y);
                    y[i] = x[i];
                    v
                };
                let (p1, m1, p2, m2) = (at(T::one()), at(-T::one()), at(T::lit(2.0)), at(T::lit(-2.0)));
                let v = (-(p2 + m2) + T::lit(16.0) * (p1 + m1) - T::lit(30.0) * f0) / (T::lit(12.0) * h * h);
                m.set(i, i, v);
            } else {
                let mut at = |si: T, sj: T| {
                    y[i] = x[i] + si * h;
                    y[j] = x[j] + sj * h;
                    let v = f(&y);
                    y[i] = x[i];
                    y[j] = x[j];
                    v
                };
                let one = T::one();
                let v = (at(one, one) - at(one, -one) - at(-one, one) + at(-one, -one)) / (T::lit(4.0) * h * h);
                m.set(i, j, v);
            }
        }
    }
    m
}

/// Exterior data `φ(x, t)` on the complement of the grid box.
#[derive(Clone)]
pub struct Exterior<T> {
    f: ScalarFn<T>,
    time_dependent: bool,
    label: String,
}

impl<T> fmt::Debug for Exterior<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Exterior({})", self.label)
    }
}

impl<T: Real> Exterior<T> {
    pub fn new(label: impl Into<String>, time_dependent: bool, f: impl Fn(&[T], T) -> T + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), time_dependent, label: label.into() }
    }

    pub fn constant(c: T) -> Self {
        Self::new(format!("{c}"), false, move |_, _| c)
    }

    pub fn from_expr(e: Expr) -> Self {
        let td = e.depends_on_t();
        let label = e.source().to_string();
        Self::new(label, td, move |x, t| e.eval(x, t))
    }

    #[inline]
    pub fn eval(&self, x: &[T], t: T) -> T {
        (self.f)(x, t)
    }

    pub fn is_time_dependent(&self) -> bool {
        self.time_dependent
    }
}

/// How a grid function is extended outside its box.
#[derive(Debug, Clone)]
pub enum Boundary<T> {
    /// Prescribed exterior values; nodes sit at cell centers.
    Dirichlet(Exterior<T>),
    /// Periodic wrap; nodes sit at `lower + i h`.
    Periodic,
}

/// Uniform tensor grid on a box.
#[derive(Debug, Clone)]
pub struct Grid<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    cells: Vec<usize>,
    periodic: bool,
}

impl<T: Real> Grid<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>, cells: Vec<usize>, periodic: bool) -> Result<Self> {
        let n = lower.len();
        if n == 0 || n > 3 {
            return Err(Error::UnsupportedDimension(n));
        }
        if upper.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: upper.len() });
        }
        if cells.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: cells.len() });
        }
        for k in 0..n {
            if !(upper[k] > lower[k]) {
                return Err(Error::InvalidParameter(format!("empty box along axis {k}")));
            }
            if cells[k] == 0 {
                return Err(Error::InvalidParameter(format!("zero cells along axis {k}")));
            }
        }
        Ok(Self { lower, upper, cells, periodic })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> T {
        (self.upper[axis] - self.lower[axis]) / T::from_usize_lossy(self.cells[axis])
    }

    pub fn spacings(&self) -> Vec<T> {
        (0..self.dim()).map(|k| self.spacing(k)).collect()
    }

    /// Offset of node 0 from `lower` in units of `h`.
    fn node_shift(&self) -> T {
        if self.periodic {
            T::zero()
        } else {
            T::lit(0.5)
        }
    }

    /// Coordinate of (possibly out-of-range) node index `i` along `axis`.
    pub fn coord(&self, axis: usize, i: isize) -> T {
        let fi = T::from_f64(i as f64).unwrap_or(T::zero());
        self.lower[axis] + (fi + self.node_shift()) * self.spacing(axis)
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let n = self.dim();
        let mut idx = vec![0; n];
        for k in (0..n).rev() {
            idx[k] = flat % self.cells[k];
            flat /= self.cells[k];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.cells).fold(0, |acc, (&i, &c)| acc * c + i)
    }

    pub fn node(&self, flat: usize) -> Vec<T> {
        self.unravel(flat).iter().enumerate().map(|(k, &i)| self.coord(k, i as isize)).collect()
    }

    pub fn nodes(&self) -> Vec<Vec<T>> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    /// Whether `x` lies in the closed box.
    pub fn contains(&self, x: &[T]) -> bool {
        x.iter().enumerate().all(|(k, &v)| v >= self.lower[k] && v <= self.upper[k])
    }

    /// Flat index after wrapping or `None` when outside (Dirichlet).
    pub fn resolve(&self, idx: &[isize]) -> Option<usize> {
        let mut flat = 0usize;
        for (k, &i) in idx.iter().enumerate() {
            let c = self.cells[k] as isize;
            let j = if self.periodic {
                i.rem_euclid(c)
            } else if i < 0 || i >= c {
                return None;
            } else {
                i
            };
            flat = flat * self.cells[k] + j as usize;
        }
        Some(flat)
    }
}

/// Grid function at a single time level together with its exterior extension.
#[derive(Debug, Clone)]
pub struct GridField<T> {
    grid: Grid<T>,
    boundary: Boundary<T>,
    values: Vec<T>,
    time: T,
}

impl<T: Real> GridField<T> {
    pub fn new(grid: Grid<T>, boundary: Boundary<T>, values: Vec<T>, time: T) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        match (&boundary, grid.is_periodic()) {
            (Boundary::Periodic, false) | (Boundary::Dirichlet(_), true) => {
                return Err(Error::InvalidParameter("boundary mode disagrees with grid".into()))
            }
            _ => {}
        }
        Ok(Self { grid, boundary, values, time })
    }

    /// Samples `f(·, t)` at the grid nodes.
    pub fn sample(grid: Grid<T>, boundary: Boundary<T>, t: T, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.node(i))).collect();
        Self::new(grid, boundary, values, t)
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn boundary(&self) -> &Boundary<T> {
        &self.boundary
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn set_time(&mut self, t: T) {
        self.time = t;
    }

    /// Value at an integer node index, reading the exterior for Dirichlet
    /// ghost nodes.
    pub fn at_index(&self, idx: &[isize], t: T) -> T {
        match self.grid.resolve(idx) {
            Some(flat) => self.values[flat],
            None => match &self.boundary {
                Boundary::Dirichlet(phi) => {
                    let x: Vec<T> = idx.iter().enumerate().map(|(k, &i)| self.grid.coord(k, i)).collect();
                    phi.eval(&x, t)
                }
                Boundary::Periodic => unreachable!("periodic grids resolve every index"),
            },
        }
    }

    /// Multilinear interpolation; Dirichlet points outside the box read `φ`.
    pub fn interpolate(&self, x: &[T], t: T) -> T {
        if let Boundary::Dirichlet(phi) = &self.boundary {
            if !self.grid.contains(x) {
                return phi.eval(x, t);
            }
        }
        let n = self.grid.dim();
        let mut base = vec![0isize; n];
        let mut frac = vec![T::zero(); n];
        for k in 0..n {
            let s = (x[k] - self.grid.lower[k]) / self.grid.spacing(k) - self.grid.node_shift();
            let f = s.floor();
            base[k] = f.to_isize().unwrap_or(0);
            frac[k] = s - f;
        }
        let mut acc = T::zero();
        let mut idx = vec![0isize; n];
        for corner in 0..(1usize << n) {
            let mut w = T::one();
            for k in 0..n {
                let bit = (corner >> k) & 1;
                idx[k] = base[k] + bit as isize;
                w = w * if bit == 1 { frac[k] } else { T::one() - frac[k] };
            }
            if w != T::zero() {
                acc = acc + w * self.at_index(&idx, t);
            }
        }
        acc
    }
}

impl<T: Real> Field<T> for GridField<T> {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn value(&self, x: &[T], t: T) -> T {
        self.interpolate(x, t)
    }

    /// Centered differences of the interpolant with the grid spacing.
    fn gradient(&self, x: &[T], t: T) -> Vec<T> {
        let mut y = x.to_vec();
        (0..x.len())
            .map(|k| {
                let h = self.grid.spacing(k);
                y[k] = x[k] + h;
                let p = self.interpolate(&y, t);
                y[k] = x[k] - h;
                let m = self.interpolate(&y, t);
                y[k] = x[k];
                (p - m) / (T::lit(2.0) * h)
            })
            .collect()
    }

    fn hessian(&self, x: &[T], t: T) -> SymMatrix<T> {
        let n = x.len();
        let mut m = SymMatrix::zeros(n);
        let mut y = x.to_vec();
        let f0 = self.interpolate(x, t);
        for i in 0..n {
            let hi = self.grid.spacing(i);
            for j in i..n {
                let hj = self.grid.spacing(j);
                if i == j {
                    y[i] = x[i] + hi;
                    let p = self.interpolate(&y, t);
                    y[i] = x[i] - hi;
                    let q = self.interpolate(&y, t);
                    y[i] = x[i];
                    m.set(i, i, (p - T::lit(2.0) * f0 + q) / (hi * hi));
                } else {
                    let mut at = |si: T, sj: T| {
                        y[i] = x[i] + si * hi;
                        y[j] = x[j] + sj * hj;
                        let v = self.interpolate(&y, t);
                        y[i] = x[i];
                        y[j] = x[j];
                        v
                    };
                    let one = T::one();
                    let v = (at(one, one) - at(one, -one) - at(-one, one) + at(-one, -one)) / (T::lit(4.0) * hi * hj);
                    m.set(i, j, v);
                }
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_cosine_derivatives_match_fd() {
        let f = Analytic::cosine(vec![1.0, 2.0], 1.5, 0.3);
        let x = [0.4, -0.7];
        let g = f.gradient(&x, 0.0);
        let h = f.hessian(&x, 0.0);
        let gfd = fd_gradient(&|y: &[f64]| f.value(y, 0.0), &x, 1e-3);
        let hfd = fd_hessian(&|y: &[f64]| f.value(y, 0.0), &x, 1e-3);
        for k in 0..2 {
            assert!((g[k] - gfd[k]).abs() < 1e-9);
        }
        assert!(h.sub(&hfd).max_abs() < 1e-5);
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0], vec![3, 4, 5], false).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.ravel(&g.unravel(i)), i);
        }
        assert!((g.coord(0, 0) - 1.0f64 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn interpolation_reproduces_linear_functions() {
        let g = Grid::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![8, 8], false).unwrap();
        let lin = |x: &[f64]| 2.0 * x[0] - 0.5 * x[1] + 1.0;
        let phi = Exterior::new("lin", false, move |x: &[f64], _| 2.0 * x[0] - 0.5 * x[1] + 1.0);
        let u = GridField::sample(g, Boundary::Dirichlet(phi), 0.0, lin).unwrap();
        for x in [[0.13, -0.77], [0.99, 0.99], [-0.99, 0.5], [1.5, 0.0]] {
            assert!((u.value(&x, 0.0) - lin(&x)).abs() < 1e-13);
        }
        let grad = u.gradient(&[0.1, 0.2], 0.0);
        assert!((grad[0] - 2.0).abs() < 1e-12 && (grad[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn periodic_wrap() {
        let g = Grid::new(vec![0.0], vec![1.0], vec![4], true).unwrap();
        let u = GridField::new(g, Boundary::Periodic, vec![0.0, 1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(u.at_index(&[-1], 0.0), 3.0);
        assert_eq!(u.at_index(&[4], 0.0), 0.0);
        assert!((u.value(&[0.875], 0.0) - 1.5f64).abs() < 1e-14);
    }
}
