//! Periodic spatial grid and the discrete field state.
//!
//! The box is `[−L, L)^n` sampled at `x_i = −L + i·dx`, `dx = 2L/N`. Storage is
//! row-major with axis 0 slowest; each of the `q` fields occupies one
//! contiguous block of `N^n` samples.

mod reduce;
mod stencil;

pub use reduce::{reduce_norm, tree_max, tree_sum, NormKind};
pub use stencil::{
    derivative, derivative_at, derivative_into, mixed_derivative, mixed_derivative_into,
    spatial_derivative, Order,
};

use crate::error::{Error, Result};
use crate::geometry::{FirstJet, MAX_DIM};
use crate::scalar::Real;

/// Largest supported number of spatial dimensions.
pub const MAX_SPATIAL: usize = MAX_DIM - 1;

/// Shape of the periodic box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    n: usize,
    q: usize,
    half_width: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(n: usize, q: usize, half_width: f64, points: usize) -> Result<Self> {
        if n == 0 || n > MAX_SPATIAL {
            return Err(Error::InvalidGrid(format!("n = {n} outside 1..={MAX_SPATIAL}")));
        }
        if q == 0 {
            return Err(Error::InvalidGrid("q must be at least 1".into()));
        }
        if points < 16 || points % 2 != 0 {
            return Err(Error::InvalidGrid(format!("N = {points} must be even and >= 16")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("L = {half_width} must be positive")));
        }
        if (points as f64).powi(n as i32) > 1e10 {
            return Err(Error::InvalidGrid(format!("N^n = {points}^{n} is too large")));
        }
        Ok(Self { n, q, half_width, points })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    #[inline]
    pub fn points(&self) -> usize {
        self.points
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Number of cells `N^n`.
    #[inline]
    pub fn cells(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    /// Cell volume `dx^n`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.n as i32)
    }

    /// Distance in memory between neighbours along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points.pow((self.n - 1 - axis) as u32)
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx()
    }

    /// Integer coordinates of a cell.
    #[inline]
    pub fn unravel(&self, cell: usize) -> [usize; MAX_SPATIAL] {
        let mut idx = [0; MAX_SPATIAL];
        let mut rem = cell;
        for axis in (0..self.n).rev() {
            idx[axis] = rem % self.points;
            rem /= self.points;
        }
        idx
    }

    /// Cell at integer coordinates, wrapped periodically.
    #[inline]
    pub fn ravel(&self, idx: &[isize]) -> usize {
        let np = self.points as isize;
        idx.iter().take(self.n).fold(0usize, |acc, &i| acc * self.points + i.rem_euclid(np) as usize)
    }

    /// Spatial position of a cell.
    #[inline]
    pub fn position(&self, cell: usize) -> [f64; MAX_SPATIAL] {
        let idx = self.unravel(cell);
        let mut x = [0.0; MAX_SPATIAL];
        for a in 0..self.n {
            x[a] = self.coord(idx[a]);
        }
        x
    }

    /// Distance from `cell` to the nearest periodic seam, in cells.
    #[inline]
    pub fn seam_distance(&self, cell: usize) -> usize {
        let idx = self.unravel(cell);
        (0..self.n).map(|a| idx[a].min(self.points - 1 - idx[a])).min().unwrap_or(0)
    }

    /// Light cone of data supported in `|x| ≤ r_support` must not wrap
    /// before `t_final`: `L ≥ r_support + t_final + 5 dx`.
    pub fn check_no_wrap(&self, r_support: f64, t_final: f64) -> Result<()> {
        let need = r_support + t_final + 5.0 * self.dx();
        if self.half_width < need {
            return Err(Error::validation(
                "L",
                format!(
                    "L = {} < r_support + t_final + 5 dx = {r_support} + {t_final} + {} = {need}",
                    self.half_width,
                    5.0 * self.dx()
                ),
            ));
        }
        Ok(())
    }

    /// Same box with `points` replaced.
    pub fn with_points(&self, points: usize) -> Result<Self> {
        Self::new(self.n, self.q, self.half_width, points)
    }
}

/// Fields `f^I` and velocities `v^I = ∂_t f^I` on the grid at time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState<T> {
    pub grid: GridSpec,
    pub t: f64,
    f: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> FieldState<T> {
    pub fn zeros(grid: GridSpec, t: f64) -> Self {
        let len = grid.q() * grid.cells();
        Self { grid, t, f: vec![T::zero(); len], v: vec![T::zero(); len] }
    }

    /// Build from raw arrays (`q` blocks of `N^n` samples each).
    pub fn from_parts(grid: GridSpec, t: f64, f: Vec<T>, v: Vec<T>) -> Result<Self> {
        let len = grid.q() * grid.cells();
        if f.len() != len || v.len() != len {
            return Err(Error::Shape(format!(
                "state arrays have {} / {} samples, grid needs {len}",
                f.len(),
                v.len()
            )));
        }
        Ok(Self { grid, t, f, v })
    }

    #[inline]
    pub fn field(&self, i: usize) -> &[T] {
        let c = self.grid.cells();
        &self.f[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn velocity(&self, i: usize) -> &[T] {
        let c = self.grid.cells();
        &self.v[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn field_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.grid.cells();
        &mut self.f[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn velocity_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.grid.cells();
        &mut self.v[i * c..(i + 1) * c]
    }

    pub fn fields(&self) -> &[T] {
        &self.f
    }

    pub fn velocities(&self) -> &[T] {
        &self.v
    }

    pub fn fields_mut(&mut self) -> &mut [T] {
        &mut self.f
    }

    pub fn velocities_mut(&mut self) -> &mut [T] {
        &mut self.v
    }

    /// Sample of field `i` at integer coordinates, wrapped periodically.
    pub fn sample(&self, i: usize, idx: &[isize]) -> T {
        self.field(i)[self.grid.ravel(idx)]
    }

    /// First non-finite sample, if any, as a cell index.
    pub fn first_non_finite(&self) -> Option<usize> {
        let c = self.grid.cells();
        self.f.iter().chain(self.v.iter()).position(|x| !x.is_finite()).map(|k| k % c)
    }

    /// Elementwise conversion to another scalar type.
    pub fn convert<U: Real>(&self, mut g: impl FnMut(T) -> U) -> FieldState<U> {
        FieldState {
            grid: self.grid,
            t: self.t,
            f: self.f.iter().map(|&x| g(x)).collect(),
            v: self.v.iter().map(|&x| g(x)).collect(),
        }
    }

    /// `(f, v) ↦ (f, −v)`: the state of the time-reversed solution.
    pub fn time_reversed(&self) -> Self {
        let mut s = self.clone();
        for x in s.v.iter_mut() {
            *x = -*x;
        }
        s.t = -s.t;
        s
    }

    /// First jet at a cell: `∂_t f = v`, `∂_k f` from the 4th-order stencil.
    pub fn first_jet_at(&self, cell: usize) -> FirstJet<T> {
        let (n, q) = (self.grid.n(), self.grid.q());
        let mut df = vec![T::zero(); (n + 1) * q];
        for i in 0..q {
            df[i] = self.velocity(i)[cell];
            for k in 0..n {
                df[(k + 1) * q + i] = derivative_at(&self.grid, self.field(i), cell, k, Order::First);
            }
        }
        FirstJet::new(n, q, df).expect("grid shape gives a valid jet")
    }
}
