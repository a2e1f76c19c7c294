//! Time jets: a grid function together with its first few time derivatives.

use crate::error::{Error, Result};
use crate::evolution::{Dynamics, Rhs, RhsStats};
use crate::grid::{derivative_into, FieldState, GridSpec, Order};
use crate::scalar::{Dual, Real};

/// `d[j] = ∂_t^j u` at time `t`, each with `grid.q()` blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeJet<T> {
    pub grid: GridSpec,
    pub t: f64,
    pub d: Vec<Vec<T>>,
}

impl<T: Real> TimeJet<T> {
    pub fn new(grid: GridSpec, t: f64, d: Vec<Vec<T>>) -> Result<Self> {
        let len = grid.q() * grid.cells();
        if d.is_empty() || d.iter().any(|x| x.len() != len) {
            return Err(Error::Shape(format!("jet levels must each hold {len} samples")));
        }
        Ok(Self { grid, t, d })
    }

    /// Sample `u(j, cell, block) = ∂_t^j u^{block}(t, x_cell)`.
    pub fn from_fn(grid: GridSpec, t: f64, order: usize, u: impl Fn(usize, usize, usize) -> T) -> Self {
        let cells = grid.cells();
        let d = (0..=order)
            .map(|j| (0..grid.q() * cells).map(|k| u(j, k % cells, k / cells)).collect())
            .collect();
        Self { grid, t, d }
    }

    /// Highest time derivative held.
    pub fn order(&self) -> usize {
        self.d.len() - 1
    }

    pub fn value(&self) -> &[T] {
        &self.d[0]
    }

    pub fn blocks(&self) -> usize {
        self.grid.q()
    }

    /// One block as a single-field jet.
    pub fn block(&self, i: usize) -> TimeJet<T> {
        let c = self.grid.cells();
        let grid = GridSpec::new(self.grid.n(), 1, self.grid.half_width(), self.grid.points()).expect("valid");
        TimeJet { grid, t: self.t, d: self.d.iter().map(|x| x[i * c..(i + 1) * c].to_vec()).collect() }
    }

    /// Keep derivatives up to `order`.
    pub fn truncated(&self, order: usize) -> Self {
        Self { grid: self.grid, t: self.t, d: self.d[..=order.min(self.order())].to_vec() }
    }

    /// `∂_a` of every level, blockwise.
    pub fn spatial(&self, axis: usize, levels: usize) -> Vec<Vec<T>> {
        let c = self.grid.cells();
        (0..levels.min(self.d.len()))
            .map(|j| {
                let mut out = vec![T::zero(); self.d[j].len()];
                for b in 0..self.blocks() {
                    derivative_into(&self.grid, &self.d[j][b * c..(b + 1) * c], axis, Order::First, &mut out[b * c..(b + 1) * c]);
                }
                out
            })
            .collect()
    }

    /// `∂_μ u` as a jet one order lower.
    pub fn partial(&self, mu: usize) -> Self {
        assert!(self.order() >= 1, "partial derivative needs a jet of order >= 1");
        let d = if mu == 0 { self.d[1..].to_vec() } else { self.spatial(mu - 1, self.order()) };
        Self { grid: self.grid, t: self.t, d }
    }

    /// Blockwise product by the Leibniz rule; order is the smaller of the two.
    pub fn mul(&self, o: &Self) -> Self {
        let k = self.order().min(o.order());
        let len = self.d[0].len();
        let d = (0..=k)
            .map(|j| {
                let mut out = vec![T::zero(); len];
                for i in 0..=j {
                    let c = T::lit(binom(j, i) as f64);
                    for (x, (a, b)) in out.iter_mut().zip(self.d[i].iter().zip(&o.d[j - i])) {
                        *x += c * *a * *b;
                    }
                }
                out
            })
            .collect();
        Self { grid: self.grid, t: self.t, d }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { grid: self.grid, t: self.t, d: self.d.iter().map(|x| x.iter().map(|&y| s * y).collect()).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        let k = self.order().min(o.order());
        Self {
            grid: self.grid,
            t: self.t,
            d: (0..=k).map(|j| self.d[j].iter().zip(&o.d[j]).map(|(a, b)| *a + *b).collect()).collect(),
        }
    }

    /// `□u = −∂_t²u + Δu`, two orders lower.
    pub fn wave(&self) -> Self {
        assert!(self.order() >= 2, "wave operator needs a jet of order >= 2");
        let k = self.order() - 2;
        let c = self.grid.cells();
        let mut d: Vec<Vec<T>> = (0..=k).map(|j| self.d[j + 2].iter().map(|&x| -x).collect()).collect();
        let mut tmp = vec![T::zero(); c];
        for (j, dj) in d.iter_mut().enumerate() {
            for b in 0..self.blocks() {
                for a in 0..self.grid.n() {
                    derivative_into(&self.grid, &self.d[j][b * c..(b + 1) * c], a, Order::Second, &mut tmp);
                    for (x, y) in dj[b * c..(b + 1) * c].iter_mut().zip(&tmp) {
                        *x += *y;
                    }
                }
            }
        }
        Self { grid: self.grid, t: self.t, d }
    }
}

pub(crate) fn binom(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Jet of the evolved fields up to `order ≤ 3`, with time derivatives from
/// the equation: `∂_tt f` is the right-hand side and `∂_ttt f` its exact
/// directional derivative along `(v, ∂_tt f)`.
pub fn state_jet(state: &FieldState<f64>, dynamics: Dynamics, order: usize) -> Result<TimeJet<f64>> {
    Ok(state_jet_with_stats(state, dynamics, order)?.0)
}

/// [`state_jet`] plus the statistics of the right-hand-side evaluation
/// (absent for `order < 2`).
pub fn state_jet_with_stats(
    state: &FieldState<f64>,
    dynamics: Dynamics,
    order: usize,
) -> Result<(TimeJet<f64>, Option<RhsStats>)> {
    if order > 3 {
        return Err(Error::validation("order", "time jets are available up to order 3"));
    }
    let grid = state.grid;
    let mut d = vec![state.fields().to_vec()];
    if order >= 1 {
        d.push(state.velocities().to_vec());
    }
    let mut stats = None;
    if order >= 2 {
        let mut a = vec![0.0; state.fields().len()];
        stats = Some(Rhs::new(grid, dynamics).eval(state.t, state.fields(), state.velocities(), &mut a)?);
        d.push(a);
    }
    if order >= 3 {
        let f: Vec<Dual<f64>> = state.fields().iter().zip(state.velocities()).map(|(&x, &y)| Dual::new(x, y)).collect();
        let v: Vec<Dual<f64>> = state.velocities().iter().zip(&d[2]).map(|(&x, &y)| Dual::new(x, y)).collect();
        let mut out = vec![Dual::<f64>::default(); f.len()];
        Rhs::new(grid, dynamics).eval(state.t, &f, &v, &mut out)?;
        d.push(out.iter().map(|x| x.eps).collect());
    }
    Ok((TimeJet::new(grid, state.t, d)?, stats))
}
