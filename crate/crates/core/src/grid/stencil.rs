//! Fourth-order periodic central differences.

use rayon::prelude::*;

use super::{FieldState, GridSpec};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

/// Scale factor of the stencil: `1/(12 dx)` or `1/(12 dx²)`.
fn scale<T: Real>(dx: f64, order: Order) -> T {
    match order {
        Order::First => T::lit(1.0 / (12.0 * dx)),
        Order::Second => T::lit(1.0 / (12.0 * dx * dx)),
    }
}

/// Stencil on the five samples `u_{−2}, …, u_{+2}`, written in symmetric
/// differences so constants give exactly zero.
#[inline(always)]
fn apply5<T: Real>(order: Order, s: T, m2: T, m1: T, c: T, p1: T, p2: T) -> T {
    match order {
        Order::First => s * ((m2 - p2) + T::lit(8.0) * (p1 - m1)),
        Order::Second => s * (T::lit(16.0) * (p1 + m1) - (p2 + m2) - T::lit(30.0) * c),
    }
}

/// Minimum number of samples per parallel task.
const MIN_TASK: usize = 4096;

/// `dst = D u` along `axis`.
pub fn derivative_into<T: Real>(grid: &GridSpec, u: &[T], axis: usize, order: Order, dst: &mut [T]) {
    debug_assert_eq!(u.len(), grid.cells());
    debug_assert_eq!(dst.len(), grid.cells());
    let sc = scale::<T>(grid.dx(), order);
    let np = grid.points();
    let s = grid.stride(axis);
    if s == 1 {
        let lines_per_task = (MIN_TASK / np).max(1);
        dst.par_chunks_mut(np)
            .zip(u.par_chunks(np))
            .with_min_len(lines_per_task)
            .for_each(|(d, line)| line_stencil(line, order, sc, d));
    } else {
        let rows_per_task = (MIN_TASK / s).max(1);
        let block = np * s;
        dst.par_chunks_mut(s).enumerate().with_min_len(rows_per_task).for_each(|(row, d)| {
            let base = (row / np) * block;
            let i = row % np;
            let r = |m: usize| {
                let ii = (i + np + m - 2) % np;
                &u[base + ii * s..base + ii * s + s]
            };
            let (r0, r1, r2, r3, r4) = (r(0), r(1), r(2), r(3), r(4));
            for k in 0..s {
                d[k] = apply5(order, sc, r0[k], r1[k], r2[k], r3[k], r4[k]);
            }
        });
    }
}

#[inline]
fn line_stencil<T: Real>(u: &[T], order: Order, sc: T, d: &mut [T]) {
    let np = u.len();
    let at = |i: usize| {
        let w = |m: usize| u[(i + np + m - 2) % np];
        apply5(order, sc, w(0), w(1), w(2), w(3), w(4))
    };
    d[0] = at(0);
    d[1] = at(1);
    for i in 2..np - 2 {
        d[i] = apply5(order, sc, u[i - 2], u[i - 1], u[i], u[i + 1], u[i + 2]);
    }
    d[np - 2] = at(np - 2);
    d[np - 1] = at(np - 1);
}

/// `D u` along `axis` as a new grid function.
pub fn derivative<T: Real>(grid: &GridSpec, u: &[T], axis: usize, order: Order) -> Vec<T> {
    let mut out = vec![T::zero(); u.len()];
    derivative_into(grid, u, axis, order, &mut out);
    out
}

/// `∂_a ∂_b u` for `a ≠ b` by composing first-derivative stencils
/// (`a == b` falls back to the second-derivative stencil).
pub fn mixed_derivative_into<T: Real>(
    grid: &GridSpec,
    u: &[T],
    a: usize,
    b: usize,
    tmp: &mut [T],
    dst: &mut [T],
) {
    if a == b {
        derivative_into(grid, u, a, Order::Second, dst);
    } else {
        derivative_into(grid, u, b, Order::First, tmp);
        derivative_into(grid, tmp, a, Order::First, dst);
    }
}

pub fn mixed_derivative<T: Real>(grid: &GridSpec, u: &[T], a: usize, b: usize) -> Vec<T> {
    let mut tmp = vec![T::zero(); u.len()];
    let mut out = vec![T::zero(); u.len()];
    mixed_derivative_into(grid, u, a, b, &mut tmp, &mut out);
    out
}

/// Derivative of a single field of a state.
pub fn spatial_derivative<T: Real>(state: &FieldState<T>, field: usize, axis: usize, order: Order) -> Vec<T> {
    derivative(&state.grid, state.field(field), axis, order)
}

/// The same stencil evaluated at one cell.
pub fn derivative_at<T: Real>(grid: &GridSpec, u: &[T], cell: usize, axis: usize, order: Order) -> T {
    let np = grid.points();
    let s = grid.stride(axis);
    let i = (cell / s) % np;
    let base = cell - i * s;
    let w = |m: usize| u[base + ((i + np + m - 2) % np) * s];
    apply5(order, scale::<T>(grid.dx(), order), w(0), w(1), w(2), w(3), w(4))
}
