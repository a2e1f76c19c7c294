//! Method-of-lines evolution of `H^{μν}_{JL} ∂_μ∂_ν f^J = 0`.
//!
//! The right-hand side solves the `q × q` block `H^{00}` at every cell for
//! `∂_tt f`; RK4 advances `(f, v)`. The coercivity margin is checked at every
//! stage and its loss ends the run.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CoefficientForm, GeomScratch};
use crate::grid::{derivative_into, reduce_norm, FieldState, GridSpec, NormKind, Order};
use crate::scalar::Real;

/// Cells per parallel task. Fixed so the partition never depends on the
/// thread count.
const CHUNK: usize = 2048;

/// Which operator is evolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dynamics {
    Nonlinear(CoefficientForm),
    /// `□f = 0`, i.e. `H = η δ`.
    Linear,
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics::Nonlinear(CoefficientForm::default())
    }
}

/// Grid-wide by-products of one right-hand-side evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhsStats {
    pub min_margin: f64,
    pub argmin: usize,
    pub max_abs_ddf: f64,
}

impl RhsStats {
    fn merge(self, o: Self) -> Self {
        let (min_margin, argmin) = if o.min_margin < self.min_margin { (o.min_margin, o.argmin) } else { (self.min_margin, self.argmin) };
        Self { min_margin, argmin, max_abs_ddf: self.max_abs_ddf.max(o.max_abs_ddf) }
    }
}

#[inline]
fn pair_index(n: usize, j: usize, k: usize) -> usize {
    let (j, k) = if j <= k { (j, k) } else { (k, j) };
    j * n - j * (j + 1) / 2 + k
}

/// Spatial derivative buffers for one evaluation.
#[derive(Clone, Debug)]
struct Derivs<T> {
    /// `fx[J * n + k] = ∂_k f^J`
    fx: Vec<Vec<T>>,
    /// `vx[J * n + k] = ∂_k v^J`
    vx: Vec<Vec<T>>,
    /// `fxx[J * pairs + pair_index(j, k)] = ∂_j ∂_k f^J`
    fxx: Vec<Vec<T>>,
}

impl<T: Real> Derivs<T> {
    fn new(grid: &GridSpec) -> Self {
        let (n, q, c) = (grid.n(), grid.q(), grid.cells());
        let pairs = n * (n + 1) / 2;
        Self {
            fx: vec![vec![T::zero(); c]; n * q],
            vx: vec![vec![T::zero(); c]; n * q],
            fxx: vec![vec![T::zero(); c]; pairs * q],
        }
    }

    fn fill(&mut self, grid: &GridSpec, f: &[T], v: &[T]) {
        let (n, q, c) = (grid.n(), grid.q(), grid.cells());
        let pairs = n * (n + 1) / 2;
        for i in 0..q {
            let fi = &f[i * c..(i + 1) * c];
            let vi = &v[i * c..(i + 1) * c];
            for k in 0..n {
                derivative_into(grid, fi, k, Order::First, &mut self.fx[i * n + k]);
                derivative_into(grid, vi, k, Order::First, &mut self.vx[i * n + k]);
            }
            for j in 0..n {
                for k in j..n {
                    let dst = &mut self.fxx[i * pairs + pair_index(n, j, k)];
                    if j == k {
                        derivative_into(grid, fi, k, Order::Second, dst);
                    } else {
                        derivative_into(grid, &self.fx[i * n + k], j, Order::First, dst);
                    }
                }
            }
        }
    }
}

/// Solve `A x = b` in place (`b` becomes `x`), `A` row-major `q × q`.
/// Closed form for `q ≤ 3`, partial pivoting (ties to the lowest row) above.
fn solve_block<T: Real>(q: usize, a: &mut [T], b: &mut [T]) -> bool {
    let tiny = T::lit(1e-300);
    match q {
        1 => {
            if a[0].abs() <= tiny {
                return false;
            }
            b[0] = b[0] / a[0];
            true
        }
        2 => {
            let det = a[0] * a[3] - a[1] * a[2];
            if det.abs() <= tiny {
                return false;
            }
            let (b0, b1) = (b[0], b[1]);
            b[0] = (a[3] * b0 - a[1] * b1) / det;
            b[1] = (a[0] * b1 - a[2] * b0) / det;
            true
        }
        3 => {
            let c00 = a[4] * a[8] - a[5] * a[7];
            let c01 = a[5] * a[6] - a[3] * a[8];
            let c02 = a[3] * a[7] - a[4] * a[6];
            let det = a[0] * c00 + a[1] * c01 + a[2] * c02;
            if det.abs() <= tiny {
                return false;
            }
            let c10 = a[2] * a[7] - a[1] * a[8];
            let c11 = a[0] * a[8] - a[2] * a[6];
            let c12 = a[1] * a[6] - a[0] * a[7];
            let c20 = a[1] * a[5] - a[2] * a[4];
            let c21 = a[2] * a[3] - a[0] * a[5];
            let c22 = a[0] * a[4] - a[1] * a[3];
            let (b0, b1, b2) = (b[0], b[1], b[2]);
            // x = adj(A) b / det, adj = cofactorᵀ
            b[0] = (c00 * b0 + c10 * b1 + c20 * b2) / det;
            b[1] = (c01 * b0 + c11 * b1 + c21 * b2) / det;
            b[2] = (c02 * b0 + c12 * b1 + c22 * b2) / det;
            true
        }
        _ => {
            for col in 0..q {
                let mut p = col;
                for r in col + 1..q {
                    if a[r * q + col].abs() > a[p * q + col].abs() {
                        p = r;
                    }
                }
                if a[p * q + col].abs() <= tiny {
                    return false;
                }
                if p != col {
                    for k in 0..q {
                        a.swap(p * q + k, col * q + k);
                    }
                    b.swap(p, col);
                }
                let piv = a[col * q + col];
                for r in col + 1..q {
                    let m = a[r * q + col] / piv;
                    if m != T::zero() {
                        for k in col..q {
                            let t = a[col * q + k];
                            a[r * q + k] -= m * t;
                        }
                        let t = b[col];
                        b[r] -= m * t;
                    }
                }
            }
            for r in (0..q).rev() {
                let mut s = b[r];
                for k in r + 1..q {
                    s -= a[r * q + k] * b[k];
                }
                b[r] = s / a[r * q + r];
            }
            true
        }
    }
}

/// Per-cell buffers.
struct CellScratch<T> {
    geom: GeomScratch<T>,
    df: Vec<T>,
    a: Vec<T>,
    b: Vec<T>,
}

impl<T: Real> CellScratch<T> {
    fn new(n: usize, q: usize) -> Self {
        Self {
            geom: GeomScratch::new(n, q),
            df: vec![T::zero(); (n + 1) * q],
            a: vec![T::zero(); q * q],
            b: vec![T::zero(); q],
        }
    }
}

/// Assemble `A_{LJ} = H^{00}_{JL}` and
/// `b_L = −Σ_J (2 H^{0k}_{JL} ∂_k v^J + H^{jk}_{JL} ∂_j∂_k f^J)` at one cell.
/// Returns the coercivity margin.
#[inline]
fn assemble<T: Real>(
    grid: &GridSpec,
    dynamics: Dynamics,
    d: &Derivs<T>,
    v: &[T],
    cell: usize,
    t: f64,
    s: &mut CellScratch<T>,
) -> Result<T> {
    let (n, q, cells) = (grid.n(), grid.q(), grid.cells());
    let pairs = n * (n + 1) / 2;
    match dynamics {
        Dynamics::Linear => {
            for l in 0..q {
                for j in 0..q {
                    s.a[l * q + j] = if j == l { -T::one() } else { T::zero() };
                }
                let mut lap = T::zero();
                for k in 0..n {
                    lap += d.fxx[l * pairs + pair_index(n, k, k)][cell];
                }
                s.b[l] = -lap;
            }
            Ok(T::lit(0.5))
        }
        Dynamics::Nonlinear(form) => {
            for j in 0..q {
                s.df[j] = v[j * cells + cell];
                for k in 0..n {
                    s.df[(k + 1) * q + j] = d.fx[j * n + k][cell];
                }
            }
            if let Err(e) = s.geom.metric(&s.df) {
                return Err(match e {
                    Error::SpacelikeDegeneration { .. } => Error::CoercivityLost { cell, t, margin: f64::NEG_INFINITY },
                    e => e,
                });
            }
            s.geom.coefficients(&s.df, form);
            let margin = s.geom.margin();
            if !(margin.primal() > 0.0) {
                return Err(Error::CoercivityLost { cell, t, margin: margin.primal() });
            }
            let g = &s.geom;
            let two = T::lit(2.0);
            for l in 0..q {
                let mut acc = T::zero();
                for j in 0..q {
                    s.a[l * q + j] = g.h_at(0, 0, j, l);
                    for k in 0..n {
                        acc += two * g.h_at(0, k + 1, j, l) * d.vx[j * n + k][cell];
                        acc += g.h_at(k + 1, k + 1, j, l) * d.fxx[j * pairs + pair_index(n, k, k)][cell];
                        for m in k + 1..n {
                            acc += two * g.h_at(k + 1, m + 1, j, l) * d.fxx[j * pairs + pair_index(n, k, m)][cell];
                        }
                    }
                }
                s.b[l] = -acc;
            }
            Ok(margin)
        }
    }
}

/// Reusable evaluator of `∂_tt f = RHS(f, v)`.
#[derive(Clone, Debug)]
pub struct Rhs<T> {
    grid: GridSpec,
    dynamics: Dynamics,
    d: Derivs<T>,
    inter: Vec<T>,
}

impl<T: Real> Rhs<T> {
    pub fn new(grid: GridSpec, dynamics: Dynamics) -> Self {
        Self { grid, dynamics, d: Derivs::new(&grid), inter: vec![T::zero(); grid.q() * grid.cells()] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dynamics(&self) -> Dynamics {
        self.dynamics
    }

    /// `out = ∂_tt f` for the raw arrays `f`, `v` (q blocks each).
    pub fn eval(&mut self, t: f64, f: &[T], v: &[T], out: &mut [T]) -> Result<RhsStats> {
        let grid = self.grid;
        let (n, q, cells) = (grid.n(), grid.q(), grid.cells());
        if let Some(k) = f.iter().chain(v).position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { cell: k % cells, t });
        }
        self.d.fill(&grid, f, v);
        let dynamics = self.dynamics;
        let d = &self.d;
        let results: Vec<Result<RhsStats>> = self
            .inter
            .par_chunks_mut(CHUNK * q)
            .enumerate()
            .map(|(ci, chunk)| {
                let mut s = CellScratch::new(n, q);
                let c0 = ci * CHUNK;
                let mut st = RhsStats { min_margin: f64::INFINITY, argmin: c0, max_abs_ddf: 0.0 };
                for (k, out) in chunk.chunks_mut(q).enumerate() {
                    let cell = c0 + k;
                    let margin = assemble(&grid, dynamics, d, v, cell, t, &mut s)?;
                    if !solve_block(q, &mut s.a, &mut s.b) {
                        return Err(Error::SingularBlock { cell });
                    }
                    for l in 0..q {
                        if !s.b[l].is_finite() {
                            return Err(Error::NonFinite { cell, t });
                        }
                        out[l] = s.b[l];
                        st.max_abs_ddf = st.max_abs_ddf.max(s.b[l].primal().abs());
                    }
                    let m = margin.primal();
                    if m < st.min_margin {
                        st.min_margin = m;
                        st.argmin = cell;
                    }
                }
                Ok(st)
            })
            .collect();
        let mut stats = RhsStats { min_margin: f64::INFINITY, argmin: 0, max_abs_ddf: 0.0 };
        for r in results {
            stats = stats.merge(r?);
        }
        if q == 1 {
            out.copy_from_slice(&self.inter);
        } else {
            for c in 0..cells {
                for l in 0..q {
                    out[l * cells + c] = self.inter[c * q + l];
                }
            }
        }
        Ok(stats)
    }

    /// `H^{μν}_{JL} ∂_μ∂_ν f^J` per field with `∂_tt f` supplied, as used
    /// for residuals of known solutions.
    pub fn residual(&mut self, t: f64, f: &[T], v: &[T], ftt: &[T]) -> Result<Vec<T>> {
        let grid = self.grid;
        let (n, q, cells) = (grid.n(), grid.q(), grid.cells());
        self.d.fill(&grid, f, v);
        let mut s = CellScratch::new(n, q);
        let mut res = vec![T::zero(); q * cells];
        for cell in 0..cells {
            assemble(&grid, self.dynamics, &self.d, v, cell, t, &mut s)?;
            for l in 0..q {
                let mut r = -s.b[l];
                for j in 0..q {
                    r += s.a[l * q + j] * ftt[j * cells + cell];
                }
                res[l * cells + cell] = r;
            }
        }
        Ok(res)
    }
}

/// `∂_tt f` of a state.
pub fn second_time_derivative<T: Real>(state: &FieldState<T>, dynamics: Dynamics) -> Result<Vec<T>> {
    let mut rhs = Rhs::new(state.grid, dynamics);
    let mut out = vec![T::zero(); state.fields().len()];
    rhs.eval(state.t, state.fields(), state.velocities(), &mut out)?;
    Ok(out)
}

/// RK4 stepper with owned stage buffers.
#[derive(Clone, Debug)]
pub struct Stepper<T> {
    rhs: Rhs<T>,
    a1: Vec<T>,
    a: Vec<T>,
    fs: Vec<T>,
    vs: Vec<T>,
    acc_f: Vec<T>,
    acc_v: Vec<T>,
}

impl<T: Real> Stepper<T> {
    pub fn new(grid: GridSpec, dynamics: Dynamics) -> Self {
        let len = grid.q() * grid.cells();
        let z = vec![T::zero(); len];
        Self {
            rhs: Rhs::new(grid, dynamics),
            a1: z.clone(),
            a: z.clone(),
            fs: z.clone(),
            vs: z.clone(),
            acc_f: z.clone(),
            acc_v: z,
        }
    }

    pub fn rhs(&mut self) -> &mut Rhs<T> {
        &mut self.rhs
    }

    /// First stage: evaluates the right-hand side at `state` and keeps it.
    pub fn begin(&mut self, state: &FieldState<T>) -> Result<RhsStats> {
        self.rhs.eval(state.t, state.fields(), state.velocities(), &mut self.a1)
    }

    /// Remaining stages after [`Self::begin`] on the same state.
    pub fn finish(&mut self, state: &FieldState<T>, dt: f64, t_new: f64) -> Result<FieldState<T>> {
        let f = state.fields();
        let v = state.velocities();
        let h = T::lit(dt);
        let half = T::lit(0.5 * dt);
        let two = T::lit(2.0);
        let len = f.len();
        // stage 2
        for k in 0..len {
            self.fs[k] = f[k] + half * v[k];
            self.vs[k] = v[k] + half * self.a1[k];
            self.acc_f[k] = v[k] + two * self.vs[k];
            self.acc_v[k] = self.a1[k];
        }
        let t = state.t;
        self.rhs.eval(t + 0.5 * dt, &self.fs, &self.vs, &mut self.a)?;
        // stage 3
        for k in 0..len {
            self.acc_v[k] += two * self.a[k];
            self.fs[k] = f[k] + half * self.vs[k];
            self.vs[k] = v[k] + half * self.a[k];
            self.acc_f[k] += two * self.vs[k];
        }
        self.rhs.eval(t + 0.5 * dt, &self.fs, &self.vs, &mut self.a)?;
        // stage 4
        for k in 0..len {
            self.acc_v[k] += two * self.a[k];
            self.fs[k] = f[k] + h * self.vs[k];
            self.vs[k] = v[k] + h * self.a[k];
            self.acc_f[k] += self.vs[k];
        }
        self.rhs.eval(t + dt, &self.fs, &self.vs, &mut self.a)?;
        let sixth = T::lit(dt / 6.0);
        let mut nf = vec![T::zero(); len];
        let mut nv = vec![T::zero(); len];
        for k in 0..len {
            nf[k] = f[k] + sixth * self.acc_f[k];
            nv[k] = v[k] + sixth * (self.acc_v[k] + self.a[k]);
        }
        FieldState::from_parts(state.grid, t_new, nf, nv)
    }

    pub fn step(&mut self, state: &FieldState<T>, dt: f64) -> Result<FieldState<T>> {
        self.begin(state)?;
        self.finish(state, dt, state.t + dt)
    }
}

/// One classical RK4 step.
pub fn rk4_step<T: Real>(state: &FieldState<T>, dt: f64, dynamics: Dynamics) -> Result<FieldState<T>> {
    Stepper::new(state.grid, dynamics).step(state, dt)
}

/// Number of steps and the uniform step size reaching `t_final` with
/// `dt ≤ cfl·dx`.
pub fn step_count(t_final: f64, cfl: f64, dx: f64) -> (usize, f64) {
    if t_final <= 0.0 {
        return (0, cfl * dx);
    }
    let nsteps = ((t_final / (cfl * dx)) - 1e-9).ceil().max(1.0) as usize;
    (nsteps, t_final / nsteps as f64)
}

/// Flux `P^μ_I = vol h^{μν} f^I_ν` split into the time component and the
/// spatial divergence `Σ_k ∂_k P^k_I`.
pub fn flux_parts<T: Real>(state: &FieldState<T>, dynamics: Dynamics) -> Result<(Vec<T>, Vec<T>)> {
    let grid = state.grid;
    let (n, q, cells) = (grid.n(), grid.q(), grid.cells());
    let dim = n + 1;
    let mut p = vec![vec![T::zero(); q * cells]; dim];
    let mut fx = vec![vec![T::zero(); cells]; n * q];
    for i in 0..q {
        for k in 0..n {
            derivative_into(&grid, state.field(i), k, Order::First, &mut fx[i * n + k]);
        }
    }
    let v = state.velocities();
    let mut geom = GeomScratch::<T>::new(n, q);
    let mut df = vec![T::zero(); dim * q];
    for cell in 0..cells {
        for j in 0..q {
            df[j] = v[j * cells + cell];
            for k in 0..n {
                df[(k + 1) * q + j] = fx[j * n + k][cell];
            }
        }
        match dynamics {
            Dynamics::Linear => {
                for i in 0..q {
                    for mu in 0..dim {
                        let s = if mu == 0 { -df[i] } else { df[mu * q + i] };
                        p[mu][i * cells + cell] = s;
                    }
                }
            }
            Dynamics::Nonlinear(_) => {
                geom.metric(&df).map_err(|_| Error::CoercivityLost {
                    cell,
                    t: state.t,
                    margin: f64::NEG_INFINITY,
                })?;
                for i in 0..q {
                    for mu in 0..dim {
                        let mut s = T::zero();
                        for nu in 0..dim {
                            s += geom.h_inv.get(mu, nu) * df[nu * q + i];
                        }
                        p[mu][i * cells + cell] = geom.vol * s;
                    }
                }
            }
        }
    }
    let mut div = vec![T::zero(); q * cells];
    let mut tmp = vec![T::zero(); cells];
    for k in 0..n {
        for i in 0..q {
            derivative_into(&grid, &p[k + 1][i * cells..(i + 1) * cells], k, Order::First, &mut tmp);
            for (d, t) in div[i * cells..(i + 1) * cells].iter_mut().zip(&tmp) {
                *d += *t;
            }
        }
    }
    let p0 = std::mem::take(&mut p[0]);
    Ok((p0, div))
}

/// Divergence-form residual `∂_μ(vol h^{μν} f_ν) = □f − ∂_μ(F^{μν} f_ν)`
/// at the middle of five equally spaced levels; the time derivative uses
/// the fourth-order centred difference. Returns the largest per-field L2
/// norm.
pub fn divergence_residual<T: Real>(levels: [&FieldState<T>; 5], dt: f64, dynamics: Dynamics) -> Result<f64> {
    let mut p0 = Vec::with_capacity(5);
    for (k, s) in levels.iter().enumerate() {
        if k == 2 {
            p0.push(Vec::new());
        } else {
            p0.push(flux_parts(s, dynamics)?.0);
        }
    }
    let (_, div) = flux_parts(levels[2], dynamics)?;
    Ok(residual_from_parts(&levels[2].grid, [&p0[0], &p0[1], &p0[3], &p0[4]], &div, dt))
}

fn residual_from_parts<T: Real>(grid: &GridSpec, p0: [&[T]; 4], div: &[T], dt: f64) -> f64 {
    let cells = grid.cells();
    let c = T::lit(1.0 / (12.0 * dt));
    let eight = T::lit(8.0);
    let r: Vec<T> = (0..div.len())
        .map(|k| c * ((p0[0][k] - p0[3][k]) + eight * (p0[2][k] - p0[1][k])) + div[k])
        .collect();
    (0..grid.q())
        .map(|i| reduce_norm(grid, &r[i * cells..(i + 1) * cells], NormKind::L2).primal())
        .fold(0.0, f64::max)
}

/// Outcome classification of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Status {
    Ok,
    CoercivityLost { cell: usize, t: f64, margin: f64 },
    NonFinite { cell: usize, t: f64 },
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::Ok => "OK",
            Status::CoercivityLost { .. } => "CoercivityLost",
            Status::NonFinite { .. } => "NonFinite",
        }
    }

    fn from_error(e: Error) -> Result<Self> {
        match e {
            Error::CoercivityLost { cell, t, margin } => Ok(Status::CoercivityLost { cell, t, margin }),
            Error::NonFinite { cell, t } => Ok(Status::NonFinite { cell, t }),
            e => Err(e),
        }
    }
}

/// Per-step monitor values (for the state at the start of the step).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    /// Smallest coercivity margin over the grid.
    pub min_margin: f64,
    pub argmin: usize,
    pub max_abs_ddf: f64,
    /// Filled in on diagnostic steps once the neighbouring levels exist.
    pub div_residual: Option<f64>,
    pub status: Status,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveOptions {
    pub cfl: f64,
    pub t_final: f64,
    /// Steps between diagnostic samples; the final step is always sampled.
    pub diag_cadence: usize,
    pub dynamics: Dynamics,
    /// Compute the divergence residual on diagnostic steps.
    pub residual: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { cfl: 0.2, t_final: 1.0, diag_cadence: 10, dynamics: Dynamics::default(), residual: true }
    }
}

/// Callbacks from [`evolve`].
pub enum Event<'a, T> {
    /// Every accepted state, including the initial and final ones.
    State { state: &'a FieldState<T>, report: &'a StepReport, diagnostic: bool },
    /// Divergence residual for an earlier diagnostic step (NaN if the
    /// neighbouring levels could not be computed).
    Residual { step: usize, t: f64, value: f64 },
}

#[derive(Clone, Debug)]
pub struct EvolveOutcome<T> {
    /// Last valid state.
    pub state: FieldState<T>,
    pub reports: Vec<StepReport>,
    pub status: Status,
    pub steps: usize,
    pub dt: f64,
}

struct ResidualTracker<T> {
    cadence: usize,
    last: usize,
    p0: BTreeMap<isize, Vec<T>>,
    pending: BTreeMap<usize, (f64, Vec<T>)>,
}

impl<T: Real> ResidualTracker<T> {
    fn is_diag(&self, s: isize) -> bool {
        s >= 0 && (s as usize % self.cadence == 0 || s as usize == self.last) && s as usize <= self.last
    }

    fn wanted(&self, s: isize) -> bool {
        (-2..=2).any(|d| self.is_diag(s + d))
    }

    fn record(&mut self, s: isize, state: &FieldState<T>, dynamics: Dynamics) -> Result<()> {
        if !self.wanted(s) {
            return Ok(());
        }
        let (p0, div) = flux_parts(state, dynamics)?;
        if self.is_diag(s) {
            self.pending.insert(s as usize, (state.t, div));
        }
        self.p0.insert(s, p0);
        Ok(())
    }

    /// Residuals whose five levels are now complete.
    fn ready(&mut self, grid: &GridSpec, dt: f64) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        let keys: Vec<usize> = self.pending.keys().copied().collect();
        for s in keys {
            let si = s as isize;
            if (si - 2..=si + 2).filter(|&k| k != si).all(|k| self.p0.contains_key(&k)) {
                let (t, div) = self.pending.remove(&s).unwrap();
                let g = |k: isize| self.p0[&k].as_slice();
                let r = residual_from_parts(grid, [g(si - 2), g(si - 1), g(si + 1), g(si + 2)], &div, dt);
                out.push((s, t, r));
            }
        }
        let oldest = self.pending.keys().next().map(|&s| s as isize - 2).unwrap_or(isize::MAX);
        let newest = self.p0.keys().next_back().copied().unwrap_or(0);
        self.p0.retain(|&k, _| k >= oldest.min(newest - 3));
        out
    }
}

/// Advance `data` to `t_final` or until the continuation criterion fails.
pub fn evolve<T: Real>(
    data: FieldState<T>,
    opts: &EvolveOptions,
    mut observer: impl FnMut(Event<'_, T>) -> Result<()>,
) -> Result<EvolveOutcome<T>> {
    let grid = data.grid;
    let (nsteps, dt) = step_count(opts.t_final, opts.cfl, grid.dx());
    let cadence = opts.diag_cadence.max(1);
    let t0 = data.t;
    let mut stepper = Stepper::new(grid, opts.dynamics);
    let mut tracker = ResidualTracker { cadence, last: nsteps, p0: BTreeMap::new(), pending: BTreeMap::new() };
    let mut reports: Vec<StepReport> = Vec::with_capacity(nsteps + 1);

    let emit_ready = |tracker: &mut ResidualTracker<T>,
                          reports: &mut Vec<StepReport>,
                          observer: &mut dyn FnMut(Event<'_, T>) -> Result<()>|
     -> Result<()> {
        for (s, t, value) in tracker.ready(&grid, dt) {
            if let Some(r) = reports.get_mut(s) {
                r.div_residual = Some(value);
            }
            observer(Event::Residual { step: s, t, value })?;
        }
        Ok(())
    };

    if opts.residual {
        // levels before t0 from the time-reversed system
        let mut back = data.time_reversed();
        let mut ok = true;
        for s in 1..=2isize {
            match stepper.step(&back, dt) {
                Ok(b) => {
                    back = b;
                    let mut fwd = back.time_reversed();
                    fwd.t = t0 - s as f64 * dt;
                    tracker.record(-s, &fwd, opts.dynamics)?;
                }
                Err(e) => {
                    Status::from_error(e)?;
                    ok = false;
                    break;
                }
            }
        }
        let _ = ok;
    }

    let mut state = data;
    let mut status = Status::Ok;
    let mut step = 0usize;
    loop {
        let diagnostic = step % cadence == 0 || step == nsteps;
        let begun = stepper.begin(&state);
        let stats = match begun {
            Ok(s) => s,
            Err(e) => {
                status = Status::from_error(e)?;
                let report = StepReport {
                    step,
                    t: state.t,
                    dt,
                    min_margin: match status {
                        Status::CoercivityLost { margin, .. } => margin,
                        _ => f64::NAN,
                    },
                    argmin: match status {
                        Status::CoercivityLost { cell, .. } | Status::NonFinite { cell, .. } => cell,
                        Status::Ok => 0,
                    },
                    max_abs_ddf: f64::NAN,
                    div_residual: None,
                    status,
                };
                reports.push(report);
                observer(Event::State { state: &state, report: &report, diagnostic: true })?;
                break;
            }
        };
        let report = StepReport {
            step,
            t: state.t,
            dt,
            min_margin: stats.min_margin,
            argmin: stats.argmin,
            max_abs_ddf: stats.max_abs_ddf,
            div_residual: None,
            status: Status::Ok,
        };
        reports.push(report);
        if opts.residual {
            tracker.record(step as isize, &state, opts.dynamics)?;
        }
        observer(Event::State { state: &state, report: &report, diagnostic })?;
        if opts.residual {
            emit_ready(&mut tracker, &mut reports, &mut observer)?;
        }
        if step == nsteps {
            break;
        }
        let t_new = t0 + (step + 1) as f64 * dt;
        match stepper.finish(&state, dt, t_new) {
            Ok(next) => {
                state = next;
                step += 1;
            }
            Err(e) => {
                status = Status::from_error(e)?;
                if let Some(r) = reports.last_mut() {
                    r.status = status;
                }
                let report = *reports.last().unwrap();
                observer(Event::State { state: &state, report: &report, diagnostic: true })?;
                break;
            }
        }
    }

    if opts.residual {
        if status == Status::Ok {
            // levels beyond t_final
            let mut extra = state.clone();
            for s in 1..=2 {
                match stepper.step(&extra, dt) {
                    Ok(next) => {
                        extra = next;
                        tracker.record((nsteps + s) as isize, &extra, opts.dynamics)?;
                    }
                    Err(e) => {
                        Status::from_error(e)?;
                        break;
                    }
                }
            }
            emit_ready(&mut tracker, &mut reports, &mut observer)?;
        }
        for (s, (t, _)) in std::mem::take(&mut tracker.pending) {
            observer(Event::Residual { step: s, t, value: f64::NAN })?;
        }
    }

    Ok(EvolveOutcome { state, reports, status, steps: step, dt })
}
