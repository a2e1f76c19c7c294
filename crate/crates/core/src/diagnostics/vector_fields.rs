//! Lorentz vector fields `∂_μ, Ω_ab, Ω_0a, L` acting on time jets, and
//! their commutation tables.

use super::jet::TimeJet;
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::scalar::Real;

/// One of the Lorentz vector fields. Spatial indices are `1..=n`, so that
/// `x^0 = t` and `x^a` is the coordinate along grid axis `a − 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VectorFieldId {
    /// `∂_μ`
    Translation(usize),
    /// `Ω_ab = x^b ∂_a − x^a ∂_b`, `a < b`
    Rotation(usize, usize),
    /// `Ω_0a = t ∂_a + x^a ∂_t`
    Boost(usize),
    /// `L = t ∂_t + x^a ∂_a`
    Scaling,
}

impl VectorFieldId {
    pub fn validate(self, n: usize) -> Result<()> {
        let ok = match self {
            VectorFieldId::Translation(mu) => mu <= n,
            VectorFieldId::Rotation(a, b) => 1 <= a && a < b && b <= n,
            VectorFieldId::Boost(a) => 1 <= a && a <= n,
            VectorFieldId::Scaling => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation("vector_field", format!("{self:?} invalid for n = {n}")))
        }
    }

    pub fn name(self) -> String {
        match self {
            VectorFieldId::Translation(mu) => format!("d{mu}"),
            VectorFieldId::Rotation(a, b) => format!("O{a}{b}"),
            VectorFieldId::Boost(a) => format!("O0{a}"),
            VectorFieldId::Scaling => "L".into(),
        }
    }

    /// Coefficients `ζ^α(t, x)` of `Z = ζ^α ∂_α` at a spacetime point
    /// `y = (t, x¹, …, xⁿ)`.
    pub fn coefficients(self, y: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; y.len()];
        match self {
            VectorFieldId::Translation(mu) => z[mu] = 1.0,
            VectorFieldId::Rotation(a, b) => {
                z[a] = y[b];
                z[b] = -y[a];
            }
            VectorFieldId::Boost(a) => {
                z[0] = y[a];
                z[a] = y[0];
            }
            VectorFieldId::Scaling => z.copy_from_slice(y),
        }
        z
    }

    /// Constant matrix `M[α][μ] = ∂_μ ζ^α`.
    pub fn derivative_matrix(self, n: usize) -> Vec<Vec<f64>> {
        let dim = n + 1;
        let mut m = vec![vec![0.0; dim]; dim];
        match self {
            VectorFieldId::Translation(_) => {}
            VectorFieldId::Rotation(a, b) => {
                m[a][b] = 1.0;
                m[b][a] = -1.0;
            }
            VectorFieldId::Boost(a) => {
                m[0][a] = 1.0;
                m[a][0] = 1.0;
            }
            VectorFieldId::Scaling => {
                for (k, row) in m.iter_mut().enumerate() {
                    row[k] = 1.0;
                }
            }
        }
        m
    }
}

/// Canonical field list: `∂_0 … ∂_n`, `Ω_ab` (`a < b`, lexicographic),
/// `Ω_01 … Ω_0n`, `L`.
pub fn field_list(n: usize) -> Vec<VectorFieldId> {
    let mut v: Vec<VectorFieldId> = (0..=n).map(VectorFieldId::Translation).collect();
    for a in 1..=n {
        for b in a + 1..=n {
            v.push(VectorFieldId::Rotation(a, b));
        }
    }
    v.extend((1..=n).map(VectorFieldId::Boost));
    v.push(VectorFieldId::Scaling);
    v
}

/// Structure constants of `[Z, ∂_ν] = a_ν^α ∂_α`, as `a[ν][α] = −∂_ν ζ^α`.
pub fn commutator_table(z: VectorFieldId, n: usize) -> Vec<Vec<i32>> {
    let m = z.derivative_matrix(n);
    (0..=n).map(|nu| (0..=n).map(|alpha| -(m[alpha][nu] as i32)).collect()).collect()
}

/// Spatial coordinate `x^a` (`a ≥ 1`) of a cell.
#[inline]
pub(crate) fn coord(grid: &GridSpec, cell: usize, a: usize) -> f64 {
    let i = (cell / grid.stride(a - 1)) % grid.points();
    grid.coord(i)
}

/// `Z u` for a jet of order `k ≥ 1`, giving a jet of order `k − 1`.
/// `spatial[a][j]` must hold `∂_{a+1} u^{(j)}` for `j < k`
/// (see [`TimeJet::spatial`]).
pub fn apply_with<T: Real>(z: VectorFieldId, u: &TimeJet<T>, spatial: &[Vec<Vec<T>>]) -> TimeJet<T> {
    let k = u.order();
    assert!(k >= 1, "vector fields need a jet of order >= 1");
    let grid = u.grid;
    let cells = grid.cells();
    let t = T::lit(u.t);
    let len = u.d[0].len();
    let mut d = Vec::with_capacity(k);
    for j in 0..k {
        let jf = T::lit(j as f64);
        let mut out = vec![T::zero(); len];
        match z {
            VectorFieldId::Translation(0) => out.copy_from_slice(&u.d[j + 1]),
            VectorFieldId::Translation(mu) => out.copy_from_slice(&spatial[mu - 1][j]),
            VectorFieldId::Rotation(a, b) => {
                for (idx, o) in out.iter_mut().enumerate() {
                    let c = idx % cells;
                    let (xa, xb) = (T::lit(coord(&grid, c, a)), T::lit(coord(&grid, c, b)));
                    *o = xb * spatial[a - 1][j][idx] - xa * spatial[b - 1][j][idx];
                }
            }
            VectorFieldId::Boost(a) => {
                for (idx, o) in out.iter_mut().enumerate() {
                    let xa = T::lit(coord(&grid, idx % cells, a));
                    let mut v = xa * u.d[j + 1][idx] + t * spatial[a - 1][j][idx];
                    if j > 0 {
                        v += jf * spatial[a - 1][j - 1][idx];
                    }
                    *o = v;
                }
            }
            VectorFieldId::Scaling => {
                for (idx, o) in out.iter_mut().enumerate() {
                    let c = idx % cells;
                    let mut v = t * u.d[j + 1][idx] + jf * u.d[j][idx];
                    for a in 1..=grid.n() {
                        v += T::lit(coord(&grid, c, a)) * spatial[a - 1][j][idx];
                    }
                    *o = v;
                }
            }
        }
        d.push(out);
    }
    TimeJet { grid, t: u.t, d }
}

/// Spatial derivative cache for [`apply_with`].
pub fn spatial_cache<T: Real>(u: &TimeJet<T>) -> Vec<Vec<Vec<T>>> {
    (0..u.grid.n()).map(|a| u.spatial(a, u.order())).collect()
}

/// `Z u` with time derivatives taken from the jet, one order lower.
pub fn apply_vector_field<T: Real>(z: VectorFieldId, u: &TimeJet<T>) -> TimeJet<T> {
    apply_with(z, u, &spatial_cache(u))
}

/// Analytic test functions for the commutator battery.
#[derive(Clone, Debug, PartialEq)]
pub enum TestField {
    /// `t² − |x|²`
    Quadric,
    /// `Σ c_{αβγ} y^α y^β y^γ` with `y = (t, x)` and `c` indexed as
    /// `α (n+1)² + β (n+1) + γ`.
    Cubic(Vec<f64>),
    /// `x^β` (`x^0 = t`).
    Coordinate(usize),
    /// `sin(k·x − ω t)` with `k` periodic on the box.
    Wave { k: Vec<f64>, omega: f64 },
}

impl TestField {
    /// `∂_t^j ψ` at `(t, x)`.
    pub fn eval(&self, j: usize, t: f64, x: &[f64]) -> f64 {
        match self {
            TestField::Quadric => match j {
                0 => t * t - x.iter().map(|v| v * v).sum::<f64>(),
                1 => 2.0 * t,
                2 => 2.0,
                _ => 0.0,
            },
            TestField::Coordinate(b) => match (j, *b) {
                (0, 0) => t,
                (1, 0) => 1.0,
                (0, b) => x[b - 1],
                _ => 0.0,
            },
            TestField::Cubic(c) => {
                let dim = x.len() + 1;
                let y = |m: usize| if m == 0 { t } else { x[m - 1] };
                // ∂_t^j of y^α y^β y^γ, counting factors equal to t
                let mut s = 0.0;
                for al in 0..dim {
                    for be in 0..dim {
                        for ga in 0..dim {
                            let coef = c[(al * dim + be) * dim + ga];
                            if coef == 0.0 {
                                continue;
                            }
                            let nt = [al, be, ga].iter().filter(|&&m| m == 0).count() as i32;
                            let rest: f64 = [al, be, ga].iter().filter(|&&m| m != 0).map(|&m| y(m)).product();
                            let jj = j as i32;
                            if jj > nt {
                                continue;
                            }
                            let fall: f64 = (0..jj).map(|i| (nt - i) as f64).product();
                            s += coef * fall * t.powi(nt - jj) * rest;
                        }
                    }
                }
                s
            }
            TestField::Wave { k, omega } => {
                let ph = k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - omega * t;
                // ∂_t^j sin(ph) = (−ω)^j sin(ph + jπ/2)
                (-omega).powi(j as i32) * (ph + j as f64 * std::f64::consts::FRAC_PI_2).sin()
            }
        }
    }

    pub fn jet(&self, grid: GridSpec, t: f64, order: usize) -> TimeJet<f64> {
        let n = grid.n();
        TimeJet::from_fn(grid, t, order, |j, c, _| self.eval(j, t, &grid.position(c)[..n]))
    }
}

/// Cells far enough from the seam that composed stencils never see the
/// wrap of the (non-periodic) coordinate weights.
pub(crate) fn interior(grid: &GridSpec) -> impl Iterator<Item = usize> + '_ {
    (0..grid.cells()).filter(move |&c| grid.seam_distance(c) >= 8)
}

/// Result of [`commutator_check`].
#[derive(Clone, Debug)]
pub struct CommutatorReport {
    pub field: VectorFieldId,
    /// `max |[Z, □]ψ − expected|`, expected `−2□ψ` for `L` and `0` otherwise.
    pub wave_deviation: f64,
    /// Largest `|Z□ψ|` seen, for scale.
    pub scale: f64,
    /// `max_ν |[Z, ∂_ν]ψ − a_ν^α ∂_α ψ|` with `a` from [`commutator_table`].
    pub partial_deviation: f64,
}

/// Measure `[Z, □]` and `[Z, ∂_ν]` on one analytic test field at time `t`.
pub fn commutator_check(z: VectorFieldId, psi: &TestField, grid: GridSpec, t: f64) -> Result<CommutatorReport> {
    let n = grid.n();
    z.validate(n)?;
    let jet = psi.jet(grid, t, 3);
    let box_psi = jet.wave();
    let z_box = apply_vector_field(z, &box_psi);
    let box_z = apply_vector_field(z, &jet).wave();
    let mut wave_deviation: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for c in interior(&grid) {
        let expected = if z == VectorFieldId::Scaling { -2.0 * box_psi.d[0][c] } else { 0.0 };
        wave_deviation = wave_deviation.max((z_box.d[0][c] - box_z.d[0][c] - expected).abs());
        scale = scale.max(z_box.d[0][c].abs()).max(box_psi.d[0][c].abs());
    }
    let a = commutator_table(z, n);
    let grads: Vec<TimeJet<f64>> = (0..=n).map(|mu| jet.partial(mu)).collect();
    let zj = apply_vector_field(z, &jet);
    let mut partial_deviation: f64 = 0.0;
    for nu in 0..=n {
        let lhs1 = apply_vector_field(z, &grads[nu]);
        let lhs2 = zj.partial(nu);
        for c in interior(&grid) {
            let rhs: f64 = (0..=n).map(|al| a[nu][al] as f64 * grads[al].d[0][c]).sum();
            partial_deviation = partial_deviation.max((lhs1.d[0][c] - lhs2.d[0][c] - rhs).abs());
        }
    }
    Ok(CommutatorReport { field: z, wave_deviation, scale, partial_deviation })
}

/// Structure constants measured on the coordinate functions:
/// `[Z, ∂_ν] x^β = a_ν^β`. Returns `a[ν][β]` (raw, unrounded) and the spread
/// over interior cells.
pub fn measure_commutator_constants(z: VectorFieldId, grid: GridSpec, t: f64) -> Result<(Vec<Vec<f64>>, f64)> {
    let n = grid.n();
    z.validate(n)?;
    let mut a = vec![vec![0.0; n + 1]; n + 1];
    let mut spread: f64 = 0.0;
    for beta in 0..=n {
        let jet = TestField::Coordinate(beta).jet(grid, t, 2);
        let zj = apply_vector_field(z, &jet);
        for nu in 0..=n {
            let l1 = apply_vector_field(z, &jet.partial(nu));
            let l2 = zj.partial(nu);
            let vals: Vec<f64> = interior(&grid).map(|c| l1.d[0][c] - l2.d[0][c]).collect();
            let first = vals[0];
            spread = vals.iter().fold(spread, |m, v| m.max((v - first).abs()));
            a[nu][beta] = first;
        }
    }
    Ok((a, spread))
}
