//! Weighted norms of `f` built from products of the Lorentz vector fields,
//! truncated at `|α| ≤ 2` (L²) and `|α| ≤ 1` / `|α| ≤ 2` (sup).

use super::jet::{state_jet_with_stats, TimeJet};
use super::vector_fields::{apply_with, field_list, spatial_cache};
use crate::error::Result;
use crate::evolution::Dynamics;
use crate::grid::{tree_max, tree_sum, FieldState};

/// One time sample of the norms and run monitors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormsRecord {
    pub t: f64,
    pub m1: f64,
    pub m2: f64,
    pub n1: f64,
    pub n2: f64,
    /// `‖∂f‖_{L²}`
    pub energy: f64,
    pub margin: f64,
    pub div_residual: f64,
}

impl NormsRecord {
    pub fn zero(t: f64) -> Self {
        Self { t, m1: 0.0, m2: 0.0, n1: 0.0, n2: 0.0, energy: 0.0, margin: 0.5, div_residual: 0.0 }
    }
}

/// Contributions of each `|α|` level, so truncation can be inspected.
/// Index `k` holds the sum over `|α| = k`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NormLevels {
    pub m1: [f64; 3],
    pub m2: [f64; 3],
    pub n1: [f64; 3],
    pub n2: [f64; 3],
}

impl NormLevels {
    /// `M1, M2, N1, N2` with the standard truncation.
    pub fn totals(&self) -> (f64, f64, f64, f64) {
        (self.m1.iter().sum(), self.m2.iter().sum(), self.n1[0] + self.n1[1], self.n2.iter().sum())
    }

    /// `‖∂f‖_{L²}`
    pub fn energy(&self) -> f64 {
        self.m1[0]
    }

    /// `‖∂f‖_{L∞}`
    pub fn grad_sup(&self) -> f64 {
        self.n1[0]
    }

    /// Add one `|α| = k` term: `(‖∂u‖₂, ‖u‖₂, ‖∂u‖∞, ‖u‖∞)`.
    fn add(&mut self, k: usize, (gl2, vl2, ginf, vinf): (f64, f64, f64, f64)) {
        self.m1[k] += gl2;
        self.m2[k] += vl2;
        self.n1[k] += ginf;
        self.n2[k] += vinf;
    }
}

/// `(‖∂u‖₂, ‖u‖₂, ‖∂u‖∞, ‖u‖∞)` with pointwise Euclidean norms over
/// components; `spatial0[a]` is `∂_{a+1}` of the lowest level.
fn four_norms(u: &TimeJet<f64>, spatial0: &[&[f64]]) -> (f64, f64, f64, f64) {
    let cells = u.grid.cells();
    let q = u.blocks();
    let vol = u.grid.cell_volume();
    let grad_sq = |c: usize| {
        let mut s = 0.0;
        for b in 0..q {
            let k = b * cells + c;
            s += u.d[1][k] * u.d[1][k];
            for da in spatial0 {
                s += da[k] * da[k];
            }
        }
        s
    };
    let val_sq = |c: usize| (0..q).map(|b| u.d[0][b * cells + c].powi(2)).sum::<f64>();
    (
        (tree_sum(cells, &grad_sq) * vol).sqrt(),
        (tree_sum(cells, &val_sq) * vol).sqrt(),
        tree_max(cells, &grad_sq).0.sqrt(),
        tree_max(cells, &val_sq).0.sqrt(),
    )
}

/// Level contributions from a jet of order ≥ 3. Products `Z_i Z_j` are
/// taken with `i ≤ j` in field-list order, `Z_j` applied first.
pub fn norm_levels(f: &TimeJet<f64>) -> NormLevels {
    assert!(f.order() >= 3, "norms need a jet of order >= 3");
    let fields = field_list(f.grid.n());
    let mut lv = NormLevels::default();
    let cache_f = spatial_cache(f);
    let s0: Vec<&[f64]> = cache_f.iter().map(|a| a[0].as_slice()).collect();
    lv.add(0, four_norms(f, &s0));
    for (j, &zj) in fields.iter().enumerate() {
        let u = apply_with(zj, f, &cache_f);
        let cache_u = spatial_cache(&u);
        let s0: Vec<&[f64]> = cache_u.iter().map(|a| a[0].as_slice()).collect();
        lv.add(1, four_norms(&u, &s0));
        for &zi in &fields[..=j] {
            let w = apply_with(zi, &u, &cache_u);
            let sw: Vec<Vec<f64>> = (0..w.grid.n()).map(|a| w.spatial(a, 1).remove(0)).collect();
            let s0: Vec<&[f64]> = sw.iter().map(Vec::as_slice).collect();
            lv.add(2, four_norms(&w, &s0));
        }
    }
    lv
}

/// Norms of a state. `div_residual` is left NaN for the caller to fill.
pub fn compute_norms(state: &FieldState<f64>, dynamics: Dynamics) -> Result<(NormsRecord, NormLevels)> {
    let (jet, stats) = state_jet_with_stats(state, dynamics, 3)?;
    let lv = norm_levels(&jet);
    let (m1, m2, n1, n2) = lv.totals();
    let margin = stats.map_or(f64::NAN, |s| s.min_margin);
    Ok((NormsRecord { t: state.t, m1, m2, n1, n2, energy: lv.energy(), margin, div_residual: f64::NAN }, lv))
}
