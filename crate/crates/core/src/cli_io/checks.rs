//! Property batteries behind `tms check`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diagnostics::jet::TimeJet;
use crate::diagnostics::null_forms::{
    det_expansion_check, null_estimate_ratio, null_form, null_form_basis, polynomial_battery, z_commutation_deviation,
    NullFormId,
};
use crate::diagnostics::vector_fields::{
    commutator_check, commutator_table, field_list, measure_commutator_constants, TestField,
};
use crate::error::{Error, Result};
use crate::geometry::{eta, metric_point, CoefficientForm, FirstJet};
use crate::grid::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Identities,
    NullForms,
    Commutators,
    Expansion,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Identities, Suite::NullForms, Suite::Commutators, Suite::Expansion];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Identities => "identities",
            Suite::NullForms => "nullforms",
            Suite::Commutators => "commutators",
            Suite::Expansion => "expansion",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::validation("suite", format!("unknown suite `{s}` (identities, nullforms, commutators, expansion)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bound {
    AtMost(f64),
    Within(f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    /// Worst value seen.
    pub value: f64,
    pub bound: Bound,
}

impl CheckLine {
    fn at_most(name: impl Into<String>, value: f64, max: f64) -> Self {
        Self { name: name.into(), value, bound: Bound::AtMost(max) }
    }

    pub fn pass(&self) -> bool {
        match self.bound {
            Bound::AtMost(m) => self.value <= m,
            Bound::Within(lo, hi) => self.value >= lo && self.value <= hi,
        }
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bound = match self.bound {
            Bound::AtMost(m) => format!("<= {m:e}"),
            Bound::Within(lo, hi) => format!("in [{lo}, {hi}]"),
        };
        let verdict = if self.pass() { "pass" } else { "FAIL" };
        write!(f, "{verdict}  {:<48} {:>14.6e}  ({bound})", self.name, self.value)
    }
}

#[derive(Clone, Debug)]
pub struct CheckReport {
    pub suite: Suite,
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn pass(&self) -> bool {
        self.lines.iter().all(CheckLine::pass)
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}", self.suite.name())?;
        for l in &self.lines {
            writeln!(f, "  {l}")?;
        }
        write!(f, "{}", if self.pass() { "suite passed" } else { "suite FAILED" })
    }
}

pub fn run_check(suite: Suite, seed: u64) -> Result<CheckReport> {
    let lines = match suite {
        Suite::Identities => identities(seed, 1200)?,
        Suite::NullForms => null_forms(seed)?,
        Suite::Commutators => commutators(seed)?,
        Suite::Expansion => expansion(seed, 50)?,
    };
    Ok(CheckReport { suite, lines })
}

/// Jet with Frobenius norm uniformly at most `r`.
fn random_jet(rng: &mut ChaCha8Rng, n: usize, q: usize, r: f64) -> FirstJet<f64> {
    let raw = FirstJet::from_fn(n, q, |_, _| rng.gen_range(-1.0..1.0)).expect("shape");
    let norm = raw.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    raw.scaled(rng.gen_range(0.0..r) / norm)
}

/// Symmetries of `H` over random jets. Entries are recomputed one index
/// tuple at a time from `h⁻¹`, `vol` and `df`, then compared under index
/// swaps and against the packed tensor.
pub fn identities(seed: u64, count: usize) -> Result<Vec<CheckLine>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: Vec<(usize, usize)> = [2, 3].iter().flat_map(|&n| [1, 2, 3].map(|q| (n, q))).collect();
    let mut lines = Vec::new();
    for form in [CoefficientForm::EulerLagrange, CoefficientForm::Transcribed] {
        let (mut sym_mn, mut sym_jl, mut packed) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..count {
            let (n, q) = shapes[k % shapes.len()];
            let jet = random_jet(&mut rng, n, q, 0.3);
            let mp = metric_point(&jet, form)?;
            let dim = n + 1;
            let w = |j: usize, mu: usize| (0..dim).map(|a| mp.h_inv.get(mu, a) * jet.get(a, j)).sum::<f64>();
            let p = |j: usize, l: usize| (0..dim).map(|a| w(j, a) * jet.get(a, l)).sum::<f64>();
            let raw = |mu: usize, nu: usize, j: usize, l: usize| {
                let d = if j == l { 1.0 } else { 0.0 };
                let mut v = (d - p(j, l)) * mp.h_inv.get(mu, nu);
                if form == CoefficientForm::Transcribed {
                    v -= w(j, mu) * w(l, nu) + w(l, mu) * w(j, nu);
                }
                mp.vol * v
            };
            let scale = mp.hh.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for mu in 0..dim {
                for nu in 0..dim {
                    for j in 0..q {
                        for l in 0..q {
                            let x = raw(mu, nu, j, l);
                            sym_mn = sym_mn.max((x - raw(nu, mu, j, l)).abs() / scale);
                            sym_jl = sym_jl.max((x - raw(mu, nu, l, j)).abs() / scale);
                            packed = packed.max((x - mp.hh.get(mu, nu, j, l)).abs() / scale);
                        }
                    }
                }
            }
        }
        let f = form.name();
        lines.push(CheckLine::at_most(format!("H^{{mu nu}} = H^{{nu mu}} ({f})"), sym_mn, 1e-13));
        lines.push(CheckLine::at_most(format!("H_{{JL}} = H_{{LJ}} ({f})"), sym_jl, 1e-13));
        lines.push(CheckLine::at_most(format!("packed tensor matches entries ({f})"), packed, 1e-13));
    }
    // flat point: F = 0, H = η δ
    let mut flat = 0.0f64;
    for (n, q) in [(2, 1), (3, 3)] {
        let mp = metric_point(&FirstJet::<f64>::zeros(n, q), CoefficientForm::default())?;
        for mu in 0..=n {
            for nu in 0..=n {
                flat = flat.max(mp.f.get(mu, nu).abs());
                for j in 0..q {
                    for l in 0..q {
                        let want = if j == l { eta::<f64>(mu, nu) } else { 0.0 };
                        flat = flat.max((mp.hh.get(mu, nu, j, l) - want).abs());
                    }
                }
            }
        }
    }
    lines.push(CheckLine::at_most("F = 0 and H = eta delta at df = 0", flat, 0.0));
    Ok(lines)
}

fn max_interior(grid: &GridSpec, u: &TimeJet<f64>) -> f64 {
    (0..grid.cells()).filter(|&c| grid.seam_distance(c) >= 8).fold(0.0, |m, c| m.max(u.d[0][c].abs()))
}

pub fn null_forms(seed: u64) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    // Q00 on null gradients: linear null phases on the grid, and random
    // null covectors pointwise
    let mut worst = 0.0f64;
    for n in [2, 3] {
        let g = GridSpec::new(n, 1, 3.0, 24)?;
        for (a, s) in [(1, -1.0), (n, 1.0)] {
            let u = TimeJet::from_fn(g, 0.3, 2, |j, c, _| [0.3 + s * g.position(c)[a - 1], 1.0, 0.0][j]);
            worst = worst.max(max_interior(&g, &null_form(NullFormId::Q00, &u, &u)));
        }
    }
    lines.push(CheckLine::at_most("Q00(u,u) on null phases t -+ x^a", worst, 1e-12));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let dir: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let c = rng.gen_range(-2.0..2.0);
        let du = [c, c * dir[0] / r, c * dir[1] / r, c * dir[2] / r];
        worst = worst.max(NullFormId::Q00.eval(&du, &du).abs() / (c * c).max(1e-300));
    }
    lines.push(CheckLine::at_most("Q00 on random null covectors (relative)", worst, 1e-14));

    // exact antisymmetry and commutation tables on cubic batteries
    for n in [2, 3] {
        let g = GridSpec::new(n, 1, 3.0, if n == 2 { 32 } else { 24 })?;
        let bat = polynomial_battery(g, 0.4, seed.wrapping_add(n as u64), 2);
        let (u, w) = (&bat[0], &bat[1]);
        let mut anti = 0.0f64;
        for a in 0..=n {
            for b in 0..=n {
                if a == b {
                    continue;
                }
                let q = null_form(NullFormId::Q(a, b), u, w);
                let qt = null_form(NullFormId::Q(b, a), u, w);
                let qs = null_form(NullFormId::Q(a, b), w, u);
                for c in 0..g.cells() {
                    anti = anti.max((q.d[0][c] + qt.d[0][c]).abs()).max((q.d[0][c] + qs.d[0][c]).abs());
                }
            }
        }
        lines.push(CheckLine::at_most(format!("Q_ab antisymmetry, n = {n}"), anti, 0.0));
        let mut dev = 0.0f64;
        for z in field_list(n) {
            for q in null_form_basis(n) {
                dev = dev.max(z_commutation_deviation(z, q, u, w)?);
            }
        }
        lines.push(CheckLine::at_most(format!("Z Q - Q(Zu,w) - Q(u,Zw) - a Q, n = {n}"), dev, 1e-8));
        let zero = TimeJet::from_fn(g, 1.0, 1, |_, _, _| 0.0);
        lines.push(CheckLine::at_most(format!("null estimate ratio of zero fields, n = {n}"), null_estimate_ratio(NullFormId::Q00, &zero, &zero)?, 0.0));
    }
    lines.extend(expansion(seed, 20)?);
    Ok(lines)
}

pub fn commutators(seed: u64) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in [2, 3] {
        let g = GridSpec::new(n, 1, 3.0, 24)?;
        let (mut off_lattice, mut spread, mut mismatch) = (0.0f64, 0.0f64, 0.0f64);
        for z in field_list(n) {
            let (a, s) = measure_commutator_constants(z, g, 0.7)?;
            let table = commutator_table(z, n);
            spread = spread.max(s);
            for nu in 0..=n {
                for b in 0..=n {
                    let r = a[nu][b].round();
                    off_lattice = off_lattice.max((a[nu][b] - r).abs());
                    if ![-1.0, 0.0, 1.0].contains(&r) {
                        off_lattice = off_lattice.max(1.0);
                    }
                    mismatch = mismatch.max((a[nu][b] - table[nu][b] as f64).abs());
                }
            }
        }
        lines.push(CheckLine::at_most(format!("[Z, d] constants off {{0, +-1}}, n = {n}"), off_lattice, 1e-10));
        lines.push(CheckLine::at_most(format!("[Z, d] constants vs table, n = {n}"), mismatch, 1e-10));
        lines.push(CheckLine::at_most(format!("[Z, d] spatial spread, n = {n}"), spread, 1e-10));

        let dim = n + 1;
        let cubic = TestField::Cubic((0..dim * dim * dim).map(|_| rng.gen_range(-0.5..0.5)).collect());
        let (mut box_dev, mut part_dev) = (0.0f64, 0.0f64);
        for z in field_list(n) {
            for psi in [&TestField::Quadric, &cubic, &TestField::Coordinate(n)] {
                let r = commutator_check(z, psi, g, 0.3)?;
                box_dev = box_dev.max(r.wave_deviation / (1.0 + r.scale));
                part_dev = part_dev.max(r.partial_deviation / (1.0 + r.scale));
            }
        }
        lines.push(CheckLine::at_most(format!("[Z, box] + 2 delta_ZL box on polynomials, n = {n}"), box_dev, 1e-8));
        lines.push(CheckLine::at_most(format!("[Z, d] on polynomials, n = {n}"), part_dev, 1e-8));

        let pi = std::f64::consts::PI;
        let gw = GridSpec::new(n, 1, pi, 64)?;
        let k: Vec<f64> = (0..n).map(|a| [1.0, 2.0, 1.0][a]).collect();
        let omega = k.iter().map(|x| x * x).sum::<f64>().sqrt();
        let wave = TestField::Wave { k, omega };
        let mut wave_dev = 0.0f64;
        for z in field_list(n) {
            let r = commutator_check(z, &wave, gw, 0.3)?;
            wave_dev = wave_dev.max(r.wave_deviation / (1.0 + r.scale)).max(r.partial_deviation / (1.0 + r.scale));
        }
        lines.push(CheckLine::at_most(format!("[Z, box], [Z, d] on a plane wave, n = {n}"), wave_dev, 1e-3));
    }
    Ok(lines)
}

/// Richardson orders of the determinant expansion on random jets with
/// `q ≥ 2`, plus the exact cases.
pub fn expansion(seed: u64, count: usize) -> Result<Vec<CheckLine>> {
    let eps = [1e-1, 5e-2, 2.5e-2];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..count {
        let (n, q) = [(2, 2), (2, 3), (3, 2), (3, 3)][k % 4];
        let df = FirstJet::from_fn(n, q, |_, _| rng.gen_range(-1.0..1.0))?;
        for o in det_expansion_check(&df, &eps)?.orders {
            lo = lo.min(o);
            hi = hi.max(o);
        }
    }
    let mut exact = 0.0f64;
    let mut single = vec![0.0; 3];
    single[1] = 0.7;
    for df in [FirstJet::new(2, 1, single)?, FirstJet::new(2, 2, vec![0.3, 0.1, -0.3, -0.1, 0.0, 0.0])?] {
        exact = exact.max(det_expansion_check(&df, &eps)?.remainders.into_iter().fold(0.0, f64::max));
    }
    Ok(vec![
        CheckLine { name: "det remainder order, lowest".into(), value: lo, bound: Bound::Within(3.7, 4.3) },
        CheckLine { name: "det remainder order, highest".into(), value: hi, bound: Bound::Within(3.7, 4.3) },
        CheckLine::at_most("det remainder, single entry and null direction", exact, 1e-15),
    ])
}
