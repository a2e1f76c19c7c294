//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.
//!
//! `ACCEPTANCE_ONLY=2,3` restricts the run to the listed criteria.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tms_core::cli_io::{parse_config, parse_manifest, run_check, run_decay, run_evolve, RunSummary, SimConfig, Suite};
use tms_core::cli_io::harness::evolve_to_end;
use tms_core::diagnostics::{
    apply_vector_field, commutator_check, decay_fit, det_expansion_check, field_list, measure_commutator_constants,
    null_form, null_form_basis, polynomial_battery, z_commutation_deviation, z_commutation_table, NullFormId,
    TestField, TimeJet, VectorFieldId,
};
use tms_core::evolution::{evolve, Dynamics, EvolveOptions, Status};
use tms_core::geometry::{coefficient_h, CoefficientForm, FirstJet};
use tms_core::grid::{FieldState, GridSpec};
use tms_core::initial_data::{realize, DataFamily, Profile};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Res<T> = std::result::Result<T, String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Runs shared between criteria.
struct Ctx {
    root: tempfile::TempDir,
    null_wave: Option<NullWaveRuns>,
    n2: Option<RunSummary>,
    n3: Option<RunSummary>,
    small: Option<RunSummary>,
}

struct NullWaveRuns {
    /// `(N, max error against the exact solution, final divergence residual)`
    levels: Vec<(usize, f64, f64)>,
}

impl Ctx {
    fn dir(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    fn null_wave(&mut self) -> Res<&NullWaveRuns> {
        if self.null_wave.is_none() {
            let mut levels = Vec::new();
            for points in [128, 256] {
                let cfg = null_wave_config(points)?;
                let (state, residual) = evolve_to_end(&cfg).map_err(err)?;
                levels.push((points, null_wave_error(&state, &cfg), residual));
            }
            self.null_wave = Some(NullWaveRuns { levels });
        }
        Ok(self.null_wave.as_ref().unwrap())
    }

    fn decay_run(&mut self, n: usize) -> Res<&RunSummary> {
        let slot = if n == 2 { &self.n2 } else { &self.n3 };
        if slot.is_none() {
            let mut cfg = decay_config(n)?;
            cfg.output_dir = self.dir(&format!("decay_n{n}"));
            let (_, summary) = run_decay(&cfg).map_err(err)?;
            if n == 2 {
                self.n2 = Some(summary);
            } else {
                self.n3 = Some(summary);
            }
        }
        Ok(if n == 2 { self.n2.as_ref().unwrap() } else { self.n3.as_ref().unwrap() })
    }

    /// Short two-component run.
    fn small(&mut self) -> Res<&RunSummary> {
        if self.small.is_none() {
            let mut data = DataFamily::gaussian(2, 2, 0.05, 1.5);
            data.polarization = vec![0.6, 0.8];
            let mut cfg = SimConfig::new(2, 2, 32.0, 128, 8.0, data).map_err(err)?;
            cfg.diag_cadence = 5;
            cfg.output_dir = self.dir("small_q2");
            self.small = Some(run_evolve(&cfg).map_err(err)?);
        }
        Ok(self.small.as_ref().unwrap())
    }
}

fn null_wave_config(points: usize) -> Res<SimConfig> {
    let mut data = DataFamily::null_wave(2, 1, 0.2, 2.0, 0);
    data.profile = Profile::Poly8;
    let mut cfg = SimConfig::new(2, 1, 8.0, points, 4.0, data).map_err(err)?;
    cfg.diag_cadence = 1000;
    Ok(cfg)
}

/// `(1 − s²)⁸` and its derivative.
fn poly8(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let w = 1.0 - s * s;
    (w.powi(8), -16.0 * s * w.powi(7))
}

/// `max |state − exact|` over `f` and `∂_t f` for `f = ε φ((t − x¹)/σ)`.
fn null_wave_error(state: &FieldState<f64>, cfg: &SimConfig) -> f64 {
    let g = state.grid;
    let (eps, sigma, l) = (cfg.data.amplitude, cfg.data.width, g.half_width());
    let mut m = 0.0f64;
    for c in 0..g.cells() {
        let x = g.position(c)[0];
        let d = (x - state.t + l).rem_euclid(2.0 * l) - l;
        let (p, dp) = poly8(-d / sigma);
        m = m.max((state.fields()[c] - eps * p).abs());
        m = m.max((state.velocities()[c] - eps * dp / sigma).abs());
    }
    m
}

fn config(text: &str) -> Res<SimConfig> {
    parse_config(text).map_err(err)
}

fn decay_config(n: usize) -> Res<SimConfig> {
    if n == 2 {
        config("n = 2\nq = 1\nL = 82\nN = 512\nt_final = 60\ndata = gaussian\nepsilon = 0.05\nsigma = 1.5\ndiag_cadence = 10\n")
    } else {
        // the 12σ cutoff plus the light cone exceeds L, so the outgoing
        // front wraps before t_final
        config(
            "n = 3\nq = 1\nL = 45\nN = 128\nt_final = 40\ndata = gaussian\nepsilon = 0.05\nsigma = 2\ndiag_cadence = 10\nallow_wrap = true\n",
        )
    }
}

/// Ordinary least-squares slope of `log y` against `log(1 + t)` on `[lo, hi]`.
fn loglog_slope(t: &[f64], y: &[f64], lo: f64, hi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(&t, _)| t >= lo - 1e-9 && t <= hi + 1e-9)
        .map(|(&t, &y)| ((1.0 + t).ln(), y.ln()))
        .collect();
    let m = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    sxy / sxx
}

// ---------------------------------------------------------------- 1

/// Gauss–Jordan inverse and determinant.
fn invert(a: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let d = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut inv: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut det = 1.0;
    for col in 0..d {
        let p = (col..d).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        if p != col {
            m.swap(p, col);
            inv.swap(p, col);
            det = -det;
        }
        let piv = m[col][col];
        det *= piv;
        for j in 0..d {
            m[col][j] /= piv;
            inv[col][j] /= piv;
        }
        for i in 0..d {
            if i != col {
                let f = m[i][col];
                for j in 0..d {
                    m[i][j] -= f * m[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    (det, inv)
}

fn eta(mu: usize, nu: usize) -> f64 {
    match (mu, nu) {
        (0, 0) => -1.0,
        (a, b) if a == b => 1.0,
        _ => 0.0,
    }
}

/// `√(−det h)(δ_JL − h^{αβ}f^J_α f^L_β) h^{μν}`, minus
/// `√(−det h)(w_J^μ w_L^ν + w_L^μ w_J^ν)` for the transcribed form.
fn h_oracle(n: usize, q: usize, df: &[f64], form: CoefficientForm, mu: usize, nu: usize, j: usize, l: usize) -> f64 {
    let dim = n + 1;
    let d = |a: usize, i: usize| df[a * q + i];
    let h: Vec<Vec<f64>> =
        (0..dim).map(|a| (0..dim).map(|b| eta(a, b) + (0..q).map(|i| d(a, i) * d(b, i)).sum::<f64>()).collect()).collect();
    let (det, hi) = invert(&h);
    let vol = (-det).sqrt();
    let w = |i: usize, m: usize| (0..dim).map(|a| hi[m][a] * d(a, i)).sum::<f64>();
    let p: f64 = (0..dim).map(|a| w(j, a) * d(a, l)).sum();
    let kron = if j == l { 1.0 } else { 0.0 };
    let mut v = (kron - p) * hi[mu][nu];
    if form == CoefficientForm::Transcribed {
        v -= w(j, mu) * w(l, nu) + w(l, mu) * w(j, nu);
    }
    vol * v
}

fn criterion_1(_: &mut Ctx) -> Res<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let (mut sym, mut oracle) = (0.0f64, 0.0f64);
    let mut jets = 0;
    for _ in 0..1200 {
        let n = rng.gen_range(2..=3);
        let q = rng.gen_range(1..=3);
        let raw: Vec<f64> = (0..(n + 1) * q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let r = rng.gen_range(0.0..0.3);
        let df: Vec<f64> = raw.iter().map(|x| x * r / norm).collect();
        let jet = FirstJet::new(n, q, df.clone()).map_err(err)?;
        jets += 1;
        for form in [CoefficientForm::EulerLagrange, CoefficientForm::Transcribed] {
            let hh = coefficient_h(&jet, form).map_err(err)?;
            let scale = hh.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for mu in 0..=n {
                for nu in 0..=n {
                    for j in 0..q {
                        for l in 0..q {
                            let v = hh.get(mu, nu, j, l);
                            sym = sym.max((v - hh.get(nu, mu, j, l)).abs() / scale);
                            sym = sym.max((v - hh.get(mu, nu, l, j)).abs() / scale);
                            let o = h_oracle(n, q, &df, form, mu, nu, j, l);
                            oracle = oracle.max((v - o).abs() / scale);
                        }
                    }
                }
            }
        }
    }
    let report = run_check(Suite::Identities, 1).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let pass = jets >= 1000 && sym <= 1e-13 && oracle <= 1e-12 && report.pass() && secs < 5.0;
    Ok(outcome(
        pass,
        format!("{jets} jets, symmetry dev {sym:.1e} (<= 1e-13), oracle dev {oracle:.1e}, identities suite {}, {secs:.2} s", pass_word(report.pass())),
    ))
}

// ---------------------------------------------------------------- 2

fn plane_drift(n: usize, q: usize) -> Res<(f64, usize)> {
    let grid = GridSpec::new(n, q, 2.0, 16).map_err(err)?;
    let mut data = DataFamily::linear_plane(n, q, 0.01, 1.0);
    if q > 1 {
        data.polarization = (0..q).map(|i| (i + 1) as f64).collect();
    }
    let norm = data.polarization.iter().map(|x| x * x).sum::<f64>().sqrt();
    let state = realize::<f64>(&data, &grid).map_err(err)?;
    let dt = 0.2 * grid.dx();
    let opts = EvolveOptions { cfl: 0.2, t_final: 1000.0 * dt, diag_cadence: 1000, dynamics: Dynamics::default(), residual: false };
    let mut drift = 0.0f64;
    let cells = grid.cells();
    let out = evolve(state, &opts, |ev| {
        if let tms_core::evolution::Event::State { state, .. } = ev {
            for i in 0..q {
                let a = 0.01 * data.polarization[i] / norm;
                for c in 0..cells {
                    drift = drift.max((state.fields()[i * cells + c] - a * state.t).abs());
                    drift = drift.max((state.velocities()[i * cells + c] - a).abs());
                }
            }
        }
        Ok(())
    })
    .map_err(err)?;
    if out.status != Status::Ok {
        return Err(format!("plane run stopped: {:?}", out.status));
    }
    Ok((drift, out.steps))
}

fn criterion_2(ctx: &mut Ctx) -> Res<Outcome> {
    let start = Instant::now();
    let mut drift = 0.0f64;
    let mut steps = usize::MAX;
    for (n, q) in [(2, 1), (2, 3), (3, 2)] {
        let (d, s) = plane_drift(n, q)?;
        drift = drift.max(d);
        steps = steps.min(s);
    }
    let runs = ctx.null_wave()?;
    let (e0, e1) = (runs.levels[0].1, runs.levels[1].1);
    let (r0, r1) = (runs.levels[0].2, runs.levels[1].2);
    let err_order = (e0 / e1).log2();
    let res_order = (r0 / r1).log2();
    let secs = start.elapsed().as_secs_f64();
    let within = |o: f64| (3.7..=4.3).contains(&o);
    let pass = drift <= 1e-12 && steps >= 1000 && within(err_order) && within(res_order) && secs < 120.0;
    Ok(outcome(
        pass,
        format!(
            "plane drift {drift:.1e} over {steps} steps; null wave error {e0:.3e} -> {e1:.3e} (order {err_order:.3}), \
             residual {r0:.3e} -> {r1:.3e} (order {res_order:.3}); {secs:.1} s"
        ),
    ))
}

// ---------------------------------------------------------------- 3

fn criterion_3(ctx: &mut Ctx) -> Res<Outcome> {
    let start = Instant::now();
    let base = |eps: f64, dynamics: Dynamics, name: &str| -> Res<SimConfig> {
        let mut cfg = SimConfig::new(2, 1, 20.0, 256, 5.0, DataFamily::gaussian(2, 1, eps, 1.0)).map_err(err)?;
        cfg.dynamics = dynamics;
        cfg.residual = false;
        cfg.diag_cadence = 1000;
        cfg.output_dir = ctx.dir(name);
        Ok(cfg)
    };
    let (lin, _) = evolve_to_end(&base(1.0, Dynamics::Linear, "lin")?).map_err(err)?;
    let mut dev = Vec::new();
    for eps in [2e-2, 1e-2] {
        let (f, _) = evolve_to_end(&base(eps, Dynamics::default(), "nl")?).map_err(err)?;
        let d = f.fields().iter().zip(lin.fields()).fold(0.0f64, |m, (a, b)| m.max((a - eps * b).abs()));
        dev.push(d);
    }
    let ratio = dev[0] / dev[1];
    let secs = start.elapsed().as_secs_f64();
    let pass = (6.5..=9.5).contains(&ratio) && secs < 120.0;
    Ok(outcome(pass, format!("deviation {:.3e} -> {:.3e}, ratio {ratio:.4} (target 8); {secs:.1} s", dev[0], dev[1])))
}

// ---------------------------------------------------------------- 4

/// Smallest `rhs − lhs` with the right-hand side rebuilt from the samples.
fn energy_margin(s: &RunSummary) -> Res<(f64, f64)> {
    let e = &s.energy;
    if e.is_empty() || e.len() != s.bounds.len() {
        return Err("energy series missing".into());
    }
    let (mut src, mut ex) = (0.0, 0.0);
    let mut worst = f64::INFINITY;
    let mut agree = 0.0f64;
    for k in 0..e.len() {
        if k > 0 {
            let h = e[k].t - e[k - 1].t;
            src += h * (e[k].source_l2 + e[k - 1].source_l2) / 2.0;
            ex += h * 2.0 * (e[k].dh_linf + e[k - 1].dh_linf) / 2.0;
        }
        let rhs = 2.0 * (e[0].grad_l2 + src) * ex.exp();
        worst = worst.min(rhs - e[k].grad_l2);
        agree = agree.max((rhs - s.bounds[k].rhs).abs() / rhs);
    }
    Ok((worst, agree))
}

fn criterion_4(ctx: &mut Ctx) -> Res<Outcome> {
    let tol = 10.0 * ctx.null_wave()?.levels[1].1;
    let mut parts = Vec::new();
    let mut pass = true;
    for name in ["small_q2", "n2", "n3"] {
        let s = match name {
            "small_q2" => ctx.small()?,
            "n2" => ctx.decay_run(2)?,
            _ => ctx.decay_run(3)?,
        };
        let (worst, agree) = energy_margin(s)?;
        let ok = worst >= -tol && agree <= 1e-12 && s.status == Status::Ok;
        pass &= ok;
        parts.push(format!("{name} min margin {worst:.3e}"));
        // the n = 2 Gaussian starts at rest with ‖∇f‖ = ε√π; the stencils
        // miss it by (dx/σ)⁴-size truncation, 6e-3 at dx/σ = 1/3
        if name != "n3" {
            let want = 0.05 * std::f64::consts::PI.sqrt();
            let got = s.energy[0].grad_l2;
            let rel = (got - want).abs() / want;
            pass &= rel <= 2e-2;
            parts.push(format!("{name} initial energy rel dev {rel:.1e}"));
        }
    }
    Ok(outcome(pass, format!("tol {tol:.2e}; {}", parts.join(", "))))
}

// ---------------------------------------------------------------- 5, 6

fn decay_exponent(ctx: &mut Ctx, n: usize, lo: f64, hi: f64) -> Res<(f64, f64, f64, f64)> {
    let s = ctx.decay_run(n)?;
    let t = s.times();
    let ours = loglog_slope(&t, &s.grad_linf, lo, hi);
    let fit = decay_fit(&t, &s.grad_linf, lo, hi).map_err(err)?;
    Ok((ours, fit.exponent, fit.half_width, s.wall_time_s))
}

fn criterion_5(ctx: &mut Ctx) -> Res<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, lo, hi, band) in [(3, 10.0, 40.0, (-1.15, -0.85)), (2, 15.0, 60.0, (-0.60, -0.40))] {
        let (ours, lib, hw, wall) = decay_exponent(ctx, n, lo, hi)?;
        let ok = ours >= band.0 && ours <= band.1 && (ours - lib).abs() <= 1e-10;
        pass &= ok;
        parts.push(format!(
            "n={n}: exponent {ours:.4} ± {hw:.4} over [{lo}, {hi}] in [{}, {}] {} (run {wall:.0} s)",
            band.0,
            band.1,
            pass_word(ok)
        ));
    }
    Ok(outcome(pass, parts.join("; ")))
}

fn criterion_6(ctx: &mut Ctx) -> Res<Outcome> {
    let s = ctx.decay_run(2)?;
    let m2: Vec<f64> = s.norms.iter().map(|r| r.m2).collect();
    let slope = loglog_slope(&s.times(), &m2, 10.0, 60.0);
    Ok(outcome(slope <= 0.25, format!("M2 growth exponent {slope:.4} over [10, 60] (<= 0.25)")))
}

// ---------------------------------------------------------------- 7

/// `ζ^α` at `y = (t, x)`, written out from the definitions.
fn zeta(z: VectorFieldId, y: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; y.len()];
    match z {
        VectorFieldId::Translation(m) => v[m] = 1.0,
        // Ω_ab = x^b ∂_a − x^a ∂_b
        VectorFieldId::Rotation(a, b) => {
            v[a] = y[b];
            v[b] = -y[a];
        }
        // Ω_0a = t ∂_a + x^a ∂_t
        VectorFieldId::Boost(a) => {
            v[a] = y[0];
            v[0] = y[a];
        }
        // L = t ∂_t + r ∂_r
        VectorFieldId::Scaling => v.copy_from_slice(y),
    }
    v
}

/// `M[α][μ] = ∂_μ ζ^α` by differencing the (affine) coefficients.
fn zeta_jacobian(z: VectorFieldId, dim: usize) -> Vec<Vec<f64>> {
    let y0 = vec![0.3; dim];
    let z0 = zeta(z, &y0);
    let mut m = vec![vec![0.0; dim]; dim];
    for mu in 0..dim {
        let mut y = y0.clone();
        y[mu] += 1.0;
        let z1 = zeta(z, &y);
        for a in 0..dim {
            m[a][mu] = z1[a] - z0[a];
        }
    }
    m
}

/// Solve the normal equations of `b·a ≈ rhs`.
fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let k = rows[0].len();
    let ata: Vec<Vec<f64>> =
        (0..k).map(|i| (0..k).map(|j| rows.iter().map(|r| r[i] * r[j]).sum()).collect()).collect();
    let atb: Vec<f64> = (0..k).map(|i| rows.iter().zip(rhs).map(|(r, b)| r[i] * b).sum()).collect();
    let (_, inv) = invert(&ata);
    (0..k).map(|i| (0..k).map(|j| inv[i][j] * atb[j]).sum()).collect()
}

/// Commutation constants of `Z` with `Q` fitted on affine functions: for
/// constant gradients `k, l`, `ZQ = 0` and `∂(Zu) = Mᵀk`.
fn fitted_table(z: VectorFieldId, q: NullFormId, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let dim = n + 1;
    let m = zeta_jacobian(z, dim);
    let basis = null_form_basis(n);
    let mt = |k: &[f64]| -> Vec<f64> { (0..dim).map(|mu| (0..dim).map(|a| m[a][mu] * k[a]).sum()).collect() };
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for _ in 0..4 * basis.len() {
        let k: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let l: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        rows.push(basis.iter().map(|b| b.eval(&k, &l)).collect());
        rhs.push(-q.eval(&mt(&k), &l) - q.eval(&k, &mt(&l)));
    }
    least_squares(&rows, &rhs)
}

fn null_wave_jet(grid: GridSpec, t: f64, omega: &[f64], shift: f64) -> TimeJet<f64> {
    let n = grid.n();
    TimeJet::from_fn(grid, t, 2, |j, c, _| {
        let x = grid.position(c);
        let s = (t - (0..n).map(|a| omega[a] * x[a]).sum::<f64>() - shift) / 2.0;
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let w = 1.0 - s * s;
        match j {
            0 => w.powi(8),
            1 => -16.0 * s * w.powi(7) / 2.0,
            _ => (-16.0 * w.powi(7) + 224.0 * s * s * w.powi(6)) / 4.0,
        }
    })
}

fn criterion_7(_: &mut Ctx) -> Res<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0007);
    let mut parts = Vec::new();
    let mut pass = true;

    // Q00 on null gradients, pointwise and on the grid
    let mut q00_point = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=3);
        let mut om: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = om.iter().map(|x| x * x).sum::<f64>().sqrt();
        om.iter_mut().for_each(|x| *x /= r);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let du: Vec<f64> = std::iter::once(a).chain(om.iter().map(|o| -a * o)).collect();
        let dw: Vec<f64> = std::iter::once(b).chain(om.iter().map(|o| -b * o)).collect();
        q00_point = q00_point.max(NullFormId::Q00.eval(&du, &dw).abs() / (a * b).abs().max(1e-300));
    }
    let mut q00_grid = [0.0f64; 2];
    for (k, points) in [128usize, 256].into_iter().enumerate() {
        let grid = GridSpec::new(2, 1, 8.0, points).map_err(err)?;
        let u = null_wave_jet(grid, 0.0, &[1.0, 0.0], 0.0);
        let w = null_wave_jet(grid, 0.0, &[1.0, 0.0], 0.7);
        let q = null_form(NullFormId::Q00, &u, &w);
        // the same pair moving obliquely is far from null
        let uo = null_wave_jet(grid, 0.0, &[0.6, 0.0], 0.0);
        let qo = null_form(NullFormId::Q00, &uo, &w);
        let scale = qo.d[0].iter().fold(0.0f64, |m, x| m.max(x.abs()));
        q00_grid[k] = q.d[0].iter().fold(0.0f64, |m, x| m.max(x.abs())) / scale;
    }
    let q00_order = (q00_grid[0] / q00_grid[1]).log2();
    let ok = q00_point <= 1e-15 && q00_order >= 3.5;
    pass &= ok;
    parts.push(format!(
        "Q00 null: pointwise {q00_point:.1e}, grid {:.1e} -> {:.1e} (order {q00_order:.2}) {}",
        q00_grid[0],
        q00_grid[1],
        pass_word(ok)
    ));

    // antisymmetry, bitwise
    let mut anti = true;
    for _ in 0..1000 {
        let n = rng.gen_range(2..=3);
        let du: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dw: Vec<f64> = (0..=n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for a in 0..=n {
            for b in 0..=n {
                if a == b {
                    continue;
                }
                let q = NullFormId::Q(a, b);
                anti &= q.eval(&du, &dw) == -q.eval(&dw, &du);
                anti &= q.eval(&du, &dw) == -NullFormId::Q(b, a).eval(&du, &dw);
            }
        }
    }
    for n in [2usize, 3] {
        let grid = GridSpec::new(n, 1, 2.0, if n == 2 { 32 } else { 16 }).map_err(err)?;
        let bat = polynomial_battery(grid, 0.4, 11, 2);
        for a in 0..=n {
            for b in a + 1..=n {
                let x = null_form(NullFormId::Q(a, b), &bat[0], &bat[1]);
                let y = null_form(NullFormId::Q(a, b), &bat[1], &bat[0]);
                anti &= x.d[0].iter().zip(&y.d[0]).all(|(p, q)| *p == -*q);
            }
        }
    }
    pass &= anti;
    parts.push(format!("Q_ab antisymmetry exact {}", pass_word(anti)));

    // commutation tables against an independent fit, then on the battery
    let mut table_dev = 0.0f64;
    let mut comm_dev = 0.0f64;
    for n in [2usize, 3] {
        let basis = null_form_basis(n);
        let grid = GridSpec::new(n, 1, 2.0, if n == 2 { 32 } else { 24 }).map_err(err)?;
        let bat = polynomial_battery(grid, 0.3, 5 + n as u64, 3);
        let mag = bat.iter().flat_map(|j| j.d[0].iter()).fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
        for z in field_list(n) {
            for &q in &basis {
                let fitted = fitted_table(z, q, n, &mut rng);
                let table = z_commutation_table(z, q, n).map_err(err)?;
                for (i, b) in basis.iter().enumerate() {
                    let lib = table.iter().find(|(_, k)| k == b).map(|(c, _)| *c).unwrap_or(0.0);
                    table_dev = table_dev.max((lib - fitted[i]).abs());
                }
                for (u, w) in [(&bat[0], &bat[1]), (&bat[1], &bat[2])] {
                    comm_dev = comm_dev.max(z_commutation_deviation(z, q, u, w).map_err(err)? / (mag * mag));
                }
            }
        }
    }
    let ok = table_dev <= 1e-12 && comm_dev <= 1e-9;
    pass &= ok;
    parts.push(format!("Z-commutation table dev {table_dev:.1e}, battery dev {comm_dev:.1e} {}", pass_word(ok)));

    // −det h = 1 + Q00 + O(|∂f|⁴)
    let eps: Vec<f64> = (0..5).map(|k| 0.02 / 2f64.powi(k)).collect();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut lib_dev = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(2..=3);
        let q = rng.gen_range(2..=3);
        let df: Vec<f64> = (0..(n + 1) * q).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut rem = Vec::new();
        for &e in &eps {
            let h: Vec<Vec<f64>> = (0..=n)
                .map(|a| (0..=n).map(|b| eta(a, b) + (0..q).map(|i| e * e * df[a * q + i] * df[b * q + i]).sum::<f64>()).collect())
                .collect();
            let (det, _) = invert(&h);
            let q00: f64 = (0..q).map(|i| (0..=n).map(|m| eta(m, m) * e * e * df[m * q + i].powi(2)).sum::<f64>()).sum();
            rem.push((-det - 1.0 - q00).abs());
        }
        let lib = det_expansion_check(&FirstJet::new(n, q, df).map_err(err)?, &eps).map_err(err)?;
        for k in 0..eps.len() - 1 {
            let o = (rem[k] / rem[k + 1]).log2();
            lo = lo.min(o);
            hi = hi.max(o);
            lib_dev = lib_dev.max((o - lib.orders[k]).abs());
        }
    }
    let ok = lo >= 3.7 && hi <= 4.3 && lib_dev <= 1e-2;
    pass &= ok;
    parts.push(format!("det remainder orders in [{lo:.3}, {hi:.3}] (library dev {lib_dev:.1e}) {}", pass_word(ok)));

    let report = run_check(Suite::NullForms, 7).map_err(err)?;
    pass &= report.pass();
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    parts.push(format!("nullforms suite {}; {secs:.1} s", pass_word(report.pass())));
    Ok(outcome(pass, parts.join("; ")))
}

// ---------------------------------------------------------------- 8

fn criterion_8(_: &mut Ctx) -> Res<Outcome> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0008);
    let mut pass = true;
    let mut parts = Vec::new();

    let (mut const_dev, mut oracle_ok, mut integral) = (0.0f64, true, true);
    for n in [2usize, 3] {
        let grid = GridSpec::new(n, 1, 2.0, if n == 2 { 32 } else { 20 }).map_err(err)?;
        for z in field_list(n) {
            let (a, spread) = measure_commutator_constants(z, grid, 0.25).map_err(err)?;
            const_dev = const_dev.max(spread);
            let m = zeta_jacobian(z, n + 1);
            for nu in 0..=n {
                for beta in 0..=n {
                    let r = a[nu][beta].round();
                    const_dev = const_dev.max((a[nu][beta] - r).abs());
                    integral &= [-1.0, 0.0, 1.0].contains(&r);
                    // [Z, ∂_ν] x^β = −∂_ν ζ^β
                    oracle_ok &= r == -m[beta][nu];
                }
            }
        }
    }
    let ok = const_dev <= 1e-9 && integral && oracle_ok;
    pass &= ok;
    parts.push(format!("[Z, d] constants in {{0, ±1}}, dev {const_dev:.1e}, match derivation {}", pass_word(ok)));

    // polynomial battery: stencils are exact, so only rounding remains
    let mut poly_dev = 0.0f64;
    let mut quadric_ok = true;
    for n in [2usize, 3] {
        let grid = GridSpec::new(n, 1, 2.0, if n == 2 { 32 } else { 20 }).map_err(err)?;
        let dim = n + 1;
        let mut fields = vec![TestField::Quadric];
        for _ in 0..2 {
            fields.push(TestField::Cubic((0..dim * dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()));
        }
        for psi in &fields {
            for z in field_list(n) {
                let r = commutator_check(z, psi, grid, 0.3).map_err(err)?;
                poly_dev = poly_dev.max(r.wave_deviation / r.scale.max(1.0)).max(r.partial_deviation / r.scale.max(1.0));
            }
        }
        // [L, □](t² − |x|²) = −2□(t² − |x|²) = 4 + 4n
        let jet = TestField::Quadric.jet(grid, 0.3, 3);
        let l_box = apply_vector_field(VectorFieldId::Scaling, &jet.wave());
        let box_l = apply_vector_field(VectorFieldId::Scaling, &jet).wave();
        let want = 4.0 + 4.0 * n as f64;
        let c = (0..grid.cells()).find(|&c| grid.seam_distance(c) >= 8).unwrap();
        quadric_ok &= ((l_box.d[0][c] - box_l.d[0][c]) - want).abs() <= 1e-9;
    }
    let ok = poly_dev <= 1e-9 && quadric_ok;
    pass &= ok;
    parts.push(format!("polynomial battery dev {poly_dev:.1e}, [L, box] quadric {}", pass_word(ok)));

    // trigonometric battery: deviations are truncation error, shrinking at fourth order
    let mut orders = Vec::new();
    for n in [2usize, 3] {
        let psi = TestField::Wave {
            k: if n == 2 { vec![1.0, 2.0] } else { vec![1.0, 1.0, 1.0] },
            omega: if n == 2 { 5f64.sqrt() } else { 3f64.sqrt() },
        };
        for z in field_list(n) {
            let mut dev = Vec::new();
            for points in [32usize, 64] {
                let grid = GridSpec::new(n, 1, std::f64::consts::PI, points).map_err(err)?;
                let r = commutator_check(z, &psi, grid, 0.2).map_err(err)?;
                dev.push(r.wave_deviation.max(r.partial_deviation) / r.scale.max(1.0));
            }
            // translations commute exactly on the grid
            if dev[0] > 1e-11 {
                orders.push((dev[0] / dev[1]).log2());
            } else {
                orders.push(f64::INFINITY);
            }
        }
    }
    let worst = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = worst >= 3.5;
    pass &= ok;
    parts.push(format!("trigonometric battery worst order {worst:.2} {}", pass_word(ok)));

    let report = run_check(Suite::Commutators, 8).map_err(err)?;
    pass &= report.pass();
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 30.0;
    parts.push(format!("commutators suite {}; {secs:.1} s", pass_word(report.pass())));
    Ok(outcome(pass, parts.join("; ")))
}

// ---------------------------------------------------------------- 9

fn manifest_map(path: &Path) -> Res<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(err)?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

fn criterion_9(ctx: &mut Ctx) -> Res<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();

    // library
    let mut cfg = config("n = 2\nq = 1\nL = 10\nN = 64\nt_final = 2\ndata = gaussian\nepsilon = 1\nsigma = 1\nallow_wrap = true\n")?;
    cfg.output_dir = ctx.dir("steep_lib");
    let s = run_evolve(&cfg).map_err(err)?;
    let ok = matches!(s.status, Status::CoercivityLost { .. }) && s.exit_code() == 2 && s.failure.is_some();
    pass &= ok;
    parts.push(format!("library: {} exit {} {}", s.status.name(), s.exit_code(), pass_word(ok)));

    // binary
    let dir = ctx.dir("steep_bin");
    std::fs::create_dir_all(&dir).map_err(err)?;
    let cfg_path = dir.join("steep.cfg");
    std::fs::write(
        &cfg_path,
        format!(
            "n = 2\nq = 1\nL = 10\nN = 64\nt_final = 2\ndata = gaussian\nepsilon = 1.0\nsigma = 1.0\nallow_wrap = true\noutput_dir = {}\n",
            dir.join("out").display()
        ),
    )
    .map_err(err)?;
    let out = Command::new(env!("CARGO_BIN_EXE_tms"))
        .args(["evolve", "--config"])
        .arg(&cfg_path)
        .env_remove("TMS_OUTPUT_DIR")
        .output()
        .map_err(err)?;
    let stderr = String::from_utf8_lossy(&out.stderr);
    let manifest = manifest_map(&dir.join("out").join("run_manifest"))?;
    let cell = manifest.get("run.failure_cell").cloned().unwrap_or_default();
    let ok = out.status.code() == Some(2)
        && stderr.contains("CoercivityLost")
        && !cell.is_empty()
        && manifest.get("run.status").map(String::as_str) == Some("CoercivityLost")
        && dir.join("out").join("failure_state.tmsb").exists();
    pass &= ok;
    parts.push(format!("binary: exit {:?}, failure cell {cell} {}", out.status.code(), pass_word(ok)));

    // small data never trips the monitor
    let mut small_ok = true;
    let mut min_margin = f64::INFINITY;
    for n in [2usize, 3] {
        let s = ctx.decay_run(n)?;
        small_ok &= s.status == Status::Ok && s.exit_code() == 0;
        min_margin = s.norms.iter().fold(min_margin, |m, r| m.min(r.margin));
    }
    small_ok &= min_margin > 0.0;
    pass &= small_ok;
    parts.push(format!("criterion-5 runs OK, min margin {min_margin:.4} {}", pass_word(small_ok)));
    Ok(outcome(pass, parts.join("; ")))
}

// ---------------------------------------------------------------- 10

/// Every output file except the manifest, which records wall time.
fn artifacts(dir: &Path) -> Res<BTreeMap<String, Vec<u8>>> {
    let mut m = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(err)? {
        let p = e.map_err(err)?.path();
        let name = p.file_name().unwrap().to_string_lossy().to_string();
        if name != "run_manifest" {
            m.insert(name, std::fs::read(&p).map_err(err)?);
        }
    }
    Ok(m)
}

fn criterion_10(ctx: &mut Ctx) -> Res<Outcome> {
    let max_workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let mut cfg = SimConfig::new(2, 2, 24.0, 128, 3.0, DataFamily::gaussian(2, 2, 0.1, 1.5)).map_err(err)?;
    cfg.data.polarization = vec![0.6, 0.8];
    cfg.diag_cadence = 5;
    cfg.snapshot_cadence = 10;
    cfg.workers = 1;
    cfg.output_dir = ctx.dir("det_ref");
    run_evolve(&cfg).map_err(err)?;
    let reference = artifacts(&cfg.output_dir)?;
    let manifest = std::fs::read_to_string(cfg.output_dir.join("run_manifest")).map_err(err)?;

    let mut workers = vec![1, 1, max_workers, max_workers];
    if max_workers < 4 {
        // oversubscribe so the threaded code paths still run
        workers.push(4);
    }
    let mut same = true;
    for (k, &w) in workers.iter().enumerate() {
        let mut again = parse_manifest(&manifest).map_err(err)?;
        again.workers = w;
        again.output_dir = ctx.dir(&format!("det_{k}"));
        run_evolve(&again).map_err(err)?;
        same &= artifacts(&again.output_dir)? == reference;
    }
    let snaps = reference.keys().filter(|k| k.ends_with(".tmsb")).count();
    let pass = same && snaps >= 2 && reference.contains_key("norms.csv");
    Ok(outcome(
        pass,
        format!("{} files ({snaps} snapshots) identical across worker counts {workers:?}", reference.len()),
    ))
}

// ----------------------------------------------------------------

fn pass_word(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn main() {
    std::env::remove_var("TMS_OUTPUT_DIR");
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn(&mut Ctx) -> Res<Outcome>); 10] = [
        (1, "H-symmetry", criterion_1),
        (2, "exact solutions", criterion_2),
        (3, "cubic nonlinearity", criterion_3),
        (4, "energy inequality", criterion_4),
        (5, "decay rates", criterion_5),
        (6, "n=2 M2 growth", criterion_6),
        (7, "null structure", criterion_7),
        (8, "Lie algebra", criterion_8),
        (9, "continuation monitor", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let mut ctx = Ctx { root: tempfile::tempdir().expect("tempdir"), null_wave: None, n2: None, n3: None, small: None };
    let mut failed = 0;
    for (k, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&k)) {
            continue;
        }
        let res = catch_unwind(AssertUnwindSafe(|| f(&mut ctx)));
        let o = match res {
            Ok(Ok(o)) => o,
            Ok(Err(e)) => outcome(false, format!("error: {e}")),
            Err(p) => {
                let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
                outcome(false, format!("panic: {}", msg.unwrap_or_default()))
            }
        };
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {k:>2} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    // exit() skips destructors
    drop(ctx);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
