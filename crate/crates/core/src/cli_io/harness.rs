//! Convergence and decay harnesses.

use std::fmt;
use std::path::Path;

use super::config::SimConfig;
use super::evolve::{build_pool, format_float, initial_state, run_evolve, RunSummary};
use crate::diagnostics::decay::{decay_fit, DecayFit};
use crate::error::{Error, Result};
use crate::evolution::{evolve, Event, Status};
use crate::grid::FieldState;
use crate::initial_data::exact_solution;

pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const DECAY_FILE: &str = "decay_report.txt";

/// Differences below this count as round-off.
const EXACT_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct ConvergenceLevel {
    pub points: usize,
    /// Error against the exact solution, or the difference to the next
    /// finer level for data without one (NaN on the finest level).
    pub error: f64,
    /// `log₂(error_k / error_{k+1})`
    pub order: f64,
    pub div_residual: f64,
    pub div_order: f64,
}

#[derive(Clone, Debug)]
pub struct ConvergenceTable {
    pub t_final: f64,
    /// Errors are against the exact solution (otherwise self-convergence).
    pub against_exact: bool,
    /// All differences at round-off.
    pub exact: bool,
    pub levels: Vec<ConvergenceLevel>,
}

impl ConvergenceTable {
    /// Observed orders that are defined.
    pub fn orders(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.order).filter(|o| o.is_finite()).collect()
    }

    pub fn div_orders(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.div_order).filter(|o| o.is_finite()).collect()
    }
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.against_exact { "error vs exact solution" } else { "difference to next level" };
        writeln!(f, "t = {}, {kind}{}", self.t_final, if self.exact { " (exact: round-off only)" } else { "" })?;
        writeln!(f, "{:>6} {:>14} {:>8} {:>14} {:>8}", "N", "error", "order", "div_residual", "order")?;
        for l in &self.levels {
            writeln!(
                f,
                "{:>6} {:>14.6e} {:>8.3} {:>14.6e} {:>8.3}",
                l.points, l.error, l.order, l.div_residual, l.div_order
            )?;
        }
        Ok(())
    }
}

/// Final state and final divergence residual of one evolution, no files.
pub fn evolve_to_end(cfg: &SimConfig) -> Result<(FieldState<f64>, f64)> {
    let data = initial_state(cfg)?;
    let opts = cfg.evolve_options();
    // residuals arrive in step order, so the last one belongs to t_final
    let mut last = f64::NAN;
    let out = evolve(data, &opts, |ev| {
        if let Event::Residual { value, .. } = ev {
            last = value;
        }
        Ok(())
    })?;
    match out.status {
        Status::Ok => Ok((out.state, last)),
        Status::CoercivityLost { cell, t, margin } => Err(Error::CoercivityLost { cell, t, margin }),
        Status::NonFinite { cell, t } => Err(Error::NonFinite { cell, t }),
    }
}

/// `max |a − b|` over `f` and `v`, sampling the finer state on the coarse grid.
fn restricted_diff(coarse: &FieldState<f64>, fine: &FieldState<f64>) -> f64 {
    let (gc, gf) = (coarse.grid, fine.grid);
    let ratio = gf.points() / gc.points();
    let (cc, cf) = (gc.cells(), gf.cells());
    let mut m = 0.0f64;
    for c in 0..cc {
        let idx = gc.unravel(c);
        let fi: Vec<isize> = idx[..gc.n()].iter().map(|&i| (i * ratio) as isize).collect();
        let k = gf.ravel(&fi);
        for b in 0..gc.q() {
            m = m.max((coarse.fields()[b * cc + c] - fine.fields()[b * cf + k]).abs());
            m = m.max((coarse.velocities()[b * cc + c] - fine.velocities()[b * cf + k]).abs());
        }
    }
    m
}

fn order(a: f64, b: f64) -> f64 {
    if a > EXACT_TOL && b > 0.0 {
        (a / b).log2()
    } else {
        f64::NAN
    }
}

/// Evolve at `N, 2N (, 4N)` to the same time and tabulate observed orders.
pub fn run_convergence(cfg: &SimConfig, refinements: usize) -> Result<ConvergenceTable> {
    if !(2..=3).contains(&refinements) {
        return Err(Error::validation("refinements", "must be 2 or 3"));
    }
    let pool = build_pool(cfg.workers)?;
    pool.install(|| {
        let mut runs = Vec::new();
        for k in 0..refinements {
            let mut c = cfg.clone();
            c.points = cfg.points << k;
            c.validate()?;
            let (state, res) = evolve_to_end(&c)?;
            runs.push((c, state, res));
        }
        let against_exact = cfg.data.has_exact_solution();
        let errors: Vec<f64> = if against_exact {
            runs.iter()
                .map(|(c, s, _)| {
                    let ex = exact_solution::<f64>(&c.data, &c.grid()?, s.t)?;
                    Ok(restricted_diff(s, &ex))
                })
                .collect::<Result<_>>()?
        } else {
            (0..runs.len())
                .map(|k| if k + 1 < runs.len() { restricted_diff(&runs[k].1, &runs[k + 1].1) } else { f64::NAN })
                .collect()
        };
        let exact = errors.iter().filter(|e| e.is_finite()).all(|&e| e <= EXACT_TOL);
        let levels = (0..runs.len())
            .map(|k| {
                let next = |v: &dyn Fn(usize) -> f64| if k + 1 < runs.len() { order(v(k), v(k + 1)) } else { f64::NAN };
                ConvergenceLevel {
                    points: runs[k].0.points,
                    error: errors[k],
                    order: next(&|i| errors[i]),
                    div_residual: runs[k].2,
                    div_order: next(&|i| runs[i].2),
                }
            })
            .collect();
        let table = ConvergenceTable { t_final: cfg.t_final, against_exact, exact, levels };
        write_convergence(cfg, &table)?;
        Ok(table)
    })
}

fn write_convergence(cfg: &SimConfig, t: &ConvergenceTable) -> Result<()> {
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut s = String::from("N,error,order,div_residual,div_order\n");
    for l in &t.levels {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            l.points,
            format_float(l.error),
            format_float(l.order),
            format_float(l.div_residual),
            format_float(l.div_order)
        ));
    }
    let path = dir.join(CONVERGENCE_FILE);
    std::fs::write(&path, s).map_err(|e| Error::io(&path, e))
}

/// Acceptance band for the decay exponent.
pub fn decay_band(n: usize) -> (f64, f64) {
    match n {
        2 => (-0.60, -0.40),
        3 => (-1.15, -0.85),
        _ => {
            let t = -((n as f64) - 1.0) / 2.0;
            (t - 0.15, t + 0.15)
        }
    }
}

#[derive(Clone, Debug)]
pub struct DecayReport {
    pub n: Option<usize>,
    /// `(series name, fit)`; the first entry carries the verdict.
    pub fits: Vec<(String, DecayFit)>,
    pub target: Option<f64>,
    pub band: Option<(f64, f64)>,
    pub status: Status,
}

impl DecayReport {
    pub fn primary(&self) -> Option<&DecayFit> {
        self.fits.first().map(|(_, f)| f)
    }

    pub fn fit(&self, name: &str) -> Option<&DecayFit> {
        self.fits.iter().find(|(k, _)| k == name).map(|(_, f)| f)
    }

    /// Whether the primary exponent lies in the band.
    pub fn verdict(&self) -> Option<bool> {
        let (lo, hi) = self.band?;
        Some(self.primary()?.contains(lo, hi))
    }
}

impl fmt::Display for DecayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, fit) in &self.fits {
            writeln!(
                f,
                "{name}: exponent {:.4} +- {:.4} (95%), t in [{}, {}], {} samples",
                fit.exponent, fit.half_width, fit.t_lo, fit.t_hi, fit.points
            )?;
        }
        if let (Some(t), Some((lo, hi))) = (self.target, self.band) {
            writeln!(f, "target {t} (band [{lo}, {hi}]) for {}", self.fits[0].0)?;
        }
        match self.verdict() {
            Some(true) => write!(f, "verdict: PASS"),
            Some(false) => write!(f, "verdict: FAIL"),
            None => write!(f, "verdict: none"),
        }
    }
}

fn window(cfg_lo: Option<f64>, cfg_hi: Option<f64>, t_end: f64) -> (f64, f64) {
    (cfg_lo.unwrap_or(t_end / 4.0), cfg_hi.unwrap_or(t_end))
}

/// Fits of a finished run: `sup |∂f|` (verdict), `N1`, and the growth of `M2`.
pub fn decay_from_summary(cfg: &SimConfig, s: &RunSummary) -> Result<DecayReport> {
    let t = s.times();
    let (lo, hi) = window(cfg.fit_t_lo, cfg.fit_t_hi, cfg.t_final);
    let n1: Vec<f64> = s.norms.iter().map(|r| r.n1).collect();
    let m2: Vec<f64> = s.norms.iter().map(|r| r.m2).collect();
    let fits = vec![
        ("grad_linf".to_string(), decay_fit(&t, &s.grad_linf, lo, hi)?),
        ("N1".to_string(), decay_fit(&t, &n1, lo, hi)?),
        ("M2".to_string(), decay_fit(&t, &m2, lo, hi)?),
    ];
    let n = cfg.n;
    Ok(DecayReport { n: Some(n), fits, target: Some(-((n as f64) - 1.0) / 2.0), band: Some(decay_band(n)), status: s.status })
}

/// Evolve and fit over `[t_final/4, t_final]` unless the window is configured.
pub fn run_decay(cfg: &SimConfig) -> Result<(DecayReport, RunSummary)> {
    if cfg.t_final < 40.0 {
        return Err(Error::validation("t_final", "decay fits need t_final >= 40"));
    }
    let s = run_evolve(cfg)?;
    if s.status != Status::Ok {
        let r = DecayReport { n: Some(cfg.n), fits: Vec::new(), target: None, band: None, status: s.status };
        return Ok((r, s));
    }
    let r = decay_from_summary(cfg, &s)?;
    let path = s.output_dir.join(DECAY_FILE);
    std::fs::write(&path, format!("{r}\n")).map_err(|e| Error::io(&path, e))?;
    Ok((r, s))
}

/// Fit columns of an existing CSV with a `t` column: `grad_linf` and `N1`
/// when present, otherwise every other column.
pub fn fit_csv(path: &Path, t_lo: Option<f64>, t_hi: Option<f64>) -> Result<DecayReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, message: "empty file".into() })?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let ti = header.iter().position(|h| h == "t").ok_or_else(|| Error::Parse { line: 1, message: "no `t` column".into() })?;
    let mut cols = vec![Vec::new(); header.len()];
    for (k, l) in lines.enumerate() {
        let vals: Vec<&str> = l.split(',').collect();
        if vals.len() != header.len() {
            return Err(Error::Parse { line: k + 2, message: format!("expected {} columns", header.len()) });
        }
        for (c, v) in vals.iter().enumerate() {
            let x: f64 = v.trim().parse().map_err(|_| Error::Parse { line: k + 2, message: format!("bad number `{v}`") })?;
            cols[c].push(x);
        }
    }
    let t = &cols[ti];
    let t_end = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = window(t_lo, t_hi, t_end);
    let preferred: Vec<usize> = ["grad_linf", "N1"].iter().filter_map(|n| header.iter().position(|h| h == n)).collect();
    let chosen: Vec<usize> = if preferred.is_empty() { (0..header.len()).filter(|&c| c != ti).collect() } else { preferred };
    let fits = chosen.into_iter().map(|c| Ok((header[c].clone(), decay_fit(t, &cols[c], lo, hi)?))).collect::<Result<_>>()?;
    Ok(DecayReport { n: None, fits, target: None, band: None, status: Status::Ok })
}
