//! `evolve`: drive the engine and write `norms.csv`, `energy.csv`,
//! snapshots and `run_manifest`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{SimConfig, RUN_PREFIX};
use super::snapshot::{read_snapshot, write_snapshot};
use crate::diagnostics::energy::{energy_and_inequality, energy_sample, EnergyBound, EnergySample};
use crate::diagnostics::jet::state_jet_with_stats;
use crate::diagnostics::norms::{norm_levels, NormLevels, NormsRecord};
use crate::error::{Error, Result};
use crate::evolution::{evolve, Event, Status};
use crate::grid::FieldState;
use crate::initial_data::{realize, DataKind};

pub const NORMS_FILE: &str = "norms.csv";
pub const ENERGY_FILE: &str = "energy.csv";
pub const MANIFEST_FILE: &str = "run_manifest";
pub const FAILURE_SNAPSHOT: &str = "failure_state.tmsb";
pub const NORMS_HEADER: &str = "t,M1,M2,N1,N2,energy,margin,div_residual";
pub const ENERGY_HEADER: &str = "t,grad_l2,grad_linf,source_l2,dh_linf,rhs,margin";

/// Shortest round-trip scientific notation, so reruns are byte-identical.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:e}")
    }
}

pub fn snapshot_name(step: usize) -> String {
    format!("snap_{step:06}.tmsb")
}

/// Where and why a run stopped early.
#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub cell: usize,
    pub index: Vec<usize>,
    pub position: Vec<f64>,
    pub t: f64,
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub status: Status,
    pub steps: usize,
    pub dt: f64,
    pub norms: Vec<NormsRecord>,
    pub levels: Vec<NormLevels>,
    pub energy: Vec<EnergySample>,
    /// `‖∂f‖_{L∞}` at each sample.
    pub grad_linf: Vec<f64>,
    pub bounds: Vec<EnergyBound>,
    pub final_state: FieldState<f64>,
    pub failure: Option<Failure>,
    pub wall_time_s: f64,
}

impl RunSummary {
    /// 0 on success, 2 on loss of coercivity, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        exit_code(&self.status)
    }

    pub fn times(&self) -> Vec<f64> {
        self.norms.iter().map(|r| r.t).collect()
    }
}

pub fn exit_code(status: &Status) -> i32 {
    match status {
        Status::Ok => 0,
        Status::CoercivityLost { .. } => 2,
        Status::NonFinite { .. } => 1,
    }
}

fn csv_row(vals: &[f64]) -> String {
    vals.iter().map(|&x| format_float(x)).collect::<Vec<_>>().join(",")
}

pub fn norms_row(r: &NormsRecord) -> String {
    csv_row(&[r.t, r.m1, r.m2, r.n1, r.n2, r.energy, r.margin, r.div_residual])
}

/// Files written by a run, and which of them are incomplete.
#[derive(Default)]
struct Artifacts {
    open: Vec<String>,
    done: Vec<String>,
}

impl Artifacts {
    fn opened(&mut self, name: &str) {
        self.open.push(name.to_string());
    }

    fn closed(&mut self, name: &str) {
        self.open.retain(|x| x != name);
        self.done.push(name.to_string());
    }
}

struct Csv {
    path: PathBuf,
    w: BufWriter<File>,
}

impl Csv {
    fn create(dir: &Path, name: &str, header: &str, art: &mut Artifacts) -> Result<Self> {
        let path = dir.join(name);
        art.opened(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut c = Self { path, w: BufWriter::new(file) };
        c.line(header)?;
        Ok(c)
    }

    /// Write and flush one line.
    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.w, "{s}").and_then(|_| self.w.flush()).map_err(|e| Error::io(&self.path, e))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).and_then(|_| f.flush()).map_err(|e| Error::io(path, e))
}

pub(crate) fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::validation("workers", e.to_string()))
}

/// Initial state described by the configuration.
pub fn initial_state(cfg: &SimConfig) -> Result<FieldState<f64>> {
    let grid = cfg.grid()?;
    if cfg.data.kind == DataKind::Custom {
        let path = cfg.data_file.as_ref().ok_or_else(|| Error::validation("data_file", "missing"))?;
        let s = read_snapshot(path)?;
        if s.grid != grid {
            return Err(Error::validation("data_file", "snapshot grid differs from the configured grid"));
        }
        return Ok(s);
    }
    realize(&cfg.data, &grid)
}

/// Run the evolution described by `cfg`, writing artifacts to its
/// (possibly overridden) output directory. Loss of coercivity is a
/// successful run with a non-OK status; I/O failures are errors, with the
/// incomplete files listed in the manifest.
pub fn run_evolve(cfg: &SimConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let dir = cfg.resolved_output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let pool = build_pool(cfg.workers)?;
    let threads = pool.current_num_threads();
    let start = Instant::now();
    let mut art = Artifacts::default();
    let result = pool.install(|| run_inner(cfg, &dir, &mut art, start));
    let wall = start.elapsed().as_secs_f64();
    let mut run = String::new();
    let mut kv = |k: &str, v: String| writeln!(run, "{RUN_PREFIX}{k} = {v}").expect("string write");
    kv("code_version", env!("CARGO_PKG_VERSION").to_string());
    kv("workers", threads.to_string());
    kv("wall_time_s", format!("{wall:.3}"));
    match &result {
        Ok(s) => {
            kv("status", s.status.name().to_string());
            kv("exit_code", s.exit_code().to_string());
            kv("steps", s.steps.to_string());
            kv("dt", format!("{:?}", s.dt));
            kv("t_end", format!("{:?}", s.final_state.t));
            if let Some(f) = &s.failure {
                kv("failure_cell", f.cell.to_string());
                kv("failure_index", f.index.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", "));
                kv("failure_position", f.position.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
                kv("failure_t", format!("{:?}", f.t));
                kv("failure_margin", format!("{:?}", f.margin));
            }
        }
        Err(e) => {
            kv("status", "error".into());
            kv("exit_code", "1".into());
            kv("error", e.to_string().replace('\n', " "));
        }
    }
    kv("files", art.done.join(", "));
    kv("partial_files", art.open.join(", "));
    let manifest = format!("{}{run}", cfg.to_text());
    let written = write_text(&dir.join(MANIFEST_FILE), &manifest);
    let mut s = result?;
    written?;
    s.wall_time_s = wall;
    Ok(s)
}

fn run_inner(cfg: &SimConfig, dir: &Path, art: &mut Artifacts, start: Instant) -> Result<RunSummary> {
    let data = initial_state(cfg)?;
    let grid = data.grid;
    let opts = cfg.evolve_options();
    let dynamics = cfg.dynamics;

    let mut norms_csv = Csv::create(dir, NORMS_FILE, NORMS_HEADER, art)?;
    let mut pending: BTreeMap<usize, (NormsRecord, bool)> = BTreeMap::new();
    let mut norms = Vec::new();
    let mut levels = Vec::new();
    let mut energy = Vec::new();
    let mut grad_linf = Vec::new();
    let mut snapshots = Vec::new();
    let mut failure_state = None;

    // write rows whose residual is known, in step order
    let flush = |pending: &mut BTreeMap<usize, (NormsRecord, bool)>,
                 csv: &mut Csv,
                 out: &mut Vec<NormsRecord>,
                 all: bool|
     -> Result<()> {
        while let Some((&s, &(rec, ready))) = pending.iter().next() {
            if !ready && !all {
                break;
            }
            csv.line(&norms_row(&rec))?;
            out.push(rec);
            pending.remove(&s);
        }
        Ok(())
    };

    let outcome = evolve(data, &opts, |ev| {
        match ev {
            Event::State { state, report, diagnostic } => {
                if report.status != Status::Ok {
                    failure_state = Some(state.clone());
                    return Ok(());
                }
                if cfg.snapshot_cadence > 0 && report.step % cfg.snapshot_cadence == 0 {
                    let name = snapshot_name(report.step);
                    art.opened(&name);
                    write_snapshot(&dir.join(&name), state)?;
                    art.closed(&name);
                    snapshots.push(name);
                }
                if diagnostic {
                    let (jet, _) = state_jet_with_stats(state, dynamics, 3)?;
                    let lv = norm_levels(&jet);
                    let (m1, m2, n1, n2) = lv.totals();
                    let rec = NormsRecord {
                        t: state.t,
                        m1,
                        m2,
                        n1,
                        n2,
                        energy: lv.energy(),
                        margin: report.min_margin,
                        div_residual: f64::NAN,
                    };
                    energy.push(energy_sample(state, dynamics, Some(&jet.d[2]))?);
                    grad_linf.push(lv.grad_sup());
                    levels.push(lv);
                    pending.insert(report.step, (rec, !opts.residual));
                }
            }
            Event::Residual { step, value, .. } => {
                if let Some(p) = pending.get_mut(&step) {
                    p.0.div_residual = value;
                    p.1 = true;
                }
            }
        }
        flush(&mut pending, &mut norms_csv, &mut norms, false)
    })?;
    flush(&mut pending, &mut norms_csv, &mut norms, true)?;
    art.closed(NORMS_FILE);

    let bounds = energy_and_inequality(&energy)?;
    let mut energy_csv = Csv::create(dir, ENERGY_FILE, ENERGY_HEADER, art)?;
    for ((s, b), g) in energy.iter().zip(&bounds).zip(&grad_linf) {
        energy_csv.line(&csv_row(&[s.t, s.grad_l2, *g, s.source_l2, s.dh_linf, b.rhs, b.margin]))?;
    }
    art.closed(ENERGY_FILE);

    let failure = match outcome.status {
        Status::Ok => None,
        Status::CoercivityLost { cell, t, .. } | Status::NonFinite { cell, t } => {
            let margin = match outcome.status {
                Status::CoercivityLost { margin, .. } => margin,
                _ => f64::NAN,
            };
            let (idx, pos) = (grid.unravel(cell), grid.position(cell));
            Some(Failure { cell, index: idx[..grid.n()].to_vec(), position: pos[..grid.n()].to_vec(), t, margin })
        }
    };
    if let Some(s) = &failure_state {
        art.opened(FAILURE_SNAPSHOT);
        write_snapshot(&dir.join(FAILURE_SNAPSHOT), s)?;
        art.closed(FAILURE_SNAPSHOT);
    }
    Ok(RunSummary {
        output_dir: dir.to_path_buf(),
        status: outcome.status,
        steps: outcome.steps,
        dt: outcome.dt,
        norms,
        levels,
        energy,
        grad_linf,
        bounds,
        final_state: outcome.state,
        failure,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
