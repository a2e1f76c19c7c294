//! Flat `key = value` run configuration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evolution::{Dynamics, EvolveOptions};
use crate::geometry::CoefficientForm;
use crate::grid::GridSpec;
use crate::initial_data::{DataFamily, DataKind, Profile};

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "TMS_OUTPUT_DIR";

pub const DEFAULT_CFL: f64 = 0.2;
pub const DEFAULT_DIAG_CADENCE: usize = 10;
pub const MAX_CFL: f64 = 0.25;

/// Prefix of run-information keys in a manifest.
pub(crate) const RUN_PREFIX: &str = "run.";

const KEYS: &[&str] = &[
    "n",
    "q",
    "L",
    "N",
    "cfl",
    "t_final",
    "data",
    "epsilon",
    "sigma",
    "center",
    "polarization",
    "axis",
    "profile",
    "plane_gradient",
    "data_file",
    "diag_cadence",
    "snapshot_cadence",
    "output_dir",
    "seed",
    "dynamics",
    "h_form",
    "workers",
    "residual",
    "allow_wrap",
    "allow_any_n",
    "fit_t_lo",
    "fit_t_hi",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub q: usize,
    /// Half-width `L` of the box `[−L, L)^n`.
    pub half_width: f64,
    /// Points per axis `N`.
    pub points: usize,
    pub cfl: f64,
    pub t_final: f64,
    pub data: DataFamily,
    /// Snapshot holding the initial state when `data = custom`.
    pub data_file: Option<PathBuf>,
    pub diag_cadence: usize,
    /// Steps between snapshots, 0 for none.
    pub snapshot_cadence: usize,
    pub output_dir: PathBuf,
    /// Seed for randomized property suites.
    pub seed: u64,
    pub dynamics: Dynamics,
    /// Worker threads, 0 for all available.
    pub workers: usize,
    /// Track the divergence-form residual.
    pub residual: bool,
    /// Skip the light-cone no-wrap rule.
    pub allow_wrap: bool,
    /// Accept `n` outside `{2, 3}`.
    pub allow_any_n: bool,
    /// Decay-fit window; defaults to `[t_final/4, t_final]`.
    pub fit_t_lo: Option<f64>,
    pub fit_t_hi: Option<f64>,
}

impl SimConfig {
    /// A validated configuration with defaults for everything but the grid.
    pub fn new(n: usize, q: usize, half_width: f64, points: usize, t_final: f64, data: DataFamily) -> Result<Self> {
        let c = Self {
            n,
            q,
            half_width,
            points,
            cfl: DEFAULT_CFL,
            t_final,
            data,
            data_file: None,
            diag_cadence: DEFAULT_DIAG_CADENCE,
            snapshot_cadence: 0,
            output_dir: PathBuf::from("out"),
            seed: 0,
            dynamics: Dynamics::default(),
            workers: 0,
            residual: true,
            allow_wrap: false,
            allow_any_n: false,
            fit_t_lo: None,
            fit_t_hi: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.n, self.q, self.half_width, self.points)
    }

    pub fn evolve_options(&self) -> EvolveOptions {
        EvolveOptions {
            cfl: self.cfl,
            t_final: self.t_final,
            diag_cadence: self.diag_cadence,
            dynamics: self.dynamics,
            residual: self.residual,
        }
    }

    /// Output directory after the environment override.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(d) if !d.is_empty() => PathBuf::from(d),
            _ => self.output_dir.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.n) && !self.allow_any_n {
            return Err(Error::validation(
                "n",
                "desk-scale acceptance covers n ∈ {2,3} (set allow_any_n = true to override)",
            ));
        }
        if self.q < 1 {
            return Err(Error::validation("q", "must be at least 1"));
        }
        if !(self.cfl > 0.0) {
            return Err(Error::validation("cfl", "must be positive"));
        }
        if self.cfl > MAX_CFL {
            return Err(Error::validation("cfl", "exceeds 0.25"));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::validation("t_final", "must be finite and non-negative"));
        }
        if self.diag_cadence == 0 {
            return Err(Error::validation("diag_cadence", "must be at least 1"));
        }
        let grid = self.grid()?;
        self.data.validate(self.n, self.q)?;
        if self.data.kind == DataKind::Custom && self.data_file.is_none() {
            return Err(Error::validation("data_file", "required when data = custom"));
        }
        if let (Some(lo), Some(hi)) = (self.fit_t_lo, self.fit_t_hi) {
            if hi < 2.0 * lo {
                return Err(Error::validation("fit_t_hi", "fit window needs fit_t_hi >= 2 fit_t_lo"));
            }
        }
        if !self.allow_wrap {
            if let Some(r) = self.data.support_radius() {
                grid.check_no_wrap(r, self.t_final).map_err(|e| match e {
                    Error::Validation { field, reason } => Error::Validation {
                        field,
                        reason: format!("{reason} (t_final = {}, r_support = {r}; set allow_wrap = true to override)", self.t_final),
                    },
                    e => e,
                })?;
            }
        }
        Ok(())
    }

    /// Canonical `key = value` echo; parses back to the same configuration.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let (dynamics, h_form) = match self.dynamics {
            Dynamics::Linear => ("linear", CoefficientForm::default()),
            Dynamics::Nonlinear(f) => ("nonlinear", f),
        };
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").expect("string write");
        kv("n", self.n.to_string());
        kv("q", self.q.to_string());
        kv("L", format!("{:?}", self.half_width));
        kv("N", self.points.to_string());
        kv("cfl", format!("{:?}", self.cfl));
        kv("t_final", format!("{:?}", self.t_final));
        kv("data", self.data.kind.name().to_string());
        kv("epsilon", format!("{:?}", self.data.amplitude));
        kv("sigma", format!("{:?}", self.data.width));
        kv("center", list(&self.data.center));
        kv("polarization", list(&self.data.polarization));
        kv("axis", self.data.axis.to_string());
        kv("profile", self.data.profile.name().to_string());
        kv("plane_gradient", list(&self.data.plane_gradient));
        if let Some(p) = &self.data_file {
            kv("data_file", p.display().to_string());
        }
        kv("diag_cadence", self.diag_cadence.to_string());
        kv("snapshot_cadence", self.snapshot_cadence.to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("seed", self.seed.to_string());
        kv("dynamics", dynamics.to_string());
        kv("h_form", h_form.name().to_string());
        kv("workers", self.workers.to_string());
        kv("residual", self.residual.to_string());
        kv("allow_wrap", self.allow_wrap.to_string());
        kv("allow_any_n", self.allow_any_n.to_string());
        if let Some(x) = self.fit_t_lo {
            kv("fit_t_lo", format!("{x:?}"));
        }
        if let Some(x) = self.fit_t_hi {
            kv("fit_t_hi", format!("{x:?}"));
        }
        s
    }
}

/// `(line number, key, value)` pairs of a flat config text.
fn pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Parse { line: i + 1, message: format!("expected `key = value`, got `{line}`") });
        };
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse { line: i + 1, message: "empty key".into() });
        }
        out.push((i + 1, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::validation(key, format!("cannot parse `{v}`")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| value(key, x.trim())).collect()
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::validation(key, format!("expected true or false, got `{v}`"))),
    }
}

/// Parse and validate a configuration.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    parse_pairs(pairs(text)?)
}

/// Parse the configuration echoed in a run manifest, ignoring run keys.
pub fn parse_manifest(text: &str) -> Result<SimConfig> {
    parse_pairs(pairs(text)?.into_iter().filter(|(_, k, _)| !k.starts_with(RUN_PREFIX)).collect())
}

fn parse_pairs(pairs: Vec<(usize, String, String)>) -> Result<SimConfig> {
    let mut seen = BTreeSet::new();
    let mut get = std::collections::BTreeMap::new();
    for (line, k, v) in pairs {
        if !KEYS.contains(&k.as_str()) {
            return Err(Error::Parse { line, message: format!("unknown key `{k}`") });
        }
        if !seen.insert(k.clone()) {
            return Err(Error::Parse { line, message: format!("duplicate key `{k}`") });
        }
        get.insert(k, v);
    }
    let req = |k: &str| get.get(k).ok_or_else(|| Error::validation(k, "missing"));
    let n: usize = value("n", req("n")?)?;
    let q: usize = value("q", req("q")?)?;
    let half_width: f64 = value("L", req("L")?)?;
    let points: usize = value("N", req("N")?)?;
    let t_final: f64 = value("t_final", req("t_final")?)?;
    let opt = |k: &str| get.get(k).map(String::as_str);

    let kind = match opt("data") {
        Some(s) => DataKind::parse(s).ok_or_else(|| Error::validation("data", format!("unknown family `{s}`")))?,
        None => DataKind::GaussianBump,
    };
    let mut data = DataFamily::gaussian(n, q.max(1), 0.05, 1.0);
    data.kind = kind;
    if let Some(v) = opt("epsilon") {
        data.amplitude = value("epsilon", v)?;
    }
    if let Some(v) = opt("sigma") {
        data.width = value("sigma", v)?;
    }
    if let Some(v) = opt("center") {
        data.center = list("center", v)?;
    }
    if let Some(v) = opt("polarization") {
        data.polarization = list("polarization", v)?;
    }
    if let Some(v) = opt("axis") {
        data.axis = value("axis", v)?;
    }
    if let Some(v) = opt("profile") {
        data.profile = Profile::parse(v).ok_or_else(|| Error::validation("profile", format!("unknown profile `{v}`")))?;
    }
    if let Some(v) = opt("plane_gradient") {
        data.plane_gradient = list("plane_gradient", v)?;
    }
    let form = match opt("h_form") {
        Some(v) => CoefficientForm::parse(v).ok_or_else(|| Error::validation("h_form", format!("unknown form `{v}`")))?,
        None => CoefficientForm::default(),
    };
    let dynamics = match opt("dynamics").unwrap_or("nonlinear") {
        "nonlinear" => Dynamics::Nonlinear(form),
        "linear" => Dynamics::Linear,
        v => return Err(Error::validation("dynamics", format!("expected nonlinear or linear, got `{v}`"))),
    };
    let cfg = SimConfig {
        n,
        q,
        half_width,
        points,
        cfl: opt("cfl").map(|v| value("cfl", v)).transpose()?.unwrap_or(DEFAULT_CFL),
        t_final,
        data,
        data_file: opt("data_file").map(PathBuf::from),
        diag_cadence: opt("diag_cadence").map(|v| value("diag_cadence", v)).transpose()?.unwrap_or(DEFAULT_DIAG_CADENCE),
        snapshot_cadence: opt("snapshot_cadence").map(|v| value("snapshot_cadence", v)).transpose()?.unwrap_or(0),
        output_dir: PathBuf::from(opt("output_dir").unwrap_or("out")),
        seed: opt("seed").map(|v| value("seed", v)).transpose()?.unwrap_or(0),
        dynamics,
        workers: opt("workers").map(|v| value("workers", v)).transpose()?.unwrap_or(0),
        residual: opt("residual").map(|v| flag("residual", v)).transpose()?.unwrap_or(true),
        allow_wrap: opt("allow_wrap").map(|v| flag("allow_wrap", v)).transpose()?.unwrap_or(false),
        allow_any_n: opt("allow_any_n").map(|v| flag("allow_any_n", v)).transpose()?.unwrap_or(false),
        fit_t_lo: opt("fit_t_lo").map(|v| value("fit_t_lo", v)).transpose()?,
        fit_t_hi: opt("fit_t_hi").map(|v| value("fit_t_hi", v)).transpose()?,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "n = 2\nq = 1\nL = 20\nN = 64\nt_final = 2   # short\nsigma = 1.0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.cfl, 0.2);
        assert_eq!(c.diag_cadence, 10);
        assert_eq!(c.snapshot_cadence, 0);
        assert_eq!(c.data.kind, DataKind::GaussianBump);
        assert_eq!(c.dynamics, Dynamics::default());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = parse_config(&format!("{MINIMAL}polarization = 1\nprofile = poly8\nfit_t_lo = 0.5\n")).unwrap();
        c.data_file = None;
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        let manifest = format!("{}run.status = OK\nrun.wall_time_s = 1.5\n", c.to_text());
        assert_eq!(parse_manifest(&manifest).unwrap(), c);
        assert!(parse_config(&manifest).is_err());
    }

    #[test]
    fn cfl_bound() {
        let e = parse_config(&format!("{MINIMAL}cfl = 0.5\n")).unwrap_err();
        match e {
            Error::Validation { field, reason } => {
                assert_eq!(field, "cfl");
                assert_eq!(reason, "exceeds 0.25");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn dimension_bound_and_override() {
        let text = MINIMAL.replace("n = 2", "n = 4").replace("N = 64", "N = 16");
        assert!(matches!(parse_config(&text), Err(Error::Validation { field, .. }) if field == "n"));
        let c = parse_config(&format!("{text}allow_any_n = true\nallow_wrap = true\nL = 4\n").replace("L = 20\n", ""));
        assert!(c.is_ok(), "{c:?}");
    }

    #[test]
    fn unknown_and_malformed_lines() {
        assert!(matches!(parse_config(&format!("{MINIMAL}cfll = 0.1\n")), Err(Error::Parse { line: 7, .. })));
        assert!(matches!(parse_config(&format!("{MINIMAL}just words\n")), Err(Error::Parse { line: 7, .. })));
        assert!(matches!(parse_config(&format!("{MINIMAL}cfl = 0.1\ncfl = 0.2\n")), Err(Error::Parse { line: 8, .. })));
        assert!(matches!(parse_config("q = 1\nL = 1\nN = 8\nt_final = 1\n"), Err(Error::Validation { field, .. }) if field == "n"));
    }

    #[test]
    fn no_wrap_rule_names_its_inputs() {
        let e = parse_config(&MINIMAL.replace("t_final = 2", "t_final = 15")).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("`L`") && msg.contains("t_final") && msg.contains("r_support"), "{msg}");
        assert!(parse_config(&format!("{}allow_wrap = true\n", MINIMAL.replace("t_final = 2", "t_final = 15"))).is_ok());
    }
}
