//! Initial data families and exact solutions used as oracles.

use crate::error::{Error, Result};
use crate::grid::{FieldState, GridSpec};
use crate::scalar::Real;

/// Gaussian bumps are cut off at this many widths from their centre.
pub const GAUSSIAN_CUTOFF: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    /// `f = ε exp(−|x−c|²/σ²) p`, `v = 0`.
    GaussianBump,
    /// Time-linear plane plus a Gaussian bump.
    PlanePlusBump,
    /// `f = ε φ((t − x^k + c_k)/σ) p`, an exact solution.
    NullWave,
    /// `f = ε a_μ x^μ p` with no spatial gradient, an exact solution.
    LinearPlane,
    /// Loaded from a snapshot by the caller.
    Custom,
}

impl DataKind {
    pub fn name(self) -> &'static str {
        match self {
            DataKind::GaussianBump => "gaussian",
            DataKind::PlanePlusBump => "plane_plus_bump",
            DataKind::NullWave => "null_wave",
            DataKind::LinearPlane => "linear_plane",
            DataKind::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gaussian" => DataKind::GaussianBump,
            "plane_plus_bump" => DataKind::PlanePlusBump,
            "null_wave" => DataKind::NullWave,
            "linear_plane" => DataKind::LinearPlane,
            "custom" => DataKind::Custom,
            _ => return None,
        })
    }
}

/// Profile of a null wave.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Profile {
    /// [`bump_profile`]
    #[default]
    Bump,
    /// `(1 − s²)⁸` on `|s| < 1`: compactly supported and `C⁷`, with
    /// moderate derivatives, so fourth-order stencils reach their
    /// asymptotic rate at modest resolution.
    Poly8,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Bump => "bump",
            Profile::Poly8 => "poly8",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bump" => Some(Profile::Bump),
            "poly8" => Some(Profile::Poly8),
            _ => None,
        }
    }

    /// `(φ, φ′, φ″)` at `s`.
    pub fn eval(self, s: f64) -> (f64, f64, f64) {
        match self {
            Profile::Bump => {
                let (p, d) = bump_profile(s);
                (p, d, bump_profile_second(s))
            }
            Profile::Poly8 => {
                if s.abs() >= 1.0 {
                    return (0.0, 0.0, 0.0);
                }
                let w = 1.0 - s * s;
                let w6 = w.powi(6);
                let w7 = w6 * w;
                (w7 * w, -16.0 * s * w7, -16.0 * w7 + 224.0 * s * s * w6)
            }
        }
    }
}

/// Parameters of one initial-data family.
#[derive(Clone, Debug, PartialEq)]
pub struct DataFamily {
    pub kind: DataKind,
    /// ε
    pub amplitude: f64,
    /// σ
    pub width: f64,
    /// Length `n`.
    pub center: Vec<f64>,
    /// Length `q`; normalised on use.
    pub polarization: Vec<f64>,
    /// Propagation axis of a null wave (0-based spatial axis).
    pub axis: usize,
    pub profile: Profile,
    /// `a_μ`, length `n + 1`, for plane families.
    pub plane_gradient: Vec<f64>,
}

impl DataFamily {
    pub fn gaussian(n: usize, q: usize, amplitude: f64, width: f64) -> Self {
        let mut polarization = vec![0.0; q];
        polarization[0] = 1.0;
        Self {
            kind: DataKind::GaussianBump,
            amplitude,
            width,
            center: vec![0.0; n],
            polarization,
            axis: 0,
            profile: Profile::Bump,
            plane_gradient: vec![0.0; n + 1],
        }
    }

    pub fn null_wave(n: usize, q: usize, amplitude: f64, width: f64, axis: usize) -> Self {
        Self { kind: DataKind::NullWave, axis, ..Self::gaussian(n, q, amplitude, width) }
    }

    pub fn linear_plane(n: usize, q: usize, amplitude: f64, rate: f64) -> Self {
        let mut plane_gradient = vec![0.0; n + 1];
        plane_gradient[0] = rate;
        Self { kind: DataKind::LinearPlane, plane_gradient, ..Self::gaussian(n, q, amplitude, 1.0) }
    }

    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        Self { amplitude, ..self.clone() }
    }

    /// Checks that do not depend on a grid.
    pub fn validate(&self, n: usize, q: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.amplitude) {
            return Err(Error::validation("epsilon", format!("{} outside [0, 1]", self.amplitude)));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::validation("sigma", "must be positive"));
        }
        if self.center.len() != n || self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::validation("center", format!("needs {n} finite components")));
        }
        if self.polarization.len() != q {
            return Err(Error::validation("polarization", format!("needs {q} components")));
        }
        if !(self.polarization.iter().map(|p| p * p).sum::<f64>() > 0.0) {
            return Err(Error::validation("polarization", "must be nonzero"));
        }
        if self.plane_gradient.len() != n + 1 {
            return Err(Error::validation("plane_gradient", format!("needs {} components", n + 1)));
        }
        if self.kind == DataKind::NullWave && self.axis >= n {
            return Err(Error::validation("axis", format!("{} outside 0..{n}", self.axis)));
        }
        Ok(())
    }

    fn unit_polarization(&self) -> Vec<f64> {
        let norm = self.polarization.iter().map(|p| p * p).sum::<f64>().sqrt();
        self.polarization.iter().map(|p| p / norm).collect()
    }

    /// Radius about the box centre outside which the data vanish, when the
    /// light-cone wrap rule applies. Null waves and planes are exact
    /// solutions on the torus and have no such radius.
    pub fn support_radius(&self) -> Option<f64> {
        match self.kind {
            DataKind::GaussianBump | DataKind::PlanePlusBump => {
                let c = self.center.iter().map(|x| x * x).sum::<f64>().sqrt();
                Some(c + GAUSSIAN_CUTOFF * self.width)
            }
            DataKind::NullWave | DataKind::LinearPlane | DataKind::Custom => None,
        }
    }

    /// Whether [`exact_solution`] is available.
    pub fn has_exact_solution(&self) -> bool {
        matches!(self.kind, DataKind::NullWave | DataKind::LinearPlane)
    }
}

/// `φ(s) = exp(1 − 1/(1 − s²))` on `|s| < 1`, zero elsewhere, with `φ′`.
pub fn bump_profile(s: f64) -> (f64, f64) {
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let w = 1.0 - s * s;
    let phi = (1.0 - 1.0 / w).exp();
    (phi, phi * (-2.0 * s / (w * w)))
}

/// Second derivative of [`bump_profile`].
pub fn bump_profile_second(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let w = 1.0 - s * s;
    let (phi, _) = bump_profile(s);
    // φ″ = φ [ (2s/w²)² − (2 w² + 8 s² w)/w⁴ ]
    phi * (4.0 * s * s / (w * w * w * w) - (2.0 * w + 8.0 * s * s) / (w * w * w))
}

fn check_resolved(family: &DataFamily, grid: &GridSpec) -> Result<()> {
    let dx = grid.dx();
    if family.width <= 2.0 * dx {
        return Err(Error::UnresolvableProfile { sigma: family.width, dx });
    }
    Ok(())
}

/// Sample the family on the grid at `t = 0`.
pub fn realize<T: Real>(family: &DataFamily, grid: &GridSpec) -> Result<FieldState<T>> {
    realize_at(family, grid, 0.0)
}

/// Exact solution at time `t` for families that have one.
pub fn exact_solution<T: Real>(family: &DataFamily, grid: &GridSpec, t: f64) -> Result<FieldState<T>> {
    if !family.has_exact_solution() {
        return Err(Error::validation("data", format!("{} has no exact solution", family.kind.name())));
    }
    realize_at(family, grid, t)
}

fn realize_at<T: Real>(family: &DataFamily, grid: &GridSpec, t: f64) -> Result<FieldState<T>> {
    let (n, q) = (grid.n(), grid.q());
    family.validate(n, q)?;
    let pol = family.unit_polarization();
    let eps = family.amplitude;
    let cells = grid.cells();
    let mut f = vec![0.0f64; q * cells];
    let mut v = vec![0.0f64; q * cells];
    let plane = |f: &mut [f64], v: &mut [f64]| -> Result<()> {
        let a = &family.plane_gradient;
        if a[1..].iter().any(|&x| x != 0.0) {
            return Err(Error::IncompatibleWithPeriodicity(
                "plane with a spatial gradient is not periodic".into(),
            ));
        }
        for i in 0..q {
            for c in 0..cells {
                f[i * cells + c] += eps * (pol[i] * (a[0] * t));
                v[i * cells + c] += eps * (pol[i] * a[0]);
            }
        }
        Ok(())
    };
    let gaussian = |f: &mut [f64]| -> Result<()> {
        check_resolved(family, grid)?;
        let s2 = family.width * family.width;
        let cut2 = (GAUSSIAN_CUTOFF * family.width).powi(2);
        for c in 0..cells {
            let x = grid.position(c);
            let r2: f64 = (0..n).map(|a| (x[a] - family.center[a]).powi(2)).sum();
            if r2 > cut2 {
                continue;
            }
            let g = (-r2 / s2).exp();
            for i in 0..q {
                f[i * cells + c] += eps * (g * pol[i]);
            }
        }
        Ok(())
    };
    match family.kind {
        DataKind::GaussianBump => {
            if t != 0.0 {
                return Err(Error::validation("data", "gaussian data are only defined at t = 0"));
            }
            gaussian(&mut f)?;
        }
        DataKind::PlanePlusBump => {
            if t != 0.0 {
                return Err(Error::validation("data", "plane_plus_bump data are only defined at t = 0"));
            }
            plane(&mut f, &mut v)?;
            gaussian(&mut f)?;
        }
        DataKind::LinearPlane => plane(&mut f, &mut v)?,
        DataKind::NullWave => {
            check_resolved(family, grid)?;
            let k = family.axis;
            let l = grid.half_width();
            let sigma = family.width;
            for c in 0..cells {
                let x = grid.position(c)[k];
                // signed distance to the wave centre, wrapped into [−L, L)
                let d = (x - family.center[k] - t + l).rem_euclid(2.0 * l) - l;
                let (phi, dphi, _) = family.profile.eval(-d / sigma);
                for i in 0..q {
                    f[i * cells + c] = eps * (phi * pol[i]);
                    v[i * cells + c] = eps * (dphi / sigma * pol[i]);
                }
            }
        }
        DataKind::Custom => {
            return Err(Error::validation("data", "custom data are read from a snapshot file"));
        }
    }
    FieldState::from_parts(*grid, t, f.into_iter().map(T::lit).collect(), v.into_iter().map(T::lit).collect())
}
