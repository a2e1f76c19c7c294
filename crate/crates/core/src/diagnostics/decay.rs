//! Power-law fits of norm series against `1 + t`.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Least-squares fit of `log N = c + p·log(1 + t)` on a window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub exponent: f64,
    /// Half-width of the 95% interval for the exponent.
    pub half_width: f64,
    pub points: usize,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl DecayFit {
    pub fn contains(&self, lo: f64, hi: f64) -> bool {
        self.exponent >= lo && self.exponent <= hi
    }
}

/// Fit samples with `t ∈ [t_lo, t_hi]`.
pub fn decay_fit(t: &[f64], series: &[f64], t_lo: f64, t_hi: f64) -> Result<DecayFit> {
    if t.len() != series.len() {
        return Err(Error::Shape("time and value series differ in length".into()));
    }
    if !(t_lo >= 0.0 && t_hi >= 2.0 * t_lo) {
        return Err(Error::validation("t_hi", "fit window needs t_hi >= 2 t_lo"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, (&ti, &ni)) in t.iter().zip(series).enumerate() {
        if ti < t_lo || ti > t_hi {
            continue;
        }
        if !(ni > 0.0) {
            return Err(Error::DegenerateSeries { index: i, value: ni });
        }
        xs.push((1.0 + ti).ln());
        ys.push(ni.ln());
    }
    let m = xs.len();
    if m < 2 {
        return Err(Error::validation("t_lo", "fewer than two samples in the fit window"));
    }
    let mf = m as f64;
    let xbar = xs.iter().sum::<f64>() / mf;
    let ybar = ys.iter().sum::<f64>() / mf;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let half_width = if m > 2 {
        let c = ybar - slope * xbar;
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - c - slope * x).powi(2)).sum();
        let se = (rss / (mf - 2.0) / sxx).sqrt();
        let tq = StudentsT::new(0.0, 1.0, mf - 2.0).expect("dof > 0").inverse_cdf(0.975);
        tq * se
    } else {
        f64::INFINITY
    };
    Ok(DecayFit { exponent: slope, half_width, points: m, t_lo, t_hi })
}
