//! The energy inequality with its explicit constants:
//! `‖∂f‖(t) ≤ 2(‖∂f‖(0) + ∫₀ᵗ Σ_I ‖H∂∂f^I‖ dτ)·exp(∫₀ᵗ 2‖∂H‖_∞ ds)`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evolution::{second_time_derivative, Dynamics, Rhs};
use crate::geometry::GeomScratch;
use crate::grid::{derivative, mixed_derivative, reduce_norm, tree_sum, FieldState, NormKind, Order};
use crate::scalar::Dual;

const CHUNK: usize = 2048;

/// Relative tolerance on the sampling cadence.
const CADENCE_TOL: f64 = 1e-6;

/// Inputs of the inequality at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergySample {
    pub t: f64,
    /// `‖∂f‖_{L²}`
    pub grad_l2: f64,
    /// `Σ_I ‖H^{μν}_{IJ}∂_μ∂_ν f^J‖_{L²}`
    pub source_l2: f64,
    /// `sup_x |∂H|`, Frobenius over all indices
    pub dh_linf: f64,
}

/// Both sides of the inequality at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBound {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`
    pub margin: f64,
}

/// Measure the inequality inputs on a state. `ftt` defaults to the
/// equation's own `∂_tt f`, which makes the source a round-off residual.
pub fn energy_sample(state: &FieldState<f64>, dynamics: Dynamics, ftt: Option<&[f64]>) -> Result<EnergySample> {
    let grid = state.grid;
    let (n, q, cells) = (grid.n(), grid.q(), grid.cells());
    let own;
    let a = match ftt {
        Some(a) => a,
        None => {
            own = second_time_derivative(state, dynamics)?;
            &own
        }
    };
    let mut sq = vec![0.0; cells];
    let mut add = |u: &[f64]| {
        for (s, x) in sq.iter_mut().zip(u) {
            *s += x * x;
        }
    };
    add(state.velocities());
    let mut fx = Vec::with_capacity(q * n);
    let mut vx = Vec::with_capacity(q * n);
    for j in 0..q {
        for k in 0..n {
            let d = derivative(&grid, state.field(j), k, Order::First);
            add(&d);
            fx.push(d);
            vx.push(derivative(&grid, state.velocity(j), k, Order::First));
        }
    }
    let grad_l2 = (tree_sum(cells, &|c| sq[c]) * grid.cell_volume()).sqrt();

    let res = Rhs::new(grid, dynamics).residual(state.t, state.fields(), state.velocities(), a)?;
    let source_l2 = (0..q).map(|l| reduce_norm(&grid, &res[l * cells..(l + 1) * cells], NormKind::L2)).sum();

    let dh_linf = match dynamics {
        Dynamics::Linear => 0.0,
        Dynamics::Nonlinear(form) => {
            // fxx[(J * n + j) * n + k] = ∂_j∂_k f^J
            let mut fxx = Vec::with_capacity(q * n * n);
            for jj in 0..q {
                for j in 0..n {
                    for k in 0..n {
                        fxx.push(if j <= k {
                            Some(mixed_derivative(&grid, state.field(jj), j, k))
                        } else {
                            None
                        });
                    }
                }
            }
            let fxx_at = |jj: usize, j: usize, k: usize, c: usize| {
                let (j, k) = if j <= k { (j, k) } else { (k, j) };
                fxx[(jj * n + j) * n + k].as_ref().expect("upper triangle")[c]
            };
            let dim = n + 1;
            let chunks: Vec<Result<f64>> = (0..cells.div_ceil(CHUNK))
                .into_par_iter()
                .map(|ci| {
                    let mut ws = GeomScratch::<Dual<f64>>::new(n, q);
                    let mut df = vec![Dual::new(0.0, 0.0); dim * q];
                    let mut best = 0.0f64;
                    for c in ci * CHUNK..((ci + 1) * CHUNK).min(cells) {
                        let mut s = 0.0;
                        for g in 0..dim {
                            for jj in 0..q {
                                df[jj] = Dual::new(
                                    state.velocity(jj)[c],
                                    if g == 0 { a[jj * cells + c] } else { vx[jj * n + g - 1][c] },
                                );
                                for k in 1..dim {
                                    let d = if g == 0 { vx[jj * n + k - 1][c] } else { fxx_at(jj, g - 1, k - 1, c) };
                                    df[k * q + jj] = Dual::new(fx[jj * n + k - 1][c], d);
                                }
                            }
                            ws.metric(&df).map_err(|_| Error::CoercivityLost {
                                cell: c,
                                t: state.t,
                                margin: f64::NEG_INFINITY,
                            })?;
                            ws.coefficients(&df, form);
                            s += ws.hh.iter().map(|h| h.eps * h.eps).sum::<f64>();
                        }
                        best = best.max(s.sqrt());
                    }
                    Ok(best)
                })
                .collect();
            let mut m = 0.0f64;
            for r in chunks {
                m = m.max(r?);
            }
            m
        }
    };
    Ok(EnergySample { t: state.t, grad_l2, source_l2, dh_linf })
}

/// Trapezoid-rule evaluation of both sides at every sample. Samples must
/// start at the initial time and be evenly spaced; only the last gap may be
/// shorter.
pub fn energy_and_inequality(samples: &[EnergySample]) -> Result<Vec<EnergyBound>> {
    let Some(first) = samples.first() else { return Ok(Vec::new()) };
    if samples.len() > 1 {
        let expected = samples[1].t - samples[0].t;
        for (k, w) in samples.windows(2).enumerate() {
            let gap = w[1].t - w[0].t;
            let tol = CADENCE_TOL * expected.abs().max(1e-12);
            let last = k + 2 == samples.len();
            let ok = if last { gap > 0.0 && gap <= expected + tol } else { (gap - expected).abs() <= tol };
            if !ok || expected <= 0.0 {
                return Err(Error::IncompleteSeries { t: w[1].t, gap, expected });
            }
        }
    }
    let mut out = Vec::with_capacity(samples.len());
    let (mut src, mut exponent) = (0.0, 0.0);
    for (k, s) in samples.iter().enumerate() {
        if k > 0 {
            let p = &samples[k - 1];
            let h = s.t - p.t;
            src += 0.5 * h * (p.source_l2 + s.source_l2);
            exponent += h * (p.dh_linf + s.dh_linf);
        }
        let rhs = 2.0 * (first.grad_l2 + src) * exponent.exp();
        out.push(EnergyBound { t: s.t, lhs: s.grad_l2, rhs, margin: rhs - s.grad_l2 });
    }
    Ok(out)
}
