//! Null forms `Q_00`, `Q_αβ`, the null estimate ratio, their commutation
//! with vector fields, and the expansion of `−det h` for small gradients.

use super::jet::TimeJet;
use super::vector_fields::{apply_vector_field, coord, field_list, interior, TestField, VectorFieldId};
use crate::error::{Error, Result};
use crate::geometry::{det_and_inverse, eta, induced_metric, FirstJet};
use crate::grid::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NullFormId {
    /// `η^{μν} ∂_μ u ∂_ν w`
    Q00,
    /// `∂_α u ∂_β w − ∂_β u ∂_α w`, `α ≠ β`
    Q(usize, usize),
}

impl NullFormId {
    pub fn validate(self, n: usize) -> Result<()> {
        match self {
            NullFormId::Q(a, b) if a == b || a > n || b > n => {
                Err(Error::validation("null_form", format!("Q_{a}{b} invalid for n = {n}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(self) -> String {
        match self {
            NullFormId::Q00 => "Q00".into(),
            NullFormId::Q(a, b) => format!("Q{a}{b}"),
        }
    }

    /// Value on gradients `du[μ]`, `dw[μ]`.
    pub fn eval(self, du: &[f64], dw: &[f64]) -> f64 {
        match self {
            NullFormId::Q00 => (0..du.len()).map(|m| eta::<f64>(m, m) * du[m] * dw[m]).sum(),
            NullFormId::Q(a, b) => du[a] * dw[b] - du[b] * dw[a],
        }
    }
}

/// Basis `Q00, Q_μν (μ < ν)` in which commutation tables are expressed.
pub fn null_form_basis(n: usize) -> Vec<NullFormId> {
    let mut v = vec![NullFormId::Q00];
    for a in 0..=n {
        for b in a + 1..=n {
            v.push(NullFormId::Q(a, b));
        }
    }
    v
}

/// `Q(u, w)` as a jet one order below the inputs.
pub fn null_form(q: NullFormId, u: &TimeJet<f64>, w: &TimeJet<f64>) -> TimeJet<f64> {
    let n = u.grid.n();
    match q {
        NullFormId::Q00 => {
            let mut acc: Option<TimeJet<f64>> = None;
            for mu in 0..=n {
                let term = u.partial(mu).mul(&w.partial(mu)).scale(eta::<f64>(mu, mu));
                acc = Some(match acc {
                    None => term,
                    Some(a) => a.add(&term),
                });
            }
            acc.expect("n >= 1")
        }
        NullFormId::Q(a, b) => {
            let p = u.partial(a).mul(&w.partial(b));
            let m = u.partial(b).mul(&w.partial(a));
            p.add(&m.scale(-1.0))
        }
    }
}

/// `ZQ(u,w) − Q(Zu,w) − Q(u,Zw)` expanded in [`null_form_basis`]:
/// returns `(coefficient, form)` pairs with nonzero coefficients.
///
/// With `M^α_μ = ∂_μ ζ^α`, `Q_00` picks up `−S^{αβ} u_α w_β` where
/// `S = Mη + (Mη)ᵀ`; this is `−2 Q_00` for `L` and zero for the Lorentz
/// generators. `Q_αβ` picks up `−M^γ_α Q_γβ − M^γ_β Q_αγ`.
pub fn z_commutation_table(z: VectorFieldId, q: NullFormId, n: usize) -> Result<Vec<(f64, NullFormId)>> {
    let m = z.derivative_matrix(n);
    let dim = n + 1;
    let mut coef = std::collections::BTreeMap::<NullFormId, f64>::new();
    match q {
        NullFormId::Q00 => {
            // S^{αβ} = M^α_μ η^{μβ} + η^{αν} M^β_ν
            let s = |a: usize, b: usize| m[a][b] * eta::<f64>(b, b) + eta::<f64>(a, a) * m[b][a];
            let lambda = s(0, 0) / eta::<f64>(0, 0);
            for a in 0..dim {
                for b in 0..dim {
                    let want = if a == b { lambda * eta::<f64>(a, a) } else { 0.0 };
                    if (s(a, b) - want).abs() > 0.0 {
                        return Err(Error::validation("z_commutation", format!("{z:?} does not preserve Q00 up to a multiple")));
                    }
                }
            }
            // −S^{αβ} u_α w_β = −λ Q_00 when S = λ η
            let c = -lambda;
            if c != 0.0 {
                coef.insert(NullFormId::Q00, c);
            }
        }
        NullFormId::Q(al, be) => {
            let mut add = |a: usize, b: usize, c: f64| {
                if a == b || c == 0.0 {
                    return;
                }
                let (key, sign) = if a < b { (NullFormId::Q(a, b), 1.0) } else { (NullFormId::Q(b, a), -1.0) };
                *coef.entry(key).or_insert(0.0) += sign * c;
            };
            for g in 0..dim {
                add(g, be, -m[g][al]);
                add(al, g, -m[g][be]);
            }
        }
    }
    Ok(coef.into_iter().filter(|(_, c)| *c != 0.0).map(|(k, c)| (c, k)).collect())
}

/// `max |ZQ(u,w) − Q(Zu,w) − Q(u,Zw) − Σ a Q(u,w)|` over interior cells,
/// with `a` from [`z_commutation_table`]. Inputs must have order ≥ 2.
pub fn z_commutation_deviation(z: VectorFieldId, q: NullFormId, u: &TimeJet<f64>, w: &TimeJet<f64>) -> Result<f64> {
    let n = u.grid.n();
    let table = z_commutation_table(z, q, n)?;
    let lhs = apply_vector_field(z, &null_form(q, u, w));
    let a = null_form(q, &apply_vector_field(z, u), w);
    let b = null_form(q, u, &apply_vector_field(z, w));
    let extra: Vec<(f64, TimeJet<f64>)> = table.iter().map(|&(c, f)| (c, null_form(f, u, w))).collect();
    let mut dev: f64 = 0.0;
    for c in interior(&u.grid) {
        let mut r = lhs.d[0][c] - a.d[0][c] - b.d[0][c];
        for (k, j) in &extra {
            r -= k * j.d[0][c];
        }
        dev = dev.max(r.abs());
    }
    Ok(dev)
}

/// `max_x |Q(u,w)|(1+t+|x|) / (Σ_Z |Zu| · Σ_Z |Zw| + 10⁻³⁰)` over the
/// field list. Inputs are single-field jets of order ≥ 1.
pub fn null_estimate_ratio(q: NullFormId, u: &TimeJet<f64>, w: &TimeJet<f64>) -> Result<f64> {
    let grid = u.grid;
    let n = grid.n();
    q.validate(n)?;
    let qv = null_form(q, u, w);
    let fields = field_list(n);
    let sum_abs = |j: &TimeJet<f64>| -> Vec<f64> {
        let mut s = vec![0.0; grid.cells()];
        for &z in &fields {
            let zj = apply_vector_field(z, &j.truncated(1));
            for (a, b) in s.iter_mut().zip(&zj.d[0]) {
                *a += b.abs();
            }
        }
        s
    };
    let su = sum_abs(u);
    let sw = if std::ptr::eq(u, w) { su.clone() } else { sum_abs(w) };
    let mut ratio: f64 = 0.0;
    for c in 0..grid.cells() {
        let r: f64 = (1..=n).map(|a| coord(&grid, c, a).powi(2)).sum::<f64>().sqrt();
        let v = qv.d[0][c].abs() * (1.0 + u.t + r) / (su[c] * sw[c] + 1e-30);
        ratio = ratio.max(v);
    }
    Ok(ratio)
}

/// Result of [`det_expansion_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct DetExpansion {
    pub eps: Vec<f64>,
    /// `R(ε) = |−det h(ε df) − 1 − ε² δ_IJ Q_00(f^I, f^J)|`
    pub remainders: Vec<f64>,
    /// `log₂(R(ε_k)/R(ε_{k+1}))` for consecutive halvings.
    pub orders: Vec<f64>,
}

/// Remainder of `−det h = 1 + δ_IJ Q_00(f^I, f^J) + O(|∂f|⁴)` along
/// `ε ↦ ε·df`. The remainder vanishes identically when `q = 1` (rank-one
/// update), so a generic order test needs `q ≥ 2`.
pub fn det_expansion_check(df: &FirstJet<f64>, eps: &[f64]) -> Result<DetExpansion> {
    let (n, q) = (df.n(), df.q());
    let mut remainders = Vec::with_capacity(eps.len());
    for &e in eps {
        let j = df.scaled(e);
        let (det, _) = det_and_inverse(&induced_metric(&j))?;
        let mut q00 = 0.0;
        for i in 0..q {
            for mu in 0..=n {
                q00 += eta::<f64>(mu, mu) * j.get(mu, i) * j.get(mu, i);
            }
        }
        remainders.push((-det - 1.0 - q00).abs());
    }
    let orders = remainders.windows(2).zip(eps.windows(2)).map(|(r, e)| (r[0] / r[1]).ln() / (e[0] / e[1]).ln()).collect();
    Ok(DetExpansion { eps: eps.to_vec(), remainders, orders })
}

/// A battery of analytic jets for the commutation checks: cubic
/// polynomials with seeded coefficients.
pub fn polynomial_battery(grid: GridSpec, t: f64, seed: u64, count: usize) -> Vec<TimeJet<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dim = grid.n() + 1;
    (0..count)
        .map(|_| {
            let c: Vec<f64> = (0..dim * dim * dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
            TestField::Cubic(c).jet(grid, t, 3)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(2, 1, 3.0, 32).unwrap()
    }

    #[test]
    fn elementary_values() {
        let g = grid();
        let tj = TestField::Coordinate(0).jet(g, 0.5, 2);
        let xj = TestField::Coordinate(1).jet(g, 0.5, 2);
        let q00 = null_form(NullFormId::Q00, &tj, &tj);
        let q01 = null_form(NullFormId::Q(0, 1), &tj, &xj);
        for c in interior(&g) {
            assert!((q00.d[0][c] + 1.0).abs() < 1e-14);
            assert!((q01.d[0][c] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn q00_vanishes_on_null_gradient() {
        let g = grid();
        let u = TimeJet::from_fn(g, 0.2, 2, |j, c, _| {
            let x = g.position(c)[0];
            [0.2 - x, 1.0, 0.0][j]
        });
        let q = null_form(NullFormId::Q00, &u, &u);
        for c in interior(&g) {
            assert!(q.d[0][c].abs() < 1e-13);
        }
    }

    #[test]
    fn antisymmetry_is_exact() {
        let g = grid();
        let b = polynomial_battery(g, 0.3, 9, 2);
        let (u, w) = (&b[0], &b[1]);
        for (a, bb) in [(0, 1), (1, 2), (0, 2)] {
            let q = null_form(NullFormId::Q(a, bb), u, w);
            let qt = null_form(NullFormId::Q(bb, a), u, w);
            let qs = null_form(NullFormId::Q(a, bb), w, u);
            for c in 0..g.cells() {
                assert_eq!(q.d[0][c], -qt.d[0][c]);
                assert_eq!(q.d[0][c], -qs.d[0][c]);
            }
        }
    }

    #[test]
    fn table_entries_by_hand() {
        // [Ω_12]: ZQ_01 = … + Q_02
        let t = z_commutation_table(VectorFieldId::Rotation(1, 2), NullFormId::Q(0, 1), 2).unwrap();
        assert_eq!(t, vec![(1.0, NullFormId::Q(0, 2))]);
        // L: −2 Q_00 and −2 Q_αβ
        assert_eq!(z_commutation_table(VectorFieldId::Scaling, NullFormId::Q00, 3).unwrap(), vec![(-2.0, NullFormId::Q00)]);
        assert_eq!(
            z_commutation_table(VectorFieldId::Scaling, NullFormId::Q(1, 3), 3).unwrap(),
            vec![(-2.0, NullFormId::Q(1, 3))]
        );
        // Lorentz generators preserve Q_00
        for z in field_list(3) {
            if z != VectorFieldId::Scaling {
                assert!(z_commutation_table(z, NullFormId::Q00, 3).unwrap().is_empty());
            }
        }
        // Ω_01 on Q_01: −M^γ_0 Q_γ1 − M^γ_1 Q_0γ = −Q_11 − Q_00… = 0
        assert!(z_commutation_table(VectorFieldId::Boost(1), NullFormId::Q(0, 1), 2).unwrap().is_empty());
        // Ω_01 on Q_02: −M^1_0 Q_12 = −Q_12
        assert_eq!(
            z_commutation_table(VectorFieldId::Boost(1), NullFormId::Q(0, 2), 2).unwrap(),
            vec![(-1.0, NullFormId::Q(1, 2))]
        );
    }

    #[test]
    fn commutation_holds_on_polynomials() {
        let g = grid();
        let b = polynomial_battery(g, 0.4, 1, 2);
        for z in field_list(2) {
            for q in null_form_basis(2) {
                let d = z_commutation_deviation(z, q, &b[0], &b[1]).unwrap();
                assert!(d < 1e-9, "{z:?} {q:?}: {d}");
            }
        }
    }

    #[test]
    fn det_expansion_orders() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let eps = [1e-1, 5e-2, 2.5e-2];
        for (n, q) in [(2, 2), (3, 2), (3, 3)] {
            let df = FirstJet::from_fn(n, q, |_, _| rng.gen_range(-1.0..1.0)).unwrap();
            let r = det_expansion_check(&df, &eps).unwrap();
            for o in &r.orders {
                assert!((3.7..=4.3).contains(o), "{n} {q}: {r:?}");
            }
        }
        // one nonzero spatial entry: −det h = 1 + c² exactly
        let mut v = vec![0.0; 3];
        v[1] = 0.7;
        let r = det_expansion_check(&FirstJet::new(2, 1, v).unwrap(), &eps).unwrap();
        assert!(r.remainders.iter().all(|&x| x < 1e-15));
        // null direction
        let r = det_expansion_check(&FirstJet::new(2, 2, vec![0.3, 0.1, -0.3, -0.1, 0.0, 0.0]).unwrap(), &eps).unwrap();
        assert!(r.remainders.iter().all(|&x| x < 1e-15), "{r:?}");
    }

    #[test]
    fn null_estimate_ratio_zero_fields() {
        let g = grid();
        let z = TimeJet::from_fn(g, 1.0, 1, |_, _, _| 0.0);
        assert_eq!(null_estimate_ratio(NullFormId::Q00, &z, &z).unwrap(), 0.0);
    }
}
