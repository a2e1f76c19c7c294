//! Pointwise geometry of a graph `f: R^{1+n} → R^q` in Minkowski space.
//!
//! All quantities here depend only on the first jet `∂_μ f^I` at one point:
//! the induced metric `h = η + Σ_I ∂f^I ⊗ ∂f^I`, its determinant and inverse,
//! the divergence-form coefficient `F^{μν} = η^{μν} − √(−det h) h^{μν}` and
//! the rank-4 coefficient `H^{μν}_{JL}` of the second-order system
//! `H^{μν}_{JL} ∂_μ∂_ν f^J = 0`.
//!
//! Components are stored with Greek indices in `0..=n` (0 is time) and Latin
//! indices in `0..q`. `η = diag(−1, 1, …, 1)`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest supported spacetime dimension `n + 1`.
pub const MAX_DIM: usize = 5;

/// `|det h|` below this is a singular metric.
pub const SINGULAR_DET: f64 = 1e-14;

/// Minkowski metric component `η_{μν}` (equal to `η^{μν}`).
#[inline]
pub fn eta<T: Real>(mu: usize, nu: usize) -> T {
    if mu != nu {
        T::zero()
    } else if mu == 0 {
        -T::one()
    } else {
        T::one()
    }
}

#[inline]
fn kron<T: Real>(a: usize, b: usize) -> T {
    if a == b {
        T::one()
    } else {
        T::zero()
    }
}

/// Small dense square matrix of runtime size `dim ≤ MAX_DIM`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat<T> {
    dim: usize,
    a: [[T; MAX_DIM]; MAX_DIM],
}

impl<T: Real> Mat<T> {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim <= MAX_DIM, "matrix dimension {dim} exceeds {MAX_DIM}");
        Self { dim, a: [[T::zero(); MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.a[i][i] = T::one();
        }
        m
    }

    /// `η` of size `dim`.
    pub fn minkowski(dim: usize) -> Self {
        let mut m = Self::identity(dim);
        m.a[0][0] = -T::one();
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.a[i][j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.a[i][j] = v;
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::from_fn(self.dim, |i, j| {
            let mut s = T::zero();
            for k in 0..self.dim {
                s += self.a[i][k] * other.a[k][j];
            }
            s
        })
    }

    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max(self.a[i][j].abs());
            }
        }
        m
    }
}

impl<T: Real> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.a[i][j]
    }
}

/// First derivatives `∂_μ f^I` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstJet<T> {
    n: usize,
    q: usize,
    /// `df[μ * q + I] = ∂_μ f^I`
    df: Vec<T>,
}

impl<T: Real> FirstJet<T> {
    pub fn new(n: usize, q: usize, df: Vec<T>) -> Result<Self> {
        if n == 0 || n + 1 > MAX_DIM || q == 0 {
            return Err(Error::Shape(format!("unsupported jet dimensions n = {n}, q = {q}")));
        }
        if df.len() != (n + 1) * q {
            return Err(Error::Shape(format!(
                "jet needs {} entries, got {}",
                (n + 1) * q,
                df.len()
            )));
        }
        if let Some(bad) = df.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { cell: bad, t: f64::NAN });
        }
        Ok(Self { n, q, df })
    }

    pub fn zeros(n: usize, q: usize) -> Self {
        Self { n, q, df: vec![T::zero(); (n + 1) * q] }
    }

    pub fn from_fn(n: usize, q: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut df = Vec::with_capacity((n + 1) * q);
        for mu in 0..=n {
            for i in 0..q {
                df.push(f(mu, i));
            }
        }
        Self::new(n, q, df)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    #[inline]
    pub fn get(&self, mu: usize, i: usize) -> T {
        self.df[mu * self.q + i]
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.df
    }

    /// Jet with every entry multiplied by `s`.
    pub fn scaled(&self, s: T) -> Self {
        Self { n: self.n, q: self.q, df: self.df.iter().map(|&x| x * s).collect() }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.df.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

/// Rank-4 coefficient `H^{μν}_{JL}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HTensor<T> {
    dim: usize,
    q: usize,
    data: Vec<T>,
}

impl<T: Real> HTensor<T> {
    #[inline]
    fn offset(dim: usize, q: usize, mu: usize, nu: usize, j: usize, l: usize) -> usize {
        ((mu * dim + nu) * q + j) * q + l
    }

    #[inline]
    pub fn get(&self, mu: usize, nu: usize, j: usize, l: usize) -> T {
        self.data[Self::offset(self.dim, self.q, mu, nu, j, l)]
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn q(&self) -> usize {
        self.q
    }

    /// `η^{μν} δ_{JL}`: the coefficient of the flat background.
    pub fn flat(dim: usize, q: usize) -> Self {
        let mut data = vec![T::zero(); dim * dim * q * q];
        for mu in 0..dim {
            for j in 0..q {
                data[Self::offset(dim, q, mu, mu, j, j)] = eta(mu, mu);
            }
        }
        Self { dim, q, data }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

/// Which second-order coefficient to build.
///
/// `EulerLagrange` is `√(−det h) (δ_{JL} − P_{JL}) h^{μν}` with
/// `P_{JL} = h^{αβ} f^J_α f^L_β`; contracted with `∂_μ∂_ν f^J` it equals the
/// Euler–Lagrange operator `∂_μ[√(−det h) h^{μν} f^L_ν]` identically.
///
/// `Transcribed` additionally subtracts
/// `√(−det h)(w_J^μ w_L^ν + w_L^μ w_J^ν)` with `w_J = h^{-1} ∂f^J`. It has the
/// same symmetries and the same quadratic vanishing, and agrees with the
/// Euler–Lagrange operator on null plane waves, but differs from it at cubic
/// order in general.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CoefficientForm {
    #[default]
    EulerLagrange,
    Transcribed,
}

impl CoefficientForm {
    pub fn name(self) -> &'static str {
        match self {
            CoefficientForm::EulerLagrange => "euler_lagrange",
            CoefficientForm::Transcribed => "transcribed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "euler_lagrange" => Some(CoefficientForm::EulerLagrange),
            "transcribed" => Some(CoefficientForm::Transcribed),
            _ => None,
        }
    }
}

/// Everything the evolution and diagnostics need at one point.
#[derive(Clone, Debug)]
pub struct MetricPoint<T> {
    pub h: Mat<T>,
    pub h_inv: Mat<T>,
    pub det_h: T,
    pub vol: T,
    pub f: Mat<T>,
    pub hh: HTensor<T>,
}

/// `h_{αβ} = η_{αβ} + Σ_I f^I_α f^I_β`.
pub fn induced_metric<T: Real>(jet: &FirstJet<T>) -> Mat<T> {
    let mut h = Mat::zeros(jet.n + 1);
    metric_into(jet.n + 1, jet.q, &jet.df, &mut h);
    h
}

#[inline]
fn metric_into<T: Real>(dim: usize, q: usize, df: &[T], h: &mut Mat<T>) {
    for a in 0..dim {
        for b in a..dim {
            let mut s = eta::<T>(a, b);
            for i in 0..q {
                s += df[a * q + i] * df[b * q + i];
            }
            h.a[a][b] = s;
            h.a[b][a] = s;
        }
    }
}

/// Determinant and inverse, closed-form cofactors up to 4×4.
pub fn det_and_inverse<T: Real>(h: &Mat<T>) -> Result<(T, Mat<T>)> {
    let (det, adj) = det_adjugate(h);
    if !(det.abs() >= T::lit(SINGULAR_DET)) {
        return Err(Error::SingularMetric { det: det.primal() });
    }
    let inv_det = det.recip();
    let mut inv = adj;
    for i in 0..h.dim {
        for j in 0..h.dim {
            inv.a[i][j] = adj.a[i][j] * inv_det;
        }
    }
    Ok((det, inv))
}

/// Determinant and adjugate (`inverse · det`).
fn det_adjugate<T: Real>(m: &Mat<T>) -> (T, Mat<T>) {
    let a = &m.a;
    let mut b = Mat::zeros(m.dim);
    match m.dim {
        1 => {
            b.a[0][0] = T::one();
            (a[0][0], b)
        }
        2 => {
            b.a[0][0] = a[1][1];
            b.a[0][1] = -a[0][1];
            b.a[1][0] = -a[1][0];
            b.a[1][1] = a[0][0];
            (a[0][0] * a[1][1] - a[0][1] * a[1][0], b)
        }
        3 => {
            b.a[0][0] = a[1][1] * a[2][2] - a[1][2] * a[2][1];
            b.a[0][1] = a[0][2] * a[2][1] - a[0][1] * a[2][2];
            b.a[0][2] = a[0][1] * a[1][2] - a[0][2] * a[1][1];
            b.a[1][0] = a[1][2] * a[2][0] - a[1][0] * a[2][2];
            b.a[1][1] = a[0][0] * a[2][2] - a[0][2] * a[2][0];
            b.a[1][2] = a[0][2] * a[1][0] - a[0][0] * a[1][2];
            b.a[2][0] = a[1][0] * a[2][1] - a[1][1] * a[2][0];
            b.a[2][1] = a[0][1] * a[2][0] - a[0][0] * a[2][1];
            b.a[2][2] = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            let det = a[0][0] * b.a[0][0] + a[0][1] * b.a[1][0] + a[0][2] * b.a[2][0];
            (det, b)
        }
        4 => {
            let s0 = a[0][0] * a[1][1] - a[1][0] * a[0][1];
            let s1 = a[0][0] * a[1][2] - a[1][0] * a[0][2];
            let s2 = a[0][0] * a[1][3] - a[1][0] * a[0][3];
            let s3 = a[0][1] * a[1][2] - a[1][1] * a[0][2];
            let s4 = a[0][1] * a[1][3] - a[1][1] * a[0][3];
            let s5 = a[0][2] * a[1][3] - a[1][2] * a[0][3];
            let c5 = a[2][2] * a[3][3] - a[3][2] * a[2][3];
            let c4 = a[2][1] * a[3][3] - a[3][1] * a[2][3];
            let c3 = a[2][1] * a[3][2] - a[3][1] * a[2][2];
            let c2 = a[2][0] * a[3][3] - a[3][0] * a[2][3];
            let c1 = a[2][0] * a[3][2] - a[3][0] * a[2][2];
            let c0 = a[2][0] * a[3][1] - a[3][0] * a[2][1];
            let det = s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0;
            b.a[0][0] = a[1][1] * c5 - a[1][2] * c4 + a[1][3] * c3;
            b.a[0][1] = -a[0][1] * c5 + a[0][2] * c4 - a[0][3] * c3;
            b.a[0][2] = a[3][1] * s5 - a[3][2] * s4 + a[3][3] * s3;
            b.a[0][3] = -a[2][1] * s5 + a[2][2] * s4 - a[2][3] * s3;
            b.a[1][0] = -a[1][0] * c5 + a[1][2] * c2 - a[1][3] * c1;
            b.a[1][1] = a[0][0] * c5 - a[0][2] * c2 + a[0][3] * c1;
            b.a[1][2] = -a[3][0] * s5 + a[3][2] * s2 - a[3][3] * s1;
            b.a[1][3] = a[2][0] * s5 - a[2][2] * s2 + a[2][3] * s1;
            b.a[2][0] = a[1][0] * c4 - a[1][1] * c2 + a[1][3] * c0;
            b.a[2][1] = -a[0][0] * c4 + a[0][1] * c2 - a[0][3] * c0;
            b.a[2][2] = a[3][0] * s4 - a[3][1] * s2 + a[3][3] * s0;
            b.a[2][3] = -a[2][0] * s4 + a[2][1] * s2 - a[2][3] * s0;
            b.a[3][0] = -a[1][0] * c3 + a[1][1] * c1 - a[1][2] * c0;
            b.a[3][1] = a[0][0] * c3 - a[0][1] * c1 + a[0][2] * c0;
            b.a[3][2] = -a[3][0] * s3 + a[3][1] * s1 - a[3][2] * s0;
            b.a[3][3] = a[2][0] * s3 - a[2][1] * s1 + a[2][2] * s0;
            (det, b)
        }
        _ => det_adjugate_elimination(m),
    }
}

/// Gauss–Jordan with partial pivoting; used only above 4×4.
fn det_adjugate_elimination<T: Real>(m: &Mat<T>) -> (T, Mat<T>) {
    let n = m.dim;
    let mut a = m.a;
    let mut inv = Mat::<T>::identity(n).a;
    let mut det = T::one();
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col] == T::zero() {
            return (T::zero(), Mat::zeros(n));
        }
        if piv != col {
            a.swap(piv, col);
            inv.swap(piv, col);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        let ip = p.recip();
        for j in 0..n {
            a[col][j] *= ip;
            inv[col][j] *= ip;
        }
        for r in 0..n {
            if r != col {
                let fct = a[r][col];
                if fct != T::zero() {
                    for j in 0..n {
                        a[r][j] = a[r][j] - fct * a[col][j];
                        inv[r][j] = inv[r][j] - fct * inv[col][j];
                    }
                }
            }
        }
    }
    let mut b = Mat::zeros(n);
    for i in 0..n {
        for j in 0..n {
            b.a[i][j] = inv[i][j] * det;
        }
    }
    (det, b)
}

/// Reusable buffers for the pointwise coefficient computation.
#[derive(Clone, Debug)]
pub(crate) struct GeomScratch<T> {
    pub dim: usize,
    pub q: usize,
    pub h: Mat<T>,
    pub h_inv: Mat<T>,
    pub det: T,
    pub vol: T,
    /// `w[J * dim + μ] = h^{μα} f^J_α`
    pub w: Vec<T>,
    /// `p[J * q + L] = h^{αβ} f^J_α f^L_β`
    pub p: Vec<T>,
    pub hh: Vec<T>,
}

impl<T: Real> GeomScratch<T> {
    pub fn new(n: usize, q: usize) -> Self {
        let dim = n + 1;
        Self {
            dim,
            q,
            h: Mat::zeros(dim),
            h_inv: Mat::zeros(dim),
            det: T::zero(),
            vol: T::zero(),
            w: vec![T::zero(); q * dim],
            p: vec![T::zero(); q * q],
            hh: vec![T::zero(); dim * dim * q * q],
        }
    }

    #[inline]
    pub fn h_at(&self, mu: usize, nu: usize, j: usize, l: usize) -> T {
        self.hh[HTensor::<T>::offset(self.dim, self.q, mu, nu, j, l)]
    }

    /// Metric, determinant, inverse and volume factor. Fails if the point is
    /// not timelike.
    #[inline]
    pub fn metric(&mut self, df: &[T]) -> Result<()> {
        metric_into(self.dim, self.q, df, &mut self.h);
        let (det, adj) = det_adjugate(&self.h);
        if !(det < -T::lit(SINGULAR_DET)) {
            return Err(Error::SpacelikeDegeneration { det: det.primal() });
        }
        let inv_det = det.recip();
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.h_inv.a[i][j] = adj.a[i][j] * inv_det;
            }
        }
        self.det = det;
        self.vol = (-det).sqrt();
        Ok(())
    }

    /// Fill `hh` with `H^{μν}_{JL}`. Requires [`Self::metric`] first.
    #[inline]
    pub fn coefficients(&mut self, df: &[T], form: CoefficientForm) {
        let (dim, q) = (self.dim, self.q);
        for j in 0..q {
            for mu in 0..dim {
                let mut s = T::zero();
                for a in 0..dim {
                    s += self.h_inv.a[mu][a] * df[a * q + j];
                }
                self.w[j * dim + mu] = s;
            }
        }
        for j in 0..q {
            for l in j..q {
                let mut s = T::zero();
                for a in 0..dim {
                    s += self.w[j * dim + a] * df[a * q + l];
                }
                self.p[j * q + l] = s;
                self.p[l * q + j] = s;
            }
        }
        let vol = self.vol;
        for mu in 0..dim {
            for nu in mu..dim {
                let hmn = self.h_inv.a[mu][nu];
                for j in 0..q {
                    for l in j..q {
                        let mut v = (kron::<T>(j, l) - self.p[j * q + l]) * hmn;
                        if form == CoefficientForm::Transcribed {
                            v = v
                                - (self.w[j * dim + mu] * self.w[l * dim + nu]
                                    + self.w[l * dim + mu] * self.w[j * dim + nu]);
                        }
                        let v = vol * v;
                        self.hh[HTensor::<T>::offset(dim, q, mu, nu, j, l)] = v;
                        self.hh[HTensor::<T>::offset(dim, q, nu, mu, j, l)] = v;
                        self.hh[HTensor::<T>::offset(dim, q, mu, nu, l, j)] = v;
                        self.hh[HTensor::<T>::offset(dim, q, nu, mu, l, j)] = v;
                    }
                }
            }
        }
    }

    /// `½ − Σ |H − η δ|` over the current `hh`.
    #[inline]
    pub fn margin(&self) -> T {
        margin_of(self.dim, self.q, &self.hh)
    }
}

#[inline]
fn margin_of<T: Real>(dim: usize, q: usize, hh: &[T]) -> T {
    let mut s = T::zero();
    let mut k = 0;
    for mu in 0..dim {
        for nu in 0..dim {
            for j in 0..q {
                for l in 0..q {
                    let flat = if mu == nu && j == l { eta::<T>(mu, mu) } else { T::zero() };
                    s += (hh[k] - flat).abs();
                    k += 1;
                }
            }
        }
    }
    T::lit(0.5) - s
}

/// `F^{μν} = η^{μν} − √(−det h) h^{μν}`.
pub fn coefficient_f<T: Real>(jet: &FirstJet<T>) -> Result<Mat<T>> {
    let mut ws = GeomScratch::new(jet.n, jet.q);
    ws.metric(&jet.df)?;
    Ok(f_from(&ws))
}

fn f_from<T: Real>(ws: &GeomScratch<T>) -> Mat<T> {
    Mat::from_fn(ws.dim, |i, j| eta::<T>(i, j) - ws.vol * ws.h_inv.a[i][j])
}

/// `H^{μν}_{JL}` in the requested form.
pub fn coefficient_h<T: Real>(jet: &FirstJet<T>, form: CoefficientForm) -> Result<HTensor<T>> {
    let mut ws = GeomScratch::new(jet.n, jet.q);
    ws.metric(&jet.df)?;
    ws.coefficients(&jet.df, form);
    Ok(HTensor { dim: ws.dim, q: ws.q, data: ws.hh })
}

/// Full pointwise package.
pub fn metric_point<T: Real>(jet: &FirstJet<T>, form: CoefficientForm) -> Result<MetricPoint<T>> {
    let mut ws = GeomScratch::new(jet.n, jet.q);
    ws.metric(&jet.df)?;
    ws.coefficients(&jet.df, form);
    let f = f_from(&ws);
    Ok(MetricPoint {
        h: ws.h,
        h_inv: ws.h_inv,
        det_h: ws.det,
        vol: ws.vol,
        f,
        hh: HTensor { dim: ws.dim, q: ws.q, data: ws.hh },
    })
}

/// `½ − Σ_{μνIJ} |H^{μν}_{IJ} − η^{μν} δ_{IJ}|`; positive when the
/// coercivity condition holds.
pub fn coercivity_margin<T: Real>(hh: &HTensor<T>) -> T {
    margin_of(hh.dim, hh.q, &hh.data)
}
