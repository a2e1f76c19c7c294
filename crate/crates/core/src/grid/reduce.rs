//! Reductions with a fixed pairwise tree, so results do not depend on the
//! number of worker threads.

use super::GridSpec;
use crate::scalar::Real;

const LEAF: usize = 1024;

/// `Σ_{k ∈ range} term(k)` summed over a fixed binary tree.
pub fn tree_sum<T: Real>(len: usize, term: &(impl Fn(usize) -> T + Sync)) -> T {
    fn go<T: Real>(lo: usize, hi: usize, term: &(impl Fn(usize) -> T + Sync)) -> T {
        if hi - lo <= LEAF {
            let mut s = T::zero();
            for k in lo..hi {
                s += term(k);
            }
            s
        } else {
            let mid = lo + (hi - lo) / 2;
            let (a, b) = rayon::join(|| go(lo, mid, term), || go(mid, hi, term));
            a + b
        }
    }
    if len == 0 {
        return T::zero();
    }
    go(0, len, term)
}

/// Maximum of `term` and the first index attaining it. NaN wins.
pub fn tree_max<T: Real>(len: usize, term: &(impl Fn(usize) -> T + Sync)) -> (T, usize) {
    fn pick<T: Real>(a: (T, usize), b: (T, usize)) -> (T, usize) {
        if a.0.is_nan() {
            return a;
        }
        if b.0.is_nan() || b.0 > a.0 {
            return b;
        }
        a
    }
    fn go<T: Real>(lo: usize, hi: usize, term: &(impl Fn(usize) -> T + Sync)) -> (T, usize) {
        if hi - lo <= LEAF {
            let mut best = (term(lo), lo);
            for k in lo + 1..hi {
                best = pick(best, (term(k), k));
            }
            best
        } else {
            let mid = lo + (hi - lo) / 2;
            let (a, b) = rayon::join(|| go(lo, mid, term), || go(mid, hi, term));
            pick(a, b)
        }
    }
    if len == 0 {
        return (T::neg_infinity(), 0);
    }
    go(0, len, term)
}

/// Which norm `reduce_norm` computes.
#[derive(Clone, Copy, Debug)]
pub enum NormKind<'a, T> {
    /// `sqrt(Σ u² dx^n)`
    L2,
    /// `max |u|`
    Linf,
    /// `Σ |u| w dx^n`
    L1Weighted(&'a [T]),
}

pub fn reduce_norm<T: Real>(grid: &GridSpec, u: &[T], kind: NormKind<'_, T>) -> T {
    let vol = T::lit(grid.cell_volume());
    match kind {
        NormKind::L2 => (tree_sum(u.len(), &|k| u[k] * u[k]) * vol).sqrt(),
        NormKind::Linf => tree_max(u.len(), &|k| u[k].abs()).0,
        NormKind::L1Weighted(w) => {
            assert_eq!(w.len(), u.len(), "weight length");
            tree_sum(u.len(), &|k| u[k].abs() * w[k]) * vol
        }
    }
}
