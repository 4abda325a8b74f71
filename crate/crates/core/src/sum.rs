//! Fixed-order summation.
//!
//! [`pairwise_sum`] splits at fixed midpoints down to blocks of
//! [`LEAF`] terms, so the rounding pattern depends only on the length of the
//! input, never on how the caller parallelized the work that produced it.

pub const LEAF: usize = 64;

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n` without materializing the terms.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: &F) -> f64 {
    fn go<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= LEAF {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        go(lo, mid, f) + go(mid, hi, f)
    }
    go(0, n, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn matches_closure_form() {
        let xs: Vec<f64> = (0..1000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        assert_eq!(pairwise_sum(&xs), pairwise_sum_by(xs.len(), &|i| xs[i]));
    }

    #[test]
    fn exact_on_integers() {
        let xs: Vec<f64> = (0..4097).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 4096.0 * 4097.0 / 2.0);
    }
}
