//! Row-band parallelism behind the `parallel` feature.
//!
//! Only element-wise maps go through here; every reduction stays in
//! [`crate::sum`], so enabling the feature never changes a result bit.

/// Fills `out` in chunks of `chunk` values, calling `f(chunk_index, chunk)`.
#[cfg(feature = "parallel")]
pub(crate) fn for_each_chunk<F>(out: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    out.par_chunks_mut(chunk).enumerate().for_each(|(k, c)| f(k, c));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_chunk<F>(out: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    for (k, c) in out.chunks_mut(chunk).enumerate() {
        f(k, c);
    }
}
