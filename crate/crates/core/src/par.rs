//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces bit-identical output for both modes: work is split
//! into fixed chunks and partial results are always combined in index order.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

const CHUNK: usize = 2048;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parallelism {
    Sequential,
    #[default]
    Rayon,
}

impl Parallelism {
    /// Whether work is actually dispatched to the rayon pool. Always false
    /// when the crate is built without the `parallel` feature.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }
}

/// Size the global rayon pool. Only the first call in a process takes effect;
/// a no-op without the `parallel` feature.
pub fn init_threads(threads: usize) -> Result<(), String> {
    if threads == 0 {
        return Err("thread count must be positive".into());
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())?;
    Ok(())
}

pub fn map_range<T, F>(par: Parallelism, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = par;
    (0..n).map(f).collect()
}

pub fn for_each_mut<T, F>(par: Parallelism, data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        data.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
        return;
    }
    let _ = par;
    data.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
}

/// Apply `f` to consecutive chunks of length `len` (the last may be short).
pub fn for_each_chunk_mut<T, F>(par: Parallelism, data: &mut [T], len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        data.par_chunks_mut(len).enumerate().for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = par;
    data.chunks_mut(len).enumerate().for_each(|(i, c)| f(i, c));
}

/// Sum of `f(i)` over `0..n` with a fixed reduction tree.
pub fn sum_range<F>(par: Parallelism, n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = map_range(par, chunks, |c| {
        let end = ((c + 1) * CHUNK).min(n);
        (c * CHUNK..end).map(&f).sum::<f64>()
    });
    partial.into_iter().sum()
}

pub fn dot(par: Parallelism, a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    sum_range(par, a.len(), |i| a[i] * b[i])
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reductions_are_mode_independent() {
        let a: Vec<f64> = (0..10_007).map(|i| ((i * 7919) % 101) as f64 * 1e-3 + 0.1).collect();
        let b: Vec<f64> = (0..10_007).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let s = dot(Parallelism::Sequential, &a, &b);
        let p = dot(Parallelism::Rayon, &a, &b);
        assert_eq!(s.to_bits(), p.to_bits());
    }

    #[test]
    fn map_range_preserves_order() {
        let v = map_range(Parallelism::Rayon, 5000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
    }
}
