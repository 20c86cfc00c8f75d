//! Execution policy for the data-parallel inner loops.
//!
//! Every row-wise kernel (stencil application, vector updates, reductions)
//! goes through [`Exec`]. With the `parallel` feature enabled the rows are
//! split across the rayon pool; without it, or with [`Exec::Sequential`],
//! the same code runs on the calling thread.
//!
//! Reductions are summed over fixed-size chunks whose partial sums are then
//! combined in index order, so the result is bit-identical across thread
//! counts and across the two policies.

/// Rows per reduction chunk. Changing this changes the rounding of every dot
/// product, so it is a fixed constant and not a tuning knob.
pub const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// `true` when work will actually be spread over worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// `out[i] = f(i)` for every row.
    pub fn fill<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
                let base = c * CHUNK;
                for (k, o) in chunk.iter_mut().enumerate() {
                    *o = f(base + k);
                }
            });
            return;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i);
        }
    }

    /// `out[i] = f(i, out[i])` for every row.
    pub fn update<F>(self, out: &mut [f64], f: F)
    where
        F: Fn(usize, f64) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
                let base = c * CHUNK;
                for (k, o) in chunk.iter_mut().enumerate() {
                    *o = f(base + k, *o);
                }
            });
            return;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = f(i, *o);
        }
    }

    /// Deterministic `Σ_i f(i)` for `i in 0..len`.
    pub fn sum<F>(self, len: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        let chunks = len.div_ceil(CHUNK);
        let partial = |c: usize| {
            let hi = ((c + 1) * CHUNK).min(len);
            (c * CHUNK..hi).map(&f).sum::<f64>()
        };
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            let parts: Vec<f64> = (0..chunks).into_par_iter().map(partial).collect();
            return parts.iter().sum();
        }
        (0..chunks).map(partial).sum()
    }

    /// Deterministic `max_i f(i)`; `-inf` for an empty range.
    pub fn max<F>(self, len: usize, f: F) -> f64
    where
        F: Fn(usize) -> f64 + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return (0..len)
                .into_par_iter()
                .map(&f)
                .reduce(|| f64::NEG_INFINITY, f64::max);
        }
        (0..len).map(f).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn dot(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        self.sum(a.len(), |i| a[i] * b[i])
    }

    /// Runs independent jobs, preserving input order in the output.
    pub fn map_jobs<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Exec::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }
}

/// Caps the global worker pool. Only the first call has an effect.
pub fn init_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads.filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_policy_independent() {
        let v: Vec<f64> = (0..10_007).map(|i| ((i * 7919) % 1013) as f64 * 1e-3 + 0.1).collect();
        let s = Exec::Sequential.sum(v.len(), |i| v[i] * v[i]);
        let p = Exec::Parallel.sum(v.len(), |i| v[i] * v[i]);
        assert_eq!(s.to_bits(), p.to_bits());
    }

    #[test]
    fn fill_and_update_match() {
        let mut a = vec![0.0; 5000];
        let mut b = vec![0.0; 5000];
        Exec::Sequential.fill(&mut a, |i| i as f64);
        Exec::Parallel.fill(&mut b, |i| i as f64);
        assert_eq!(a, b);
        Exec::Parallel.update(&mut b, |i, x| x + i as f64);
        assert_eq!(b[4999], 2.0 * 4999.0);
        assert_eq!(Exec::Parallel.max(0, |_| 1.0), f64::NEG_INFINITY);
    }
}
