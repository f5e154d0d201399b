//! Data-parallel execution with a sequential fallback.
//!
//! Every helper here produces results in input order, and reductions are
//! folded in a fixed order, so `Sequential` and `Parallel` runs are
//! bit-identical. Without the `parallel` feature both modes run sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Picks a mode from a worker count; one worker means sequential.
    pub fn from_jobs(jobs: usize) -> Self {
        if jobs <= 1 {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Sets the size of the global worker pool. Only the first call takes effect.
pub fn configure_workers(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        if jobs > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Ordered map over a slice.
pub fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Ordered map over a slice where each worker owns some mutable state
/// (for example a detector instance that is not shareable).
pub fn map_init<T, S, R, I, F>(mode: ExecMode, items: &[T], init: I, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return items.par_iter().map_init(&init, |s, t| f(s, t)).collect();
    }
    let _ = mode;
    let mut state = init();
    items.iter().map(|t| f(&mut state, t)).collect()
}

/// Sums per-item vectors of length `len`.
///
/// Items are grouped into fixed chunks of `chunk` elements; each chunk is
/// accumulated sequentially and the chunk sums are then added in order. The
/// grouping does not depend on the thread count, which keeps the floating
/// point result identical across modes.
pub fn chunked_sum<T, F>(mode: ExecMode, items: &[T], chunk: usize, len: usize, f: F) -> Vec<f64>
where
    T: Sync,
    F: Fn(&T, &mut [f64]) + Sync + Send,
{
    let chunk = chunk.max(1);
    let partial = |part: &[T]| {
        let mut acc = vec![0.0; len];
        for item in part {
            f(item, &mut acc);
        }
        acc
    };
    let chunks: Vec<&[T]> = items.chunks(chunk).collect();
    let sums: Vec<Vec<f64>> = map(mode, &chunks, |c| partial(c));
    let mut total = vec![0.0; len];
    for s in &sums {
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    total
}
