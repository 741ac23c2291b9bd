//! Execution strategy for data-parallel inner loops.
//!
//! Every parallel site in this crate is an independent per-index map whose
//! results are assembled in index order, so `Sequential` and `Parallel`
//! produce bit-identical output; only wall time differs. Reductions over
//! floating-point values are always performed in index order after the map.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How to run data-parallel loops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    /// Plain sequential loops.
    Sequential,
    /// rayon work-stealing loops. Falls back to sequential when the crate
    /// is built without the `parallel` feature.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Maps `f` over `0..n`, collecting results in index order.
pub(crate) fn map_indexed<T, F>(mode: ExecMode, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match mode {
        ExecMode::Sequential => (0..n).map(f).collect(),
        ExecMode::Parallel => {
            #[cfg(feature = "parallel")]
            {
                (0..n).into_par_iter().map(f).collect()
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..n).map(f).collect()
            }
        }
    }
}
