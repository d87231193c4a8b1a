//! Execution strategy for embarrassingly parallel ensemble work.
//!
//! Everything that fans out over paths or sample draws goes through
//! [`map_indexed`] so the parallel and sequential code paths stay
//! byte-identical in their results: work items are keyed by index, outputs
//! are collected in index order, and any cross-item reduction downstream runs
//! over the ordered vector.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
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

/// Cap the worker pool at `n` threads (0 keeps the library default). Must be
/// called before any parallel work; later calls fail once the pool exists.
/// A no-op without the `parallel` feature.
pub fn configure_threads(n: usize) -> crate::Result<()> {
    #[cfg(feature = "parallel")]
    if n > 0 {
        return rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| crate::Error::InvalidArgument(format!("thread pool: {e}")));
    }
    let _ = n;
    Ok(())
}

/// Apply `f` to every index in `0..n`, returning results in index order.
///
/// With the `parallel` feature off, `ExecMode::Parallel` silently degrades to
/// the sequential loop.
pub fn map_indexed<T, F>(n: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        return (0..n).into_par_iter().map(&f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_index_order() {
        let out = map_indexed(100, ExecMode::default(), |i| i * i);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, i * i);
        }
    }

    #[test]
    fn modes_agree() {
        let seq = map_indexed(64, ExecMode::Sequential, |i| (i as f64).sqrt());
        let par = map_indexed(64, ExecMode::Parallel, |i| (i as f64).sqrt());
        assert_eq!(seq, par);
    }
}
