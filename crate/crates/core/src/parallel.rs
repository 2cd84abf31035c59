//! Map-parallelism over path indices.
//!
//! Every parallel entry point in the crate funnels through [`map_indexed`].
//! Output order always follows the index, so reductions performed on the
//! returned `Vec` are bit-identical for any worker count, and identical to
//! the sequential fallback.

/// How a batch of independent work items is executed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    /// Single-threaded, in index order.
    Sequential,
    /// Work-stealing over the global rayon pool. Falls back to sequential
    /// execution when the `parallel` feature is disabled.
    #[default]
    Parallel,
}

impl Execution {
    /// `true` if this mode actually runs on more than one thread when
    /// threads are available.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f(0), …, f(n-1)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Like [`map_indexed`] over the items of a slice.
pub fn map_slice<'a, S, T, F>(items: &'a [S], exec: Execution, f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&'a S) -> T + Sync + Send,
{
    map_indexed(items.len(), exec, |i| f(&items[i]))
}
