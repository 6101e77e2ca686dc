// SPDX-License-Identifier: MIT OR Apache-2.0

/// Execution strategy for the data-parallel loops of the crate.
///
/// `Parallel` runs on the rayon global pool when the `parallel` feature is
/// enabled and silently degrades to `Sequential` otherwise. Results are
/// identical under both strategies: every parallel loop is an indexed map
/// whose outputs are collected in input order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }

    pub(crate) fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                (0..n).into_par_iter().map(f).collect()
            }
            _ => (0..n).map(f).collect(),
        }
    }
}
