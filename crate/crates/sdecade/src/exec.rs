use rayon::prelude::*;
use sdecade_core::realization::PathMap;

/// [`PathMap`] over the global rayon pool. Results come back in index
/// order, so reductions downstream do not depend on the thread count.
#[derive(Clone, Copy, Debug, Default)]
pub struct Rayon;

impl PathMap for Rayon {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }
}
