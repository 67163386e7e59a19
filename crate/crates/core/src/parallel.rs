//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature off, [`Execution::Parallel`] runs sequentially.
//! Results are always returned in index order, so both modes produce the same
//! output.

use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

pub fn map_range<T, F>(exec: Execution, range: Range<usize>, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return range.into_par_iter().map(f).collect();
    }
    let _ = exec;
    range.map(f).collect()
}

pub fn map_vec<S, T, F>(exec: Execution, items: Vec<S>, f: F) -> Vec<T>
where
    S: Send,
    T: Send,
    F: Fn(S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = exec;
    items.into_iter().map(f).collect()
}
