//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature disabled, [`Exec::Parallel`] runs sequentially.
//! Results never depend on the mode: every parallel loop writes disjoint
//! outputs and reductions happen afterwards in index order.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exec {
    Sequential,
    #[default]
    Parallel,
}

/// Inner loops shorter than this stay sequential.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 64;

impl Exec {
    /// Whether parallel execution is actually available.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// `out[i] = f(i)` for every slot.
    pub fn fill<T, F>(self, out: &mut [T], f: F)
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && out.len() >= MIN_PARALLEL_LEN {
            out.par_iter_mut().enumerate().for_each(|(i, slot)| *slot = f(i));
            return;
        }
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = f(i);
        }
    }

    /// `(0..n).map(f).collect()`.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && n >= MIN_PARALLEL_LEN {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps over a few coarse tasks (ladder levels, twin runs); no length threshold.
    pub fn map_tasks<I, T, F>(self, items: &mut [I], f: F) -> Vec<T>
    where
        I: Send,
        T: Send,
        F: Fn(&mut I) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && items.len() > 1 {
            return items.par_iter_mut().map(f).collect();
        }
        items.iter_mut().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = Exec::Sequential.map(1000, f);
        let b = Exec::Parallel.map(1000, f);
        assert_eq!(a, b);
        let mut c = vec![0.0; 1000];
        Exec::Parallel.fill(&mut c, f);
        assert_eq!(a, c);
    }
}
