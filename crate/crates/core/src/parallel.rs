//! Trial-parallel execution with scheduling-independent results.
//!
//! Trials are grouped into chunks of a fixed size. Each chunk is folded into
//! its own accumulator and the chunk accumulators are merged in chunk order,
//! so the arithmetic performed is the same for any number of workers.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Trials folded per chunk; part of the reproducibility contract.
pub const CHUNK_TRIALS: u64 = 64;

/// Associative combination of partial accumulators.
pub trait Merge {
    fn merge_from(&mut self, other: Self);
}

impl<T: Merge, const N: usize> Merge for [T; N] {
    fn merge_from(&mut self, other: Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.merge_from(b);
        }
    }
}

impl<T: Merge> Merge for Vec<T> {
    fn merge_from(&mut self, other: Self) {
        assert_eq!(self.len(), other.len(), "merging accumulators of different shapes");
        for (a, b) in self.iter_mut().zip(other) {
            a.merge_from(b);
        }
    }
}

impl<A: Merge, B: Merge> Merge for (A, B) {
    fn merge_from(&mut self, other: Self) {
        self.0.merge_from(other.0);
        self.1.merge_from(other.1);
    }
}

/// Runs trials on a worker pool.
#[derive(Clone, Default)]
pub struct Runner {
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner").field("threads", &self.threads()).finish()
    }
}

impl Runner {
    /// A runner with exactly `threads` workers.
    pub fn with_threads(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::InvalidParameter("thread count must be positive".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))?;
        Ok(Self { pool: Some(Arc::new(pool)) })
    }

    pub fn threads(&self) -> usize {
        match &self.pool {
            Some(p) => p.current_num_threads(),
            None => rayon::current_num_threads(),
        }
    }

    pub fn install<R: Send>(&self, op: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(p) => p.install(op),
            None => op(),
        }
    }

    /// Folds `trial` for every index in `0..trials` into accumulators built
    /// by `init`, and merges them in a fixed order.
    pub fn run<A, I, F>(&self, trials: u64, init: I, trial: F) -> A
    where
        A: Merge + Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(u64, &mut A) + Sync + Send,
    {
        let chunks = trials.div_ceil(CHUNK_TRIALS);
        let parts: Vec<A> = self.install(|| {
            (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut acc = init();
                    let end = ((c + 1) * CHUNK_TRIALS).min(trials);
                    for t in c * CHUNK_TRIALS..end {
                        trial(t, &mut acc);
                    }
                    acc
                })
                .collect()
        });
        let mut total = init();
        for p in parts {
            total.merge_from(p);
        }
        total
    }

    /// Like [`Runner::run`] but returns per-trial outputs in trial order.
    pub fn map<T, F>(&self, trials: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.install(|| (0..trials).into_par_iter().map(f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::MeanVar;

    #[test]
    fn results_do_not_depend_on_threads() {
        let f = |t: u64, acc: &mut MeanVar| acc.push(((t * 7919) % 1013) as f64 / 17.0);
        let one = Runner::with_threads(1).unwrap().run(1000, MeanVar::new, f);
        let four = Runner::with_threads(4).unwrap().run(1000, MeanVar::new, f);
        assert_eq!(one, four);
        assert_eq!(one.count(), 1000);
        assert!(Runner::with_threads(0).is_err());
    }
}
