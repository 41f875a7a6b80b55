//! Deterministic worker pool.
//!
//! Work items are mapped in parallel but results always come back in input
//! order, and every reduction downstream is done sequentially over that
//! ordered output, so the worker count never changes a result bit.

use rayon::prelude::*;

/// Fixed number of frames per parallel chunk. Independent of worker count.
pub const FRAME_CHUNK: usize = 2048;

pub struct Workers {
    pool: rayon::ThreadPool,
}

impl Workers {
    pub fn new(threads: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("thread pool");
        Workers { pool }
    }

    pub fn single() -> Self {
        Workers::new(1)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        self.pool.install(|| items.par_iter().map(&f).collect())
    }

    pub fn map_indexed<R, F>(&self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::new(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}
