//! Order-preserving map over independent work items.
//!
//! With the `parallel` feature the items may run on a rayon pool; results
//! always come back in input order, so callers that reduce them in that
//! order get bit-identical output either way. Without the feature every
//! executor runs sequentially.

#[cfg(feature = "parallel")]
use std::sync::Arc;

use crate::error::Result;

#[derive(Clone, Default)]
pub struct Executor {
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Executor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Executor")
            .field("threads", &self.threads())
            .finish()
    }
}

impl Executor {
    pub fn sequential() -> Self {
        Self::default()
    }

    /// A pool of `threads` workers (`0` picks rayon's default). Falls back
    /// to sequential execution when built without the `parallel` feature.
    pub fn parallel(threads: usize) -> Result<Self> {
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .thread_name(|i| format!("fedsim-client-{i}"))
                .build()
                .map_err(|e| crate::error::config(format!("thread pool: {e}")))?;
            Ok(Self {
                pool: Some(Arc::new(pool)),
            })
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = threads;
            Ok(Self::sequential())
        }
    }

    /// Worker count, or 1 when running sequentially.
    pub fn threads(&self) -> usize {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.current_num_threads();
        }
        1
    }

    pub fn is_parallel(&self) -> bool {
        #[cfg(feature = "parallel")]
        return self.pool.is_some();
        #[cfg(not(feature = "parallel"))]
        false
    }

    pub fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| items.par_iter().map(&f).collect());
        }
        items.iter().map(f).collect()
    }

    /// Runs two independent closures, concurrently when a pool is present.
    pub fn join<A, B, RA, RB>(&self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| rayon::join(a, b));
        }
        (a(), b())
    }
}
