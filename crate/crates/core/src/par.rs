//! Data-parallel helpers. With the `parallel` feature these fan out over
//! rayon; without it they run the same closures sequentially. Results are
//! always returned in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[cfg(feature = "parallel")]
pub(crate) fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn map_range<R, F>(len: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    (0..len).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<R, F>(len: u64, f: F) -> Vec<R>
where
    F: Fn(u64) -> R,
{
    (0..len).map(f).collect()
}

/// How trial generation is scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// One thread, plain iterator.
    Sequential,
    /// The global rayon pool (sequential when built without `parallel`).
    #[default]
    Parallel,
    /// A dedicated pool with the given number of worker threads.
    Workers(usize),
}

impl Execution {
    pub(crate) fn scheduler(self) -> Scheduler {
        match self {
            Execution::Sequential => Scheduler::sequential(),
            Execution::Parallel => Scheduler {
                parallel: cfg!(feature = "parallel"),
                #[cfg(feature = "parallel")]
                pool: None,
            },
            #[cfg(feature = "parallel")]
            Execution::Workers(k) => match rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build() {
                Ok(pool) => Scheduler {
                    parallel: true,
                    pool: Some(pool),
                },
                Err(_) => Scheduler::sequential(),
            },
            #[cfg(not(feature = "parallel"))]
            Execution::Workers(_) => Scheduler::sequential(),
        }
    }
}

/// A resolved [`Execution`], holding its thread pool if it owns one.
pub(crate) struct Scheduler {
    parallel: bool,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

impl Scheduler {
    fn sequential() -> Self {
        Scheduler {
            parallel: false,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// `f(0), ..., f(len - 1)` in order.
    pub(crate) fn map_range<R, F>(&self, len: u64, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(u64) -> R + Sync + Send,
    {
        if !self.parallel {
            return (0..len).map(f).collect();
        }
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            return pool.install(|| map_range(len, f));
        }
        map_range(len, f)
    }
}
