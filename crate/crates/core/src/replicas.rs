//! Replica scheduling.
//!
//! Replicas are the only unit of parallelism. Results come back ordered by
//! replica index whatever the schedule, so reductions over them are
//! deterministic. Without the `parallel` feature every mode runs
//! sequentially.

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// rayon's global pool.
    #[default]
    Parallel,
    /// A dedicated pool with this many workers.
    Threads(usize),
}

/// Runs `f(0), …, f(n - 1)` under `exec` and returns results in index order.
pub fn run_replicas<T, F>(n: u64, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => parallel::run(n, None, f),
        Execution::Threads(k) => parallel::run(n, Some(k.max(1)), f),
    }
}

#[cfg(feature = "parallel")]
mod parallel {
    use rayon::prelude::*;

    pub(super) fn run<T, F>(n: u64, threads: Option<usize>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        let go = || (0..n).into_par_iter().map(&f).collect();
        match threads {
            None => go(),
            Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
                Ok(pool) => pool.install(go),
                Err(e) => {
                    log::warn!("could not build a {k}-thread pool ({e}); using the global pool");
                    go()
                }
            },
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod parallel {
    pub(super) fn run<T, F>(n: u64, _threads: Option<usize>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
