//! Rayon-backed executor with a fixed worker count.

use horocycle_core::exec::Executor;
use rayon::prelude::*;

/// Environment variable overriding the configured worker count.
pub const WORKERS_ENV: &str = "HOROCYCLE_WORKERS";

pub enum Pool {
    Serial,
    Threads(rayon::ThreadPool),
}

impl Pool {
    pub fn new(workers: usize) -> Pool {
        if workers <= 1 {
            return Pool::Serial;
        }
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(p) => Pool::Threads(p),
            Err(_) => Pool::Serial,
        }
    }

    pub fn workers(&self) -> usize {
        match self {
            Pool::Serial => 1,
            Pool::Threads(p) => p.current_num_threads(),
        }
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, count: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            Pool::Serial => (0..count).map(f).collect(),
            Pool::Threads(p) => p.install(|| (0..count).into_par_iter().map(f).collect()),
        }
    }
}

/// Command-line value, then the environment, then the config file.
pub fn resolve_workers(cli: Option<usize>, configured: usize) -> usize {
    let env = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok());
    cli.or(env).unwrap_or(configured).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use horocycle_core::exec::Serial;

    #[test]
    fn threaded_map_keeps_order() {
        let p = Pool::new(3);
        let a = p.map(1000, |i| (i as f64).sqrt());
        let b = Serial.map(1000, |i| (i as f64).sqrt());
        assert_eq!(a, b);
    }
}
