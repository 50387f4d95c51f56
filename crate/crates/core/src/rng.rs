//! Reproducible parallel random streams.
//!
//! Work is split into a fixed number of chunks; chunk `w` draws from the
//! ChaCha stream `(seed, w)`. Results are combined in chunk order, so output
//! depends only on the seed and the chunk count, not on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Default number of independent chunks for Monte Carlo runs.
pub const DEFAULT_WORKERS: usize = 8;
/// Environment variable capping the number of threads.
pub const THREADS_ENV: &str = "MECHLEARN_THREADS";

/// Random stream for one chunk.
pub fn stream(seed: u64, worker: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker);
    rng
}

/// Thread cap from the environment, if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Runs `f` on a pool sized by [`thread_cap`], or rayon's default.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match thread_cap() {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                f()
            }
        },
        None => f(),
    }
}

/// Sizes of `workers` chunks that add up to `total`.
pub fn split(total: usize, workers: usize) -> Vec<usize> {
    let workers = workers.max(1);
    (0..workers).map(|w| total / workers + usize::from(w < total % workers)).collect()
}

/// Runs `f(worker, rng, count)` for each chunk in parallel and returns the
/// results in chunk order.
pub fn run_chunks<T, F>(seed: u64, total: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut ChaCha8Rng, usize) -> T + Sync + Send,
{
    let sizes = split(total, workers);
    with_pool(|| {
        sizes
            .par_iter()
            .enumerate()
            .map(|(w, &count)| {
                let mut rng = stream(seed, w as u64);
                f(w, &mut rng, count)
            })
            .collect()
    })
}

/// Mean and standard error from running sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct Moments {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: &Moments) -> Moments {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}
