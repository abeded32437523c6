//! Seed-derived random streams and worker-count invariant parallel reduction.
//!
//! Every work item (a path, a quadrature node, a sample batch) draws from its
//! own ChaCha stream keyed by `(seed, tag, index)`, so results never depend on
//! how items are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Concrete generator used throughout the crate.
pub type Stream = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A splittable family of streams rooted at one 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFamily {
    key: u64,
}

impl StreamFamily {
    pub fn new(seed: u64) -> Self {
        Self { key: splitmix(seed) }
    }

    /// Child family for a named sub-computation.
    pub fn child(&self, tag: u64) -> Self {
        Self { key: splitmix(self.key ^ splitmix(tag.wrapping_add(0x5851_F42D_4C95_7F2D))) }
    }

    /// Independent stream for work item `index`.
    pub fn stream(&self, index: u64) -> Stream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(index);
        rng
    }
}

/// Run `f` inside a pool with `workers` threads (0 = rayon default).
pub fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: usize, f: F) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Map `f` over `0..n` in parallel, returning results in index order.
pub fn par_map<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    (0..n).into_par_iter().map(f).collect()
}

/// Pairwise summation in a fixed tree shape.
pub fn tree_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            tree_sum(a) + tree_sum(b)
        }
    }
}

/// Sample mean and standard error of the mean, reduced deterministically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: 0.0, stderr: f64::INFINITY, n };
        }
        let mean = tree_sum(xs) / n as f64;
        if n == 1 {
            return Self { mean, stderr: f64::INFINITY, n };
        }
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = tree_sum(&dev) / (n - 1) as f64;
        Self { mean, stderr: (var / n as f64).sqrt(), n }
    }

    pub fn rel_stderr(&self) -> f64 {
        if self.mean == 0.0 {
            f64::INFINITY
        } else {
            self.stderr / self.mean.abs()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let fam = StreamFamily::new(7);
        let a: u64 = fam.stream(3).random();
        let b: u64 = fam.stream(3).random();
        let c: u64 = fam.stream(4).random();
        let d: u64 = fam.child(1).stream(3).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn par_map_is_worker_invariant() {
        let fam = StreamFamily::new(11);
        let run = |w| {
            with_workers(w, || {
                let xs = par_map(1000, |i| fam.stream(i as u64).random::<f64>());
                tree_sum(&xs)
            })
            .unwrap()
        };
        assert_eq!(run(1).to_bits(), run(3).to_bits());
    }

    #[test]
    fn mean_estimate_basic() {
        let m = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }
}
