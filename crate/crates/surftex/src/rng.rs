//! Deterministic seeded random streams.
//!
//! All randomness in the crate flows from a single 64-bit seed through
//! named sub-streams. Each sub-stream is an independent ChaCha12 stream
//! whose key is derived from the parent seed and the stream label, so
//! adding draws to one stage never shifts the draws of another. Streams
//! are bit-reproducible across platforms.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal, Poisson};

/// Mixes 64-bit state, splitmix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A seeded, deterministic stream of random draws.
#[derive(Debug, Clone)]
pub struct RandomStream {
    seed: u64,
    rng: ChaCha12Rng,
    draws: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self::from_key(seed)
    }

    fn from_key(key: u64) -> Self {
        let mut bytes = [0u8; 32];
        let mut s = key;
        for chunk in bytes.chunks_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        Self {
            seed: key,
            rng: ChaCha12Rng::from_seed(bytes),
            draws: 0,
        }
    }

    /// Derive an independent stream from this stream's seed and a label.
    /// Does not consume draws from `self`.
    pub fn substream(&self, label: &str) -> RandomStream {
        let mut h = self.seed;
        for &b in label.as_bytes() {
            h = splitmix64(h ^ u64::from(b));
        }
        Self::from_key(h)
    }

    /// Derive an independent stream indexed by an integer, e.g. one
    /// stream per patch or per ring.
    pub fn substream_indexed(&self, label: &str, index: u64) -> RandomStream {
        let s = self.substream(label);
        Self::from_key(splitmix64(s.seed ^ splitmix64(index)))
    }

    /// Number of draws taken from this stream so far.
    pub fn position(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.rng.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.gen::<f64>()
    }

    /// Uniform in (-pi, pi].
    pub fn uniform_angle(&mut self) -> f64 {
        std::f64::consts::PI - 2.0 * std::f64::consts::PI * self.uniform()
    }

    /// Uniform in [lo, hi].
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn uniform_usize(&mut self, n: usize) -> usize {
        self.draws += 1;
        self.rng.gen_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.draws += 1;
        self.rng.sample::<f64, _>(rand_distr::StandardNormal)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        if std == 0.0 {
            return mean;
        }
        self.draws += 1;
        Normal::new(mean, std).expect("valid normal").sample(&mut self.rng)
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean == 0.0 {
            return 0;
        }
        self.draws += 1;
        Poisson::new(mean).expect("valid poisson").sample(&mut self.rng) as u64
    }

    /// Coin flip.
    pub fn bernoulli(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.uniform_usize(i + 1);
            items.swap(i, j);
        }
    }

    /// Draw k distinct indices from 0..n, in random order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        // partial Fisher-Yates: first k entries are the sample
        for i in 0..k {
            let j = i + self.uniform_usize(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }
}
