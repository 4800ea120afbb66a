//! Seeded, splittable random stream.
//!
//! Every random draw in the crate flows from one top-level seed. Child
//! streams are derived by label so that adding draws to one component never
//! shifts the numbers another component sees.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    counter: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a; stable across platforms and releases.
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            counter: 0,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words drawn so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Derives an independent child stream. Depends only on this stream's
    /// seed and the label, never on how many draws were made.
    pub fn split(&self, label: &str) -> RngState {
        RngState::new(splitmix64(self.seed ^ splitmix64(label_hash(label))))
    }

    pub fn uniform(&mut self) -> f64 {
        self.gen::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        self.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.gen_range(0..n)
    }

    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.gen_range(lo..=hi)
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(self);
    }
}

impl RngCore for RngState {
    fn next_u32(&mut self) -> u32 {
        self.counter += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.counter += 2;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.counter += dest.len().div_ceil(4) as u64;
        self.inner.fill_bytes(dest);
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}
