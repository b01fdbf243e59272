//! Counter-based random streams.
//!
//! Every random quantity in a simulation is addressed by a position: the
//! trial it belongs to, the tree node whose children it drives, or the
//! chunk of a sequential stream. The Philox4x32-10 block function maps
//! `(key, counter)` to 128 random bits, so a value depends only on its
//! address and never on the order in which it was generated. This is what
//! makes breadth-first and depth-first simulation of one tree agree bit for
//! bit, and what makes results independent of the number of worker threads.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::weights::{REAL_MEAN, REAL_SD};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 block function with 10 rounds.
#[inline]
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// SplitMix64 finalizer, used only to turn seeds into keys.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the per-trial seed from a master seed and a trial index.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(trial.wrapping_add(0x6A09_E667_F3BC_C909)))
}

/// Separates the uses of one key so that they never share counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Domain {
    Tree = 1,
    Walk = 2,
    Theta = 3,
    Aux = 4,
}

/// A sequential stream over consecutive Philox blocks of one address.
///
/// Implements [`RngCore`], so any `rand` distribution can draw from it.
#[derive(Debug, Clone)]
pub struct PhiloxStream {
    key: [u32; 2],
    lane: [u32; 2],
    tag: u32,
    block: u32,
    buf: [u32; 4],
    used: usize,
}

impl PhiloxStream {
    pub fn new(seed: u64, domain: Domain, address: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            lane: [address as u32, (address >> 32) as u32],
            tag: domain as u32,
            block: 0,
            buf: [0; 4],
            used: 4,
        }
    }

    #[inline]
    fn refill(&mut self) {
        self.buf = philox4x32_10([self.lane[0], self.lane[1], self.block, self.tag], self.key);
        self.block = self.block.wrapping_add(1);
        self.used = 0;
    }
}

impl RngCore for PhiloxStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.refill();
        }
        let w = self.buf[self.used];
        self.used += 1;
        w
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        if self.used > 2 {
            if self.used == 3 {
                // Keep 64-bit draws aligned on block halves.
                self.used = 4;
            }
            self.refill();
        }
        let lo = u64::from(self.buf[self.used]);
        let hi = u64::from(self.buf[self.used + 1]);
        self.used += 2;
        lo | (hi << 32)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let w = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

/// Increments carried by the two children of one parent node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChildIncrements {
    pub v: [f64; 2],
    pub x: [f64; 2],
}

/// The positional randomness of one tree.
///
/// The children of the node at `(depth, index)` take their increments from
/// the stream addressed by the heap number `2^depth + index`. The real parts
/// are drawn first (left, right), then the imaginary parts, so a simulation
/// that only needs `V` reads a prefix of the same stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeKey {
    seed: u64,
}

pub(crate) const MAX_TREE_DEPTH: u32 = 62;

impl TreeKey {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn for_trial(master: u64, trial: u64) -> Self {
        Self::new(trial_seed(master, trial))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    fn parent_stream(&self, depth: u32, index: u64) -> PhiloxStream {
        debug_assert!(depth <= MAX_TREE_DEPTH);
        debug_assert!(index < (1u64 << depth));
        PhiloxStream::new(self.seed, Domain::Tree, (1u64 << depth) | index)
    }

    #[inline]
    pub fn child_increments(&self, depth: u32, index: u64) -> ChildIncrements {
        let mut s = self.parent_stream(depth, index);
        let v = [real_increment(&mut s), real_increment(&mut s)];
        let x = [imag_increment(&mut s), imag_increment(&mut s)];
        ChildIncrements { v, x }
    }

    #[inline]
    pub fn real_child_increments(&self, depth: u32, index: u64) -> [f64; 2] {
        let mut s = self.parent_stream(depth, index);
        [real_increment(&mut s), real_increment(&mut s)]
    }
}

#[inline]
fn real_increment<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    REAL_MEAN + REAL_SD * z
}

#[inline]
fn imag_increment<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
