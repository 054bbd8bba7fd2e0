//! Counter-based random numbers (Philox4x32-10).
//!
//! Every draw is a pure function of `(key, counter)`, so trial `i` always
//! sees the same randomness no matter which worker generates it or in which
//! order.

use crate::quantum::Node;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// One Philox4x32 block with ten rounds.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

/// Stream tags keep independent uses of the same seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Stream {
    Trial = 0,
    Tomography = 1,
    Sweep = 2,
    Oracle = 3,
}

/// Four 32-bit words for `(seed, index, stream, substream)`.
pub fn block(seed: u64, index: u64, stream: Stream, substream: u32) -> [u32; 4] {
    philox4x32(
        [index as u32, (index >> 32) as u32, stream as u32, substream],
        [seed as u32, (seed >> 32) as u32],
    )
}

/// Uniform double in `[0, 1)` from two words (53 random bits).
#[inline]
pub fn unit_f64(hi: u32, lo: u32) -> f64 {
    let bits = ((hi as u64) << 21) ^ (lo as u64 >> 11);
    (bits & ((1u64 << 53) - 1)) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Randomness consumed by one Bell-test trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialDraw {
    pub x: u8,
    pub y: u8,
    /// Uniform in `[0, 1)`, used to sample the joint outcome.
    pub u: f64,
}

pub fn trial_draw(seed: u64, trial_index: u64) -> TrialDraw {
    let w = block(seed, trial_index, Stream::Trial, 0);
    TrialDraw {
        x: (w[0] >> 31) as u8,
        y: (w[1] >> 31) as u8,
        u: unit_f64(w[2], w[3]),
    }
}

/// Input bit of `node` for trial `trial_index`.
pub fn input_bit_stream(seed: u64, trial_index: u64, node: Node) -> u8 {
    let d = trial_draw(seed, trial_index);
    match node {
        Node::A => d.x,
        Node::B => d.y,
    }
}

/// A sequential generator over consecutive Philox counters, for places
/// that just need a reproducible stream (tomography shots, oracle sampling).
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    stream: Stream,
    substream: u32,
    counter: u64,
    buf: [u32; 4],
    used: usize,
}

impl CounterRng {
    pub fn new(seed: u64, stream: Stream, substream: u32) -> Self {
        Self {
            seed,
            stream,
            substream,
            counter: 0,
            buf: [0; 4],
            used: 4,
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.buf = block(self.seed, self.counter, self.stream, self.substream);
            self.counter += 1;
            self.used = 0;
        }
        let w = self.buf[self.used];
        self.used += 1;
        w
    }

    pub fn next_f64(&mut self) -> f64 {
        let hi = self.next_u32();
        let lo = self.next_u32();
        unit_f64(hi, lo)
    }

    /// Standard normal via Box-Muller.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
