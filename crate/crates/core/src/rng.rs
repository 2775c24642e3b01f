//! Counter-style derivation of independent random streams.
//!
//! Every block of pulses draws from its own ChaCha stream keyed by
//! `(seed, lane, block, purpose)`, so a run partitioned over any number of
//! workers consumes exactly the same random numbers as a serial run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for inside one block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Pairs = 0,
    SignalDetect = 1,
    IdlerDetect = 2,
    SignalDark = 3,
    IdlerDark = 4,
    Tomography = 5,
}

const PURPOSE_BITS: u32 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream for `block` of an acquisition. `lane` separates acquisitions
/// that share a seed (for example the two circular projections of an OAM
/// run).
pub fn block_stream(seed: u64, lane: u64, block: u64, purpose: Purpose) -> ChaCha8Rng {
    let key = splitmix64(seed ^ splitmix64(lane.wrapping_add(0x4f41_4d00)));
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream((block << PURPOSE_BITS) | purpose as u64);
    rng
}

/// `ln(1 - p)`, the per-trial log survival used by [`geometric_skip`].
pub fn log_complement(p: f64) -> f64 {
    (-p).ln_1p()
}

/// Number of failures before the next success of a Bernoulli(p) sequence,
/// given `log_q = ln(1 - p)`. Returns `u64::MAX` when `p = 0`.
#[inline]
pub fn geometric_skip<R: Rng + ?Sized>(rng: &mut R, log_q: f64) -> u64 {
    if log_q == 0.0 {
        return u64::MAX;
    }
    let u = 1.0 - rng.random::<f64>();
    // `as` saturates, which is the right answer for astronomically long gaps.
    (u.ln() / log_q) as u64
}
