//! Deterministic random-number streams.
//!
//! Every stochastic element of a run draws from its own ChaCha8 stream whose
//! seed is derived from the master seed, the pump-amplitude index, the shot
//! index, and the role the stream plays inside the shot. The derivation is a
//! fixed chain of SplitMix64 finalizer rounds, so it is platform-independent
//! and shots may execute in any order — or in parallel — without changing a
//! single output bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Role a derived stream plays inside one shot. The discriminants are part of
/// the reproducibility contract and must never be reordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamRole {
    Vacuum = 0,
    SignalLoss = 1,
    IdlerLoss = 2,
    SignalBackground = 3,
    IdlerBackground = 4,
    CoherentSource = 5,
    Absorber = 6,
}

/// SplitMix64 finalizer: the standard 64-bit avalanche mix.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a list of tag words by folding
/// each word into the running hash with one SplitMix64 round.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    let mut h = mix(master);
    for &w in words {
        h = mix(h ^ w);
    }
    h
}

/// The stream for one (amplitude, shot, role) triple of a run.
pub fn shot_rng(master: u64, amp_index: u64, shot_index: u64, role: StreamRole) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &[amp_index, shot_index, role as u64]))
}

/// The derived seed recorded per shot in the run manifest (the `Vacuum` root).
pub fn shot_seed(master: u64, amp_index: u64, shot_index: u64) -> u64 {
    derive_seed(master, &[amp_index, shot_index, StreamRole::Vacuum as u64])
}
