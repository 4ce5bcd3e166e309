//! Deterministic randomness helpers.
//!
//! All randomness in the lab flows through seeded ChaCha streams so that any
//! (seed, config, data) triple maps to byte-identical outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Canonical seeded RNG for the whole crate.
pub type LabRng = ChaCha12Rng;

pub fn seeded(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}

/// FNV-1a 64-bit hash; used for stable instance ids and seed derivation.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derive an independent stream seed from a base seed and a tag, so that
/// subsystems (data gen, training, padding draws) never share a stream.
pub fn derive(seed: u64, tag: &str) -> u64 {
    let mut buf = alloc::vec::Vec::with_capacity(8 + tag.len());
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(tag.as_bytes());
    fnv1a64(&buf)
}

/// Standard normal sample via Box-Muller. One uniform pair per sample keeps
/// the stream position independent of caller batching.
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // used by the no_std build; under `cfg(test)` inherent methods win
    #[allow(unused_imports)]
    use num_traits::Float;
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * core::f64::consts::PI * u2).cos()
}
