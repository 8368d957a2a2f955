//! Seeded randomness and the stable 64-bit hash shared by the feature-hash
//! backbone and the counter-based telemetry generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over `bytes`, finished with the splitmix64 avalanche so that low
/// bits (used for bucket indices) and the top bit (used for signs) are both
/// well mixed. Platform independent.
pub fn stable_hash64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    mix64(h)
}

/// splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sequential generator for a named stream of a run (initialisation, shuffles,
/// k-means restarts, ...). Distinct `stream` values give independent sequences.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator keyed by (seed, component, signal, tick). Values drawn from it do
/// not depend on the order in which keys are visited.
pub fn keyed_rng(seed: u64, component: &str, signal: &str, tick: u64) -> ChaCha8Rng {
    let mut buf = Vec::with_capacity(component.len() + signal.len() + 18);
    buf.extend_from_slice(&seed.to_le_bytes());
    buf.extend_from_slice(component.as_bytes());
    buf.push(0);
    buf.extend_from_slice(signal.as_bytes());
    buf.push(0);
    buf.extend_from_slice(&tick.to_le_bytes());
    ChaCha8Rng::seed_from_u64(stable_hash64(&buf))
}
