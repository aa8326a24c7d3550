//! Deterministic counter-based RNG substreams.
//!
//! Every random quantity in a run is drawn from a ChaCha substream addressed
//! by `(master seed, domain, index)`. Substreams are independent of worker
//! scheduling, so any parallel execution of the same run consumes identical
//! randomness per work unit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Substream domains. Each domain gets a disjoint stream-id range so that,
/// e.g., atom field realizations never collide with shared mode draws.
pub mod domain {
    /// Per-atom field realization (mode phases/jitter or noise path).
    pub const ATOM_FIELD: u32 = 1;
    /// Shared mode set for explicit-3D geometry (index 0).
    pub const SHARED_MODES: u32 = 2;
    /// Per-atom position draw for explicit-3D geometry.
    pub const ATOM_POSITION: u32 = 3;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for substream `(master, domain, index)`.
///
/// The ChaCha key is expanded from the master seed; the stream id packs the
/// domain into the top 16 bits and the index into the remaining 48.
pub fn substream(master: u64, dom: u32, index: u64) -> ChaCha12Rng {
    let mut state = master;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    debug_assert!(index < 1 << 48, "substream index exceeds 48 bits");
    rng.set_stream(((dom as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}

/// Derived master seed for a sub-run (e.g. one sweep grid point).
pub fn derive_master(master: u64, label: u64) -> u64 {
    let mut state = master ^ label.wrapping_mul(0xa24b_aed4_963e_e407);
    splitmix64(&mut state)
}
