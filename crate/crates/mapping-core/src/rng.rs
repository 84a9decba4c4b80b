//! Deterministic RNG stream derivation.
//!
//! All randomness flows from one master seed. Each consumer (map sampling,
//! policy tie-breaking, training-time action sampling) gets its own ChaCha8
//! stream keyed by a domain tag and an episode index, so episode k's maps are
//! identical no matter which policy runs or how many episodes preceded it.

use rand_chacha::rand_core::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Independent randomness consumers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamDomain {
    /// Map and start-pose sampling plus sensor noise.
    Environment,
    /// Stochastic choices inside a policy (tie-breaks, random actions).
    Policy,
    /// Action sampling from the learned policy during training.
    TrainAction,
}

impl StreamDomain {
    fn tag(self) -> u64 {
        match self {
            StreamDomain::Environment => 0x657e_76a1,
            StreamDomain::Policy => 0x706f_6c69,
            StreamDomain::TrainAction => 0x7472_6163,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the ChaCha8 stream for (master seed, domain, episode index).
pub fn derive_rng(master_seed: u64, domain: StreamDomain, episode: u64) -> ChaCha8Rng {
    let mut state = master_seed;
    let mut seed = [0u8; 32];
    // Mix the identifiers into the splitmix state, then squeeze 32 bytes.
    let _ = splitmix64(&mut state);
    state ^= domain.tag();
    let _ = splitmix64(&mut state);
    state ^= episode;
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
