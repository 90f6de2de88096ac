//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream addressed by
//! `(seed, trajectory, stream)`, so results do not depend on scheduling or
//! on the order in which sites are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream reserved for the jump dynamics of a trajectory.
pub const DYNAMICS_STREAM: u64 = u64::MAX;
/// Stream reserved for auxiliary choices (dual labels, batch shuffles).
pub const AUX_STREAM: u64 = u64::MAX - 1;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent seed for one point of an experiment grid.
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &l in labels {
        state ^= l.wrapping_mul(0xA076_1D64_78BD_642F);
        out = splitmix64(&mut state);
    }
    out
}

/// Key material for one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub trajectory: u64,
}

impl StreamKey {
    pub fn new(seed: u64, trajectory: u64) -> Self {
        Self { seed, trajectory }
    }

    fn key_bytes(&self) -> [u8; 32] {
        let mut state = self.seed ^ 0x6A09_E667_F3BC_C908;
        let mut out = [0u8; 32];
        for (i, chunk) in out.chunks_mut(8).enumerate() {
            if i == 2 {
                state ^= self.trajectory.wrapping_mul(0xD6E8_FEB8_6659_FD93);
            }
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        out
    }

    pub fn stream(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key_bytes());
        rng.set_stream(stream);
        rng
    }

    pub fn dynamics(&self) -> ChaCha8Rng {
        self.stream(DYNAMICS_STREAM)
    }

    pub fn aux(&self) -> ChaCha8Rng {
        self.stream(AUX_STREAM)
    }
}
