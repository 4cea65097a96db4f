//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by the master
//! seed and addressed by `(iteration, slot)`, so batched base runs give the
//! same results whether they execute serially or on a worker pool.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

const SLOT_BITS: u32 = 24;

/// Slot reserved for split-candidate generation within an iteration.
pub const CANDIDATE_SLOT: u64 = (1 << SLOT_BITS) - 1;
/// Slot reserved for traversal tie-breaking within an iteration.
pub const TRAVERSAL_SLOT: u64 = (1 << SLOT_BITS) - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSeeder {
    seed: u64,
}

impl StreamSeeder {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, iteration: u64, slot: u64) -> StreamRng {
        debug_assert!(slot < (1 << SLOT_BITS));
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((iteration << SLOT_BITS) | slot);
        rng
    }

    /// Derives an independent seeder, e.g. for replication `index` of a comparison.
    pub fn child(&self, index: u64) -> StreamSeeder {
        // splitmix64 finalizer
        let mut z = self.seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        StreamSeeder::new(z ^ (z >> 31))
    }
}
