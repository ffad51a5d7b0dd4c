//! Counter-based random substreams.
//!
//! Every random stream in a simulation is addressed by `(trial, node, stream)`
//! under one master seed, so a trial draws the same numbers no matter which
//! worker runs it or in which order trials complete.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Node slot used for streams that belong to the whole scenario rather than a node.
pub const SCENARIO_NODE: u32 = u32::MAX;

/// Purpose of a substream. The discriminant is part of the stream address.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Stream {
    Regressor = 1,
    Noise = 2,
    Impulse = 3,
    Schedule = 4,
    Topology = 16,
    Target = 17,
    Profile = 18,
    Probability = 19,
    MonteCarlo = 32,
}

/// Master seed plus the substream addressing scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree {
    master: u64,
}

impl SeedTree {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// Seed reported for a trial (used in error messages and run metadata).
    pub fn trial_seed(&self, trial: usize) -> u64 {
        splitmix64(self.master ^ splitmix64(trial as u64 + 1))
    }

    /// Independent generator for `(trial, node, stream)`.
    pub fn substream(&self, trial: usize, node: u32, stream: Stream) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.trial_seed(trial));
        // ChaCha exposes a 64-bit stream id next to the key; pack node and purpose into it.
        rng.set_stream(((node as u64) << 8) | stream as u64);
        rng
    }

    /// Scenario-level stream, shared by all trials.
    pub fn scenario(&self, stream: Stream) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.master));
        rng.set_stream(((SCENARIO_NODE as u64) << 8) | stream as u64);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
