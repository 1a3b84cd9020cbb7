//! Deterministic random substreams derived from one master seed.
//!
//! Each consumer (noise, clutter, decomposition) gets its own ChaCha stream
//! id so that changing one component never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Receiver noise of one scan.
    Noise { scan: usize },
    /// Clutter sequence of one range bin in one scan.
    Clutter { scan: usize, bin: usize },
    /// Random projections of one decomposition run.
    Godec { run: u64 },
    /// Free-form stream for tests and validators.
    Aux { id: u64 },
}

impl Stream {
    fn id(self) -> u64 {
        // top byte tags the consumer, the rest packs its indices
        const LOW: u64 = (1 << 56) - 1;
        match self {
            Stream::Noise { scan } => (1 << 56) | (scan as u64 & LOW),
            Stream::Clutter { scan, bin } => {
                (2 << 56) | (((scan as u64) << 28) & LOW) | (bin as u64 & ((1 << 28) - 1))
            }
            Stream::Godec { run } => (3 << 56) | (run & LOW),
            Stream::Aux { id } => (4 << 56) | (id & LOW),
        }
    }
}

/// Factory for independent generators keyed by [`Stream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Substreams {
    seed: u64,
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Substreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream.id());
        rng
    }
}

/// Seed of the `index`-th repetition of an experiment (splitmix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
