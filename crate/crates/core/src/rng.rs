//! Seeded random streams. Every consumer of randomness draws from its own
//! ChaCha stream, identified by the experiment seed, a rollout index and a
//! source tag, so results do not depend on scheduling or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a random stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Schedule,
    InitialDesign,
    Network,
    InitialState,
    Input,
    NoiseA,
    NoiseB,
}

impl Source {
    fn tag(self) -> u64 {
        match self {
            Source::Schedule => 0,
            Source::Network => 1,
            Source::InitialState => 2,
            Source::Input => 3,
            Source::NoiseA => 4,
            Source::NoiseB => 5,
            Source::InitialDesign => 6,
        }
    }
}

const TAGS: u64 = 8;

/// Stream for `(seed, rollout, source)`.
pub fn substream(seed: u64, rollout: u64, source: Source) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rollout.wrapping_mul(TAGS).wrapping_add(source.tag()));
    rng
}

/// Stream for global draws that are not tied to a rollout.
pub fn global_stream(seed: u64, source: Source) -> ChaCha8Rng {
    substream(seed, 0, source)
}
