//! Named random substreams derived from one 64-bit seed.
//!
//! Each component draws from its own ChaCha stream so that, for instance,
//! changing the exploration schedule leaves the generated maze and the
//! action-noise sequence untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stream {
    EnvGen,
    Noise,
    Exploration,
    InitialQueue,
    Eval,
    Sampling,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::EnvGen => 1,
            Stream::Noise => 2,
            Stream::Exploration => 3,
            Stream::InitialQueue => 4,
            Stream::Eval => 5,
            Stream::Sampling => 6,
        }
    }
}

/// The `stream` substream of `seed`.
pub fn substream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// Mixes a master seed with a cell label into a well-spread cell seed
/// (SplitMix64 finalizer).
pub fn derive_seed(master: u64, label: u64) -> u64 {
    let mut z = master ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
