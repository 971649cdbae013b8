//! Seed splitting.
//!
//! Every random quantity is drawn from a ChaCha8 generator keyed by the
//! master seed. The generator's 64-bit stream id is derived from a
//! [`Stream`] tag and up to two indices (core, acquisition) with a
//! SplitMix64 finalizer, so each (purpose, core, acquisition) triple owns
//! an independent, reproducible substream:
//!
//! ```text
//! stream_id = mix(mix(mix(tag) ^ a) ^ b)
//! rng       = ChaCha8Rng::seed_from_u64(seed).set_stream(stream_id)
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Scatterers,
    Laser,
    Receiver,
    Speckle,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Scatterers => 0x5ca7_7e25,
            Stream::Laser => 0x1a5e_2000,
            Stream::Receiver => 0x2ece_1e00,
            Stream::Speckle => 0x5bec_c1e0,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic substream for `(seed, stream, a, b)`.
pub fn substream(seed: u64, stream: Stream, a: u64, b: u64) -> ChaCha8Rng {
    let id = splitmix64(splitmix64(splitmix64(stream.tag()) ^ a) ^ b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Master seed of the `index`-th independent realization derived from `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    if index == 0 {
        return seed;
    }
    splitmix64(seed ^ splitmix64(index.wrapping_mul(0x2545_f491_4f6c_dd1d)))
}
