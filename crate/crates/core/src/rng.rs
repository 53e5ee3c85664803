//! Keyed random streams.
//!
//! Every consumer of randomness gets its own generator, derived from the run
//! seed, an epoch (or other counter) and a stream tag. Streams never share
//! state, so changing how many draws one consumer makes cannot shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent consumers of randomness within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Subset,
    Shuffle,
    Pacing,
    Init,
    Corpus,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Subset => 0x5355_4253_4554_0001,
            Stream::Shuffle => 0x5348_5546_464c_0002,
            Stream::Pacing => 0x5041_4349_4e47_0003,
            Stream::Init => 0x494e_4954_0000_0004,
            Stream::Corpus => 0x434f_5250_5553_0005,
        }
    }
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `(seed, counter, stream)` into one 64-bit key.
pub fn stream_key(seed: u64, counter: u64, stream: Stream) -> u64 {
    mix64(mix64(mix64(seed) ^ counter) ^ stream.tag())
}

/// ChaCha8 generator keyed by `(seed, counter, stream)`.
pub fn stream_rng(seed: u64, counter: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, counter, stream))
}

/// FNV-1a over the UTF-8 bytes of `s`. Fixed across platforms and releases.
pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
