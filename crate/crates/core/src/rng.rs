//! Seed splitting.
//!
//! Every random stream in the simulator is a ChaCha8 generator keyed by a
//! seed derived from `(master, stream tag, index)`, so any step, auction or
//! agent can be reproduced independently of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags. Distinct tags never share a derived seed space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    Volume = 1,
    ValueModel = 2,
    StepValues = 3,
    StepFeatures = 4,
    Auction = 5,
    Profiles = 6,
    Permutation = 7,
    Agent = 8,
    FeatureModel = 9,
    Episode = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(master ^ (stream as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    splitmix64(a ^ splitmix64(index))
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, stream, index))
}
