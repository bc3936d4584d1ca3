//! Seed derivation for reproducible substreams.
//!
//! Every random stream in the crate comes from a `ChaCha8Rng` seeded with a
//! value derived from a master seed and a path of integer keys through
//! [`mix`]. The mixing is the SplitMix64 finalizer applied to
//! `state ^ key` after adding the golden-ratio increment, folded left over the
//! keys. Results therefore depend only on the keys, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

// Stream labels. Kept distinct so different consumers never share a stream.
pub(crate) const LAYOUT: u64 = 0x4C41_594F;
pub(crate) const CONTAMINATION: u64 = 0x434F_4E54;
pub(crate) const UNIT: u64 = 0x554E_4954;
pub(crate) const COVARIATE: u64 = 0x434F_5641;
pub(crate) const TEMPORAL: u64 = 0x5445_4D50;
pub(crate) const SPATIAL: u64 = 0x5350_4154;
pub(crate) const REPLICATION: u64 = 0x5245_504C;
pub(crate) const TEST: u64 = 0x5445_5354;

fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `keys` into `seed`.
pub fn mix(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix(seed.wrapping_add(GOLDEN)), |state, &k| {
            splitmix(state.wrapping_add(GOLDEN) ^ k)
        })
}

pub fn substream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, keys))
}
