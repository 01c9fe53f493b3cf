//! Keyed random streams.
//!
//! Every random draw in the engine comes from a [`ChaCha8Rng`] whose seed is
//! derived from a global seed plus a list of integer keys (sample index,
//! schedule step, pixel index, ...). Results therefore do not depend on the
//! order in which workers process their items.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with a sequence of keys into a 256-bit ChaCha seed.
pub fn derive_seed(seed: u64, keys: &[u64]) -> [u8; 32] {
    let mut h = splitmix(seed ^ 0x6473_645f_7365_6564);
    for &k in keys {
        h = splitmix(h ^ splitmix(k.wrapping_add(0x1234_5678_9abc_def1)));
    }
    let mut out = [0u8; 32];
    let mut s = h;
    for chunk in out.chunks_exact_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    out
}

/// A fresh stream keyed by `(seed, keys...)`.
pub fn stream(seed: u64, keys: &[u64]) -> Stream {
    ChaCha8Rng::from_seed(derive_seed(seed, keys))
}

/// A derived child seed, for handing a sub-task its own root seed.
pub fn derive_u64(seed: u64, keys: &[u64]) -> u64 {
    let b = derive_seed(seed, keys);
    u64::from_le_bytes(b[..8].try_into().unwrap())
}
