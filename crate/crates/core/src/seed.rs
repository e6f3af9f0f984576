//! Seed derivation for independent random substreams.
//!
//! Every task gets `root ^ fnv1a64(path)` where `path` names the task, for example
//! `"mosco/z/N=3"`. The streams then do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn derive(root: u64, path: &str) -> u64 {
    root ^ fnv1a64(path.as_bytes())
}

pub fn stream(root: u64, path: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, path))
}
