//! Seed discipline. Every random stream is a ChaCha8 generator keyed by
//! (root seed, index, purpose), so streams used for row selection, ground
//! truth, and the environment never share state, and Monte Carlo trial `i`
//! sees the same randomness however trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Rows = 1,
    Truth = 2,
    Environment = 3,
    Stream = 4,
    Judge = 5,
    Generate = 6,
    Test = 7,
}

pub fn rng(root: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&root.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
