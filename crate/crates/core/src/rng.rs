//! Keyed random streams.
//!
//! Every stream is a ChaCha20 generator whose 256-bit seed is the
//! concatenation of four little-endian words `(run_seed, iteration, node,
//! purpose)`. Two nodes that agree on the key produce bit-identical draws
//! without exchanging any state.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Purpose tags separating independent streams that share a run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Sketch = 0x736b_6574_6368,
    Compress = 0x636f_6d70_7265_7373,
    Partition = 0x7061_7274,
    Synthetic = 0x7379_6e74,
}

/// Node word used for streams that every node must reproduce identically.
pub const SHARED_NODE: u64 = u64::MAX;

pub fn keyed(run_seed: u64, iteration: u64, node: u64, stream: Stream) -> ChaCha20Rng {
    let mut seed = [0u8; 32];
    let words = [run_seed, iteration, node, stream as u64];
    for (chunk, word) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&word.to_le_bytes());
    }
    ChaCha20Rng::from_seed(seed)
}
