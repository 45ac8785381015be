//! Seed derivation and prefix-stable sampling.
//!
//! Every random draw goes through [`derive_rng`], keyed by the global seed, a
//! stage name and a per-unit key (usually the qid). Output therefore does not
//! depend on processing order or thread count.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, stage: &str, key: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((stage.len() as u64).to_le_bytes());
    h.update(stage.as_bytes());
    h.update(key.as_bytes());
    let digest = h.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

pub fn derive_rng(seed: u64, stage: &str, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, stage, key))
}

/// Lazily generated random permutation of `0..len` (forward Fisher-Yates
/// with a sparse swap table). The first `m` items depend only on the first
/// `m` draws, so taking more items always extends a shorter prefix.
pub struct Permutation<R> {
    rng: R,
    len: usize,
    pos: usize,
    swapped: HashMap<usize, usize>,
}

impl<R: Rng> Permutation<R> {
    pub fn new(len: usize, rng: R) -> Self {
        Permutation {
            rng,
            len,
            pos: 0,
            swapped: HashMap::new(),
        }
    }
}

impl<R: Rng> Iterator for Permutation<R> {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.pos >= self.len {
            return None;
        }
        let i = self.pos;
        let j = self.rng.random_range(i..self.len);
        let at_j = self.swapped.get(&j).copied().unwrap_or(j);
        let at_i = self.swapped.get(&i).copied().unwrap_or(i);
        self.swapped.insert(j, at_i);
        self.swapped.remove(&i);
        self.pos += 1;
        Some(at_j)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.len - self.pos;
        (rest, Some(rest))
    }
}
