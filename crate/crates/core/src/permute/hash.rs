//! Idealized hash oracle: `m` random words, unit-cost evaluation, values
//! that behave as fully independent across inputs.

use alloc::vec::Vec;
use rand::RngCore;

use crate::collective::replicate_by_doubling;
use crate::error::Result;
use crate::machine::{AccessRequest, Machine, Word};

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashOracle {
    words: Vec<Word>,
    range: usize,
}

impl HashOracle {
    /// Draws `m` words; values land in `[0, m)`.
    pub fn draw<R: RngCore + ?Sized>(rng: &mut R, m: usize) -> Self {
        HashOracle { words: (0..m.max(1)).map(|_| rng.next_u64()).collect(), range: m.max(1) }
    }

    pub fn from_words(words: Vec<Word>, range: usize) -> Self {
        assert!(!words.is_empty() && range > 0);
        HashOracle { words, range }
    }

    /// The representation that gets broadcast.
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    pub fn range(&self) -> usize {
        self.range
    }

    #[inline]
    pub fn eval(&self, i: u64) -> usize {
        let w = self.words[(i % self.words.len() as u64) as usize];
        (mix(w ^ mix(i)) % self.range as u64) as usize
    }
}

/// Color of label `(i, j)`: `k = (j - h(i)) mod m`.
#[inline]
pub fn color_of(i: u64, j: u64, h: &HashOracle) -> usize {
    let m = h.range() as u64;
    ((j % m + m - h.eval(i) as u64) % m) as usize
}

/// Row 0 draws the oracle and writes word `j` into bank `j` at `slot` in
/// step `j`; the words are then replicated by doubling so row `r` holds word
/// `r mod m`. Costs `m + 2 ceil(log2(w / m))` steps.
pub fn draw_and_broadcast_hash<R: RngCore + ?Sized>(machine: &mut Machine, rng: &mut R, slot: usize) -> Result<HashOracle> {
    machine.regions().require(slot + 1)?;
    let m = machine.m();
    let oracle = HashOracle::draw(rng, m);
    let holders = m.min(machine.w());
    let mut sink = Vec::new();
    for (j, &word) in oracle.words().iter().take(holders).enumerate() {
        machine.step_into(&[AccessRequest::write(0, j, slot, word)], &mut sink)?;
    }
    replicate_by_doubling(machine, slot, holders)?;
    Ok(oracle)
}
