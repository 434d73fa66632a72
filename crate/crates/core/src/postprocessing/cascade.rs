//! Original four-pass Cascade.
//!
//! The sender only ever answers parity queries; every answer is appended to
//! the transcript and counts as one leaked bit. The receiver flips bits of
//! its own copy. Pass 1 uses the identity order, later passes a public
//! random permutation. Each correction is propagated back to the blocks of
//! every pass processed so far (backtracking), which can expose further
//! odd-parity blocks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::sift::SiftedKeyPair;
use super::transcript::{ParityRecord, Transcript};
use super::verify::{hash_tag, VERIFY_HASH_BITS};
use crate::bits::Bits;

pub const PASSES: usize = 4;
/// First-pass block size is `ceil(FIRST_BLOCK_FACTOR / qber)`.
pub const FIRST_BLOCK_FACTOR: f64 = 0.73;
pub const MAX_QBER: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReconcileError {
    #[error("estimated qber {0} outside (0, {MAX_QBER}]")]
    InvalidQber(f64),
    #[error("cannot reconcile an empty key")]
    Empty,
    #[error("verification hash mismatch after {passes} passes ({bits_leaked} parity bits leaked); block discarded")]
    ResidualErrors { passes: usize, bits_leaked: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconciliationResult {
    pub corrected_bits: Bits,
    /// Parity bits disclosed by the sender.
    pub bits_leaked: usize,
    /// Bits disclosed by the final verification hash.
    pub verification_bits: usize,
    pub passes_run: usize,
    pub corrections: usize,
    pub transcript: Transcript,
}

impl ReconciliationResult {
    pub fn total_leaked(&self) -> usize {
        self.bits_leaked + self.verification_bits
    }
}

pub fn first_block_size(qber: f64) -> usize {
    (FIRST_BLOCK_FACTOR / qber).ceil().max(1.0) as usize
}

/// The sender side: answers parity queries over its key and logs them.
struct ParityOracle<'a> {
    key: &'a Bits,
    transcript: Transcript,
}

impl ParityOracle<'_> {
    fn ask(&mut self, pass: usize, block: usize, start: usize, end: usize, indices: &[usize]) -> bool {
        let parity = self.key.parity_of(indices);
        self.transcript.push(ParityRecord {
            pass: pass as u8,
            block: block as u32,
            start: start as u32,
            end: end as u32,
            parity,
        });
        parity
    }
}

struct Pass {
    block_size: usize,
    /// Permuted position -> key index.
    order: Vec<usize>,
    /// Key index -> permuted position.
    position: Vec<usize>,
    /// Receiver's block parity currently disagrees with the sender's.
    odd: Vec<bool>,
}

impl Pass {
    fn block_of(&self, index: usize) -> usize {
        self.position[index] / self.block_size
    }

    fn block_range(&self, block: usize) -> std::ops::Range<usize> {
        let start = block * self.block_size;
        start..(start + self.block_size).min(self.order.len())
    }
}

/// Reconciles the receiver's copy towards the sender's.
///
/// `seed` drives the public permutations and the verification hash; both
/// parties are assumed to share it.
pub fn cascade_reconcile(pair: &SiftedKeyPair, seed: u64) -> Result<ReconciliationResult, ReconcileError> {
    let qber = pair.estimated_qber;
    if !(qber > 0.0 && qber <= MAX_QBER) {
        return Err(ReconcileError::InvalidQber(qber));
    }
    let n = pair.len();
    if n == 0 {
        return Err(ReconcileError::Empty);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut oracle = ParityOracle {
        key: &pair.sender_bits,
        transcript: Transcript::default(),
    };
    let mut bob = pair.receiver_bits.clone();
    let mut passes: Vec<Pass> = Vec::with_capacity(PASSES);
    let mut corrections = 0;
    let k1 = first_block_size(qber);

    for p in 0..PASSES {
        let block_size = k1.saturating_mul(1 << p).min(n);
        let mut order: Vec<usize> = (0..n).collect();
        if p > 0 {
            order.shuffle(&mut rng);
        }
        let mut position = vec![0; n];
        for (pos, &idx) in order.iter().enumerate() {
            position[idx] = pos;
        }
        let blocks = n.div_ceil(block_size);
        let mut pass = Pass {
            block_size,
            order,
            position,
            odd: vec![false; blocks],
        };
        let mut pending = BTreeSet::new();
        for b in 0..blocks {
            let range = pass.block_range(b);
            let indices = &pass.order[range.clone()];
            let theirs = oracle.ask(p, b, 0, range.len(), indices);
            if theirs != bob.parity_of(indices) {
                pass.odd[b] = true;
                pending.insert((p, b));
            }
        }
        passes.push(pass);

        // Smallest blocks (earliest passes) first.
        while let Some((q, b)) = pending.pop_first() {
            if !passes[q].odd[b] {
                continue;
            }
            let index = binary_search(&passes[q], q, b, &mut oracle, &bob);
            bob.flip(index);
            corrections += 1;
            for (r, pass) in passes.iter_mut().enumerate() {
                let blk = pass.block_of(index);
                pass.odd[blk] = !pass.odd[blk];
                if pass.odd[blk] {
                    pending.insert((r, blk));
                }
            }
        }
    }

    let bits_leaked = oracle.transcript.len();
    let hash_seed = Bits::random(super::toeplitz::seed_len(n, VERIFY_HASH_BITS), &mut rng);
    if hash_tag(&pair.sender_bits, &hash_seed) != hash_tag(&bob, &hash_seed) {
        return Err(ReconcileError::ResidualErrors {
            passes: PASSES,
            bits_leaked,
        });
    }

    Ok(ReconciliationResult {
        corrected_bits: bob,
        bits_leaked,
        verification_bits: VERIFY_HASH_BITS,
        passes_run: PASSES,
        corrections,
        transcript: oracle.transcript,
    })
}

/// Locates one differing bit in an odd block by halving; returns its key
/// index.
fn binary_search(pass: &Pass, p: usize, block: usize, oracle: &mut ParityOracle<'_>, bob: &Bits) -> usize {
    let range = pass.block_range(block);
    let members = &pass.order[range];
    let (mut lo, mut hi) = (0, members.len());
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let half = &members[lo..mid];
        if oracle.ask(p, block, lo, mid, half) != bob.parity_of(half) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    members[lo]
}
