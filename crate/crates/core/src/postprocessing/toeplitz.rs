//! Toeplitz hashing over GF(2).
//!
//! An `m x n` Toeplitz matrix is fixed by `n + m - 1` seed bits:
//! `T[i][j] = seed[m - 1 - i + j]`. Row `i` is therefore the contiguous seed
//! window starting at `m - 1 - i`, and output bit `i` is the inner product of
//! that window with the input. With a uniform seed the family is
//! 2-universal: for any `x != y`, `P[T x = T y] = 2^-m`.

use thiserror::Error;

use crate::bits::Bits;
use crate::types::NodePair;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PaError {
    #[error("output length {out_len} exceeds input length {input_len}")]
    OutputTooLong { out_len: usize, input_len: usize },
    #[error("seed has {got} bits, expected {expected}")]
    SeedLength { got: usize, expected: usize },
}

pub fn seed_len(input_len: usize, out_len: usize) -> usize {
    (input_len + out_len).saturating_sub(1)
}

/// `T(seed) x`; `out_len` may exceed the input length.
pub fn toeplitz_hash(input: &Bits, seed: &Bits, out_len: usize) -> Result<Bits, PaError> {
    let n = input.len();
    if out_len == 0 {
        return Ok(Bits::new());
    }
    let expected = seed_len(n, out_len);
    if seed.len() != expected {
        return Err(PaError::SeedLength {
            got: seed.len(),
            expected,
        });
    }
    Ok((0..out_len)
        .map(|i| seed.slice(out_len - 1 - i, n).dot(input))
        .collect())
}

/// Distilled key material shared by one node pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecretKeyBlock {
    pub bits: Bits,
    pub source_pair: NodePair,
    pub block_id: u64,
}

impl SecretKeyBlock {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Compresses reconciled key material to `out_len` bits.
pub fn privacy_amplify(
    bits: &Bits,
    hash_seed: &Bits,
    out_len: usize,
    source_pair: NodePair,
    block_id: u64,
) -> Result<SecretKeyBlock, PaError> {
    if out_len > bits.len() {
        return Err(PaError::OutputTooLong {
            out_len,
            input_len: bits.len(),
        });
    }
    Ok(SecretKeyBlock {
        bits: toeplitz_hash(bits, hash_seed, out_len)?,
        source_pair,
        block_id,
    })
}
