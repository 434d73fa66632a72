//! Post-reconciliation key confirmation.

use crate::bits::Bits;

use super::toeplitz::{seed_len, toeplitz_hash};

pub const VERIFY_HASH_BITS: usize = 64;

/// 64-bit Toeplitz tag of `key` under `seed` (`len + 63` bits).
pub fn hash_tag(key: &Bits, seed: &Bits) -> Bits {
    toeplitz_hash(key, seed, VERIFY_HASH_BITS).expect("seed sized for the verification hash")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyMode {
    /// Exchange hash tags only.
    HashOnly,
    /// Also compare bit-by-bit; only possible in a simulator.
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeyComparison {
    Equal,
    /// Differing positions; empty when only the hash exchange ran.
    Mismatch(Vec<usize>),
}

/// Compares two keys of equal length through a hash exchange, plus a full
/// comparison in [`VerifyMode::Full`].
pub fn verify_keys(a: &Bits, b: &Bits, seed: &Bits, mode: VerifyMode) -> KeyComparison {
    assert_eq!(a.len(), b.len(), "keys to verify differ in length");
    assert_eq!(seed.len(), seed_len(a.len(), VERIFY_HASH_BITS), "verification seed length");
    let tags_match = hash_tag(a, seed) == hash_tag(b, seed);
    match mode {
        VerifyMode::HashOnly if tags_match => KeyComparison::Equal,
        VerifyMode::HashOnly => KeyComparison::Mismatch(Vec::new()),
        VerifyMode::Full => {
            let diff = a.diff_positions(b);
            if diff.is_empty() {
                KeyComparison::Equal
            } else {
                KeyComparison::Mismatch(diff)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_and_one_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = Bits::random(500, &mut rng);
        let seed = Bits::random(seed_len(500, VERIFY_HASH_BITS), &mut rng);
        assert_eq!(verify_keys(&a, &a.clone(), &seed, VerifyMode::Full), KeyComparison::Equal);
        let mut b = a.clone();
        b.flip(321);
        assert_eq!(verify_keys(&a, &b, &seed, VerifyMode::Full), KeyComparison::Mismatch(vec![321]));
        assert_eq!(verify_keys(&a, &b, &seed, VerifyMode::HashOnly), KeyComparison::Mismatch(vec![]));
    }
}
