//! Classical distillation: sifting, Cascade reconciliation, key
//! confirmation and Toeplitz privacy amplification.

mod cascade;
mod sift;
mod toeplitz;
mod transcript;
mod verify;

pub use cascade::{
    cascade_reconcile, first_block_size, ReconcileError, ReconciliationResult, FIRST_BLOCK_FACTOR, MAX_QBER, PASSES,
};
pub use sift::{sift, SiftError, SiftedKeyPair};
pub use toeplitz::{privacy_amplify, seed_len, toeplitz_hash, PaError, SecretKeyBlock};
pub use transcript::{ParityRecord, Transcript, TranscriptError};
pub use verify::{hash_tag, verify_keys, KeyComparison, VerifyMode, VERIFY_HASH_BITS};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::decoy::{binary_entropy, ObservedStatistics, ProtocolParams, RateEstimate};
use crate::types::NodePair;

/// Secure bits per sifted signal bit, single-photon part only.
fn single_photon_fraction(estimate: &RateEstimate, stats: &ObservedStatistics) -> f64 {
    let h = binary_entropy(estimate.e1_upper).unwrap_or(1.0);
    estimate.q1_lower / stats.signal.gain * (1.0 - h)
}

/// Final key length for `n_sifted_signal` sifted signal bits, charging
/// error correction at `f_ec H2(E_mu)` per bit. Zero when no key.
pub fn final_length(
    n_sifted_signal: u64,
    estimate: &RateEstimate,
    stats: &ObservedStatistics,
    params: &ProtocolParams,
) -> u64 {
    if !estimate.has_key() {
        return 0;
    }
    let ec = params.f_ec * binary_entropy(stats.signal.qber).unwrap_or(1.0);
    let fraction = single_photon_fraction(estimate, stats) - ec;
    let m = (n_sifted_signal as f64 * fraction).floor();
    if m > 0.0 {
        m as u64
    } else {
        0
    }
}

/// Final key length charging the leakage actually disclosed during
/// reconciliation and confirmation.
pub fn final_length_measured(
    n_sifted_signal: u64,
    estimate: &RateEstimate,
    stats: &ObservedStatistics,
    leaked_bits: u64,
) -> u64 {
    if !estimate.has_key() {
        return 0;
    }
    let budget = (n_sifted_signal as f64 * single_photon_fraction(estimate, stats)).floor() as u64;
    budget.saturating_sub(leaked_bits)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistillError {
    #[error(transparent)]
    Reconcile(#[from] ReconcileError),
    #[error("privacy amplification outputs disagree")]
    KeysDiffer,
    #[error(transparent)]
    Amplify(#[from] PaError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillSummary {
    pub sifted_bits: u64,
    pub corrections: u64,
    pub cascade_leaked_bits: u64,
    pub verification_bits: u64,
    /// Length with the constant error-correction efficiency.
    pub final_bits_formula: u64,
    /// Length with the measured leakage; this is what gets produced.
    pub final_bits_measured: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distilled {
    pub sender_block: SecretKeyBlock,
    pub receiver_block: SecretKeyBlock,
    pub summary: DistillSummary,
}

/// Reconciles, confirms and amplifies one sifted key. Both parties hash
/// their own copy; the blocks are returned separately so callers can check
/// they agree.
pub fn distill(
    pair: &SiftedKeyPair,
    estimate: &RateEstimate,
    stats: &ObservedStatistics,
    params: &ProtocolParams,
    source_pair: NodePair,
    block_id: u64,
    seed: u64,
) -> Result<Distilled, DistillError> {
    let n = pair.len() as u64;
    let reconciled = cascade_reconcile(pair, seed)?;
    let leaked = reconciled.total_leaked() as u64;
    let formula = final_length(n, estimate, stats, params);
    let measured = final_length_measured(n, estimate, stats, leaked);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7041_5f73_6565_6421);
    let hash_seed = Bits::random(seed_len(pair.len(), measured as usize), &mut rng);
    let sender_block = privacy_amplify(&pair.sender_bits, &hash_seed, measured as usize, source_pair.clone(), block_id)?;
    let receiver_block = privacy_amplify(&reconciled.corrected_bits, &hash_seed, measured as usize, source_pair, block_id)?;
    if sender_block != receiver_block {
        return Err(DistillError::KeysDiffer);
    }
    Ok(Distilled {
        sender_block,
        receiver_block,
        summary: DistillSummary {
            sifted_bits: n,
            corrections: reconciled.corrections as u64,
            cascade_leaked_bits: reconciled.bits_leaked as u64,
            verification_bits: reconciled.verification_bits as u64,
            final_bits_formula: formula,
            final_bits_measured: measured,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoy::key_rate;
    use crate::fixtures::table2_records;

    #[test]
    fn final_length_matches_rate_identity() {
        let params = ProtocolParams::default();
        for r in table2_records().into_iter().filter(|r| ["A-R-B", "B-R-D", "D-G"].contains(&r.route.as_str())) {
            let est = key_rate(&r.stats, &params);
            let n = 1_000_000_000u64;
            let m = final_length(n, &est, &r.stats, &params) as f64 / n as f64;
            let identity = est.r_per_signal_pulse / (params.q_sift * r.stats.signal.gain);
            assert!((m - identity).abs() < 1e-8, "{}: {m} vs {identity}", r.route);
        }
    }

    #[test]
    fn final_length_brd_million() {
        let params = ProtocolParams::default();
        let r = table2_records().into_iter().find(|r| r.route == "B-R-D").unwrap();
        let est = key_rate(&r.stats, &params);
        let m = final_length(1_000_000, &est, &r.stats, &params);
        assert!((m as f64 - 305_900.0).abs() < 500.0, "m = {m}");
    }

    #[test]
    fn final_length_zero_without_key() {
        let params = ProtocolParams::default();
        let mut stats = table2_records()[0].stats;
        stats.signal.qber = 0.25;
        let est = key_rate(&stats, &params);
        assert_eq!(final_length(1_000_000, &est, &stats, &params), 0);
    }

    #[test]
    fn final_length_perfect_single_photon_channel() {
        let params = ProtocolParams::default();
        let mut stats = table2_records()[0].stats;
        stats.signal.qber = 0.0;
        let mut est = key_rate(&stats, &params);
        est.no_key = None;
        est.q1_lower = stats.signal.gain;
        est.e1_upper = 0.0;
        assert_eq!(final_length(12_345, &est, &stats, &params), 12_345);
    }
}
