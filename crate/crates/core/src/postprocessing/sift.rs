use thiserror::Error;

use crate::bits::Bits;
use crate::decoy::IntensityClass;
use crate::link_sim::{ReceiverEvent, SenderEvent};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SiftError {
    #[error("event streams misaligned at position {position} (sender pulse {sender:?}, receiver pulse {receiver:?})")]
    Misaligned {
        position: usize,
        sender: Option<u64>,
        receiver: Option<u64>,
    },
    #[error("sifted keys have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("estimated qber {0} outside [0, 0.5]")]
    InvalidQber(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiftedKeyPair {
    pub sender_bits: Bits,
    pub receiver_bits: Bits,
    pub estimated_qber: f64,
}

impl SiftedKeyPair {
    pub fn new(sender_bits: Bits, receiver_bits: Bits, estimated_qber: f64) -> Result<Self, SiftError> {
        if sender_bits.len() != receiver_bits.len() {
            return Err(SiftError::LengthMismatch(sender_bits.len(), receiver_bits.len()));
        }
        if !(0.0..=0.5).contains(&estimated_qber) {
            return Err(SiftError::InvalidQber(estimated_qber));
        }
        Ok(Self {
            sender_bits,
            receiver_bits,
            estimated_qber,
        })
    }

    pub fn len(&self) -> usize {
        self.sender_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sender_bits.is_empty()
    }

    /// Fraction of positions that actually differ.
    pub fn true_qber(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.sender_bits.hamming_distance(&self.receiver_bits) as f64 / self.len() as f64
    }
}

/// Keeps detected pulses whose preparation and measurement bases agree,
/// optionally restricted to one intensity class.
///
/// Both streams list the receiver's detections in pulse order; entry `i`
/// of each must refer to the same pulse.
pub fn sift(
    sender: &[SenderEvent],
    receiver: &[ReceiverEvent],
    class: Option<IntensityClass>,
    estimated_qber: f64,
) -> Result<SiftedKeyPair, SiftError> {
    if sender.len() != receiver.len() {
        let position = sender.len().min(receiver.len());
        return Err(SiftError::Misaligned {
            position,
            sender: sender.get(position).map(|e| e.index),
            receiver: receiver.get(position).map(|e| e.index),
        });
    }
    let mut tx = Bits::with_capacity(sender.len() / 2);
    let mut rx = Bits::with_capacity(sender.len() / 2);
    for (position, (s, r)) in sender.iter().zip(receiver).enumerate() {
        if s.index != r.index {
            return Err(SiftError::Misaligned {
                position,
                sender: Some(s.index),
                receiver: Some(r.index),
            });
        }
        if s.basis != r.basis || class.is_some_and(|c| c != s.class) {
            continue;
        }
        tx.push(s.bit);
        rx.push(r.bit);
    }
    SiftedKeyPair::new(tx, rx, estimated_qber)
}
