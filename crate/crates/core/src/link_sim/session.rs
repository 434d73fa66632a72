//! Pulse-by-pulse Monte Carlo of one QKD session.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LinkModel;
use crate::decoy::{ClassStats, IntensityClass, ObservedStatistics, ProtocolParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    fn from_bit(b: bool) -> Self {
        if b {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

/// What the sender remembers about a pulse that was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SenderEvent {
    pub index: u64,
    pub class: IntensityClass,
    pub basis: Basis,
    pub bit: bool,
}

/// A detection announced by the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReceiverEvent {
    pub index: u64,
    pub basis: Basis,
    pub bit: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub stats: ObservedStatistics,
    pub sender: Vec<SenderEvent>,
    pub receiver: Vec<ReceiverEvent>,
}

#[derive(Default)]
struct Tally {
    pulses: [u64; 3],
    clicks: [u64; 3],
    errors: [u64; 3],
}

impl Tally {
    fn into_stats(self, n_pulses: u64, pulse_rate_hz: f64) -> ObservedStatistics {
        let class = |i: usize| ClassStats {
            pulses: self.pulses[i],
            gain: ratio(self.clicks[i], self.pulses[i]),
            qber: ratio(self.errors[i], self.clicks[i]),
        };
        ObservedStatistics {
            signal: class(0),
            decoy: class(1),
            vacuum: class(2),
            duration_s: n_pulses as f64 / pulse_rate_hz,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Runs the session, calling `on_click(index, class, error, rng)` for every
/// detection.
fn run<F>(link: &LinkModel, params: &ProtocolParams, n_pulses: u64, seed: u64, mut on_click: F) -> ObservedStatistics
where
    F: FnMut(u64, IntensityClass, bool, &mut ChaCha8Rng),
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = params.mix.probabilities();
    let cut_signal = probs[0];
    let cut_decoy = probs[0] + probs[1];
    let expected = IntensityClass::ALL.map(|c| link.expected_class(params, c));

    let mut tally = Tally::default();
    for index in 0..n_pulses {
        let u: f64 = rng.gen();
        let class = if u < cut_signal {
            IntensityClass::Signal
        } else if u < cut_decoy {
            IntensityClass::Decoy
        } else {
            IntensityClass::Vacuum
        };
        let i = class.index();
        tally.pulses[i] += 1;
        let (gain, qber) = expected[i];
        if rng.gen::<f64>() >= gain {
            continue;
        }
        tally.clicks[i] += 1;
        let error = rng.gen::<f64>() < qber;
        if error {
            tally.errors[i] += 1;
        }
        on_click(index, class, error, &mut rng);
    }
    tally.into_stats(n_pulses, link.pulse_rate_hz)
}

/// Aggregate statistics of an `n_pulses` session. Deterministic in `seed`.
pub fn simulate_session(link: &LinkModel, params: &ProtocolParams, n_pulses: u64, seed: u64) -> ObservedStatistics {
    run(link, params, n_pulses, seed, |_, _, _, _| {})
}

/// Like [`simulate_session`] but also records per-detection basis and bit
/// values for both parties. Bases are uniform; on a basis match the
/// receiver's bit differs from the sender's exactly when the error flag is
/// set, otherwise it is uniformly random.
pub fn simulate_detections(link: &LinkModel, params: &ProtocolParams, n_pulses: u64, seed: u64) -> SessionRecord {
    let mut sender = Vec::new();
    let mut receiver = Vec::new();
    let stats = run(link, params, n_pulses, seed, |index, class, error, rng| {
        let r: u64 = rng.gen();
        let bit = r & 1 == 1;
        let tx_basis = Basis::from_bit(r & 2 != 0);
        let rx_basis = Basis::from_bit(r & 4 != 0);
        let rx_bit = if tx_basis == rx_basis { bit ^ error } else { r & 8 != 0 };
        sender.push(SenderEvent {
            index,
            class,
            basis: tx_basis,
            bit,
        });
        receiver.push(ReceiverEvent {
            index,
            basis: rx_basis,
            bit: rx_bit,
        });
    });
    SessionRecord {
        stats,
        sender,
        receiver,
    }
}
