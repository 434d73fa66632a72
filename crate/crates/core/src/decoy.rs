//! Weak+vacuum decoy-state key-rate estimation.
//!
//! Everything here is a pure function of the observed per-intensity
//! statistics and the protocol parameters. The single-photon gain is
//! lower-bounded from the signal, decoy and vacuum gains; the single-photon
//! error rate is upper-bounded from the signal and decoy error-weighted
//! gains; the two bounds feed the GLLP secure fraction.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Confidence multiplier on the Poisson standard deviation of a gain.
pub const FLUCTUATION_SIGMAS: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecoyError {
    #[error("binary entropy argument {0} outside [0, 1]")]
    EntropyDomain(f64),
    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),
    #[error("invalid statistics: {0}")]
    InvalidStatistics(String),
}

/// Why a record yields no secure key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NoSecureKey {
    /// The decoy bracket for the single-photon gain is not positive.
    SinglePhotonGainNonPositive { bracket: f64 },
    /// The signal/decoy error difference is negative.
    ErrorNumeratorNegative { numerator: f64 },
    /// The single-photon error bound exceeds 1/2.
    SinglePhotonErrorTooHigh { e1_upper: f64 },
    /// Error-correction cost outweighs the single-photon contribution.
    NegativeRate { r_per_signal_pulse: f64 },
}

impl fmt::Display for NoSecureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SinglePhotonGainNonPositive { bracket } => {
                write!(f, "single-photon gain bound not positive (bracket {bracket:.3e})")
            }
            Self::ErrorNumeratorNegative { numerator } => {
                write!(f, "single-photon error numerator negative ({numerator:.3e})")
            }
            Self::SinglePhotonErrorTooHigh { e1_upper } => {
                write!(f, "single-photon error bound {e1_upper:.4} exceeds 0.5")
            }
            Self::NegativeRate { r_per_signal_pulse } => {
                write!(f, "secure fraction negative ({r_per_signal_pulse:.3e} per pulse)")
            }
        }
    }
}

/// Selection ratio signal:decoy:vacuum. Only the proportions matter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensityMix {
    pub signal: f64,
    pub decoy: f64,
    pub vacuum: f64,
}

impl IntensityMix {
    pub const fn new(signal: f64, decoy: f64, vacuum: f64) -> Self {
        Self {
            signal,
            decoy,
            vacuum,
        }
    }

    /// Selection probabilities in class order.
    pub fn probabilities(&self) -> [f64; 3] {
        let total = self.signal + self.decoy + self.vacuum;
        [self.signal / total, self.decoy / total, self.vacuum / total]
    }
}

impl Default for IntensityMix {
    fn default() -> Self {
        Self::new(6.0, 3.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Mean photon number of the signal state.
    pub mu: f64,
    /// Mean photon number of the decoy state.
    pub nu: f64,
    /// Fraction of signal detections kept after basis sifting.
    pub q_sift: f64,
    /// Error-correction inefficiency relative to the Shannon limit.
    pub f_ec: f64,
    pub mix: IntensityMix,
}

impl ProtocolParams {
    pub fn new(mu: f64, nu: f64, q_sift: f64, f_ec: f64, mix: IntensityMix) -> Result<Self, DecoyError> {
        let params = Self {
            mu,
            nu,
            q_sift,
            f_ec,
            mix,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), DecoyError> {
        let bad = |msg: String| Err(DecoyError::InvalidParams(msg));
        if !(self.nu > 0.0 && self.nu < self.mu) || !self.mu.is_finite() {
            return bad(format!("need 0 < nu < mu, got mu={} nu={}", self.mu, self.nu));
        }
        if !(self.q_sift > 0.0 && self.q_sift <= 1.0) {
            return bad(format!("q_sift {} outside (0, 1]", self.q_sift));
        }
        if !(self.f_ec >= 1.0) {
            return bad(format!("f_ec {} below 1", self.f_ec));
        }
        let m = self.mix;
        // A zero weight is allowed for simulation sweeps, but the signal class must exist.
        if !(m.signal > 0.0 && m.decoy >= 0.0 && m.vacuum >= 0.0) {
            return bad(format!("mix {}:{}:{} has non-positive components", m.signal, m.decoy, m.vacuum));
        }
        Ok(())
    }

    pub fn intensity(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.mu,
            IntensityClass::Decoy => self.nu,
            IntensityClass::Vacuum => 0.0,
        }
    }
}

impl Default for ProtocolParams {
    /// The field deployment's settings: mu = 0.6, nu = 0.2, 6:3:1, BB84
    /// sifting, f = 1.2.
    fn default() -> Self {
        Self {
            mu: 0.6,
            nu: 0.2,
            q_sift: 0.5,
            f_ec: 1.2,
            mix: IntensityMix::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntensityClass {
    Signal,
    Decoy,
    Vacuum,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 3] = [Self::Signal, Self::Decoy, Self::Vacuum];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Counts for one intensity class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub pulses: u64,
    pub gain: f64,
    pub qber: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedStatistics {
    pub signal: ClassStats,
    pub decoy: ClassStats,
    pub vacuum: ClassStats,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StatsWarning {
    GainOrdering { signal: f64, decoy: f64, vacuum: f64 },
}

impl fmt::Display for StatsWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GainOrdering {
                signal,
                decoy,
                vacuum,
            } => write!(
                f,
                "gains not ordered signal > decoy > vacuum ({signal:.3e}, {decoy:.3e}, {vacuum:.3e})"
            ),
        }
    }
}

impl ObservedStatistics {
    pub fn class(&self, class: IntensityClass) -> &ClassStats {
        match class {
            IntensityClass::Signal => &self.signal,
            IntensityClass::Decoy => &self.decoy,
            IntensityClass::Vacuum => &self.vacuum,
        }
    }

    pub fn class_mut(&mut self, class: IntensityClass) -> &mut ClassStats {
        match class {
            IntensityClass::Signal => &mut self.signal,
            IntensityClass::Decoy => &mut self.decoy,
            IntensityClass::Vacuum => &mut self.vacuum,
        }
    }

    /// Pools two records of the same link: counts add, gains are weighted by
    /// pulses and QBERs by detections.
    pub fn merge(&self, other: &Self) -> Self {
        let pool = |a: ClassStats, b: ClassStats| {
            let pulses = a.pulses + b.pulses;
            let clicks_a = a.gain * a.pulses as f64;
            let clicks_b = b.gain * b.pulses as f64;
            let clicks = clicks_a + clicks_b;
            ClassStats {
                pulses,
                gain: if pulses == 0 { 0.0 } else { clicks / pulses as f64 },
                qber: if clicks == 0.0 {
                    0.0
                } else {
                    (a.qber * clicks_a + b.qber * clicks_b) / clicks
                },
            }
        };
        Self {
            signal: pool(self.signal, other.signal),
            decoy: pool(self.decoy, other.decoy),
            vacuum: pool(self.vacuum, other.vacuum),
            duration_s: self.duration_s + other.duration_s,
        }
    }

    /// Hard invariants are errors; an implausible gain ordering is a warning.
    pub fn validate(&self) -> Result<Vec<StatsWarning>, DecoyError> {
        for class in IntensityClass::ALL {
            let c = self.class(class);
            if c.pulses == 0 {
                return Err(DecoyError::InvalidStatistics(format!("{class:?} pulse count is zero")));
            }
            if !(c.gain > 0.0 && c.gain <= 1.0) {
                return Err(DecoyError::InvalidStatistics(format!(
                    "{class:?} gain {} outside (0, 1]",
                    c.gain
                )));
            }
            if !(0.0..=1.0).contains(&c.qber) {
                return Err(DecoyError::InvalidStatistics(format!(
                    "{class:?} qber {} outside [0, 1]",
                    c.qber
                )));
            }
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(DecoyError::InvalidStatistics(format!(
                "duration {} s not positive",
                self.duration_s
            )));
        }
        let mut warnings = Vec::new();
        if !(self.signal.gain > self.decoy.gain && self.decoy.gain > self.vacuum.gain) {
            warnings.push(StatsWarning::GainOrdering {
                signal: self.signal.gain,
                decoy: self.decoy.gain,
                vacuum: self.vacuum.gain,
            });
        }
        Ok(warnings)
    }

    pub fn total_pulses(&self) -> u64 {
        self.signal.pulses + self.decoy.pulses + self.vacuum.pulses
    }

    /// Zero for an empty run.
    pub fn signal_pulse_rate_hz(&self) -> f64 {
        if self.duration_s > 0.0 {
            self.signal.pulses as f64 / self.duration_s
        } else {
            0.0
        }
    }
}

/// `H2(x) = -x log2 x - (1-x) log2 (1-x)` with `0 log 0 = 0`.
pub fn binary_entropy(x: f64) -> Result<f64, DecoyError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(DecoyError::EntropyDomain(x));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(x) + term(1.0 - x))
}

/// Lower bound on the single-photon gain from signal, decoy and vacuum
/// gains. Never exceeds the signal gain.
pub fn q1_lower_bound(stats: &ObservedStatistics, params: &ProtocolParams) -> Result<f64, NoSecureKey> {
    q1_from_gains(stats.signal.gain, stats.decoy.gain, stats.vacuum.gain, params)
}

fn q1_from_gains(q_mu: f64, q_nu: f64, q_vac: f64, params: &ProtocolParams) -> Result<f64, NoSecureKey> {
    let (mu, nu) = (params.mu, params.nu);
    let mu2 = mu * mu;
    let nu2 = nu * nu;
    let bracket = q_nu * nu.exp() - q_mu * mu.exp() * nu2 / mu2 - (mu2 - nu2) / mu2 * q_vac;
    if bracket <= 0.0 {
        return Err(NoSecureKey::SinglePhotonGainNonPositive { bracket });
    }
    let q1 = mu2 * (-mu).exp() / (mu * nu - nu2) * bracket;
    Ok(q1.min(q_mu))
}

/// Upper bound on the single-photon error rate using the decoy class
/// (not the vacuum class) as the reference.
pub fn e1_upper_bound(stats: &ObservedStatistics, params: &ProtocolParams, q1_lower: f64) -> Result<f64, NoSecureKey> {
    e1_from_gains(
        stats.signal.gain,
        stats.signal.qber,
        stats.decoy.gain,
        stats.decoy.qber,
        params,
        q1_lower,
    )
}

fn e1_from_gains(
    q_mu: f64,
    e_mu: f64,
    q_nu: f64,
    e_nu: f64,
    params: &ProtocolParams,
    q1_lower: f64,
) -> Result<f64, NoSecureKey> {
    assert!(q1_lower > 0.0, "e1 bound needs a positive single-photon gain");
    let (mu, nu) = (params.mu, params.nu);
    let numerator = e_mu * q_mu * mu.exp() - e_nu * q_nu * nu.exp();
    if numerator < 0.0 {
        return Err(NoSecureKey::ErrorNumeratorNegative { numerator });
    }
    let e1 = mu * (-mu).exp() / (mu - nu) * numerator / q1_lower;
    if e1 > 0.5 {
        return Err(NoSecureKey::SinglePhotonErrorTooHigh { e1_upper: e1 });
    }
    Ok(e1)
}

/// `Q (1 -/+ k / sqrt(N Q))` with `k = 10`, clamped to `[0, 1]`. Without
/// pulses or detections nothing is known and the interval is `[0, 1]`.
pub fn finite_statistic_bounds(gain: f64, n_pulses: f64) -> (f64, f64) {
    if !(gain > 0.0 && n_pulses > 0.0) {
        return (0.0, 1.0);
    }
    let half = FLUCTUATION_SIGMAS / (n_pulses * gain).sqrt();
    ((gain * (1.0 - half)).max(0.0), (gain * (1.0 + half)).min(1.0))
}

/// How statistical fluctuation of the measured gains is handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Fluctuation {
    /// Use the measured gains directly.
    #[default]
    Ignore,
    /// Decoy gain at its lower bound, vacuum gain at its upper bound.
    Pessimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainInterval {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub q1_lower: f64,
    pub e1_upper: f64,
    pub r_per_signal_pulse: f64,
    pub signal_pulse_rate_hz: f64,
    pub final_rate_bps: f64,
    pub sifted_rate_bps: f64,
    /// Finite-statistics intervals for signal, decoy and vacuum gains.
    pub gain_bounds: [GainInterval; 3],
    pub fluctuation: Fluctuation,
    /// Set when the record yields no secure key; the rate is then zero.
    pub no_key: Option<NoSecureKey>,
}

impl RateEstimate {
    pub fn has_key(&self) -> bool {
        self.no_key.is_none()
    }
}

pub fn key_rate(stats: &ObservedStatistics, params: &ProtocolParams) -> RateEstimate {
    key_rate_with(stats, params, Fluctuation::Ignore)
}

/// Secure key rate per signal pulse and per second.
///
/// The per-pulse fraction is `q {-Q_mu f H2(E_mu) + Q1 [1 - H2(e1)]}`; the
/// rates scale it by the measured signal pulse rate `N_mu / duration`.
pub fn key_rate_with(stats: &ObservedStatistics, params: &ProtocolParams, fluctuation: Fluctuation) -> RateEstimate {
    let pulse_rate = stats.signal_pulse_rate_hz();
    let sig = stats.signal;
    let gain_bounds = IntensityClass::ALL.map(|class| {
        let c = stats.class(class);
        let (lower, upper) = finite_statistic_bounds(c.gain, c.pulses as f64);
        GainInterval { lower, upper }
    });
    let (q_nu, q_vac) = match fluctuation {
        Fluctuation::Ignore => (stats.decoy.gain, stats.vacuum.gain),
        Fluctuation::Pessimistic => (gain_bounds[1].lower, gain_bounds[2].upper),
    };

    let sifted_rate_bps = params.q_sift * sig.gain * pulse_rate;
    let mut estimate = RateEstimate {
        q1_lower: 0.0,
        e1_upper: 0.0,
        r_per_signal_pulse: 0.0,
        signal_pulse_rate_hz: pulse_rate,
        final_rate_bps: 0.0,
        sifted_rate_bps,
        gain_bounds,
        fluctuation,
        no_key: None,
    };

    let q1 = match q1_from_gains(sig.gain, q_nu, q_vac, params) {
        Ok(q1) => q1,
        Err(reason) => {
            estimate.no_key = Some(reason);
            return estimate;
        }
    };
    estimate.q1_lower = q1;
    let e1 = match e1_from_gains(sig.gain, sig.qber, q_nu, stats.decoy.qber, params, q1) {
        Ok(e1) => e1,
        Err(reason) => {
            estimate.no_key = Some(reason);
            return estimate;
        }
    };
    estimate.e1_upper = e1;

    // Both arguments are validated fractions at this point.
    let h_signal = binary_entropy(sig.qber.min(1.0)).unwrap_or(1.0);
    let h_single = binary_entropy(e1).unwrap_or(1.0);
    let r = params.q_sift * (-sig.gain * params.f_ec * h_signal + q1 * (1.0 - h_single));
    if r <= 0.0 {
        estimate.no_key = Some(NoSecureKey::NegativeRate { r_per_signal_pulse: r });
        return estimate;
    }
    estimate.r_per_signal_pulse = r;
    estimate.final_rate_bps = r * pulse_rate;
    estimate
}
