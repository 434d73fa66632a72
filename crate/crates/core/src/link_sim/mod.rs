//! Decoy-state BB84 link simulation over a lossy fiber.
//!
//! Per intensity class `x` with mean photon number `m_x` the link yields
//!
//! ```text
//! Q_x     = Y0 + 1 - exp(-eta m_x)
//! E_x Q_x = e0 Y0 + e_x (1 - exp(-eta m_x))
//! ```
//!
//! where `eta` is channel transmittance times detector efficiency, `Y0` the
//! background click probability (dark counts plus, for the single-fiber
//! scheme, Raman/crosstalk noise), `e0` the error rate of background clicks
//! and `e_x` the optical misalignment error of the class.

mod jones;
mod session;

pub use jones::{
    backward_traversal, birefringent_fiber, faraday_mirror_jones, random_unitary, return_overlap, roundtrip_jones,
    JonesMatrix, JonesVector,
};
pub use session::{simulate_detections, simulate_session, Basis, ReceiverEvent, SenderEvent, SessionRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoy::{ClassStats, IntensityClass, ObservedStatistics, ProtocolParams};

/// Vacuum-state intensity relative to the signal with a 25 dB modulator
/// extinction ratio.
pub const VACUUM_LEAKAGE_RATIO: f64 = 0.003_162_277_660_168_379_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("channel matrix is not unitary")]
    NonUnitary,
    #[error("no calibration solution: {0}")]
    NoSolution(String),
    #[error("invalid link model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiberScheme {
    /// Quantum, sync and two classical fibers.
    #[default]
    FourFiber,
    /// Everything wavelength-multiplexed onto one fiber.
    SingleFiber,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub length_km: f64,
    /// Total insertion loss, connectors included.
    pub attenuation_db: f64,
    pub scheme: FiberScheme,
    /// Extra background click probability per gate; single-fiber only.
    pub crosstalk_noise_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_count_prob: f64,
    /// Error probability of a click not caused by a signal photon.
    pub vacuum_error_rate: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 0.10,
            dark_count_prob: 1e-6,
            vacuum_error_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerModel {
    pub visibility: f64,
}

impl InterferometerModel {
    pub fn misalignment_error(&self) -> f64 {
        (1.0 - self.visibility) / 2.0
    }

    pub fn from_misalignment(error: f64) -> Self {
        Self {
            visibility: 1.0 - 2.0 * error,
        }
    }
}

impl Default for InterferometerModel {
    fn default() -> Self {
        Self { visibility: 0.9867 }
    }
}

/// Deviations of the emitted decoy/vacuum states from their nominal settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    /// Emitted decoy intensity divided by the nominal `nu`.
    pub decoy_intensity_factor: f64,
    /// Misalignment error of decoy pulses when it differs from the signal's.
    pub decoy_misalignment: Option<f64>,
    /// Vacuum pulses carry `mu * VACUUM_LEAKAGE_RATIO` photons.
    pub vacuum_leakage: bool,
}

impl Default for SourceModel {
    fn default() -> Self {
        Self {
            decoy_intensity_factor: 1.0,
            decoy_misalignment: None,
            vacuum_leakage: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub channel: ChannelModel,
    pub detector: DetectorModel,
    pub interferometer: InterferometerModel,
    pub source: SourceModel,
    /// Pulses emitted per second, all classes together.
    pub pulse_rate_hz: f64,
}

impl LinkModel {
    pub fn new(channel: ChannelModel) -> Self {
        Self {
            channel,
            detector: DetectorModel::default(),
            interferometer: InterferometerModel::default(),
            source: SourceModel::default(),
            pulse_rate_hz: 1.6e6,
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        let bad = |m: String| Err(LinkError::InvalidModel(m));
        let ch = &self.channel;
        if !(ch.attenuation_db >= 0.0) {
            return bad(format!("attenuation {} dB is negative", ch.attenuation_db));
        }
        if ch.scheme == FiberScheme::FourFiber && ch.crosstalk_noise_prob != 0.0 {
            return bad("crosstalk noise on a four-fiber link".into());
        }
        let d = &self.detector;
        for (name, p) in [
            ("efficiency", d.efficiency),
            ("dark count probability", d.dark_count_prob),
            ("vacuum error rate", d.vacuum_error_rate),
            ("crosstalk probability", ch.crosstalk_noise_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0, 1]"));
            }
        }
        let v = self.interferometer.visibility;
        if !(v > 0.0 && v <= 1.0) {
            return bad(format!("visibility {v} outside (0, 1]"));
        }
        if !(self.pulse_rate_hz > 0.0) {
            return bad(format!("pulse rate {} Hz not positive", self.pulse_rate_hz));
        }
        Ok(())
    }

    /// Overall detection efficiency `eta`.
    pub fn eta(&self) -> f64 {
        transmittance(self.channel.attenuation_db) * self.detector.efficiency
    }

    /// Background click probability `Y0`.
    pub fn background_yield(&self) -> f64 {
        self.detector.dark_count_prob + self.channel.crosstalk_noise_prob
    }

    /// Mean photon number actually emitted for a class.
    pub fn emitted_intensity(&self, params: &ProtocolParams, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => params.mu,
            IntensityClass::Decoy => params.nu * self.source.decoy_intensity_factor,
            IntensityClass::Vacuum if self.source.vacuum_leakage => params.mu * VACUUM_LEAKAGE_RATIO,
            IntensityClass::Vacuum => 0.0,
        }
    }

    fn misalignment(&self, class: IntensityClass) -> f64 {
        match (class, self.source.decoy_misalignment) {
            (IntensityClass::Decoy, Some(e)) => e,
            _ => self.interferometer.misalignment_error(),
        }
    }

    /// Analytic `(Q_x, E_x)` for one class.
    pub fn expected_class(&self, params: &ProtocolParams, class: IntensityClass) -> (f64, f64) {
        let y0 = self.background_yield();
        let photon_click = 1.0 - (-self.eta() * self.emitted_intensity(params, class)).exp();
        let gain = y0 + photon_click;
        if gain == 0.0 {
            return (0.0, 0.0);
        }
        let err = self.detector.vacuum_error_rate * y0 + self.misalignment(class) * photon_click;
        (gain, (err / gain).clamp(0.0, 1.0))
    }
}

/// `10^(-dB/10)`.
pub fn transmittance(attenuation_db: f64) -> f64 {
    assert!(attenuation_db >= 0.0, "negative attenuation {attenuation_db} dB");
    10f64.powf(-attenuation_db / 10.0)
}

/// Expected statistics of an `n_pulses` session: class counts are the mix
/// proportions of `n_pulses` (rounded), gains and QBERs are analytic.
pub fn expected_statistics(link: &LinkModel, params: &ProtocolParams, n_pulses: u64) -> ObservedStatistics {
    let probs = params.mix.probabilities();
    let class = |c: IntensityClass| {
        let (gain, qber) = link.expected_class(params, c);
        ClassStats {
            pulses: (n_pulses as f64 * probs[c.index()]).round() as u64,
            gain,
            qber,
        }
    };
    ObservedStatistics {
        signal: class(IntensityClass::Signal),
        decoy: class(IntensityClass::Decoy),
        vacuum: class(IntensityClass::Vacuum),
        duration_s: n_pulses as f64 / link.pulse_rate_hz,
    }
}

/// Which observed quantities the inverse fit honours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    /// Fit `Y0`, `eta` and misalignment from `Q_vac`, `Q_mu`, `E_mu` only.
    SignalOnly,
    /// Additionally fit the emitted decoy intensity and decoy misalignment
    /// from `Q_nu`, `E_nu`, so all five inputs of the rate estimate match.
    #[default]
    SignalAndDecoy,
}

/// Inverse-fits a link model that reproduces a measured record.
///
/// The detector keeps its nominal efficiency and dark-count probability;
/// the fitted loss goes into the channel attenuation and any background
/// above the dark-count floor into crosstalk (single-fiber) or the
/// effective dark-count probability (four-fiber).
pub fn calibrate_link(
    target: &ObservedStatistics,
    params: &ProtocolParams,
    scheme: FiberScheme,
    mode: CalibrationMode,
) -> Result<LinkModel, LinkError> {
    let y0 = target.vacuum.gain;
    let (q_mu, e_mu) = (target.signal.gain, target.signal.qber);
    if !(q_mu > y0) {
        return Err(LinkError::NoSolution(format!(
            "signal gain {q_mu} does not exceed vacuum gain {y0}"
        )));
    }
    if q_mu - y0 >= 1.0 {
        return Err(LinkError::NoSolution("signal gain saturates the detector".into()));
    }
    let detector = DetectorModel::default();
    let e0 = detector.vacuum_error_rate;

    let eta = -(1.0 - (q_mu - y0)).ln() / params.mu;
    let misalignment = (e_mu * q_mu - e0 * y0) / (q_mu - y0);
    if !(0.0..0.5).contains(&misalignment) {
        return Err(LinkError::NoSolution(format!("fitted misalignment {misalignment} outside [0, 0.5)")));
    }
    let channel_transmittance = eta / detector.efficiency;
    if channel_transmittance > 1.0 {
        return Err(LinkError::NoSolution(format!(
            "signal gain needs transmittance {channel_transmittance} > 1"
        )));
    }

    let (dark, crosstalk) = match scheme {
        FiberScheme::FourFiber => (y0, 0.0),
        FiberScheme::SingleFiber => {
            let dark = detector.dark_count_prob.min(y0);
            (dark, y0 - dark)
        }
    };

    let mut source = SourceModel::default();
    if mode == CalibrationMode::SignalAndDecoy {
        let (q_nu, e_nu) = (target.decoy.gain, target.decoy.qber);
        if !(q_nu > y0) {
            return Err(LinkError::NoSolution(format!(
                "decoy gain {q_nu} does not exceed vacuum gain {y0}"
            )));
        }
        let nu_eff = -(1.0 - (q_nu - y0)).ln() / eta;
        source.decoy_intensity_factor = nu_eff / params.nu;
        // May come out slightly negative when decoy clicks show fewer errors
        // than a 0.5 background rate predicts; the class QBER stays valid.
        let decoy_misalignment = (e_nu * q_nu - e0 * y0) / (q_nu - y0);
        if !(decoy_misalignment < 0.5 && e_nu * q_nu >= 0.0) {
            return Err(LinkError::NoSolution(format!(
                "fitted decoy misalignment {decoy_misalignment} not below 0.5"
            )));
        }
        source.decoy_misalignment = Some(decoy_misalignment);
    }

    Ok(LinkModel {
        channel: ChannelModel {
            length_km: 0.0,
            attenuation_db: -10.0 * channel_transmittance.log10(),
            scheme,
            crosstalk_noise_prob: crosstalk,
        },
        detector: DetectorModel {
            dark_count_prob: dark,
            ..detector
        },
        interferometer: InterferometerModel::from_misalignment(misalignment),
        source,
        pulse_rate_hz: target.total_pulses() as f64 / target.duration_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::table2_records;

    fn physical(attenuation_db: f64) -> LinkModel {
        LinkModel::new(ChannelModel {
            length_km: 5.0,
            attenuation_db,
            scheme: FiberScheme::FourFiber,
            crosstalk_noise_prob: 0.0,
        })
    }

    fn record(route: &str) -> ObservedStatistics {
        table2_records().into_iter().find(|r| r.route == route).unwrap().stats
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn transmittance_conversions() {
        assert_eq!(transmittance(0.0), 1.0);
        assert!((transmittance(10.0) - 0.1).abs() < 1e-15);
        assert!((transmittance(6.28) - 0.2355).abs() < 1e-4);
    }

    #[test]
    fn dark_counts_only() {
        let mut link = physical(0.0);
        link.detector.efficiency = 0.0;
        let (q, e) = link.expected_class(&ProtocolParams::default(), IntensityClass::Signal);
        assert_eq!(q, 1e-6);
        assert_eq!(e, 0.5);
    }

    #[test]
    fn vacuum_sees_background_only() {
        let link = physical(3.0);
        let (q, _) = link.expected_class(&ProtocolParams::default(), IntensityClass::Vacuum);
        assert_eq!(q, link.background_yield());
    }

    #[test]
    fn vacuum_leakage_flag_adds_photons() {
        let mut link = physical(3.0);
        link.source.vacuum_leakage = true;
        let params = ProtocolParams::default();
        let (q, _) = link.expected_class(&params, IntensityClass::Vacuum);
        let want = 1e-6 + 1.0 - (-link.eta() * 0.6 * VACUUM_LEAKAGE_RATIO).exp();
        assert!((q - want).abs() < 1e-15);
    }

    #[test]
    fn plug_in_evaluation_at_arb_loss() {
        // eta = 0.02355 * 0.10 expressed through the attenuation
        let mut link = physical(-10.0 * 0.02355f64.log10());
        link.detector.efficiency = 0.10;
        let (q, e) = link.expected_class(&ProtocolParams::default(), IntensityClass::Signal);
        // Independent arithmetic: photon click 1 - exp(-0.002355*0.6)
        let click = 1.0 - (-0.002355f64 * 0.6).exp();
        assert!((q - (1e-6 + click)).abs() < 1e-9);
        assert!((q - 1.41e-3).abs() < 0.01e-3);
        let e_want = (0.5e-6 + 0.00665 * click) / (1e-6 + click);
        assert!((e - e_want).abs() < 1e-5, "E_mu {e}");
    }

    #[test]
    fn calibration_reproduces_signal_gain_exactly() {
        let target = record("B-R-D");
        let params = ProtocolParams::default();
        for mode in [CalibrationMode::SignalOnly, CalibrationMode::SignalAndDecoy] {
            let link = calibrate_link(&target, &params, FiberScheme::FourFiber, mode).unwrap();
            let (q_mu, e_mu) = link.expected_class(&params, IntensityClass::Signal);
            assert!((q_mu - 0.0167524).abs() < 1e-15, "{q_mu}");
            assert!((e_mu - 0.0193).abs() < 1e-12);
            let (q_vac, _) = link.expected_class(&params, IntensityClass::Vacuum);
            assert!((q_vac - 0.0002112).abs() < 1e-15);
        }
    }

    #[test]
    fn full_calibration_matches_decoy_class() {
        let params = ProtocolParams::default();
        for r in table2_records() {
            let link = calibrate_link(&r.stats, &params, FiberScheme::FourFiber, CalibrationMode::SignalAndDecoy).unwrap();
            let (q_nu, e_nu) = link.expected_class(&params, IntensityClass::Decoy);
            assert!((q_nu / r.stats.decoy.gain - 1.0).abs() < 1e-12, "{}", r.route);
            assert!((e_nu - r.stats.decoy.qber).abs() < 1e-12, "{}", r.route);
        }
    }

    #[test]
    fn calibration_without_margin_fails() {
        let mut target = record("B-R-D");
        target.signal.gain = target.vacuum.gain;
        assert!(matches!(
            calibrate_link(&target, &ProtocolParams::default(), FiberScheme::FourFiber, CalibrationMode::SignalOnly),
            Err(LinkError::NoSolution(_))
        ));
    }

    #[test]
    fn single_fiber_fit_attributes_background_to_crosstalk() {
        let link = calibrate_link(
            &record("D-G"),
            &ProtocolParams::default(),
            FiberScheme::SingleFiber,
            CalibrationMode::SignalAndDecoy,
        )
        .unwrap();
        assert!((link.background_yield() - 3.96e-4).abs() < 1e-15);
        assert_eq!(link.detector.dark_count_prob, 1e-6);
        assert!(link.channel.crosstalk_noise_prob > 100.0 * link.detector.dark_count_prob);
        link.validate().unwrap();
    }

    #[test]
    fn crosstalk_raises_signal_qber() {
        let params = ProtocolParams::default();
        let mut link = physical(1.0);
        link.channel.scheme = FiberScheme::SingleFiber;
        let (_, clean) = link.expected_class(&params, IntensityClass::Signal);
        link.channel.crosstalk_noise_prob = 3.95e-4;
        let (_, noisy) = link.expected_class(&params, IntensityClass::Signal);
        assert!(noisy > clean);
    }

    #[test]
    fn four_fiber_rejects_crosstalk() {
        let mut link = physical(1.0);
        link.channel.crosstalk_noise_prob = 1e-4;
        assert!(link.validate().is_err());
    }
}
