//! Scenario files.
//!
//! A scenario is TOML with these tables (all lengths in km, losses in dB):
//!
//! ```toml
//! [protocol]            # optional; decoy protocol parameters
//! mu = 0.6
//! nu = 0.2
//! q_sift = 0.5
//! f_ec = 1.2
//! mix = { signal = 6.0, decoy = 3.0, vacuum = 1.0 }
//!
//! [router]              # optional passive wavelength router
//! id = "R"
//! ports = ["A", "B", "C", "D"]
//! palette_nm = [1510, 1530, 1550]
//!
//! [switch]              # optional optical switch
//! id = "S"
//! hub = "D"
//! leaves = ["E", "F"]
//! quantum_s = 1.0       # time each leaf holds the switch
//! session_s = 0.25      # one QKD session; cut-off sessions are discarded
//!
//! [simulation]          # optional
//! pulses_per_link = 10000000
//! low_water_bits = 1024
//!
//! [defaults]            # optional; for links without their own values
//! distance_km = 1.0
//! attenuation_db = 5.0
//! crosstalk_noise_prob = 1e-4   # single-fiber links only
//!
//! [[nodes]]
//! id = "A"
//! role = "backbone"     # backbone | subnet | access
//! relay = true          # trusted relay, default false
//!
//! [[links]]
//! a = "A"
//! b = "B"
//! via = "router"        # router | switch | direct
//! scheme = "four-fiber" # four-fiber | single-fiber
//! distance_km = 5.0
//! attenuation_db = 6.28
//! wavelength_nm = 1550  # router links get theirs from the palette
//! calibrate_from = "A-R-B"  # take the channel from a measurement record
//! ```
//!
//! Every router port pair and every switch leaf gets a link even when not
//! listed; listing one only overrides its parameters.

use serde::Deserialize;

use crate::decoy::ProtocolParams;
use crate::link_sim::FiberScheme;

use super::NetworkError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub protocol: ProtocolParams,
    pub router: Option<RouterConfig>,
    pub switch: Option<SwitchConfig>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub defaults: LinkDefaults,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterConfig {
    #[serde(default = "default_router_id")]
    pub id: String,
    pub ports: Vec<String>,
    pub palette_nm: Vec<u32>,
}

fn default_router_id() -> String {
    "R".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchConfig {
    #[serde(default = "default_switch_id")]
    pub id: String,
    pub hub: String,
    pub leaves: Vec<String>,
    #[serde(default = "default_quantum")]
    pub quantum_s: f64,
    #[serde(default = "default_session")]
    pub session_s: f64,
}

fn default_switch_id() -> String {
    "S".into()
}

fn default_quantum() -> f64 {
    1.0
}

fn default_session() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub pulses_per_link: u64,
    pub low_water_bits: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            pulses_per_link: 10_000_000,
            low_water_bits: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkDefaults {
    pub distance_km: f64,
    pub attenuation_db: f64,
    pub crosstalk_noise_prob: f64,
}

impl Default for LinkDefaults {
    fn default() -> Self {
        Self {
            distance_km: 1.0,
            attenuation_db: 5.0,
            crosstalk_noise_prob: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeRole {
    Backbone,
    Subnet,
    Access,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub role: NodeRole,
    #[serde(default)]
    pub relay: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Via {
    Router,
    Switch,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub a: String,
    pub b: String,
    pub via: Via,
    #[serde(default)]
    pub scheme: FiberScheme,
    pub distance_km: Option<f64>,
    pub attenuation_db: Option<f64>,
    pub wavelength_nm: Option<u32>,
    pub calibrate_from: Option<String>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, NetworkError> {
        let config: Self = toml::from_str(text).map_err(|e| NetworkError::Parse(e.to_string()))?;
        config
            .protocol
            .validate()
            .map_err(|e| NetworkError::Scenario(e.to_string()))?;
        Ok(config)
    }

    /// The seven-node fixture shipped with the library.
    pub fn default_fixture() -> Self {
        Self::from_toml(crate::fixtures::DEFAULT_SCENARIO_TOML).expect("bundled scenario parses")
    }
}
