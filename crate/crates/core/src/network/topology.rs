//! Nodes, QKD links and relay paths.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::decoy::ProtocolParams;
use crate::link_sim::{calibrate_link, CalibrationMode, ChannelModel, FiberScheme, LinkModel};
use crate::records::MeasurementRecord;
use crate::types::{NodeId, NodePair};

use super::scenario::{LinkConfig, NodeRole, ScenarioConfig, Via};
use super::switch::OpticalSwitch;
use super::wavelength::{assign_wavelengths, check_edge_coloring, WavelengthMap};
use super::NetworkError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub role: NodeRole,
    pub is_relay: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    Router,
    Switch,
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumRouter {
    pub id: String,
    pub ports: Vec<NodeId>,
    pub wavelength_map: WavelengthMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// Endpoints in declaration order.
    pub a: NodeId,
    pub b: NodeId,
    pub kind: LinkKind,
    /// Route label such as `A-R-B`, `D-S-E` or `D-G`.
    pub route: String,
    pub wavelength_nm: Option<u32>,
    pub distance_km: f64,
    pub attenuation_db: f64,
    pub calibrated_from: Option<String>,
    pub model: LinkModel,
}

impl Link {
    pub fn pair(&self) -> NodePair {
        NodePair::new(self.a.clone(), self.b.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub router: Option<QuantumRouter>,
    pub switch: Option<OpticalSwitch>,
    pub params: ProtocolParams,
    pub switch_quantum_s: f64,
    pub switch_session_s: f64,
}

/// Ordered node list of a key-relay route.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayPath {
    nodes: Vec<NodeId>,
}

impl RelayPath {
    /// Checks that consecutive nodes share a link and interior nodes relay.
    pub fn new(topology: &Topology, nodes: Vec<NodeId>) -> Result<Self, NetworkError> {
        if nodes.len() < 2 {
            return Err(NetworkError::InvalidPath("a path needs two nodes".into()));
        }
        for w in nodes.windows(2) {
            let pair = NodePair::new(w[0].clone(), w[1].clone());
            if topology.link(&pair).is_none() {
                return Err(NetworkError::NoLink(pair));
            }
        }
        for interior in &nodes[1..nodes.len() - 1] {
            if !topology.node(interior)?.is_relay {
                return Err(NetworkError::InvalidPath(format!("{interior} is not a trusted relay")));
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn source(&self) -> &NodeId {
        &self.nodes[0]
    }

    pub fn destination(&self) -> &NodeId {
        self.nodes.last().expect("non-empty path")
    }

    pub fn hops(&self) -> Vec<NodePair> {
        self.nodes.windows(2).map(|w| NodePair::new(w[0].clone(), w[1].clone())).collect()
    }

    pub fn relays(&self) -> &[NodeId] {
        &self.nodes[1..self.nodes.len() - 1]
    }
}

impl std::fmt::Display for RelayPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.nodes.iter().map(NodeId::as_str).collect();
        f.write_str(&names.join("-"))
    }
}

impl Topology {
    pub fn node(&self, id: &NodeId) -> Result<&Node, NetworkError> {
        self.nodes
            .iter()
            .find(|n| &n.id == id)
            .ok_or_else(|| NetworkError::UnknownNode(id.clone()))
    }

    pub fn link(&self, pair: &NodePair) -> Option<&Link> {
        self.links.iter().find(|l| &l.pair() == pair)
    }

    pub fn link_by_route(&self, route: &str) -> Option<&Link> {
        self.links.iter().find(|l| l.route == route)
    }

    /// Shortest key-relay path; only relay nodes may be passed through.
    pub fn relay_path(&self, from: &NodeId, to: &NodeId) -> Result<RelayPath, NetworkError> {
        self.node(from)?;
        self.node(to)?;
        if from == to {
            return Err(NetworkError::InvalidPath("source equals destination".into()));
        }
        let mut previous: BTreeMap<&NodeId, &NodeId> = BTreeMap::new();
        let mut seen = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(current) = queue.pop_front() {
            if current == to {
                let mut nodes = vec![to.clone()];
                let mut at = to;
                while let Some(&p) = previous.get(at) {
                    nodes.push(p.clone());
                    at = p;
                }
                nodes.reverse();
                return RelayPath::new(self, nodes);
            }
            if current != from && !self.node(current)?.is_relay {
                continue;
            }
            for link in &self.links {
                let Some(next) = link.pair().other(current).cloned() else {
                    continue;
                };
                let next = self.nodes.iter().map(|n| &n.id).find(|id| **id == next).expect("link endpoints exist");
                if seen.insert(next) {
                    previous.insert(next, current);
                    queue.push_back(next);
                }
            }
        }
        Err(NetworkError::Unreachable {
            from: from.clone(),
            to: to.clone(),
        })
    }
}

/// Builds the topology. `records` supplies the measurements that
/// `calibrate_from` refers to.
pub fn build_topology(config: &ScenarioConfig, records: &[MeasurementRecord]) -> Result<Topology, NetworkError> {
    let scenario = |msg: String| NetworkError::Scenario(msg);
    let mut nodes: Vec<Node> = Vec::new();
    for n in &config.nodes {
        let id = NodeId::new(n.id.clone());
        if nodes.iter().any(|m| m.id == id) {
            return Err(scenario(format!("node {id} declared twice")));
        }
        nodes.push(Node {
            id,
            role: n.role,
            is_relay: n.relay,
        });
    }
    let known = |id: &str| -> Result<NodeId, NetworkError> {
        let id = NodeId::new(id);
        if nodes.iter().any(|n| n.id == id) {
            Ok(id)
        } else {
            Err(NetworkError::UnknownNode(id))
        }
    };

    let mut declared: BTreeMap<NodePair, &LinkConfig> = BTreeMap::new();
    for l in &config.links {
        let pair = NodePair::new(known(&l.a)?, known(&l.b)?);
        if l.a == l.b {
            return Err(scenario(format!("link {} joins a node to itself", l.a)));
        }
        if declared.insert(pair.clone(), l).is_some() {
            return Err(scenario(format!("link {pair} declared twice")));
        }
    }

    // Router and switch links exist implicitly; declared entries override.
    let mut planned: Vec<(NodeId, NodeId, Via)> = Vec::new();
    let router = match &config.router {
        Some(r) => {
            let ports = r.ports.iter().map(|p| known(p)).collect::<Result<Vec<_>, _>>()?;
            let mut map = assign_wavelengths(&ports, &r.palette_nm)?;
            for (i, a) in ports.iter().enumerate() {
                for b in &ports[i + 1..] {
                    let pair = NodePair::new(a.clone(), b.clone());
                    let (first, second) = match declared.get(&pair) {
                        Some(l) => (NodeId::new(l.a.clone()), NodeId::new(l.b.clone())),
                        None => (a.clone(), b.clone()),
                    };
                    if let Some(w) = declared.get(&pair).and_then(|l| l.wavelength_nm) {
                        map.insert(pair, w);
                    }
                    planned.push((first, second, Via::Router));
                }
            }
            check_edge_coloring(&map).map_err(NetworkError::Coloring)?;
            Some(QuantumRouter {
                id: r.id.clone(),
                ports,
                wavelength_map: map,
            })
        }
        None => None,
    };

    let switch = match &config.switch {
        Some(s) => {
            let hub = known(&s.hub)?;
            let leaves = s.leaves.iter().map(|p| known(p)).collect::<Result<Vec<_>, _>>()?;
            if nodes.iter().find(|n| n.id == hub).map(|n| n.role) != Some(NodeRole::Backbone) {
                return Err(scenario(format!("switch hub {hub} must be a backbone node")));
            }
            for leaf in &leaves {
                if nodes.iter().find(|n| &n.id == leaf).map(|n| n.role) != Some(NodeRole::Subnet) {
                    return Err(scenario(format!("switch leaf {leaf} must be a subnet node")));
                }
                planned.push((hub.clone(), leaf.clone(), Via::Switch));
            }
            if !(s.quantum_s > 0.0 && s.session_s > 0.0) {
                return Err(scenario("switch quantum and session length must be positive".into()));
            }
            Some(OpticalSwitch::new(s.id.clone(), hub, leaves))
        }
        None => None,
    };

    for l in &config.links {
        let (a, b) = (NodeId::new(l.a.clone()), NodeId::new(l.b.clone()));
        let pair = NodePair::new(a.clone(), b.clone());
        let implicit = planned.iter().find(|(x, y, _)| NodePair::new(x.clone(), y.clone()) == pair);
        match (l.via, implicit) {
            (Via::Direct, None) => planned.push((a, b, Via::Direct)),
            (via, Some((_, _, kind))) if via == *kind => {}
            (via, _) => {
                return Err(scenario(format!(
                    "link {pair} declared via {via:?} but does not match the router or switch membership"
                )))
            }
        }
    }

    let mut links = Vec::with_capacity(planned.len());
    for (a, b, via) in planned {
        let pair = NodePair::new(a.clone(), b.clone());
        let decl = declared.get(&pair).copied();
        let (kind, route, wavelength) = match via {
            Via::Router => {
                let r = router.as_ref().expect("router links come from the router");
                (
                    LinkKind::Router,
                    format!("{a}-{}-{b}", r.id),
                    Some(r.wavelength_map[&pair]),
                )
            }
            Via::Switch => {
                let s = switch.as_ref().expect("switch links come from the switch");
                (LinkKind::Switch, format!("{a}-{}-{b}", s.id), decl.and_then(|l| l.wavelength_nm))
            }
            Via::Direct => (LinkKind::Direct, format!("{a}-{b}"), decl.and_then(|l| l.wavelength_nm)),
        };
        let scheme = decl.map(|l| l.scheme).unwrap_or_default();
        let distance_km = decl.and_then(|l| l.distance_km).unwrap_or(config.defaults.distance_km);
        let attenuation_db = decl.and_then(|l| l.attenuation_db).unwrap_or(config.defaults.attenuation_db);
        let calibrated_from = decl.and_then(|l| l.calibrate_from.clone());
        let model = match &calibrated_from {
            Some(source) => {
                let record = records
                    .iter()
                    .find(|r| &r.route == source)
                    .ok_or_else(|| scenario(format!("link {route}: no measurement record {source}")))?;
                let mut model = calibrate_link(&record.stats, &config.protocol, scheme, CalibrationMode::SignalAndDecoy)
                    .map_err(|e| scenario(format!("link {route}: {e}")))?;
                model.channel.length_km = distance_km;
                model
            }
            None => {
                let crosstalk = match scheme {
                    FiberScheme::SingleFiber => config.defaults.crosstalk_noise_prob,
                    FiberScheme::FourFiber => 0.0,
                };
                let model = LinkModel::new(ChannelModel {
                    length_km: distance_km,
                    attenuation_db,
                    scheme,
                    crosstalk_noise_prob: crosstalk,
                });
                model.validate().map_err(|e| scenario(format!("link {route}: {e}")))?;
                model
            }
        };
        links.push(Link {
            a,
            b,
            kind,
            route,
            wavelength_nm: wavelength,
            distance_km,
            attenuation_db,
            calibrated_from,
            model,
        });
    }

    let (switch_quantum_s, switch_session_s) = config.switch.as_ref().map_or((1.0, 0.25), |s| (s.quantum_s, s.session_s));
    Ok(Topology {
        nodes,
        links,
        router,
        switch,
        params: config.protocol,
        switch_quantum_s,
        switch_session_s,
    })
}
