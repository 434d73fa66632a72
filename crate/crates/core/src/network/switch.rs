//! Optical switch in front of a subnet: one hub, several leaves, at most one
//! leaf connected at a time.

use serde::Serialize;

use crate::types::{NodeId, NodePair};

use super::NetworkError;

/// A period during which `leaf` held the switch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SwitchInterval {
    pub leaf: NodeId,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalSwitch {
    pub id: String,
    pub hub: NodeId,
    pub leaves: Vec<NodeId>,
    active: Option<NodeId>,
    connected_at: f64,
    log: Vec<SwitchInterval>,
}

impl OpticalSwitch {
    pub fn new(id: impl Into<String>, hub: NodeId, leaves: Vec<NodeId>) -> Self {
        Self {
            id: id.into(),
            hub,
            leaves,
            active: None,
            connected_at: 0.0,
            log: Vec::new(),
        }
    }

    pub fn active_leaf(&self) -> Option<&NodeId> {
        self.active.as_ref()
    }

    /// Whether `pair` is a hub-leaf pair served by this switch.
    pub fn serves(&self, pair: &NodePair) -> bool {
        pair.other(&self.hub).is_some_and(|leaf| self.leaves.contains(leaf))
    }

    /// Connects `leaf` at time `at_s`, returning the leaf whose session was
    /// cut off, if any. Reconnecting the active leaf does nothing.
    pub fn connect(&mut self, leaf: &NodeId, at_s: f64) -> Result<Option<NodeId>, NetworkError> {
        if !self.leaves.contains(leaf) {
            return Err(NetworkError::UnknownLeaf {
                switch: self.id.clone(),
                leaf: leaf.clone(),
            });
        }
        if self.active.as_ref() == Some(leaf) {
            return Ok(None);
        }
        let aborted = self.close(at_s);
        self.active = Some(leaf.clone());
        self.connected_at = at_s;
        Ok(aborted)
    }

    /// Disconnects at `at_s`, logging the interval just ended.
    pub fn disconnect(&mut self, at_s: f64) -> Option<NodeId> {
        self.close(at_s)
    }

    fn close(&mut self, at_s: f64) -> Option<NodeId> {
        let previous = self.active.take()?;
        self.log.push(SwitchInterval {
            leaf: previous.clone(),
            start_s: self.connected_at,
            end_s: at_s,
        });
        Some(previous)
    }

    /// Fails unless `pair` may use the switch right now.
    pub fn check_route(&self, pair: &NodePair) -> Result<(), NetworkError> {
        let Some(leaf) = pair.other(&self.hub) else {
            return Err(NetworkError::NotSwitched(pair.clone()));
        };
        match &self.active {
            Some(active) if active == leaf => Ok(()),
            active => Err(NetworkError::SwitchBusy {
                requested: leaf.clone(),
                active: active.clone(),
            }),
        }
    }

    pub fn log(&self) -> &[SwitchInterval] {
        &self.log
    }
}

/// Round-robin slots over `leaves` of length `quantum_s` covering
/// `[0, horizon_s)`; the last slot is cut at the horizon.
pub fn round_robin_schedule(leaves: &[NodeId], quantum_s: f64, horizon_s: f64) -> Vec<SwitchInterval> {
    let mut slots = Vec::new();
    if leaves.is_empty() || quantum_s <= 0.0 {
        return slots;
    }
    let mut start = 0.0;
    let mut k = 0usize;
    while start < horizon_s {
        let end = (start + quantum_s).min(horizon_s);
        slots.push(SwitchInterval {
            leaf: leaves[k % leaves.len()].clone(),
            start_s: start,
            end_s: end,
        });
        k += 1;
        start = (k as f64) * quantum_s;
    }
    slots
}

/// True when no two logged intervals overlap in time.
pub fn is_exclusive(log: &[SwitchInterval]) -> bool {
    let mut sorted: Vec<&SwitchInterval> = log.iter().collect();
    sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    sorted.windows(2).all(|w| w[0].end_s <= w[1].start_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn switch() -> OpticalSwitch {
        OpticalSwitch::new("S", "D".into(), vec!["E".into(), "F".into()])
    }

    #[test]
    fn connecting_other_leaf_aborts_first() {
        let mut s = switch();
        assert_eq!(s.connect(&"E".into(), 0.0).unwrap(), None);
        assert_eq!(s.connect(&"F".into(), 1.0).unwrap(), Some("E".into()));
        assert_eq!(s.active_leaf(), Some(&"F".into()));
        assert_eq!(s.log().len(), 1);
        assert!(s.check_route(&NodePair::new("D", "E")).is_err());
        assert!(s.check_route(&NodePair::new("D", "F")).is_ok());
    }

    #[test]
    fn reconnect_is_idempotent() {
        let mut s = switch();
        s.connect(&"E".into(), 0.0).unwrap();
        assert_eq!(s.connect(&"E".into(), 0.5).unwrap(), None);
        assert!(s.log().is_empty());
    }

    #[test]
    fn unknown_leaf_rejected() {
        assert!(matches!(
            switch().connect(&"G".into(), 0.0),
            Err(NetworkError::UnknownLeaf { .. })
        ));
    }

    #[test]
    fn schedule_alternates_and_is_exclusive() {
        let leaves: Vec<NodeId> = vec!["E".into(), "F".into()];
        let slots = round_robin_schedule(&leaves, 1.0, 4.5);
        assert_eq!(slots.len(), 5);
        assert_eq!(slots[1].leaf, NodeId::new("F"));
        assert_eq!(slots[4].end_s, 4.5);
        assert!(is_exclusive(&slots));
        let mut s = switch();
        for slot in &slots {
            s.connect(&slot.leaf, slot.start_s).unwrap();
        }
        s.disconnect(4.5);
        assert_eq!(s.log(), &slots[..]);
    }
}
