//! Wavelength assignment for the passive router.
//!
//! A router port pair can share one fiber with other pairs only if no node
//! terminates two pairs on the same wavelength, i.e. the wavelength map is a
//! proper edge coloring of the complete graph on the ports. The round-robin
//! 1-factorization gives one with `n - 1` colors for even `n` and `n` for
//! odd `n` (an extra dummy vertex absorbs one pair per round).

use std::collections::BTreeMap;

use crate::types::{NodeId, NodePair};

use super::NetworkError;

pub type WavelengthMap = BTreeMap<NodePair, u32>;

/// Colors needed for a proper edge coloring of `K_n`.
pub fn colors_needed(n: usize) -> usize {
    match n {
        0 | 1 => 0,
        n if n % 2 == 0 => n - 1,
        n => n,
    }
}

/// Round `r` uses `palette[r]`. In round `r` vertex `r` pairs with the
/// fixed vertex `m - 1`, and `r + k` pairs with `r - k` (mod `m - 1`).
pub fn assign_wavelengths(ports: &[NodeId], palette: &[u32]) -> Result<WavelengthMap, NetworkError> {
    let n = ports.len();
    let needed = colors_needed(n);
    if palette.len() < needed {
        return Err(NetworkError::PaletteTooSmall {
            ports: n,
            needed,
            got: palette.len(),
        });
    }
    let mut map = WavelengthMap::new();
    if n < 2 {
        return Ok(map);
    }
    let m = n + n % 2;
    let rounds = m - 1;
    for (r, &wavelength) in palette.iter().enumerate().take(rounds) {
        let mut add = |i: usize, j: usize| {
            if i < n && j < n {
                map.insert(NodePair::new(ports[i].clone(), ports[j].clone()), wavelength);
            }
        };
        add(r, m - 1);
        for k in 1..m / 2 {
            add((r + k) % rounds, (r + rounds - k) % rounds);
        }
    }
    Ok(map)
}

/// Two pairs meeting at a node on the same wavelength.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColoringConflict {
    pub node: NodeId,
    pub wavelength: u32,
    pub pairs: (NodePair, NodePair),
}

/// Checks that no node has two incident pairs on one wavelength.
pub fn check_edge_coloring(map: &WavelengthMap) -> Result<(), Box<ColoringConflict>> {
    let mut seen: BTreeMap<(&NodeId, u32), &NodePair> = BTreeMap::new();
    for (pair, &wavelength) in map {
        for node in [pair.first(), pair.second()] {
            if let Some(previous) = seen.insert((node, wavelength), pair) {
                return Err(Box::new(ColoringConflict {
                    node: node.clone(),
                    wavelength,
                    pairs: (previous.clone(), pair.clone()),
                }));
            }
        }
    }
    Ok(())
}

/// Checks the map covers every port pair exactly.
pub fn is_complete(map: &WavelengthMap, ports: &[NodeId]) -> bool {
    let n = ports.len();
    map.len() == n * (n.saturating_sub(1)) / 2
        && ports
            .iter()
            .enumerate()
            .all(|(i, a)| ports[i + 1..].iter().all(|b| map.contains_key(&NodePair::new(a.clone(), b.clone()))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ports(n: usize) -> Vec<NodeId> {
        (0..n).map(|i| NodeId::new(((b'A' + i as u8) as char).to_string())).collect()
    }

    fn palette(n: usize) -> Vec<u32> {
        (0..n as u32).map(|i| 1470 + 20 * i).collect()
    }

    #[test]
    fn four_ports_reproduce_fixture_map() {
        let map = assign_wavelengths(&ports(4), &[1510, 1530, 1550]).unwrap();
        let at = |a: &str, b: &str| map[&NodePair::new(a, b)];
        assert_eq!(at("A", "B"), 1550);
        assert_eq!(at("A", "C"), 1530);
        assert_eq!(at("A", "D"), 1510);
        assert_eq!(at("B", "C"), 1510);
        assert_eq!(at("B", "D"), 1530);
        assert_eq!(at("C", "D"), 1550);
    }

    #[test]
    fn generated_colorings_are_proper_and_complete() {
        for n in 0..=9 {
            let p = ports(n);
            let map = assign_wavelengths(&p, &palette(colors_needed(n))).unwrap();
            check_edge_coloring(&map).unwrap();
            assert!(is_complete(&map, &p), "n = {n}");
        }
    }

    #[test]
    fn two_ports_single_wavelength() {
        let map = assign_wavelengths(&ports(2), &[1550]).unwrap();
        assert_eq!(map.len(), 1);
    }

    #[test]
    fn three_ports_need_three_colors() {
        assert!(assign_wavelengths(&ports(3), &[1, 2]).is_err());
        let map = assign_wavelengths(&ports(3), &[1, 2, 3]).unwrap();
        let mut used: Vec<u32> = map.values().copied().collect();
        used.sort();
        assert_eq!(used, vec![1, 2, 3]);
    }

    #[test]
    fn six_ports_five_colors() {
        assert!(matches!(
            assign_wavelengths(&ports(6), &palette(4)),
            Err(NetworkError::PaletteTooSmall { needed: 5, .. })
        ));
        check_edge_coloring(&assign_wavelengths(&ports(6), &palette(5)).unwrap()).unwrap();
    }

    #[test]
    fn checker_finds_conflict() {
        let mut map = WavelengthMap::new();
        map.insert(NodePair::new("A", "B"), 1550);
        map.insert(NodePair::new("B", "C"), 1550);
        let err = check_edge_coloring(&map).unwrap_err();
        assert_eq!(err.node, NodeId::new("B"));
    }
}
