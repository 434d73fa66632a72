//! Trusted-relay key chaining.
//!
//! On a path with hop keys `k_0 .. k_{h-1}` the end-to-end key is `k_0`.
//! Each interior relay `i` knows `k_{i-1}` and `k_i` and announces
//! `w_i = k_{i-1} xor k_i` on the classical channel. The destination, holding
//! `k_{h-1}`, recovers `k_0 = k_{h-1} xor w_{h-1} xor .. xor w_1`. With `k_0`
//! uniform and independent of the other hop keys, the announced words are
//! uniform and independent of `k_0`.

use crate::bits::Bits;

use super::pool::{KeyMaterial, KeyPool};
use super::topology::RelayPath;
use super::NetworkError;

/// Words announced by the interior relays, in path order.
pub fn relay_forward_words(hop_keys: &[Bits]) -> Vec<Bits> {
    hop_keys.windows(2).map(|w| w[0].xor(&w[1])).collect()
}

/// The destination's view: its own hop key plus the announced words.
pub fn relay_recover(last_hop_key: &Bits, words: &[Bits]) -> Bits {
    words.iter().fold(last_hop_key.clone(), |acc, w| acc.xor(w))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayOutcome {
    pub source_key: Bits,
    pub destination_key: Bits,
    /// Classical transcript, one word per relay.
    pub forwarded: Vec<Bits>,
    /// Material drawn from each hop's pool, in path order.
    pub hop_material: Vec<KeyMaterial>,
}

impl RelayOutcome {
    /// Id of the end-to-end key: the first hop's stream offset.
    pub fn key_id(&self) -> u64 {
        self.hop_material[0].key_id
    }
}

/// Establishes a `len`-bit key between the path endpoints. Either every hop
/// pays `len` bits or, if any hop is short, nothing is drawn and the short
/// hop is named.
pub fn relay_establish(pool: &KeyPool, path: &RelayPath, len: usize) -> Result<RelayOutcome, NetworkError> {
    let hop_material = pool.draw_many(&path.hops(), len)?;
    let hop_keys: Vec<Bits> = hop_material.iter().map(|m| m.bits.clone()).collect();
    let forwarded = relay_forward_words(&hop_keys);
    let destination_key = relay_recover(hop_keys.last().expect("at least one hop"), &forwarded);
    Ok(RelayOutcome {
        source_key: hop_keys[0].clone(),
        destination_key,
        forwarded,
        hop_material,
    })
}
