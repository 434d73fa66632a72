//! Per-pair key pools.
//!
//! Each node pair owns a FIFO of distilled blocks. Every bit ever deposited
//! for a pair has a fixed offset in that pair's stream; a block's id is the
//! offset of its first bit. Draws take bits from the front and report the
//! offset of the first bit drawn, which doubles as the key id. Drawn bits
//! are gone for good.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::{Mutex, MutexGuard};

use serde::Serialize;

use crate::bits::Bits;
use crate::postprocessing::SecretKeyBlock;
use crate::types::NodePair;

use super::NetworkError;

/// Bits drawn from one pair's pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    pub pair: NodePair,
    /// Stream offset of the first bit.
    pub key_id: u64,
    pub bits: Bits,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PoolLevel {
    pub produced_bits: u64,
    pub consumed_bits: u64,
    pub available_bits: u64,
    pub blocks_deposited: u64,
}

#[derive(Debug, Default)]
struct PairPool {
    blocks: VecDeque<SecretKeyBlock>,
    /// Bits already drawn from the front block.
    front_used: usize,
    next_offset: u64,
    deposited: BTreeSet<u64>,
    level: PoolLevel,
}

impl PairPool {
    fn take(&mut self, pair: &NodePair, len: usize) -> KeyMaterial {
        debug_assert!(len as u64 <= self.level.available_bits);
        let key_id = self.blocks.front().map_or(0, |b| b.block_id) + self.front_used as u64;
        let mut bits = Bits::with_capacity(len);
        while bits.len() < len {
            let front = self.blocks.front().expect("availability checked");
            let want = (len - bits.len()).min(front.len() - self.front_used);
            bits.extend_from(&front.bits.slice(self.front_used, want));
            self.front_used += want;
            if self.front_used == front.len() {
                self.blocks.pop_front();
                self.front_used = 0;
            }
        }
        self.level.consumed_bits += len as u64;
        self.level.available_bits -= len as u64;
        KeyMaterial {
            pair: pair.clone(),
            key_id,
            bits,
        }
    }
}

/// Thread-safe collection of per-pair pools.
#[derive(Debug, Default)]
pub struct KeyPool {
    pairs: Mutex<BTreeMap<NodePair, PairPool>>,
    low_water_bits: u64,
}

impl KeyPool {
    pub fn new(low_water_bits: u64) -> Self {
        Self {
            pairs: Mutex::default(),
            low_water_bits,
        }
    }

    fn lock(&self) -> MutexGuard<'_, BTreeMap<NodePair, PairPool>> {
        self.pairs.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Appends `bits` to the pair's stream and returns the stored block.
    pub fn deposit(&self, pair: &NodePair, bits: Bits) -> SecretKeyBlock {
        let mut pairs = self.lock();
        let pool = pairs.entry(pair.clone()).or_default();
        let block = SecretKeyBlock {
            block_id: pool.next_offset,
            source_pair: pair.clone(),
            bits,
        };
        pool.next_offset += block.len() as u64;
        pool.level.produced_bits += block.len() as u64;
        pool.level.available_bits += block.len() as u64;
        pool.level.blocks_deposited += 1;
        pool.deposited.insert(block.block_id);
        if !block.is_empty() {
            pool.blocks.push_back(block.clone());
        }
        block
    }

    pub fn available(&self, pair: &NodePair) -> u64 {
        self.lock().get(pair).map_or(0, |p| p.level.available_bits)
    }

    pub fn level(&self, pair: &NodePair) -> PoolLevel {
        self.lock().get(pair).map(|p| p.level).unwrap_or_default()
    }

    pub fn levels(&self) -> BTreeMap<NodePair, PoolLevel> {
        self.lock().iter().map(|(k, v)| (k.clone(), v.level)).collect()
    }

    pub fn below_low_water(&self, pair: &NodePair) -> bool {
        self.available(pair) < self.low_water_bits
    }

    /// Draws `len` bits from one pair.
    pub fn draw(&self, pair: &NodePair, len: usize) -> Result<KeyMaterial, NetworkError> {
        self.draw_many(std::slice::from_ref(pair), len).map(|mut v| v.remove(0))
    }

    /// Draws `len` bits from each pair, or nothing if any pair is short.
    /// The first short pair is reported.
    pub fn draw_many(&self, pairs: &[NodePair], len: usize) -> Result<Vec<KeyMaterial>, NetworkError> {
        let mut pools = self.lock();
        let mut needed: BTreeMap<&NodePair, u64> = BTreeMap::new();
        for pair in pairs {
            *needed.entry(pair).or_default() += len as u64;
        }
        for pair in pairs {
            let available = pools.get(pair).map_or(0, |p| p.level.available_bits);
            if available < needed[pair] {
                return Err(NetworkError::InsufficientKey {
                    pair: pair.clone(),
                    needed: needed[pair],
                    available,
                });
            }
        }
        Ok(pairs
            .iter()
            .map(|pair| pools.get_mut(pair).expect("checked above").take(pair, len))
            .collect())
    }

    /// Removes an untouched block by id. A block that was drawn from, wholly
    /// or partly, counts as consumed.
    pub fn consume_block(&self, pair: &NodePair, block_id: u64) -> Result<SecretKeyBlock, NetworkError> {
        let mut pairs = self.lock();
        let pool = pairs.get_mut(pair).ok_or(NetworkError::UnknownBlock {
            pair: pair.clone(),
            block_id,
        })?;
        if !pool.deposited.contains(&block_id) {
            return Err(NetworkError::UnknownBlock {
                pair: pair.clone(),
                block_id,
            });
        }
        let position = pool.blocks.iter().position(|b| b.block_id == block_id);
        match position {
            Some(0) if pool.front_used > 0 => Err(NetworkError::AlreadyConsumed {
                pair: pair.clone(),
                block_id,
            }),
            Some(i) => {
                let block = pool.blocks.remove(i).expect("index from position");
                pool.level.consumed_bits += block.len() as u64;
                pool.level.available_bits -= block.len() as u64;
                Ok(block)
            }
            None => Err(NetworkError::AlreadyConsumed {
                pair: pair.clone(),
                block_id,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn ab() -> NodePair {
        NodePair::new("A", "B")
    }

    #[test]
    fn draws_span_blocks_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pool = KeyPool::new(0);
        let b1 = Bits::random(100, &mut rng);
        let b2 = Bits::random(100, &mut rng);
        pool.deposit(&ab(), b1.clone());
        let second = pool.deposit(&NodePair::new("B", "A"), b2.clone());
        assert_eq!(second.block_id, 100);
        let k = pool.draw(&ab(), 150).unwrap();
        assert_eq!(k.key_id, 0);
        let mut want = b1.clone();
        want.extend_from(&b2.slice(0, 50));
        assert_eq!(k.bits, want);
        let k2 = pool.draw(&ab(), 50).unwrap();
        assert_eq!(k2.key_id, 150);
        assert_eq!(k2.bits, b2.slice(50, 50));
        let level = pool.level(&ab());
        assert_eq!((level.produced_bits, level.consumed_bits, level.available_bits), (200, 200, 0));
    }

    #[test]
    fn consume_once() {
        let pool = KeyPool::new(0);
        let block = pool.deposit(&ab(), Bits::zeros(64));
        pool.consume_block(&ab(), block.block_id).unwrap();
        assert!(matches!(
            pool.consume_block(&ab(), block.block_id),
            Err(NetworkError::AlreadyConsumed { .. })
        ));
        assert!(matches!(pool.consume_block(&ab(), 999), Err(NetworkError::UnknownBlock { .. })));
    }

    #[test]
    fn partly_drawn_block_counts_as_consumed() {
        let pool = KeyPool::new(0);
        let block = pool.deposit(&ab(), Bits::zeros(64));
        pool.draw(&ab(), 1).unwrap();
        assert!(matches!(
            pool.consume_block(&ab(), block.block_id),
            Err(NetworkError::AlreadyConsumed { .. })
        ));
    }

    #[test]
    fn draw_many_is_all_or_nothing() {
        let pool = KeyPool::new(0);
        let bc = NodePair::new("B", "C");
        pool.deposit(&ab(), Bits::zeros(128));
        pool.deposit(&bc, Bits::zeros(64));
        let err = pool.draw_many(&[ab(), bc.clone()], 128).unwrap_err();
        assert!(matches!(err, NetworkError::InsufficientKey { ref pair, .. } if *pair == bc));
        assert_eq!(pool.available(&ab()), 128);
        assert!(pool.draw_many(&[ab(), ab()], 64).is_ok());
        assert_eq!(pool.available(&ab()), 0);
    }

    #[test]
    fn low_water_mark() {
        let pool = KeyPool::new(100);
        assert!(pool.below_low_water(&ab()));
        pool.deposit(&ab(), Bits::zeros(100));
        assert!(!pool.below_low_water(&ab()));
    }

    #[test]
    fn concurrent_draws_never_share_bits() {
        let pool = Arc::new(KeyPool::new(0));
        pool.deposit(&ab(), Bits::zeros(128 * 400));
        let ids: Vec<u64> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..4)
                .map(|_| {
                    let pool = Arc::clone(&pool);
                    s.spawn(move || (0..100).map(|_| pool.draw(&ab(), 128).unwrap().key_id).collect::<Vec<_>>())
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        let unique: BTreeSet<u64> = ids.iter().copied().collect();
        assert_eq!(unique.len(), 400);
        assert!(pool.draw(&ab(), 1).is_err());
    }
}
