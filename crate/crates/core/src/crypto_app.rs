//! Encrypted messaging over pool keys.
//!
//! Each cipher key is 128 bits drawn from the pair's pool, or established
//! through the trusted relays when the pair has no direct link. Payloads are
//! sealed with AES-128-GCM.
//!
//! Frame layout (all integers big-endian):
//!
//! ```text
//! session id   u64   8 bytes
//! key id       u64   8 bytes   stream offset of the key in its pool
//! sequence     u64   8 bytes   strictly increasing per session
//! length       u32   4 bytes   ciphertext length, tag excluded
//! ciphertext         length bytes
//! tag                16 bytes
//! ```
//!
//! The 28-byte header is the associated data; the nonce is four zero bytes
//! followed by the sequence number. Since a sequence number is never reused
//! within a session, no key/nonce pair repeats.

use std::collections::BTreeMap;
use std::sync::Arc;

use aes_gcm::aead::{Aead, Nonce, Payload};
use aes_gcm::{Aes128Gcm, KeyInit};
use thiserror::Error;

use crate::bits::Bits;
use crate::network::{relay_establish, KeyPool, NetworkError, RelayPath, Topology};
use crate::types::{NodeId, NodePair};

pub const KEY_BITS: usize = 128;
pub const HEADER_LEN: usize = 28;
pub const TAG_LEN: usize = 16;

/// When the cipher key is replaced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RefreshPolicy {
    /// A fresh key for every message.
    #[default]
    PerMessage,
    /// A fresh key once this many payload bytes used the current one.
    PerBytes(u64),
    /// A fresh key once the current one is this many logical seconds old.
    PerInterval(f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KeySource {
    Direct(NodePair),
    Relay(RelayPath),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CryptoError {
    #[error("key starvation on {pair}: need {needed} bits, {available} available")]
    Starvation { pair: NodePair, needed: u64, available: u64 },
    #[error("frame failed authentication")]
    BadTag,
    #[error("no key with id {0}")]
    UnknownKey(u64),
    #[error("replayed frame: sequence {seq} not after {last}")]
    Replay { seq: u64, last: u64 },
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error(transparent)]
    Network(Box<NetworkError>),
}

impl From<NetworkError> for CryptoError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::InsufficientKey {
                pair,
                needed,
                available,
            } => Self::Starvation {
                pair,
                needed,
                available,
            },
            other => Self::Network(Box::new(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub session_id: u64,
    pub key_id: u64,
    pub seq: u64,
    pub len: u32,
}

impl FrameHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..8].copy_from_slice(&self.session_id.to_be_bytes());
        out[8..16].copy_from_slice(&self.key_id.to_be_bytes());
        out[16..24].copy_from_slice(&self.seq.to_be_bytes());
        out[24..].copy_from_slice(&self.len.to_be_bytes());
        out
    }

    fn from_bytes(b: &[u8; HEADER_LEN]) -> Self {
        let be64 = |r: std::ops::Range<usize>| u64::from_be_bytes(b[r].try_into().expect("8 bytes"));
        Self {
            session_id: be64(0..8),
            key_id: be64(8..16),
            seq: be64(16..24),
            len: u32::from_be_bytes(b[24..].try_into().expect("4 bytes")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageFrame {
    pub header: FrameHeader,
    pub ciphertext: Vec<u8>,
    pub tag: [u8; TAG_LEN],
}

impl MessageFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.ciphertext.len() + TAG_LEN);
        out.extend_from_slice(&self.header.to_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < HEADER_LEN + TAG_LEN {
            return Err(CryptoError::Malformed(format!("{} bytes is shorter than header and tag", bytes.len())));
        }
        let header = FrameHeader::from_bytes(bytes[..HEADER_LEN].try_into().expect("header length"));
        let body = &bytes[HEADER_LEN..];
        if body.len() != header.len as usize + TAG_LEN {
            return Err(CryptoError::Malformed(format!(
                "header announces {} ciphertext bytes, frame carries {}",
                header.len,
                body.len() - TAG_LEN
            )));
        }
        let (ciphertext, tag) = body.split_at(header.len as usize);
        Ok(Self {
            header,
            ciphertext: ciphertext.to_vec(),
            tag: tag.try_into().expect("tag length"),
        })
    }
}

fn nonce(seq: u64) -> Nonce<Aes128Gcm> {
    let mut n = [0u8; 12];
    n[4..].copy_from_slice(&seq.to_be_bytes());
    n.into()
}

fn key_bytes(bits: &Bits) -> [u8; 16] {
    bits.to_bytes().try_into().expect("128-bit key")
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SessionCounters {
    pub frames_sent: u64,
    pub frames_received: u64,
    pub payload_bytes: u64,
    pub keys_drawn: u64,
    /// Pool bits consumed per pair, relay hops included.
    pub bits_consumed: BTreeMap<NodePair, u64>,
}

/// Both ends of an encrypted conversation. The sender draws keys; the
/// receiver's copy of each key is derived on its own side (for relayed keys,
/// from its last-hop key and the relays' announcements).
pub struct SecureSession {
    id: u64,
    pool: Arc<KeyPool>,
    source: KeySource,
    policy: RefreshPolicy,
    current: Option<(u64, [u8; 16])>,
    frames_under_key: u64,
    bytes_under_key: u64,
    key_started_at: f64,
    clock: f64,
    next_seq: u64,
    last_received: Option<u64>,
    receiver_keys: BTreeMap<u64, [u8; 16]>,
    counters: SessionCounters,
}

impl SecureSession {
    /// Opens a session over `source`, drawing the first key.
    pub fn open(pool: Arc<KeyPool>, source: KeySource, policy: RefreshPolicy, id: u64) -> Result<Self, CryptoError> {
        let mut session = Self {
            id,
            pool,
            source,
            policy,
            current: None,
            frames_under_key: 0,
            bytes_under_key: 0,
            key_started_at: 0.0,
            clock: 0.0,
            next_seq: 0,
            last_received: None,
            receiver_keys: BTreeMap::new(),
            counters: SessionCounters::default(),
        };
        session.refresh()?;
        Ok(session)
    }

    /// Opens a session between two nodes, relaying when they share no link.
    pub fn between(
        pool: Arc<KeyPool>,
        topology: &Topology,
        from: &NodeId,
        to: &NodeId,
        policy: RefreshPolicy,
        id: u64,
    ) -> Result<Self, CryptoError> {
        let path = topology.relay_path(from, to)?;
        let source = match path.hops().as_slice() {
            [hop] => KeySource::Direct(hop.clone()),
            _ => KeySource::Relay(path),
        };
        Self::open(pool, source, policy, id)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn source(&self) -> &KeySource {
        &self.source
    }

    pub fn counters(&self) -> &SessionCounters {
        &self.counters
    }

    /// Advances the logical clock used by [`RefreshPolicy::PerInterval`].
    pub fn advance_clock(&mut self, seconds: f64) {
        self.clock += seconds;
    }

    fn refresh(&mut self) -> Result<(), CryptoError> {
        let (key_id, sender, receiver, spent) = match &self.source {
            KeySource::Direct(pair) => {
                let m = self.pool.draw(pair, KEY_BITS)?;
                let k = key_bytes(&m.bits);
                (m.key_id, k, k, vec![pair.clone()])
            }
            KeySource::Relay(path) => {
                let out = relay_establish(&self.pool, path, KEY_BITS)?;
                let spent = out.hop_material.iter().map(|m| m.pair.clone()).collect();
                (out.key_id(), key_bytes(&out.source_key), key_bytes(&out.destination_key), spent)
            }
        };
        for pair in spent {
            *self.counters.bits_consumed.entry(pair).or_default() += KEY_BITS as u64;
        }
        self.counters.keys_drawn += 1;
        self.receiver_keys.insert(key_id, receiver);
        self.current = Some((key_id, sender));
        self.frames_under_key = 0;
        self.bytes_under_key = 0;
        self.key_started_at = self.clock;
        Ok(())
    }

    fn needs_refresh(&self, next_len: usize) -> bool {
        if self.current.is_none() {
            return true;
        }
        if self.frames_under_key == 0 {
            return false;
        }
        match self.policy {
            RefreshPolicy::PerMessage => true,
            RefreshPolicy::PerBytes(limit) => self.bytes_under_key + next_len as u64 > limit,
            RefreshPolicy::PerInterval(dt) => self.clock - self.key_started_at >= dt,
        }
    }

    /// Seals `plaintext`, refreshing the key first when the policy says so.
    /// On starvation nothing is sent and the session can resume once the
    /// pool is restocked.
    pub fn encrypt(&mut self, plaintext: &[u8]) -> Result<MessageFrame, CryptoError> {
        let len = u32::try_from(plaintext.len()).map_err(|_| CryptoError::Malformed("payload over 4 GiB".into()))?;
        if self.needs_refresh(plaintext.len()) {
            self.refresh()?;
        }
        let (key_id, key) = self.current.expect("refreshed above");
        let header = FrameHeader {
            session_id: self.id,
            key_id,
            seq: self.next_seq,
            len,
        };
        let cipher = Aes128Gcm::new_from_slice(&key).expect("16-byte key");
        let aad = header.to_bytes();
        let mut sealed = cipher
            .encrypt(&nonce(header.seq), Payload { msg: plaintext, aad: &aad })
            .map_err(|_| CryptoError::Malformed("encryption failed".into()))?;
        let tag: [u8; TAG_LEN] = sealed.split_off(plaintext.len()).try_into().expect("GCM tag");
        self.next_seq += 1;
        self.frames_under_key += 1;
        self.bytes_under_key += plaintext.len() as u64;
        self.counters.frames_sent += 1;
        self.counters.payload_bytes += plaintext.len() as u64;
        Ok(MessageFrame {
            header,
            ciphertext: sealed,
            tag,
        })
    }

    /// Opens a frame on the receiving side.
    pub fn decrypt(&mut self, frame: &MessageFrame) -> Result<Vec<u8>, CryptoError> {
        let h = frame.header;
        if h.session_id != self.id {
            return Err(CryptoError::Malformed(format!("frame for session {}", h.session_id)));
        }
        if let Some(last) = self.last_received {
            if h.seq <= last {
                return Err(CryptoError::Replay { seq: h.seq, last });
            }
        }
        let key = self.receiver_keys.get(&h.key_id).ok_or(CryptoError::UnknownKey(h.key_id))?;
        let cipher = Aes128Gcm::new_from_slice(key).expect("16-byte key");
        let mut sealed = frame.ciphertext.clone();
        sealed.extend_from_slice(&frame.tag);
        let aad = h.to_bytes();
        let plain = cipher
            .decrypt(&nonce(h.seq), Payload { msg: &sealed, aad: &aad })
            .map_err(|_| CryptoError::BadTag)?;
        self.last_received = Some(h.seq);
        self.counters.frames_received += 1;
        Ok(plain)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub frames: u64,
    pub bytes_delivered: u64,
    pub received: Vec<u8>,
    pub complete: bool,
    /// Why the transfer stopped early.
    pub stopped: Option<CryptoError>,
    /// Key ids in frame order.
    pub key_ids: Vec<u64>,
}

/// Sends `data` in `chunk`-byte messages through the encoded wire format and
/// reassembles it on the receiving side. Stops at the first error.
pub fn transfer(session: &mut SecureSession, data: &[u8], chunk: usize) -> TransferReport {
    assert!(chunk > 0, "chunk size must be positive");
    let mut report = TransferReport {
        frames: 0,
        bytes_delivered: 0,
        received: Vec::with_capacity(data.len()),
        complete: false,
        stopped: None,
        key_ids: Vec::new(),
    };
    for piece in data.chunks(chunk) {
        let delivered = session
            .encrypt(piece)
            .and_then(|frame| MessageFrame::decode(&frame.encode()))
            .and_then(|frame| {
                report.key_ids.push(frame.header.key_id);
                session.decrypt(&frame)
            });
        match delivered {
            Ok(plain) => {
                report.frames += 1;
                report.bytes_delivered += plain.len() as u64;
                report.received.extend_from_slice(&plain);
            }
            Err(e) => {
                report.stopped = Some(e);
                return report;
            }
        }
    }
    report.complete = true;
    report
}

/// Messages per second a key rate sustains when every message takes a
/// fresh 128-bit key.
pub fn per_message_rate(final_rate_bps: f64) -> f64 {
    final_rate_bps / KEY_BITS as f64
}
