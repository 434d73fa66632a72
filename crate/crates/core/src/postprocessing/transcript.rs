//! Cascade parity transcript and its binary framing.
//!
//! ```text
//! magic   "CSCD"            4 bytes
//! version 0x01              1 byte
//! count   u32 big-endian    4 bytes
//! count x record            14 bytes each:
//!     pass   u8
//!     block  u32 BE   block index within the pass
//!     start  u32 BE   first permuted offset inside the block
//!     end    u32 BE   one past the last offset
//!     parity u8       0 or 1
//! ```

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"CSCD";
pub const VERSION: u8 = 1;
const RECORD_LEN: usize = 14;
const HEADER_LEN: usize = 9;

/// One parity disclosed by the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParityRecord {
    pub pass: u8,
    pub block: u32,
    pub start: u32,
    pub end: u32,
    pub parity: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    records: Vec<ParityRecord>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscriptError {
    #[error("bad magic or version")]
    BadHeader,
    #[error("truncated transcript: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("record {0}: parity byte is not 0 or 1")]
    BadParity(usize),
}

impl Transcript {
    pub fn push(&mut self, record: ParityRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ParityRecord] {
        &self.records
    }

    /// Parity messages disclosed in a given pass (0-based).
    pub fn count_in_pass(&self, pass: u8) -> usize {
        self.records.iter().filter(|r| r.pass == pass).count()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * self.records.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.records.len() as u32).to_be_bytes());
        for r in &self.records {
            out.push(r.pass);
            out.extend_from_slice(&r.block.to_be_bytes());
            out.extend_from_slice(&r.start.to_be_bytes());
            out.extend_from_slice(&r.end.to_be_bytes());
            out.push(r.parity as u8);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TranscriptError> {
        if bytes.len() < HEADER_LEN {
            return Err(TranscriptError::Truncated {
                expected: HEADER_LEN,
                got: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC || bytes[4] != VERSION {
            return Err(TranscriptError::BadHeader);
        }
        let count = u32::from_be_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let expected = HEADER_LEN + count * RECORD_LEN;
        if bytes.len() != expected {
            return Err(TranscriptError::Truncated {
                expected,
                got: bytes.len(),
            });
        }
        let be32 = |b: &[u8]| u32::from_be_bytes(b.try_into().unwrap());
        let records = bytes[HEADER_LEN..]
            .chunks_exact(RECORD_LEN)
            .enumerate()
            .map(|(i, c)| {
                let parity = match c[13] {
                    0 => false,
                    1 => true,
                    _ => return Err(TranscriptError::BadParity(i)),
                };
                Ok(ParityRecord {
                    pass: c[0],
                    block: be32(&c[1..5]),
                    start: be32(&c[5..9]),
                    end: be32(&c[9..13]),
                    parity,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn framing_layout() {
        let mut t = Transcript::default();
        t.push(ParityRecord {
            pass: 2,
            block: 0x0102_0304,
            start: 5,
            end: 9,
            parity: true,
        });
        let bytes = t.encode();
        assert_eq!(&bytes[..9], b"CSCD\x01\x00\x00\x00\x01");
        assert_eq!(&bytes[9..], &[2, 1, 2, 3, 4, 0, 0, 0, 5, 0, 0, 0, 9, 1]);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert_eq!(Transcript::decode(b"XXXX\x01\x00\x00\x00\x00"), Err(TranscriptError::BadHeader));
        assert!(matches!(
            Transcript::decode(b"CSCD\x01\x00\x00\x00\x01"),
            Err(TranscriptError::Truncated { .. })
        ));
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(recs in proptest::collection::vec((any::<u8>(), any::<u32>(), any::<u32>(), any::<u32>(), any::<bool>()), 0..50)) {
            let mut t = Transcript::default();
            for (pass, block, start, end, parity) in recs {
                t.push(ParityRecord { pass, block, start, end, parity });
            }
            prop_assert_eq!(Transcript::decode(&t.encode()).unwrap(), t);
        }
    }
}
