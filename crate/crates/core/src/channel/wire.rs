//! Frame layout: `len:u32 ‖ type:u8 ‖ t:u64 ‖ seq:u64 ‖ payload ‖ sig:[u8; 64]`,
//! little-endian, where `len` counts every byte after itself.

use sha2::{Digest, Sha256};

use super::ChannelError;

pub const LEN_PREFIX: usize = 4;
pub const HEADER_LEN: usize = 1 + 8 + 8;
pub const SIG_LEN: usize = 64;
/// Bytes a frame adds on top of its payload.
pub const FRAME_OVERHEAD: usize = LEN_PREFIX + HEADER_LEN + SIG_LEN;
pub const MAX_FRAME_LEN: usize = 1 << 30;
const DIGEST_DOMAIN: &[u8] = b"hesplit-frame-v1";

macro_rules! msg_types {
    ($($name:ident = $v:expr, $sealed:expr;)*) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum MsgType {
            $($name = $v,)*
        }

        impl MsgType {
            pub fn from_u8(b: u8) -> Option<Self> {
                match b {
                    $($v => Some(MsgType::$name),)*
                    _ => None,
                }
            }

            /// Whether the payload travels PKE-sealed to the recipient.
            pub fn is_sealed(self) -> bool {
                match self {
                    $(MsgType::$name => $sealed,)*
                }
            }

            pub fn all() -> &'static [MsgType] {
                &[$(MsgType::$name,)*]
            }
        }
    };
}

msg_types! {
    Sync = 0x01, false;
    SyncAck = 0x02, false;
    M1Setup = 0x10, false;
    M2Eval = 0x11, false;
    M3Grad = 0x12, true;
    M4GradPrime = 0x13, true;
    TrainAm = 0x20, true;
    TrainOut = 0x21, true;
    TrainGradOut = 0x22, true;
    TrainGradAm = 0x23, true;
    HeTrainAm = 0x30, false;
    HeTrainOut = 0x31, false;
    EvalAm = 0x40, true;
    EvalOut = 0x41, true;
    HeEvalAm = 0x42, false;
    HeEvalOut = 0x43, false;
    EpochEnd = 0x50, true;
    Fin = 0x60, false;
    FinAck = 0x61, false;
}

impl std::fmt::Display for MsgType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub t: u64,
    pub seq: u64,
    pub payload: Vec<u8>,
    pub sig: [u8; 64],
}

/// `SHA-256(domain ‖ session_id ‖ type ‖ t ‖ seq ‖ payload)`, the signed value.
pub fn frame_digest(session_id: &[u8; 32], msg_type: MsgType, t: u64, seq: u64, payload: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(DIGEST_DOMAIN);
    h.update(session_id);
    h.update([msg_type as u8]);
    h.update(t.to_le_bytes());
    h.update(seq.to_le_bytes());
    h.update(payload);
    h.finalize().into()
}

impl Frame {
    pub fn encoded_len(&self) -> usize {
        FRAME_OVERHEAD + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, ChannelError> {
        let body = HEADER_LEN + self.payload.len() + SIG_LEN;
        if body > MAX_FRAME_LEN {
            return Err(ChannelError::MalformedFrame(format!("frame of {body} bytes exceeds limit")));
        }
        let mut out = Vec::with_capacity(LEN_PREFIX + body);
        out.extend_from_slice(&(body as u32).to_le_bytes());
        out.push(self.msg_type as u8);
        out.extend_from_slice(&self.t.to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.sig);
        Ok(out)
    }

    /// Parses one complete frame, length prefix included.
    pub fn decode(b: &[u8]) -> Result<Frame, ChannelError> {
        let bad = |m: &str| ChannelError::MalformedFrame(m.to_string());
        if b.len() < FRAME_OVERHEAD {
            return Err(bad("frame shorter than header and signature"));
        }
        let len = u32::from_le_bytes(b[..4].try_into().unwrap()) as usize;
        if len != b.len() - LEN_PREFIX {
            return Err(bad("length prefix disagrees with frame size"));
        }
        let msg_type = MsgType::from_u8(b[4]).ok_or_else(|| bad("unknown message type"))?;
        let t = u64::from_le_bytes(b[5..13].try_into().unwrap());
        let seq = u64::from_le_bytes(b[13..21].try_into().unwrap());
        let payload = b[21..b.len() - SIG_LEN].to_vec();
        let sig = b[b.len() - SIG_LEN..].try_into().unwrap();
        Ok(Frame { msg_type, t, seq, payload, sig })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_roundtrip() {
        let f = Frame {
            msg_type: MsgType::TrainAm,
            t: 1_700_000_000_000,
            seq: 42,
            payload: vec![1, 2, 3, 4, 5],
            sig: [7u8; 64],
        };
        let b = f.encode().unwrap();
        assert_eq!(b.len(), FRAME_OVERHEAD + 5);
        assert_eq!(FRAME_OVERHEAD, 85);
        assert_eq!(Frame::decode(&b).unwrap(), f);
        assert!(Frame::decode(&b[..b.len() - 1]).is_err());
        let mut t = b.clone();
        t[4] = 0xEE;
        assert!(Frame::decode(&t).is_err());
    }

    #[test]
    fn type_codes_are_unique() {
        let mut codes: Vec<u8> = MsgType::all().iter().map(|&m| m as u8).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), MsgType::all().len());
        for &m in MsgType::all() {
            assert_eq!(MsgType::from_u8(m as u8), Some(m));
        }
    }
}
