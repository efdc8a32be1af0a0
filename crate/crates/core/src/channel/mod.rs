//! Authenticated, replay-protected framing between client and server.

mod keyring;
mod meter;
mod session;
mod transport;
pub mod wire;

pub use keyring::{seal, verify, KeyRing, PublicKeys, SEAL_OVERHEAD};
pub use meter::CommMeter;
pub use session::{ReplayCache, Role, SecureChannel, SyncParams, DEFAULT_WINDOW_MS};
pub use transport::{MemTransport, TcpTransport, Transport};
pub use wire::{Frame, MsgType, FRAME_OVERHEAD};

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChannelError {
    #[error("signature verification failed")]
    BadSignature,
    #[error("timestamp {t} outside freshness window at {now}")]
    StaleTimestamp { t: u64, now: u64 },
    #[error("sequence number {seq} not above last accepted {last}")]
    ReplayedSequence { seq: u64, last: u64 },
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("sealed payload failed to open")]
    Decrypt,
    #[error("key error: {0}")]
    Key(String),
    #[error("expected {expected}, got {got}")]
    UnexpectedMessage { expected: String, got: MsgType },
    #[error("synchronization mismatch: {0}")]
    SyncMismatch(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("connection closed by peer")]
    Closed,
    #[error("session already aborted")]
    Aborted,
}

impl ChannelError {
    /// Short class name used in reports.
    pub fn class(&self) -> &'static str {
        match self {
            ChannelError::BadSignature => "BadSignature",
            ChannelError::StaleTimestamp { .. } => "StaleTimestamp",
            ChannelError::ReplayedSequence { .. } => "ReplayedSequence",
            ChannelError::MalformedFrame(_) => "MalformedFrame",
            ChannelError::Decrypt => "Decrypt",
            ChannelError::Key(_) => "Key",
            ChannelError::UnexpectedMessage { .. } => "UnexpectedMessage",
            ChannelError::SyncMismatch(_) => "SyncMismatch",
            ChannelError::Io(_) => "Io",
            ChannelError::Closed => "Closed",
            ChannelError::Aborted => "Aborted",
        }
    }

    /// Errors raised by the receiver's verification of a frame.
    pub fn is_detection(&self) -> bool {
        matches!(
            self,
            ChannelError::BadSignature
                | ChannelError::StaleTimestamp { .. }
                | ChannelError::ReplayedSequence { .. }
                | ChannelError::MalformedFrame(_)
                | ChannelError::Decrypt
        )
    }
}

/// Shared clock in unix milliseconds.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

/// Settable clock for tests.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(ms: u64) -> Self {
        Self(AtomicU64::new(ms))
    }

    pub fn set(&self, ms: u64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}
