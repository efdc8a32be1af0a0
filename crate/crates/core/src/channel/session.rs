use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use super::keyring::{seal, verify, KeyRing, PublicKeys};
use super::meter::CommMeter;
use super::transport::Transport;
use super::wire::{frame_digest, Frame, MsgType};
use super::{ChannelError, Clock};

pub const DEFAULT_WINDOW_MS: u64 = 60_000;
const SYNC_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Client,
    Server,
}

/// Hyperparameters agreed during SYNC. `profile` carries further
/// run settings that must match byte for byte.
#[derive(Clone, Debug, PartialEq)]
pub struct SyncParams {
    pub lr: f64,
    pub batch: u32,
    pub samples: u64,
    pub epochs: u32,
    pub profile: Vec<u8>,
}

impl SyncParams {
    pub fn encode(&self, nonce: &[u8; 32]) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.profile.len());
        out.extend_from_slice(&SYNC_VERSION.to_le_bytes());
        out.extend_from_slice(nonce);
        out.extend_from_slice(&self.lr.to_le_bytes());
        out.extend_from_slice(&self.batch.to_le_bytes());
        out.extend_from_slice(&self.samples.to_le_bytes());
        out.extend_from_slice(&self.epochs.to_le_bytes());
        out.extend_from_slice(&(self.profile.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.profile);
        out
    }

    pub fn decode(b: &[u8]) -> Result<([u8; 32], SyncParams), ChannelError> {
        let bad = || ChannelError::MalformedFrame("bad SYNC payload".into());
        if b.len() < 62 {
            return Err(bad());
        }
        let ver = u16::from_le_bytes(b[..2].try_into().unwrap());
        if ver != SYNC_VERSION {
            return Err(ChannelError::SyncMismatch(format!("protocol version {ver}, expected {SYNC_VERSION}")));
        }
        let nonce = b[2..34].try_into().unwrap();
        let lr = f64::from_le_bytes(b[34..42].try_into().unwrap());
        let batch = u32::from_le_bytes(b[42..46].try_into().unwrap());
        let samples = u64::from_le_bytes(b[46..54].try_into().unwrap());
        let epochs = u32::from_le_bytes(b[54..58].try_into().unwrap());
        let plen = u32::from_le_bytes(b[58..62].try_into().unwrap()) as usize;
        if b.len() != 62 + plen {
            return Err(bad());
        }
        Ok((nonce, SyncParams { lr, batch, samples, epochs, profile: b[62..].to_vec() }))
    }

    fn mismatch(&self, other: &SyncParams) -> Option<String> {
        if self.lr.to_bits() != other.lr.to_bits() {
            return Some(format!("learning rate {} vs {}", self.lr, other.lr));
        }
        if self.batch != other.batch {
            return Some(format!("batch size {} vs {}", self.batch, other.batch));
        }
        if self.samples != other.samples {
            return Some(format!("sample count {} vs {}", self.samples, other.samples));
        }
        if self.epochs != other.epochs {
            return Some(format!("epochs {} vs {}", self.epochs, other.epochs));
        }
        if self.profile != other.profile {
            return Some("run profile differs".into());
        }
        None
    }
}

/// Digests of SYNC frames seen by a server across sessions, so a recorded
/// SYNC cannot open a second session inside the freshness window.
#[derive(Clone, Debug, Default)]
pub struct ReplayCache {
    seen: Arc<Mutex<HashMap<[u8; 32], u64>>>,
}

impl ReplayCache {
    fn check_and_insert(&self, digest: [u8; 32], t: u64, now: u64, window: u64) -> bool {
        let mut seen = self.seen.lock().unwrap_or_else(|e| e.into_inner());
        seen.retain(|_, &mut ts| ts.saturating_add(2 * window) >= now);
        seen.insert(digest, t).is_none()
    }
}

pub type Inspector = Box<dyn FnMut(MsgType, &[u8]) + Send>;

/// One signed, sequenced session over a transport.
pub struct SecureChannel<T: Transport> {
    transport: T,
    role: Role,
    keys: KeyRing,
    peer: PublicKeys,
    clock: Arc<dyn Clock>,
    window_ms: u64,
    session_id: [u8; 32],
    pre_session_id: [u8; 32],
    send_seq: u64,
    last_recv: Option<u64>,
    meter: CommMeter,
    rng: ChaCha20Rng,
    inspector: Option<Inspector>,
    replay_cache: Option<ReplayCache>,
    aborted: bool,
}

fn hash_ids(domain: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(domain);
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

impl<T: Transport> SecureChannel<T> {
    pub fn new(transport: T, role: Role, keys: KeyRing, peer: PublicKeys, clock: Arc<dyn Clock>) -> Self {
        let (c, s) = match role {
            Role::Client => (keys.public(), peer),
            Role::Server => (peer, keys.public()),
        };
        let pre = hash_ids(b"hesplit-sync-v1", &[&c.to_bytes(), &s.to_bytes()]);
        Self {
            transport,
            role,
            keys,
            peer,
            clock,
            window_ms: DEFAULT_WINDOW_MS,
            session_id: pre,
            pre_session_id: pre,
            send_seq: 0,
            last_recv: None,
            meter: CommMeter::default(),
            rng: ChaCha20Rng::from_entropy(),
            inspector: None,
            replay_cache: None,
            aborted: false,
        }
    }

    pub fn with_window_ms(mut self, w: u64) -> Self {
        self.window_ms = w;
        self
    }

    pub fn with_rng_seed(mut self, seed: u64) -> Self {
        self.rng = ChaCha20Rng::seed_from_u64(seed);
        self
    }

    pub fn with_replay_cache(mut self, cache: ReplayCache) -> Self {
        self.replay_cache = Some(cache);
        self
    }

    /// Called with every accepted payload after opening.
    pub fn set_inspector(&mut self, f: Inspector) {
        self.inspector = Some(f);
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn meter(&self) -> &CommMeter {
        &self.meter
    }

    pub fn meter_mut(&mut self) -> &mut CommMeter {
        &mut self.meter
    }

    pub fn session_id(&self) -> &[u8; 32] {
        &self.session_id
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        &mut self.rng
    }

    fn aad(&self, ty: MsgType) -> Vec<u8> {
        let mut a = self.session_id.to_vec();
        a.push(ty as u8);
        a
    }

    /// PKE-seals a blob for the peer, bound to this session and message type.
    pub fn seal_for_peer(&mut self, ty: MsgType, plaintext: &[u8]) -> Result<Vec<u8>, ChannelError> {
        let aad = self.aad(ty);
        seal(&self.peer, plaintext, &aad, &mut self.rng)
    }

    pub fn open_from_peer(&self, ty: MsgType, sealed: &[u8]) -> Result<Vec<u8>, ChannelError> {
        self.keys.open(sealed, &self.aad(ty))
    }

    /// Builds a signed frame with explicit timestamp and sequence number.
    pub fn sign_frame(&self, ty: MsgType, t: u64, seq: u64, payload: Vec<u8>) -> Frame {
        let d = frame_digest(&self.session_id, ty, t, seq, &payload);
        Frame { msg_type: ty, t, seq, payload, sig: self.keys.sign(&d) }
    }

    /// Sends raw bytes as-is, counting them.
    pub fn send_raw(&mut self, ty: MsgType, bytes: &[u8]) -> Result<(), ChannelError> {
        self.transport.send_frame(bytes)?;
        self.meter.record_sent(ty, bytes.len());
        Ok(())
    }

    pub fn send(&mut self, ty: MsgType, payload: &[u8]) -> Result<(), ChannelError> {
        if self.aborted {
            return Err(ChannelError::Aborted);
        }
        let body = if ty.is_sealed() { self.seal_for_peer(ty, payload)? } else { payload.to_vec() };
        let frame = self.sign_frame(ty, self.clock.now_ms(), self.send_seq, body);
        self.send_seq += 1;
        let bytes = frame.encode()?;
        self.send_raw(ty, &bytes)
    }

    /// Verifies signature, freshness and ordering, then opens the payload.
    /// Any failure aborts the session.
    pub fn recv(&mut self) -> Result<(MsgType, Vec<u8>), ChannelError> {
        if self.aborted {
            return Err(ChannelError::Aborted);
        }
        let r = self.recv_inner();
        if r.is_err() {
            self.aborted = true;
        }
        r
    }

    fn recv_inner(&mut self) -> Result<(MsgType, Vec<u8>), ChannelError> {
        let bytes = self.transport.recv_frame()?;
        let frame = Frame::decode(&bytes)?;
        self.meter.record_recv(frame.msg_type, bytes.len());
        let d = frame_digest(&self.session_id, frame.msg_type, frame.t, frame.seq, &frame.payload);
        if let Err(e) = verify(&self.peer, &d, &frame.sig) {
            // An authentic frame from before the session was bound can only be a replay.
            if self.session_id != self.pre_session_id {
                let d0 = frame_digest(&self.pre_session_id, frame.msg_type, frame.t, frame.seq, &frame.payload);
                if verify(&self.peer, &d0, &frame.sig).is_ok() {
                    return Err(ChannelError::ReplayedSequence { seq: frame.seq, last: self.last_recv.unwrap_or(0) });
                }
            }
            return Err(e);
        }
        let now = self.clock.now_ms();
        if now.abs_diff(frame.t) > self.window_ms {
            return Err(ChannelError::StaleTimestamp { t: frame.t, now });
        }
        if let Some(last) = self.last_recv {
            if frame.seq <= last {
                return Err(ChannelError::ReplayedSequence { seq: frame.seq, last });
            }
        }
        if frame.msg_type == MsgType::Sync {
            if let Some(cache) = &self.replay_cache {
                if !cache.check_and_insert(d, frame.t, now, self.window_ms) {
                    return Err(ChannelError::ReplayedSequence { seq: frame.seq, last: frame.seq });
                }
            }
        }
        self.last_recv = Some(frame.seq);
        let payload = if frame.msg_type.is_sealed() {
            self.open_from_peer(frame.msg_type, &frame.payload)?
        } else {
            frame.payload
        };
        if let Some(f) = self.inspector.as_mut() {
            f(frame.msg_type, &payload);
        }
        Ok((frame.msg_type, payload))
    }

    pub fn expect(&mut self, ty: MsgType) -> Result<Vec<u8>, ChannelError> {
        let (got, p) = self.recv()?;
        if got != ty {
            self.aborted = true;
            return Err(ChannelError::UnexpectedMessage { expected: ty.to_string(), got });
        }
        Ok(p)
    }

    fn bind_session(&mut self, nonce_c: &[u8; 32], nonce_s: &[u8; 32]) {
        let (c, s) = match self.role {
            Role::Client => (self.keys.public(), self.peer),
            Role::Server => (self.peer, self.keys.public()),
        };
        self.session_id = hash_ids(b"hesplit-session-v1", &[nonce_c, nonce_s, &c.to_bytes(), &s.to_bytes()]);
    }

    /// Client half of SYNC: proposes `params` and requires an exact echo.
    pub fn client_sync(&mut self, params: &SyncParams) -> Result<SyncParams, ChannelError> {
        let mut nonce_c = [0u8; 32];
        self.rng.fill_bytes(&mut nonce_c);
        self.send(MsgType::Sync, &params.encode(&nonce_c))?;
        let reply = self.expect(MsgType::SyncAck)?;
        let (nonce_s, echoed) = SyncParams::decode(&reply)?;
        if let Some(why) = params.mismatch(&echoed) {
            self.aborted = true;
            return Err(ChannelError::SyncMismatch(why));
        }
        self.bind_session(&nonce_c, &nonce_s);
        Ok(echoed)
    }

    /// Server half of SYNC: `check` may reject the proposal, otherwise it is echoed.
    pub fn server_sync<F>(&mut self, check: F) -> Result<SyncParams, ChannelError>
    where
        F: FnOnce(&SyncParams) -> Result<(), String>,
    {
        let p = self.expect(MsgType::Sync)?;
        let (nonce_c, proposed) = SyncParams::decode(&p)?;
        if let Err(why) = check(&proposed) {
            self.aborted = true;
            return Err(ChannelError::SyncMismatch(why));
        }
        let mut nonce_s = [0u8; 32];
        self.rng.fill_bytes(&mut nonce_s);
        self.send(MsgType::SyncAck, &proposed.encode(&nonce_s))?;
        self.bind_session(&nonce_c, &nonce_s);
        Ok(proposed)
    }

    /// Test hook: a server that answers SYNC with different parameters.
    #[doc(hidden)]
    pub fn server_sync_reply(&mut self, reply: &SyncParams) -> Result<(), ChannelError> {
        self.expect(MsgType::Sync)?;
        let mut nonce_s = [0u8; 32];
        self.rng.fill_bytes(&mut nonce_s);
        self.send(MsgType::SyncAck, &reply.encode(&nonce_s))
    }

    /// Initiator side of shutdown: FIN, FIN_ACK, then drain until the peer closes.
    pub fn finish(&mut self) -> Result<(), ChannelError> {
        self.send(MsgType::Fin, &[])?;
        self.expect(MsgType::FinAck)?;
        self.transport.close_write();
        self.drain()
    }

    /// Responder side once FIN has been received.
    pub fn acknowledge_fin(&mut self) -> Result<(), ChannelError> {
        self.send(MsgType::FinAck, &[])?;
        self.drain()?;
        self.transport.close_write();
        Ok(())
    }

    /// Reads until end of stream. Anything that still arrives is verified,
    /// so a replayed frame is reported rather than silently dropped.
    fn drain(&mut self) -> Result<(), ChannelError> {
        loop {
            match self.recv() {
                Ok((got, _)) => {
                    self.aborted = true;
                    return Err(ChannelError::UnexpectedMessage { expected: "end of stream".into(), got });
                }
                Err(ChannelError::Closed) | Err(ChannelError::Io(_)) => return Ok(()),
                Err(e) => return Err(e),
            }
        }
    }

    pub fn into_transport(self) -> T {
        self.transport
    }
}
