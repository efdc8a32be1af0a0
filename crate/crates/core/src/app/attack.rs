//! Man-in-the-middle harness. A TCP proxy forwards whole frames between the
//! parties and applies scripted manipulations; the campaign runner launches
//! one live session per action and checks that the receiving party rejects it.

use std::fmt;
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::channel::wire::{LEN_PREFIX, MAX_FRAME_LEN};
use crate::channel::{KeyRing, MsgType, ReplayCache, Role, SecureChannel, SystemClock, TcpTransport};
use crate::data::Dataset;
use crate::nn::ModelParams;
use crate::split::{
    train_local, ClientEngine, ClientReport, Mode, ServerEngine, ServerReport, SplitError, TrainConfig,
};

use super::AppError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    /// Flip bit `bit` of byte `offset` (modulo the frame length) of message `msg`.
    Tamper { msg: usize, offset: usize, bit: u8 },
    /// Forward message `msg` twice.
    Replay { msg: usize },
    /// Hold message `msg` back for `ms` milliseconds.
    Delay { msg: usize, ms: u64 },
    /// Inject a copy of the earlier message `first` right before message `before`.
    Reorder { first: usize, before: usize },
}

impl Action {
    pub fn kind(&self) -> &'static str {
        match self {
            Action::Tamper { .. } => "tamper",
            Action::Replay { .. } => "replay",
            Action::Delay { .. } => "delay",
            Action::Reorder { .. } => "reorder",
        }
    }

    /// Index of the message at which the action fires.
    pub fn trigger(&self) -> usize {
        match *self {
            Action::Tamper { msg, .. } | Action::Replay { msg } | Action::Delay { msg, .. } => msg,
            Action::Reorder { before, .. } => before,
        }
    }

    /// Whether the receiver is expected to reject the session.
    pub fn is_manipulation(&self) -> bool {
        !matches!(self, Action::Delay { .. })
    }

    /// Error classes that count as a correct detection.
    pub fn expected_classes(&self) -> &'static [&'static str] {
        match self {
            Action::Tamper { .. } => &["BadSignature", "MalformedFrame"],
            Action::Replay { .. } => &["ReplayedSequence"],
            Action::Reorder { .. } => &["ReplayedSequence", "BadSignature"],
            Action::Delay { .. } => &["ok"],
        }
    }

    pub fn parse(line: &str) -> Result<Self, AppError> {
        let bad = || AppError::Config(format!("bad adversary action {line:?}"));
        let f: Vec<&str> = line.split_whitespace().collect();
        let n = |i: usize| -> Result<u64, AppError> { f.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let a = match (f.first().copied(), f.len()) {
            (Some("tamper"), 3) | (Some("tamper"), 4) => Action::Tamper {
                msg: n(1)? as usize,
                offset: n(2)? as usize,
                bit: if f.len() == 4 { n(3)? as u8 % 8 } else { 0 },
            },
            (Some("replay"), 2) => Action::Replay { msg: n(1)? as usize },
            (Some("delay"), 3) => Action::Delay { msg: n(1)? as usize, ms: n(2)? },
            (Some("reorder"), 3) => {
                let (first, before) = (n(1)? as usize, n(2)? as usize);
                if first >= before {
                    return Err(AppError::Config(format!("reorder needs i < j in {line:?}")));
                }
                Action::Reorder { first, before }
            }
            _ => return Err(bad()),
        };
        Ok(a)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Tamper { msg, offset, bit } => write!(f, "tamper {msg} {offset} {bit}"),
            Action::Replay { msg } => write!(f, "replay {msg}"),
            Action::Delay { msg, ms } => write!(f, "delay {msg} {ms}"),
            Action::Reorder { first, before } => write!(f, "reorder {first} {before}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdversaryScript {
    pub actions: Vec<Action>,
}

impl AdversaryScript {
    /// One action per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, AppError> {
        let actions = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(Action::parse)
            .collect::<Result<_, _>>()?;
        Ok(Self { actions })
    }

    pub fn to_text(&self) -> String {
        self.actions.iter().map(|a| format!("{a}\n")).collect()
    }

    /// Randomized script over the messages of an observed honest session.
    pub fn fuzz(seed: u64, observed: &[Observed], tampers: usize, replays: usize) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut actions = Vec::with_capacity(tampers + replays);
        if observed.is_empty() {
            return Self { actions };
        }
        for _ in 0..tampers {
            let o = &observed[rng.gen_range(0..observed.len())];
            actions.push(Action::Tamper { msg: o.index, offset: rng.gen_range(0..o.len), bit: rng.gen_range(0..8) });
        }
        for _ in 0..replays {
            actions.push(Action::Replay { msg: rng.gen_range(0..observed.len()) });
        }
        Self { actions }
    }

    /// Every action must reference messages that an honest session produces.
    pub fn validate(&self, observed: usize) -> Result<(), AppError> {
        for a in &self.actions {
            let hi = match *a {
                Action::Reorder { before, .. } => before,
                _ => a.trigger(),
            };
            if hi >= observed {
                return Err(AppError::Config(format!(
                    "action `{a}` references message {hi}, but the session has {observed}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

impl Direction {
    pub fn receiver(self) -> Role {
        match self {
            Direction::ClientToServer => Role::Server,
            Direction::ServerToClient => Role::Client,
        }
    }
}

/// One frame as seen by the proxy, before manipulation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observed {
    pub index: usize,
    pub dir: Direction,
    pub msg_type: Option<MsgType>,
    pub len: usize,
}

#[derive(Default)]
struct Shared {
    log: Vec<Observed>,
    frames: Vec<Vec<u8>>,
}

fn read_frame(s: &mut TcpStream) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; LEN_PREFIX];
    match s.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let body = u32::from_le_bytes(len) as usize;
    if body > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "oversized frame"));
    }
    let mut f = vec![0u8; LEN_PREFIX + body];
    f[..LEN_PREFIX].copy_from_slice(&len);
    s.read_exact(&mut f[LEN_PREFIX..])?;
    Ok(Some(f))
}

fn pump(mut from: TcpStream, mut to: TcpStream, dir: Direction, shared: Arc<Mutex<Shared>>, actions: Arc<[Action]>) {
    'outer: while let Ok(Some(frame)) = read_frame(&mut from) {
        let idx = {
            let mut s = shared.lock().unwrap_or_else(|e| e.into_inner());
            let index = s.log.len();
            s.log.push(Observed {
                index,
                dir,
                msg_type: frame.get(LEN_PREFIX).and_then(|&b| MsgType::from_u8(b)),
                len: frame.len(),
            });
            s.frames.push(frame.clone());
            index
        };
        let mut out = frame;
        let mut copies = 1;
        for a in actions.iter().filter(|a| a.trigger() == idx) {
            match *a {
                Action::Delay { ms, .. } => std::thread::sleep(Duration::from_millis(ms)),
                Action::Reorder { first, .. } => {
                    let old = shared.lock().unwrap_or_else(|e| e.into_inner()).frames.get(first).cloned();
                    if let Some(old) = old {
                        if to.write_all(&old).is_err() {
                            break 'outer;
                        }
                    }
                }
                Action::Tamper { offset, bit, .. } => {
                    let n = out.len();
                    out[offset % n] ^= 1 << (bit % 8);
                }
                Action::Replay { .. } => copies = 2,
            }
        }
        for _ in 0..copies {
            if to.write_all(&out).is_err() {
                break 'outer;
            }
        }
    }
    let _ = to.shutdown(Shutdown::Write);
}

/// Accepts one connection on `listener`, connects to `upstream` and forwards
/// frames in both directions until both sides have closed.
pub fn proxy_one(listener: &TcpListener, upstream: SocketAddr, actions: &[Action]) -> io::Result<Vec<Observed>> {
    let (client, _) = listener.accept()?;
    let server = TcpStream::connect(upstream)?;
    client.set_nodelay(true)?;
    server.set_nodelay(true)?;
    let shared = Arc::new(Mutex::new(Shared::default()));
    let actions: Arc<[Action]> = actions.into();
    let back = {
        let (from, to, sh, ac) = (server.try_clone()?, client.try_clone()?, shared.clone(), actions.clone());
        std::thread::spawn(move || pump(from, to, Direction::ServerToClient, sh, ac))
    };
    pump(client.try_clone()?, server.try_clone()?, Direction::ClientToServer, shared.clone(), actions);
    let _ = back.join();
    let _ = client.shutdown(Shutdown::Both);
    let _ = server.shutdown(Shutdown::Both);
    let log = std::mem::take(&mut shared.lock().unwrap_or_else(|e| e.into_inner()).log);
    Ok(log)
}

/// Everything needed to launch one live session.
#[derive(Clone, Debug)]
pub struct AttackSetup {
    pub cfg: TrainConfig,
    pub train: Dataset,
    pub read_timeout: Duration,
    pub replay_cache: ReplayCache,
}

impl AttackSetup {
    pub fn new(cfg: TrainConfig, train: Dataset) -> Self {
        Self { cfg, train, read_timeout: Duration::from_secs(2), replay_cache: ReplayCache::default() }
    }
}

pub struct SessionOutcome {
    pub client: Result<ClientReport, SplitError>,
    pub server: Result<ServerReport, SplitError>,
    pub observed: Vec<Observed>,
}

impl SessionOutcome {
    pub fn party(&self, role: Role) -> String {
        match role {
            Role::Client => error_class(&self.client),
            Role::Server => error_class(&self.server),
        }
    }
}

fn error_class<T>(r: &Result<T, SplitError>) -> String {
    match r {
        Ok(_) => "ok".into(),
        Err(SplitError::Channel(e)) => e.class().into(),
        Err(SplitError::Protocol(_)) => "Protocol".into(),
        Err(SplitError::Config(_)) => "Config".into(),
        Err(SplitError::Nn(_)) => "Nn".into(),
        Err(SplitError::Ckks(_)) => "Ckks".into(),
        Err(SplitError::Data(_)) => "Data".into(),
    }
}

/// Client and server engines on loopback TCP with the proxy in between.
pub fn run_session(setup: &AttackSetup, actions: &[Action]) -> Result<SessionOutcome, AppError> {
    let server_l = TcpListener::bind("127.0.0.1:0")?;
    let proxy_l = TcpListener::bind("127.0.0.1:0")?;
    let (server_addr, proxy_addr) = (server_l.local_addr()?, proxy_l.local_addr()?);
    let mut rng = ChaCha20Rng::from_entropy();
    let (ck, sk) = (KeyRing::generate(&mut rng), KeyRing::generate(&mut rng));
    let (cp, sp) = (ck.public(), sk.public());
    let timeout = Some(setup.read_timeout);

    let scfg = setup.cfg.clone();
    let cache = setup.replay_cache.clone();
    let server = std::thread::spawn(move || -> Result<ServerReport, SplitError> {
        let (stream, _) = server_l.accept().map_err(|e| SplitError::Protocol(e.to_string()))?;
        let t = TcpTransport::new(stream, timeout)?;
        let chan = SecureChannel::new(t, Role::Server, sk, cp, Arc::new(SystemClock)).with_replay_cache(cache);
        ServerEngine::new(scfg, chan)?.run()
    });
    let acts = actions.to_vec();
    let proxy = std::thread::spawn(move || proxy_one(&proxy_l, server_addr, &acts));

    let client = (|| -> Result<ClientReport, SplitError> {
        let t = TcpTransport::connect(&proxy_addr.to_string(), timeout)?;
        let chan = SecureChannel::new(t, Role::Client, ck, sp, Arc::new(SystemClock));
        let mut engine = ClientEngine::new(setup.cfg.clone(), chan)?;
        engine.run(&setup.train, None)
    })();
    let server = server.join().map_err(|_| AppError::Protocol("server thread panicked".into()))?;
    let observed = proxy.join().map_err(|_| AppError::Protocol("proxy thread panicked".into()))??;
    Ok(SessionOutcome { client, server, observed })
}

#[derive(Clone, Debug)]
pub struct ActionReport {
    pub action: Action,
    pub msg_type: Option<MsgType>,
    pub victim: Option<Role>,
    pub victim_outcome: String,
    pub other_outcome: String,
    pub detected: bool,
}

/// Judges one session against the expectation for its action.
pub fn judge(action: Action, outcome: &SessionOutcome) -> ActionReport {
    let hit = outcome.observed.iter().find(|o| o.index == action.trigger());
    let victim = hit.map(|o| o.dir.receiver());
    let (victim_outcome, other_outcome) = match victim {
        Some(Role::Server) => (outcome.party(Role::Server), outcome.party(Role::Client)),
        Some(Role::Client) => (outcome.party(Role::Client), outcome.party(Role::Server)),
        None => ("not reached".into(), String::new()),
    };
    let detected = match action {
        Action::Delay { .. } => victim_outcome == "ok" && other_outcome == "ok",
        _ => action.expected_classes().contains(&victim_outcome.as_str()),
    };
    ActionReport { action, msg_type: hit.and_then(|o| o.msg_type), victim, victim_outcome, other_outcome, detected }
}

#[derive(Clone, Debug)]
pub struct CampaignReport {
    pub control_ok: bool,
    pub control_detail: String,
    pub messages: usize,
    pub actions: Vec<ActionReport>,
}

impl CampaignReport {
    pub fn manipulations(&self) -> usize {
        self.actions.iter().filter(|r| r.action.is_manipulation()).count()
    }

    pub fn detected(&self) -> usize {
        self.actions.iter().filter(|r| r.action.is_manipulation() && r.detected).count()
    }

    /// Control completed and every action had the expected outcome.
    pub fn passed(&self) -> bool {
        self.control_ok && self.actions.iter().all(|r| r.detected)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("action,msg_type,victim,victim_outcome,other_outcome,as_expected\n");
        for r in &self.actions {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.action,
                r.msg_type.map(|t| t.to_string()).unwrap_or_else(|| "?".into()),
                match r.victim {
                    Some(Role::Client) => "client",
                    Some(Role::Server) => "server",
                    None => "-",
                },
                r.victim_outcome,
                r.other_outcome,
                r.detected
            ));
        }
        s
    }
}

/// Honest control session and the message log of an undisturbed run.
/// The control's final model must equal local training with the same seed.
pub fn control_session(setup: &AttackSetup) -> Result<(bool, String, Vec<Observed>), AppError> {
    let out = run_session(setup, &[])?;
    let (c, s) = match (&out.client, &out.server) {
        (Ok(c), Ok(s)) => (c, s),
        _ => {
            let why = format!("client {}, server {}", out.party(Role::Client), out.party(Role::Server));
            return Ok((false, why, out.observed));
        }
    };
    let local_cfg = TrainConfig { mode: Mode::Local, he: None, batched: false, ..setup.cfg.clone() };
    let local = train_local(&local_cfg, &setup.train, None, false)?;
    let split = ModelParams { variant: setup.cfg.variant, client: c.model.clone(), server: s.model.clone() };
    let diff = split.flatten().iter().zip(local.params.flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // HE sessions only approximate the plaintext path
    let tol = if setup.cfg.mode == Mode::SplitHe { 1e-2 } else { 1e-9 };
    let ok = diff <= tol;
    Ok((ok, format!("max |split - local| = {diff:.3e}"), out.observed))
}

/// Runs each action in a fresh session after an honest control run.
pub fn run_campaign<F>(
    setup: &AttackSetup,
    script: &AdversaryScript,
    mut progress: F,
) -> Result<CampaignReport, AppError>
where
    F: FnMut(&ActionReport),
{
    let (control_ok, control_detail, observed) = control_session(setup)?;
    script.validate(observed.len())?;
    let mut actions = Vec::with_capacity(script.actions.len());
    for &a in &script.actions {
        let out = run_session(setup, &[a])?;
        let r = judge(a, &out);
        progress(&r);
        actions.push(r);
    }
    Ok(CampaignReport { control_ok, control_detail, messages: observed.len(), actions })
}
