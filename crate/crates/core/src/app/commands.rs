//! One function per CLI subcommand.

use std::net::TcpListener;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::channel::{KeyRing, PublicKeys, ReplayCache, Role, SecureChannel, SystemClock, TcpTransport};
use crate::ckks::HeParams;
use crate::data::{generate_synth, SynthSpec};
use crate::split::{train_local, ClientEngine, EpochMetrics, Mode, ServerEngine, ServerReport, TrainConfig};

use super::attack::{run_campaign, AdversaryScript, AttackSetup, CampaignReport};
use super::bench::{bench_csv, bench_sweep, BenchRow};
use super::dump::{activation_maps, write_dumps};
use super::report::{load_client_model, save_client_model, save_model, save_server_model, write_reports};
use super::{AppError, RunConfig};

fn load_keys(cfg: &RunConfig) -> Result<(KeyRing, PublicKeys), AppError> {
    let (k, p) = match (&cfg.key, &cfg.peer_key) {
        (Some(k), Some(p)) => (k, p),
        _ => return Err(AppError::Config("split modes need key and peer_key files (see `hesplit keygen`)".into())),
    };
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|e| AppError::Config(format!("cannot read {}: {e}", p.display())))
    };
    Ok((KeyRing::from_secret_hex(&read(k)?)?, PublicKeys::from_hex(read(p)?.trim())?))
}

fn need_split(cfg: &RunConfig) -> Result<(), AppError> {
    if cfg.train.mode == Mode::Local {
        return Err(AppError::Config("client and server need mode split-plain or split-he".into()));
    }
    Ok(())
}

pub fn cmd_local(cfg: &RunConfig) -> Result<Vec<EpochMetrics>, AppError> {
    let mut cfg = cfg.clone();
    cfg.train.mode = Mode::Local;
    cfg.train.he = None;
    cfg.train.batched = false;
    cfg.validate()?;
    let (train, test) = cfg.datasets()?;
    log::info!("local training on {} samples, testing on {}", train.len(), test.len());
    let r = train_local(&cfg.train, &train, Some(&test), false)?;
    write_reports(&cfg.out_dir, &cfg.train, &r.metrics, cfg.plots)?;
    save_model(&cfg.out_dir, &r.params)?;
    Ok(r.metrics)
}

pub fn cmd_server(cfg: &RunConfig) -> Result<ServerReport, AppError> {
    cfg.validate()?;
    need_split(cfg)?;
    let (keys, peer) = load_keys(cfg)?;
    let listener = TcpListener::bind(&cfg.listen)
        .map_err(|e| AppError::Config(format!("cannot listen on {}: {e}", cfg.listen)))?;
    log::info!("server listening on {}", listener.local_addr()?);
    let (stream, addr) = listener.accept()?;
    log::info!("client connected from {addr}");
    let t = TcpTransport::new(stream, Some(Duration::from_secs(cfg.timeout_s)))?;
    let chan = SecureChannel::new(t, Role::Server, keys, peer, Arc::new(SystemClock))
        .with_window_ms(cfg.window_ms)
        .with_replay_cache(ReplayCache::default());
    let r = ServerEngine::new(cfg.train.clone(), chan)?.run()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    save_server_model(&cfg.out_dir.join("server_model.t64"), &r.model)?;
    let mut s = String::from("epoch,bytes_c2s,bytes_s2c\n");
    for (i, (recv, sent)) in r.epoch_bytes.iter().enumerate() {
        s.push_str(&format!("{},{recv},{sent}\n", i + 1));
    }
    std::fs::write(cfg.out_dir.join("server_epochs.csv"), s)?;
    Ok(r)
}

fn connect_retry(addr: &str, timeout: Duration) -> Result<TcpTransport, AppError> {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        match TcpTransport::connect(addr, Some(timeout)) {
            Ok(t) => return Ok(t),
            Err(e) if Instant::now() >= deadline => return Err(e.into()),
            Err(_) => std::thread::sleep(Duration::from_millis(100)),
        }
    }
}

pub fn cmd_client(cfg: &RunConfig) -> Result<Vec<EpochMetrics>, AppError> {
    cfg.validate()?;
    need_split(cfg)?;
    let (keys, peer) = load_keys(cfg)?;
    let (train, test) = cfg.datasets()?;
    let t = connect_retry(&cfg.connect, Duration::from_secs(cfg.timeout_s))?;
    let chan = SecureChannel::new(t, Role::Client, keys, peer, Arc::new(SystemClock)).with_window_ms(cfg.window_ms);
    let mut engine = ClientEngine::new(cfg.train.clone(), chan)?;
    let r = engine.run(&train, Some(&test))?;
    drop(engine);
    write_reports(&cfg.out_dir, &cfg.train, &r.metrics, cfg.plots)?;
    save_client_model(&cfg.out_dir.join("client_model.t64"), &r.model)?;
    Ok(r.metrics)
}

/// Writes `<stem>.key` (secret, keep private) and `<stem>.pub`.
pub fn cmd_keygen(stem: &Path) -> Result<String, AppError> {
    let k = KeyRing::generate(&mut ChaCha20Rng::from_entropy());
    let secret = stem.with_extension("key");
    std::fs::write(&secret, k.to_secret_hex() + "\n")?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&secret, std::fs::Permissions::from_mode(0o600))?;
    }
    let public = k.public().to_hex();
    std::fs::write(stem.with_extension("pub"), public.clone() + "\n")?;
    Ok(public)
}

pub fn cmd_synth(cfg: &RunConfig, path: &Path) -> Result<usize, AppError> {
    let ds = generate_synth(&SynthSpec {
        per_class: cfg.synth_per_class,
        ..SynthSpec::for_variant(cfg.train.variant, cfg.synth_seed)
    });
    ds.save(path)?;
    Ok(ds.len())
}

pub struct AttackOptions {
    pub script: Option<AdversaryScript>,
    pub tampers: usize,
    pub replays: usize,
    pub samples: usize,
}

pub fn cmd_attack(cfg: &RunConfig, opts: &AttackOptions) -> Result<CampaignReport, AppError> {
    let mut train_cfg: TrainConfig = cfg.train.clone();
    if train_cfg.mode == Mode::Local {
        train_cfg.mode = Mode::SplitPlain;
    }
    train_cfg.epochs = 1;
    let mut rc = cfg.clone();
    rc.train = train_cfg.clone();
    rc.validate()?;
    let (train, _) = rc.datasets()?;
    let idx: Vec<usize> = (0..opts.samples.min(train.len())).collect();
    let setup = AttackSetup::new(train_cfg, train.subset(&idx));
    let script = match &opts.script {
        Some(s) => s.clone(),
        None => {
            let (_, _, observed) = super::attack::control_session(&setup)?;
            AdversaryScript::fuzz(cfg.train.seed, &observed, opts.tampers, opts.replays)
        }
    };
    let report = run_campaign(&setup, &script, |r| {
        log::info!("{} -> {} {}", r.action, r.victim_outcome, if r.detected { "ok" } else { "MISSED" })
    })?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("attack_report.csv"), report.to_csv())?;
    std::fs::write(cfg.out_dir.join("attack_script.txt"), script.to_text())?;
    if !report.control_ok {
        return Err(AppError::Detection(format!("honest control failed: {}", report.control_detail)));
    }
    if !report.passed() {
        let missed: Vec<String> = report
            .actions
            .iter()
            .filter(|r| !r.detected)
            .map(|r| format!("{} ({})", r.action, r.victim_outcome))
            .collect();
        return Err(AppError::Detection(missed.join("; ")));
    }
    Ok(report)
}

pub fn cmd_dump_am(
    cfg: &RunConfig,
    model: Option<&Path>,
    samples: &[usize],
) -> Result<Vec<std::path::PathBuf>, AppError> {
    let (train, _) = cfg.datasets()?;
    let m = match model {
        Some(p) => load_client_model(p, cfg.train.variant)?,
        None => crate::nn::ModelParams::init(cfg.train.variant, cfg.train.seed).client,
    };
    let dumps = activation_maps(&m, &train, samples)?;
    write_dumps(&cfg.out_dir, &dumps, cfg.plots)
}

pub fn cmd_bench_he(
    cfg: &RunConfig,
    sets: &[HeParams],
    layouts: &[bool],
    rows: usize,
    reps: usize,
) -> Result<Vec<BenchRow>, AppError> {
    let cols = cfg.train.variant.am_dim();
    let rows_out = bench_sweep(sets, layouts, rows, cols, reps, cfg.train.seed, |r| log::info!("{}", r.csv()))?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("bench_he.csv"), bench_csv(&rows_out))?;
    Ok(rows_out)
}
