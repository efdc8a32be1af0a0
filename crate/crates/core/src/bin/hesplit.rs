use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hesplit_core::app::attack::AdversaryScript;
use hesplit_core::app::commands::{self, AttackOptions};
use hesplit_core::app::{AppError, RunConfig};
use hesplit_core::ckks::HeParams;

#[derive(Parser)]
#[command(name = "hesplit", version, about = "U-shaped split learning over CKKS-encrypted activation maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Args, Clone, Default)]
struct Common {
    /// key = value config file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    /// m1, m2 or m3
    #[arg(long)]
    variant: Option<String>,
    /// local, split-plain or split-he
    #[arg(long)]
    mode: Option<String>,
    /// HE parameters as degree:chain,bits:scale_bits, e.g. 8192:60,40,40,60:40
    #[arg(long)]
    he: Option<String>,
    /// Batch (column) encryption of activation maps
    #[arg(long)]
    be: bool,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    eval_chunk: Option<String>,
    #[arg(long, env = "HESPLIT_LISTEN")]
    listen: Option<String>,
    #[arg(long, env = "HESPLIT_CONNECT")]
    connect: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    #[arg(long)]
    train_data: Option<String>,
    #[arg(long)]
    test_data: Option<String>,
    #[arg(long)]
    synth_per_class: Option<String>,
    #[arg(long)]
    synth_seed: Option<String>,
    #[arg(long)]
    split_ratio: Option<String>,
    /// Permit ring degrees below common security guidance
    #[arg(long)]
    allow_weak_params: bool,
    /// Own secret key file
    #[arg(long)]
    key: Option<String>,
    /// Peer public key file
    #[arg(long)]
    peer_key: Option<String>,
    /// Also write SVG plots
    #[arg(long)]
    plots: bool,
    #[arg(long)]
    window_ms: Option<String>,
    #[arg(long)]
    timeout_s: Option<String>,
}

impl Common {
    fn build(&self) -> Result<RunConfig, AppError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply_env();
        let pairs: [(&str, &Option<String>); 20] = [
            ("lr", &self.lr),
            ("batch", &self.batch),
            ("epochs", &self.epochs),
            ("variant", &self.variant),
            ("mode", &self.mode),
            ("he", &self.he),
            ("seed", &self.seed),
            ("eval_chunk", &self.eval_chunk),
            ("listen", &self.listen),
            ("connect", &self.connect),
            ("out_dir", &self.out_dir),
            ("train_data", &self.train_data),
            ("test_data", &self.test_data),
            ("synth_per_class", &self.synth_per_class),
            ("synth_seed", &self.synth_seed),
            ("split_ratio", &self.split_ratio),
            ("key", &self.key),
            ("peer_key", &self.peer_key),
            ("window_ms", &self.window_ms),
            ("timeout_s", &self.timeout_s),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, v)?;
            }
        }
        if self.be {
            cfg.train.batched = true;
        }
        if self.allow_weak_params {
            cfg.allow_weak_params = true;
        }
        if self.plots {
            cfg.plots = true;
        }
        for s in &self.sets {
            let (k, v) =
                s.split_once('=').ok_or_else(|| AppError::Config(format!("--set expects KEY=VALUE, got {s:?}")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train the whole model in one process
    Local(Common),
    /// Server half of a split run: owns the linear head
    Server(Common),
    /// Client half of a split run: owns data, labels and the conv layers
    Client(Common),
    /// Tamper/replay campaign against live sessions through a frame proxy
    Attack {
        #[command(flatten)]
        common: Common,
        /// Action script (tamper/replay/delay/reorder lines); fuzzed when absent
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        tampers: usize,
        #[arg(long, default_value_t = 50)]
        replays: usize,
        /// Training samples per attacked session
        #[arg(long, default_value_t = 8)]
        samples: usize,
    },
    /// Standalone frame proxy between a real client and server
    Proxy {
        /// Address the client connects to
        #[arg(long)]
        listen: String,
        /// Server address
        #[arg(long)]
        upstream: String,
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Write input and activation-map channels per sample
    DumpAm {
        #[command(flatten)]
        common: Common,
        /// Trained client model (.t64); seeded initial weights when absent
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated sample indices of the training set
        #[arg(long, value_delimiter = ',', default_value = "0")]
        samples: Vec<usize>,
    },
    /// Encrypted linear-layer timing, size and fidelity per parameter set
    BenchHe {
        #[command(flatten)]
        common: Common,
        /// Parameter sets (repeatable); the reference sets when absent
        #[arg(long = "params")]
        params: Vec<String>,
        /// Rows per batch
        #[arg(long, default_value_t = 4)]
        rows: usize,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Only the given layout instead of both
        #[arg(long)]
        only_be: Option<bool>,
    },
    /// Generate a signing + PKE key pair: <stem>.key and <stem>.pub
    Keygen { stem: PathBuf },
    /// Write a synthetic dataset file
    Synth {
        #[command(flatten)]
        common: Common,
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.cmd {
        Cmd::Local(c) => {
            let cfg = c.build()?;
            let m = commands::cmd_local(&cfg)?;
            print_metrics(&m);
        }
        Cmd::Server(c) => {
            let r = commands::cmd_server(&c.build()?)?;
            println!("server done: {} batches over {} epochs", r.batches, r.epochs_seen);
        }
        Cmd::Client(c) => {
            let m = commands::cmd_client(&c.build()?)?;
            print_metrics(&m);
        }
        Cmd::Attack { common, script, tampers, replays, samples } => {
            let cfg = common.build()?;
            let script = match script {
                Some(p) => Some(AdversaryScript::parse(&std::fs::read_to_string(&p)?)?),
                None => None,
            };
            let r = commands::cmd_attack(&cfg, &AttackOptions { script, tampers, replays, samples })?;
            println!(
                "control session: {} ({}); detected {}/{} manipulations over {} messages per session",
                if r.control_ok { "completed" } else { "FAILED" },
                r.control_detail,
                r.detected(),
                r.manipulations(),
                r.messages
            );
        }
        Cmd::Proxy { listen, upstream, script } => {
            let actions = match script {
                Some(p) => AdversaryScript::parse(&std::fs::read_to_string(&p)?)?.actions,
                None => vec![],
            };
            let l = std::net::TcpListener::bind(&listen)?;
            let up = std::net::ToSocketAddrs::to_socket_addrs(&upstream)?
                .next()
                .ok_or_else(|| AppError::Config(format!("cannot resolve {upstream}")))?;
            let log = hesplit_core::app::attack::proxy_one(&l, up, &actions)?;
            for o in log {
                println!(
                    "{} {:?} {} {}",
                    o.index,
                    o.dir,
                    o.msg_type.map(|t| t.to_string()).unwrap_or_else(|| "?".into()),
                    o.len
                );
            }
        }
        Cmd::DumpAm { common, model, samples } => {
            let files = commands::cmd_dump_am(&common.build()?, model.as_deref(), &samples)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Cmd::BenchHe { common, params, rows, reps, only_be } => {
            let cfg = common.build()?;
            let sets = if params.is_empty() {
                HeParams::reference_sets()
            } else {
                params
                    .iter()
                    .map(|s| HeParams::parse(s).map_err(|e| AppError::Config(e.to_string())))
                    .collect::<Result<_, _>>()?
            };
            let layouts = match only_be {
                Some(b) => vec![b],
                None => vec![false, true],
            };
            let rows = commands::cmd_bench_he(&cfg, &sets, &layouts, rows, reps)?;
            print!("{}", hesplit_core::app::bench::bench_csv(&rows));
        }
        Cmd::Keygen { stem } => {
            let p = commands::cmd_keygen(&stem)?;
            println!("{p}");
        }
        Cmd::Synth { common, out } => {
            let n = commands::cmd_synth(&common.build()?, &out)?;
            println!("wrote {n} samples to {}", out.display());
        }
    }
    Ok(())
}

fn print_metrics(m: &[hesplit_core::split::EpochMetrics]) {
    print!("{}", hesplit_core::app::report::epochs_csv(m));
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hesplit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
