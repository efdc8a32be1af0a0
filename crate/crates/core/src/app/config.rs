//! Run configuration: `key = value` file, environment, then CLI overrides.

use std::path::{Path, PathBuf};

use crate::ckks::HeParams;
use crate::data::{generate_synth, load_dataset, train_test_split, Dataset, SynthSpec};
use crate::nn::ModelVariant;
use crate::split::{Mode, TrainConfig};

use super::AppError;

pub const ENV_LISTEN: &str = "HESPLIT_LISTEN";
pub const ENV_CONNECT: &str = "HESPLIT_CONNECT";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub listen: String,
    pub connect: String,
    pub out_dir: PathBuf,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub synth_per_class: usize,
    pub synth_seed: u64,
    pub split_ratio: f64,
    pub allow_weak_params: bool,
    pub key: Option<PathBuf>,
    pub peer_key: Option<PathBuf>,
    pub plots: bool,
    pub window_ms: u64,
    pub timeout_s: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            listen: "127.0.0.1:7878".into(),
            connect: "127.0.0.1:7878".into(),
            out_dir: PathBuf::from("out"),
            train_data: None,
            test_data: None,
            synth_per_class: 200,
            synth_seed: 1,
            split_ratio: 0.9,
            allow_weak_params: false,
            key: None,
            peer_key: None,
            plots: false,
            window_ms: crate::channel::DEFAULT_WINDOW_MS,
            timeout_s: 600,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, AppError> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(AppError::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, AppError> {
    v.parse().map_err(|_| AppError::Config(format!("{key}: cannot parse {v:?}")))
}

impl RunConfig {
    /// Applies one setting; keys match the config-file names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), AppError> {
        let v = value.trim();
        let t = &mut self.train;
        match key.trim() {
            "lr" => t.lr = parse_num(key, v)?,
            "batch" => t.batch = parse_num(key, v)?,
            "epochs" => t.epochs = parse_num(key, v)?,
            "variant" => {
                t.variant = ModelVariant::parse(v).ok_or_else(|| AppError::Config(format!("unknown variant {v:?}")))?
            }
            "mode" => t.mode = Mode::parse(v).ok_or_else(|| AppError::Config(format!("unknown mode {v:?}")))?,
            "he" => {
                t.he = if v.is_empty() || v == "none" {
                    None
                } else {
                    Some(HeParams::parse(v).map_err(|e| AppError::Config(e.to_string()))?)
                }
            }
            "be" => t.batched = parse_bool(key, v)?,
            "seed" => t.seed = parse_num(key, v)?,
            "eval_chunk" => t.eval_chunk = parse_num(key, v)?,
            "listen" => self.listen = v.to_string(),
            "connect" => self.connect = v.to_string(),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "train_data" => self.train_data = Some(PathBuf::from(v)),
            "test_data" => self.test_data = Some(PathBuf::from(v)),
            "synth_per_class" => self.synth_per_class = parse_num(key, v)?,
            "synth_seed" => self.synth_seed = parse_num(key, v)?,
            "split_ratio" => self.split_ratio = parse_num(key, v)?,
            "allow_weak_params" => self.allow_weak_params = parse_bool(key, v)?,
            "key" => self.key = Some(PathBuf::from(v)),
            "peer_key" => self.peer_key = Some(PathBuf::from(v)),
            "plots" => self.plots = parse_bool(key, v)?,
            "window_ms" => self.window_ms = parse_num(key, v)?,
            "timeout_s" => self.timeout_s = parse_num(key, v)?,
            other => return Err(AppError::Config(format!("unknown setting {other:?}"))),
        }
        Ok(())
    }

    pub fn parse_str(&mut self, text: &str) -> Result<(), AppError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| AppError::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::default();
        c.parse_str(&text)?;
        Ok(c)
    }

    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var(ENV_LISTEN) {
            self.listen = v;
        }
        if let Ok(v) = std::env::var(ENV_CONNECT) {
            self.connect = v;
        }
    }

    pub fn validate(&self) -> Result<(), AppError> {
        self.train.validate().map_err(|e| AppError::Config(e.to_string()))?;
        if let Some(p) = &self.train.he {
            if p.is_weak() && !self.allow_weak_params {
                return Err(AppError::Config(format!(
                    "HE parameters {p} use ring degree {} which is below common 128-bit security guidance; \
                     pass --allow-weak-params to run them anyway",
                    p.degree
                )));
            }
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(AppError::Config("split_ratio must lie in (0, 1)".into()));
        }
        if self.train_data.is_none() && self.synth_per_class == 0 {
            return Err(AppError::Config("synth_per_class must be positive".into()));
        }
        Ok(())
    }

    /// Training and test sets: loaded from disk, or synthetic when no path is set.
    pub fn datasets(&self) -> Result<(Dataset, Dataset), AppError> {
        let v = self.train.variant;
        match (&self.train_data, &self.test_data) {
            (Some(tr), Some(te)) => Ok((load_dataset(tr, Some(v))?, load_dataset(te, Some(v))?)),
            (Some(tr), None) => Ok(train_test_split(&load_dataset(tr, Some(v))?, self.split_ratio, self.train.seed)?),
            (None, _) => {
                let ds = generate_synth(&SynthSpec {
                    per_class: self.synth_per_class,
                    ..SynthSpec::for_variant(v, self.synth_seed)
                });
                Ok(train_test_split(&ds, self.split_ratio, self.train.seed)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_file_and_guard_weak_params() {
        let mut c = RunConfig::default();
        c.parse_str("# comment\nlr = 0.01\nbatch=8\nmode = split-he\nhe = 2048:18,18,18:16\nbe = true\n").unwrap();
        assert_eq!(c.train.lr, 0.01);
        assert_eq!(c.train.batch, 8);
        assert!(c.train.batched);
        let err = c.validate().unwrap_err();
        assert!(err.to_string().contains("allow-weak-params"));
        c.set("allow_weak_params", "yes").unwrap();
        c.validate().unwrap();
        assert!(c.parse_str("nonsense").is_err());
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("variant", "m9").is_err());
    }
}
