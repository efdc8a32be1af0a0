use crate::ckks::HeParams;
use crate::nn::ModelVariant;

use super::SplitError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Local,
    SplitPlain,
    SplitHe,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Local => "local",
            Mode::SplitPlain => "split-plain",
            Mode::SplitHe => "split-he",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "local" => Some(Mode::Local),
            "split-plain" | "plain" => Some(Mode::SplitPlain),
            "split-he" | "he" => Some(Mode::SplitHe),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub variant: ModelVariant,
    pub mode: Mode,
    pub he: Option<HeParams>,
    /// Column-batched encryption of the activation map.
    pub batched: bool,
    pub seed: u64,
    /// Rows per evaluation request.
    pub eval_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch: 4,
            epochs: 10,
            variant: ModelVariant::M1,
            mode: Mode::Local,
            he: None,
            batched: false,
            seed: 0,
            eval_chunk: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SplitError> {
        let bad = |m: String| Err(SplitError::Config(m));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("learning rate {} must be finite and non-negative", self.lr));
        }
        if self.batch == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.eval_chunk == 0 {
            return bad("eval chunk must be at least 1".into());
        }
        match (self.mode, &self.he) {
            (Mode::SplitHe, None) => return bad("split-he mode needs HE parameters".into()),
            (Mode::SplitHe, Some(p)) => {
                p.validate().map_err(|e| SplitError::Config(e.to_string()))?;
                if p.chain_bits.len() < 2 {
                    return bad("HE chain needs at least two primes for one multiplication".into());
                }
                let slots = p.slots();
                if self.batched && (self.batch > slots || self.eval_chunk > slots) {
                    return bad(format!("batched encryption holds at most {slots} rows per ciphertext"));
                }
                if !self.batched && self.variant.am_dim().next_power_of_two() > slots {
                    return bad(format!(
                        "activation map of {} values does not fit {slots} slots",
                        self.variant.am_dim()
                    ));
                }
            }
            (_, Some(_)) => return bad("HE parameters given for a non-HE mode".into()),
            _ => {}
        }
        Ok(())
    }

    /// Run settings both parties must agree on, beyond the SYNC scalars.
    pub fn profile(&self) -> Vec<u8> {
        let he = self.he.as_ref().map(|p| p.to_spec_string()).unwrap_or_default();
        format!(
            "variant={};mode={};be={};he={};seed={};eval={}",
            self.variant,
            self.mode.name(),
            self.batched as u8,
            he,
            self.seed,
            self.eval_chunk
        )
        .into_bytes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let mut c = TrainConfig::default();
        c.validate().unwrap();
        c.batch = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig { mode: Mode::SplitHe, ..Default::default() };
        assert!(c.validate().is_err());
        c.he = Some(HeParams::new(4096, &[40, 20, 20], 21).unwrap());
        c.validate().unwrap();
        c.mode = Mode::Local;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            mode: Mode::SplitHe,
            variant: ModelVariant::M3,
            he: Some(HeParams::new(2048, &[18, 18, 18], 16).unwrap()),
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
