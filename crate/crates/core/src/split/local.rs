use std::time::Instant;

use crate::data::Dataset;
use crate::nn::{accuracy, ActivationCache, ModelParams};

use super::{epoch_batches, head_weight_grad, loss_and_grad, server_step, EpochMetrics, Mode, SplitError, TrainConfig};

#[derive(Clone, Debug)]
pub struct LocalReport {
    pub params: ModelParams,
    pub metrics: Vec<EpochMetrics>,
    /// Flattened parameters after every batch, when requested.
    pub trajectory: Vec<Vec<f64>>,
}

/// Trains the whole network in one process with the same optimizer split
/// as the split protocol.
pub fn train_local(
    cfg: &TrainConfig,
    train: &Dataset,
    test: Option<&Dataset>,
    record: bool,
) -> Result<LocalReport, SplitError> {
    cfg.validate()?;
    if cfg.mode != Mode::Local {
        return Err(SplitError::Config(format!("train_local called in {} mode", cfg.mode.name())));
    }
    train.check_variant(cfg.variant)?;
    if let Some(t) = test {
        t.check_variant(cfg.variant)?;
    }
    let mut params = ModelParams::init(cfg.variant, cfg.seed);
    let mut adam = params.client.new_adam(cfg.lr);
    let mut cache = ActivationCache::default();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut trajectory = Vec::new();

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let (mut loss_sum, mut hits) = (0.0, 0);
        for idx in epoch_batches(train.len(), cfg.batch, cfg.seed, epoch) {
            let (x, y) = train.batch(&idx);
            let am = params.client.forward(&x, &mut cache)?;
            let logits = params.server.forward(&am)?;
            let (loss, g, h) = loss_and_grad(&logits, &y)?;
            loss_sum += loss * idx.len() as f64;
            hits += h;
            let dw = head_weight_grad(&am, &g);
            let (da, _) = server_step(&mut params.server, &dw, &g, cfg.lr)?;
            let cg = params.client.backward(&cache, &da)?;
            params.client.apply_adam(&mut adam, &cg)?;
            if record {
                trajectory.push(params.flatten());
            }
        }
        let test_acc = match test {
            Some(t) => Some(accuracy(&params.predict(&t.x, cfg.eval_chunk)?, &t.y)),
            None => None,
        };
        metrics.push(EpochMetrics {
            epoch: epoch + 1,
            time_s: start.elapsed().as_secs_f64(),
            loss: loss_sum / train.len() as f64,
            train_acc: 100.0 * hits as f64 / train.len() as f64,
            test_acc,
            bytes_c2s: 0,
            bytes_s2c: 0,
        });
    }
    Ok(LocalReport { params, metrics, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synth, SynthSpec};
    use crate::nn::ModelVariant;

    fn data() -> Dataset {
        generate_synth(&SynthSpec { per_class: 40, ..SynthSpec::for_variant(ModelVariant::M1, 1) })
    }

    #[test]
    fn deterministic_and_learning() {
        let ds = data();
        let cfg = TrainConfig { epochs: 1, seed: 3, ..Default::default() };
        let a = train_local(&cfg, &ds, None, false).unwrap();
        let b = train_local(&cfg, &ds, None, false).unwrap();
        assert_eq!(a.params, b.params);

        let untrained = ModelParams::init(cfg.variant, cfg.seed);
        let loss = |p: &ModelParams| {
            let (x, y) = ds.batch(&(0..ds.len()).collect::<Vec<_>>());
            loss_and_grad(&p.logits(&x).unwrap(), &y).unwrap().0
        };
        assert!(loss(&a.params) < loss(&untrained));
    }

    #[test]
    fn zero_learning_rate_keeps_params() {
        let cfg = TrainConfig { epochs: 1, lr: 0.0, ..Default::default() };
        let r = train_local(&cfg, &data(), None, false).unwrap();
        assert_eq!(r.params, ModelParams::init(cfg.variant, cfg.seed));
    }
}
