use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::channel::{MsgType, SecureChannel, SyncParams, Transport};
use crate::ckks::{
    batch_decrypt_matrix, batch_encrypt_matrix, keygen, linear_rotation_steps, EncryptedMatrix, Layout, PrivateContext,
};
use crate::data::Dataset;
use crate::nn::model::{argmax_rows, NUM_CLASSES};
use crate::nn::{accuracy, ActivationCache, AdamState, ClientModel, ModelParams, Tensor};

use super::codec::{decode_matrix, encode_matrices, join2};
use super::{epoch_batches, head_weight_grad, loss_and_grad, EpochMetrics, Mode, SplitError, TrainConfig};

const HE_SEED_TAG: u64 = 0x4845_4b45_5953_0001;

#[derive(Clone, Debug)]
pub struct ClientReport {
    pub model: ClientModel,
    pub metrics: Vec<EpochMetrics>,
    /// Client parameters after every batch, when recording.
    pub trajectory: Vec<Vec<f64>>,
    /// Ciphertexts sent per training batch (HE mode).
    pub cts_per_batch: Vec<usize>,
}

/// Client side: holds the data, labels, conv layers and (in HE mode) the secret key.
pub struct ClientEngine<T: Transport> {
    cfg: TrainConfig,
    model: ClientModel,
    adam: AdamState,
    cache: ActivationCache,
    chan: SecureChannel<T>,
    he: Option<PrivateContext>,
    he_rng: ChaCha20Rng,
    keys_sent: bool,
    synced: bool,
    record: bool,
    trajectory: Vec<Vec<f64>>,
    cts_per_batch: Vec<usize>,
}

impl<T: Transport> ClientEngine<T> {
    pub fn new(cfg: TrainConfig, chan: SecureChannel<T>) -> Result<Self, SplitError> {
        cfg.validate()?;
        if cfg.mode == Mode::Local {
            return Err(SplitError::Config("client engine needs a split mode".into()));
        }
        let model = ModelParams::init(cfg.variant, cfg.seed).client;
        let adam = model.new_adam(cfg.lr);
        // HE randomness is derived from the run seed so runs are reproducible.
        let mut he_rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ HE_SEED_TAG);
        let he = match (&cfg.mode, &cfg.he) {
            (Mode::SplitHe, Some(p)) => {
                let rot = if cfg.batched { vec![] } else { linear_rotation_steps(cfg.variant.am_dim(), p.slots()) };
                Some(keygen(p, &rot, &mut he_rng)?)
            }
            _ => None,
        };
        Ok(Self {
            cfg,
            model,
            adam,
            cache: ActivationCache::default(),
            chan,
            he,
            he_rng,
            keys_sent: false,
            synced: false,
            record: false,
            trajectory: Vec::new(),
            cts_per_batch: Vec::new(),
        })
    }

    pub fn record_trajectory(&mut self, on: bool) {
        self.record = on;
    }

    pub fn channel(&self) -> &SecureChannel<T> {
        &self.chan
    }

    pub fn model(&self) -> &ClientModel {
        &self.model
    }

    pub fn he_context(&self) -> Option<&PrivateContext> {
        self.he.as_ref()
    }

    /// Agrees on hyperparameters with the server.
    pub fn sync(&mut self, samples: usize) -> Result<SyncParams, SplitError> {
        let p = SyncParams {
            lr: self.cfg.lr,
            batch: self.cfg.batch as u32,
            samples: samples as u64,
            epochs: self.cfg.epochs as u32,
            profile: self.cfg.profile(),
        };
        let agreed = self.chan.client_sync(&p)?;
        self.synced = true;
        Ok(agreed)
    }

    pub fn run(&mut self, train: &Dataset, test: Option<&Dataset>) -> Result<ClientReport, SplitError> {
        let r = self.run_inner(train, test);
        if r.is_err() {
            log::warn!("client aborting: {}", r.as_ref().err().unwrap());
        }
        r
    }

    fn run_inner(&mut self, train: &Dataset, test: Option<&Dataset>) -> Result<ClientReport, SplitError> {
        train.check_variant(self.cfg.variant)?;
        if let Some(t) = test {
            t.check_variant(self.cfg.variant)?;
        }
        if !self.synced {
            self.sync(train.len())?;
        }
        let mut metrics = Vec::with_capacity(self.cfg.epochs);
        for epoch in 0..self.cfg.epochs {
            let start = Instant::now();
            let (mut loss_sum, mut hits) = (0.0, 0);
            for idx in epoch_batches(train.len(), self.cfg.batch, self.cfg.seed, epoch) {
                let (x, y) = train.batch(&idx);
                let (loss, h) = self.train_batch(&x, &y)?;
                loss_sum += loss * idx.len() as f64;
                hits += h;
                if self.record {
                    self.trajectory.push(self.flatten());
                }
            }
            let test_acc = match test {
                Some(t) => Some(self.evaluate(t)?),
                None => None,
            };
            self.chan.send(MsgType::EpochEnd, &(epoch as u32).to_le_bytes())?;
            let (c2s, s2c) = self.chan.meter_mut().take_epoch();
            metrics.push(EpochMetrics {
                epoch: epoch + 1,
                time_s: start.elapsed().as_secs_f64(),
                loss: loss_sum / train.len() as f64,
                train_acc: 100.0 * hits as f64 / train.len() as f64,
                test_acc,
                bytes_c2s: c2s,
                bytes_s2c: s2c,
            });
        }
        self.chan.finish()?;
        Ok(ClientReport {
            model: self.model.clone(),
            metrics,
            trajectory: std::mem::take(&mut self.trajectory),
            cts_per_batch: std::mem::take(&mut self.cts_per_batch),
        })
    }

    fn flatten(&self) -> Vec<f64> {
        let m = &self.model;
        [&m.conv1.w, &m.conv1.b, &m.conv2.w, &m.conv2.b].iter().flat_map(|b| b.iter().copied()).collect()
    }

    fn layout(&self, ctx: &PrivateContext) -> Result<Layout, SplitError> {
        Ok(if self.cfg.batched {
            Layout::Batched
        } else {
            Layout::per_row_for(self.cfg.variant.am_dim(), NUM_CLASSES, ctx.slots())?
        })
    }

    fn encrypt_am(&mut self, am: &Tensor) -> Result<(EncryptedMatrix, Vec<u8>), SplitError> {
        let ctx = self.he.as_ref().expect("HE context");
        let layout = self.layout(ctx)?;
        let em = batch_encrypt_matrix(ctx, am.data(), am.dim(0), am.dim(1), layout, &mut self.he_rng)?;
        let bytes = em.to_bytes(ctx);
        Ok((em, bytes))
    }

    fn decrypt_out(&self, bytes: &[u8], rows: usize) -> Result<Tensor, SplitError> {
        let ctx = self.he.as_ref().expect("HE context");
        let em = EncryptedMatrix::from_bytes(bytes, ctx)?;
        if em.rows != rows || em.cols != NUM_CLASSES {
            return Err(SplitError::Protocol(format!(
                "server returned a {}x{} result for {rows} rows",
                em.rows, em.cols
            )));
        }
        let v = batch_decrypt_matrix(ctx, &em)?;
        Ok(Tensor::new(&[rows, NUM_CLASSES], v)?)
    }

    /// Remote evaluation of the linear head on `am`; returns `a(L)`.
    fn remote_forward(&mut self, am: &Tensor, training: bool) -> Result<Tensor, SplitError> {
        let n = am.dim(0);
        match self.cfg.mode {
            Mode::SplitPlain => {
                let (req, resp) =
                    if training { (MsgType::TrainAm, MsgType::TrainOut) } else { (MsgType::EvalAm, MsgType::EvalOut) };
                self.chan.send(req, &encode_matrices(&[am]))?;
                let out = decode_matrix(&self.chan.expect(resp)?)?;
                if out.shape() != [n, NUM_CLASSES] {
                    return Err(SplitError::Protocol(format!("output shape {:?}", out.shape())));
                }
                Ok(out)
            }
            Mode::SplitHe => {
                let (em, bytes) = self.encrypt_am(am)?;
                if training {
                    self.cts_per_batch.push(em.len());
                }
                let resp = if !self.keys_sent {
                    // m1: sealed public context (evaluation keys) plus the encrypted AM
                    let ctx_bytes = self.he.as_ref().unwrap().public_ref().to_bytes();
                    let sealed = self.chan.seal_for_peer(MsgType::M1Setup, &ctx_bytes)?;
                    self.chan.send(MsgType::M1Setup, &join2(&sealed, &bytes))?;
                    self.keys_sent = true;
                    self.chan.expect(MsgType::M2Eval)?
                } else if training {
                    self.chan.send(MsgType::HeTrainAm, &bytes)?;
                    self.chan.expect(MsgType::HeTrainOut)?
                } else {
                    self.chan.send(MsgType::HeEvalAm, &bytes)?;
                    self.chan.expect(MsgType::HeEvalOut)?
                };
                self.decrypt_out(&resp, n)
            }
            Mode::Local => unreachable!(),
        }
    }

    /// One training step; returns the batch loss and correct predictions.
    pub fn train_batch(&mut self, x: &Tensor, y: &Tensor) -> Result<(f64, usize), SplitError> {
        let first_he = self.cfg.mode == Mode::SplitHe && !self.keys_sent;
        let am = self.model.forward(x, &mut self.cache)?;
        let out = self.remote_forward(&am, true)?;
        let (loss, g, hits) = loss_and_grad(&out, y)?;
        let da = match self.cfg.mode {
            Mode::SplitPlain => {
                self.chan.send(MsgType::TrainGradOut, &encode_matrices(&[&g]))?;
                self.chan.expect(MsgType::TrainGradAm)?
            }
            _ => {
                let dw = Tensor::new(&[am.dim(1), NUM_CLASSES], head_weight_grad(&am, &g))?;
                let payload = encode_matrices(&[&g, &dw]);
                let (req, resp) = if first_he {
                    (MsgType::M3Grad, MsgType::M4GradPrime)
                } else {
                    (MsgType::TrainGradOut, MsgType::TrainGradAm)
                };
                self.chan.send(req, &payload)?;
                self.chan.expect(resp)?
            }
        };
        let da = decode_matrix(&da)?;
        if da.shape() != am.shape() {
            return Err(SplitError::Protocol(format!("activation gradient shape {:?}", da.shape())));
        }
        let cg = self.model.backward(&self.cache, &da)?;
        self.model.apply_adam(&mut self.adam, &cg)?;
        Ok((loss, hits))
    }

    /// Test accuracy through the protocol, forward passes only.
    pub fn evaluate(&mut self, ds: &Dataset) -> Result<f64, SplitError> {
        let mut pred = Vec::with_capacity(ds.len());
        let mut start = 0;
        while start < ds.len() {
            let end = (start + self.cfg.eval_chunk).min(ds.len());
            let x = ds.x.slice_rows(start, end);
            let mut cache = ActivationCache::default();
            let am = self.model.forward(&x, &mut cache)?;
            let out = self.remote_forward(&am, false)?;
            pred.extend(argmax_rows(&out));
            start = end;
        }
        Ok(accuracy(&pred, &ds.y))
    }
}
