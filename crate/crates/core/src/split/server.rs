use crate::channel::{ChannelError, MsgType, SecureChannel, SyncParams, Transport};
use crate::ckks::{he_linear_batched, he_linear_per_row, EncryptedMatrix, PublicContext};
use crate::nn::model::NUM_CLASSES;
use crate::nn::{ModelParams, ServerModel, Tensor};

use super::codec::{decode_matrices, decode_matrix, encode_matrices, split2};
use super::{head_weight_grad, server_step, Mode, SplitError, TrainConfig};

#[derive(Clone, Debug)]
pub struct ServerReport {
    pub model: ServerModel,
    pub sync: SyncParams,
    pub batches: usize,
    pub epochs_seen: usize,
    /// Server parameters after every batch, when recording.
    pub trajectory: Vec<Vec<f64>>,
    /// Per epoch `(received, sent)` framed bytes.
    pub epoch_bytes: Vec<(u64, u64)>,
}

enum Pending {
    Idle,
    Plain(Tensor),
    He { rows: usize, first: bool },
}

/// Server side: owns the linear head and, in HE mode, only a public context.
pub struct ServerEngine<T: Transport> {
    cfg: TrainConfig,
    model: ServerModel,
    chan: SecureChannel<T>,
    he: Option<PublicContext>,
    record: bool,
    trajectory: Vec<Vec<f64>>,
    last_grad_out: Option<Tensor>,
    last_bias_grad: Option<Vec<f64>>,
}

impl<T: Transport> ServerEngine<T> {
    pub fn new(cfg: TrainConfig, chan: SecureChannel<T>) -> Result<Self, SplitError> {
        cfg.validate()?;
        if cfg.mode == Mode::Local {
            return Err(SplitError::Config("server engine needs a split mode".into()));
        }
        let model = ModelParams::init(cfg.variant, cfg.seed).server;
        Ok(Self {
            cfg,
            model,
            chan,
            he: None,
            record: false,
            trajectory: Vec::new(),
            last_grad_out: None,
            last_bias_grad: None,
        })
    }

    pub fn record_trajectory(&mut self, on: bool) {
        self.record = on;
    }

    pub fn channel(&self) -> &SecureChannel<T> {
        &self.chan
    }

    pub fn channel_mut(&mut self) -> &mut SecureChannel<T> {
        &mut self.chan
    }

    pub fn model(&self) -> &ServerModel {
        &self.model
    }

    /// `dJ/da(L)` of the last update and the bias gradient derived from it.
    pub fn last_gradients(&self) -> Option<(&Tensor, &[f64])> {
        Some((self.last_grad_out.as_ref()?, self.last_bias_grad.as_deref()?))
    }

    pub fn run(&mut self) -> Result<ServerReport, SplitError> {
        let r = self.run_inner();
        if let Err(e) = &r {
            log::warn!("server aborting: {e}");
        }
        r
    }

    fn run_inner(&mut self) -> Result<ServerReport, SplitError> {
        let cfg = self.cfg.clone();
        let sync = self.chan.server_sync(|p| {
            if p.lr.to_bits() != cfg.lr.to_bits() {
                return Err(format!("learning rate {} differs from {}", p.lr, cfg.lr));
            }
            if p.batch as usize != cfg.batch {
                return Err(format!("batch size {} differs from {}", p.batch, cfg.batch));
            }
            if p.epochs as usize != cfg.epochs {
                return Err(format!("epochs {} differ from {}", p.epochs, cfg.epochs));
            }
            if p.profile != cfg.profile() {
                return Err(format!(
                    "run profile {:?} differs from {:?}",
                    String::from_utf8_lossy(&p.profile),
                    String::from_utf8_lossy(&cfg.profile())
                ));
            }
            Ok(())
        })?;
        let mut pending = Pending::Idle;
        let mut batches = 0;
        let mut epoch_bytes = Vec::new();
        loop {
            let (ty, payload) = self.chan.recv()?;
            match (ty, self.cfg.mode) {
                (MsgType::TrainAm, Mode::SplitPlain) | (MsgType::EvalAm, Mode::SplitPlain) => {
                    expect_idle(&pending, ty)?;
                    let a = decode_matrix(&payload)?;
                    let out = self.model.forward(&a)?;
                    if ty == MsgType::TrainAm {
                        self.chan.send(MsgType::TrainOut, &encode_matrices(&[&out]))?;
                        pending = Pending::Plain(a);
                    } else {
                        self.chan.send(MsgType::EvalOut, &encode_matrices(&[&out]))?;
                    }
                }
                (MsgType::M1Setup, Mode::SplitHe) if self.he.is_none() => {
                    expect_idle(&pending, ty)?;
                    let (sealed, em_bytes) = split2(&payload)?;
                    let ctx_bytes = self.chan.open_from_peer(MsgType::M1Setup, sealed)?;
                    let ctx = PublicContext::from_bytes(&ctx_bytes)?;
                    if Some(ctx.params()) != self.cfg.he.as_ref() {
                        return Err(SplitError::Protocol("client HE parameters differ from the agreed set".into()));
                    }
                    self.he = Some(ctx);
                    let (rows, out) = self.he_forward(em_bytes)?;
                    self.chan.send(MsgType::M2Eval, &out)?;
                    pending = Pending::He { rows, first: true };
                }
                (MsgType::HeTrainAm, Mode::SplitHe) | (MsgType::HeEvalAm, Mode::SplitHe) if self.he.is_some() => {
                    expect_idle(&pending, ty)?;
                    let (rows, out) = self.he_forward(&payload)?;
                    if ty == MsgType::HeTrainAm {
                        self.chan.send(MsgType::HeTrainOut, &out)?;
                        pending = Pending::He { rows, first: false };
                    } else {
                        self.chan.send(MsgType::HeEvalOut, &out)?;
                    }
                }
                (MsgType::TrainGradOut, Mode::SplitPlain) => {
                    let a = match std::mem::replace(&mut pending, Pending::Idle) {
                        Pending::Plain(a) => a,
                        _ => return Err(out_of_order(ty)),
                    };
                    let g = decode_matrix(&payload)?;
                    if g.shape() != [a.dim(0), NUM_CLASSES] {
                        return Err(SplitError::Protocol(format!("output gradient shape {:?}", g.shape())));
                    }
                    let dw = head_weight_grad(&a, &g);
                    let da = self.update(&dw, g)?;
                    self.chan.send(MsgType::TrainGradAm, &encode_matrices(&[&da]))?;
                    batches += 1;
                }
                (MsgType::TrainGradOut, Mode::SplitHe) | (MsgType::M3Grad, Mode::SplitHe) => {
                    let (rows, first) = match std::mem::replace(&mut pending, Pending::Idle) {
                        Pending::He { rows, first } => (rows, first),
                        _ => return Err(out_of_order(ty)),
                    };
                    if first != (ty == MsgType::M3Grad) {
                        return Err(out_of_order(ty));
                    }
                    let mut ms = decode_matrices(&payload, 2)?;
                    let dw = ms.pop().unwrap();
                    let g = ms.pop().unwrap();
                    let d = self.cfg.variant.am_dim();
                    if g.shape() != [rows, NUM_CLASSES] || dw.shape() != [d, NUM_CLASSES] {
                        return Err(SplitError::Protocol("gradient shapes do not match the batch".into()));
                    }
                    let da = self.update(dw.data(), g)?;
                    let reply = if first { MsgType::M4GradPrime } else { MsgType::TrainGradAm };
                    self.chan.send(reply, &encode_matrices(&[&da]))?;
                    batches += 1;
                }
                (MsgType::EpochEnd, _) => {
                    expect_idle(&pending, ty)?;
                    let (sent, recv) = self.chan.meter_mut().take_epoch();
                    epoch_bytes.push((recv, sent));
                }
                (MsgType::Fin, _) => {
                    expect_idle(&pending, ty)?;
                    self.chan.acknowledge_fin()?;
                    break;
                }
                _ => return Err(out_of_order(ty)),
            }
        }
        Ok(ServerReport {
            model: self.model.clone(),
            sync,
            batches,
            epochs_seen: epoch_bytes.len(),
            trajectory: std::mem::take(&mut self.trajectory),
            epoch_bytes,
        })
    }

    fn update(&mut self, dw: &[f64], g: Tensor) -> Result<Tensor, SplitError> {
        let (da, db) = server_step(&mut self.model, dw, &g, self.cfg.lr)?;
        self.last_grad_out = Some(g);
        self.last_bias_grad = Some(db);
        if self.record {
            let l = &self.model.linear;
            self.trajectory.push(l.w.iter().chain(&l.b).copied().collect());
        }
        Ok(da)
    }

    fn he_forward(&self, bytes: &[u8]) -> Result<(usize, Vec<u8>), SplitError> {
        let ctx = self.he.as_ref().expect("public context");
        let em = EncryptedMatrix::from_bytes(bytes, ctx)?;
        let d = self.cfg.variant.am_dim();
        if em.cols != d {
            return Err(SplitError::Protocol(format!("encrypted activation map has {} columns", em.cols)));
        }
        let l = &self.model.linear;
        let out = if em.layout.is_batched() {
            he_linear_batched(ctx, &em, &l.w, d, NUM_CLASSES, &l.b)?
        } else {
            he_linear_per_row(ctx, &em, &l.w, d, NUM_CLASSES, &l.b)?
        };
        Ok((em.rows, out.to_bytes(ctx)))
    }
}

fn expect_idle(p: &Pending, ty: MsgType) -> Result<(), SplitError> {
    match p {
        Pending::Idle => Ok(()),
        _ => Err(out_of_order(ty)),
    }
}

fn out_of_order(ty: MsgType) -> SplitError {
    SplitError::Channel(ChannelError::UnexpectedMessage {
        expected: "message valid in the current protocol state".into(),
        got: ty,
    })
}
