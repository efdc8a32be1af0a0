//! Local training and the two U-shaped split protocols.

mod client;
pub mod codec;
mod config;
mod local;
mod server;

pub use client::{ClientEngine, ClientReport};
pub use config::{Mode, TrainConfig};
pub use local::{train_local, LocalReport};
pub use server::{ServerEngine, ServerReport};

use crate::channel::ChannelError;
use crate::ckks::CkksError;
use crate::data::DataError;
use crate::nn::{bias_grad, cross_entropy, softmax, softmax_ce_grad, weight_grad, NnError, ServerModel, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Ckks(#[from] CkksError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl SplitError {
    pub fn is_config(&self) -> bool {
        matches!(self, SplitError::Config(_) | SplitError::Data(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub time_s: f64,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
    pub bytes_c2s: u64,
    pub bytes_s2c: u64,
}

/// Softmax, mean cross-entropy, logits gradient and correct-prediction count.
pub(crate) fn loss_and_grad(logits: &Tensor, y: &Tensor) -> Result<(f64, Tensor, usize), NnError> {
    let yhat = softmax(logits)?;
    let loss = cross_entropy(&yhat, y)?;
    let g = softmax_ce_grad(&yhat, y)?;
    let pred = crate::nn::model::argmax_rows(logits);
    let truth = crate::nn::model::argmax_rows(y);
    let hits = pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
    Ok((loss, g, hits))
}

/// `dJ/dW = a^T g` for the linear head.
pub fn head_weight_grad(a: &Tensor, g: &Tensor) -> Vec<f64> {
    weight_grad(a.data(), g.data(), a.dim(0), a.dim(1), g.dim(1))
}

/// Server-side update: bias gradient as the batch sum of `g`, input gradient
/// with the current weights, then one gradient-descent step.
/// Returns `(dJ/da(l), dJ/db)`.
pub fn server_step(server: &mut ServerModel, dw: &[f64], g: &Tensor, lr: f64) -> Result<(Tensor, Vec<f64>), NnError> {
    let db = bias_grad(g.data(), g.dim(0), g.dim(1));
    let da = server.input_grad(g)?;
    server.apply_gd(dw, &db, lr)?;
    Ok((da, db))
}

/// Batches of one epoch in the seeded order.
pub(crate) fn epoch_batches(n_samples: usize, batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    crate::data::epoch_order(n_samples, seed, epoch).chunks(batch).map(|c| c.to_vec()).collect()
}

/// Runs client and server in one process over an in-memory transport.
pub fn run_in_memory(
    cfg: &TrainConfig,
    train: &crate::data::Dataset,
    test: Option<&crate::data::Dataset>,
    record: bool,
) -> Result<(ClientReport, ServerReport), SplitError> {
    use crate::channel::{KeyRing, MemTransport, Role, SecureChannel, SystemClock};
    use rand::SeedableRng;
    use std::sync::Arc;

    let mut rng = rand_chacha::ChaCha20Rng::from_entropy();
    let ck = KeyRing::generate(&mut rng);
    let sk = KeyRing::generate(&mut rng);
    let (ct, st) = MemTransport::pair();
    let clock = Arc::new(SystemClock);
    let (cp, sp) = (ck.public(), sk.public());
    let cchan = SecureChannel::new(ct, Role::Client, ck, sp, clock.clone());
    let schan = SecureChannel::new(st, Role::Server, sk, cp, clock);
    let mut server = ServerEngine::new(cfg.clone(), schan)?;
    server.record_trajectory(record);
    let mut client = ClientEngine::new(cfg.clone(), cchan)?;
    client.record_trajectory(record);
    let h = std::thread::spawn(move || server.run());
    let c = client.run(train, test);
    drop(client);
    let s = h.join().map_err(|_| SplitError::Protocol("server thread panicked".into()))?;
    Ok((c?, s?))
}
