//! Leveled CKKS over `Z_Q[X]/(X^N + 1)` in RNS form.

pub mod context;
pub mod encoding;
pub mod matrix;
pub mod modarith;
pub mod ntt;
pub mod ops;
pub mod params;
pub mod ring;
pub mod serialize;

pub use context::{keygen, Ciphertext, Decryptor, GaloisKeys, PrivateContext, PublicContext};
pub use encoding::{Encoder, Plaintext};
pub use matrix::{
    batch_decrypt_matrix, batch_encrypt_matrix, he_linear_batched, he_linear_per_row, linear_rotation_steps,
    EncryptedMatrix, Encryptor, Layout,
};
pub use params::HeParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CkksError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("capacity exceeded: {needed} slots needed, {available} available")]
    Capacity { needed: usize, available: usize },
    #[error("capability error: {0}")]
    Capability(String),
    #[error("depth exhausted: ciphertext is at level 0")]
    Depth,
    #[error("operand mismatch: {0}")]
    Alignment(String),
    #[error("malformed serialization: {0}")]
    Serialize(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}
