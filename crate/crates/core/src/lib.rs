pub mod app;
pub mod channel;
pub mod ckks;
pub mod data;
pub mod nn;
pub mod split;
