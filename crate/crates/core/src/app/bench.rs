//! HE linear-layer benchmark: one batch of activation maps through encrypt,
//! server evaluation and decrypt, per parameter set and layout.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::ckks::{
    batch_decrypt_matrix, batch_encrypt_matrix, he_linear_batched, he_linear_per_row, keygen, linear_rotation_steps,
    HeParams, Layout,
};
use crate::nn::model::NUM_CLASSES;
use crate::nn::{Linear, Tensor};

use super::AppError;

#[derive(Clone, Debug)]
pub struct BenchRow {
    pub params: HeParams,
    pub batched: bool,
    pub rows: usize,
    pub cols: usize,
    pub ciphertexts: usize,
    pub bytes_am: usize,
    pub bytes_out: usize,
    pub keygen_s: f64,
    pub enc_s: f64,
    pub eval_s: f64,
    pub dec_s: f64,
    /// Mean encrypt + evaluate + decrypt + plaintext backward per batch.
    pub batch_s: f64,
    pub max_err: f64,
}

pub const BENCH_HEADER: &str =
    "ring_degree,chain,scale_bits,be,rows,cols,ciphertexts,bytes_am,bytes_out,keygen_s,enc_s,eval_s,dec_s,batch_s,max_err";

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.3e}",
            self.params.degree,
            self.params.chain_bits.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(" "),
            self.params.scale_bits,
            self.batched,
            self.rows,
            self.cols,
            self.ciphertexts,
            self.bytes_am,
            self.bytes_out,
            self.keygen_s,
            self.enc_s,
            self.eval_s,
            self.dec_s,
            self.batch_s,
            self.max_err
        )
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(BENCH_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

/// Times `reps` batches of shape `[rows, cols]` against a `[cols, 5]` head.
pub fn bench_one(
    p: &HeParams,
    batched: bool,
    rows: usize,
    cols: usize,
    reps: usize,
    seed: u64,
) -> Result<BenchRow, AppError> {
    let err = |e: crate::ckks::CkksError| AppError::Protocol(e.to_string());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut lin = Linear::zeros(cols, NUM_CLASSES);
    lin.w.iter_mut().for_each(|v| *v = rng.gen_range(-0.05..0.05));
    lin.b.iter_mut().for_each(|v| *v = rng.gen_range(-0.05..0.05));

    let t = Instant::now();
    let rot = if batched { vec![] } else { linear_rotation_steps(cols, p.slots()) };
    let ctx = keygen(p, &rot, &mut rng).map_err(err)?;
    let keygen_s = t.elapsed().as_secs_f64();
    let layout =
        if batched { Layout::Batched } else { Layout::per_row_for(cols, NUM_CLASSES, ctx.slots()).map_err(err)? };

    let reps = reps.max(1);
    let (mut enc_s, mut eval_s, mut dec_s, mut batch_s, mut max_err) = (0.0, 0.0, 0.0, 0.0, 0.0f64);
    let (mut cts, mut bytes_am, mut bytes_out) = (0, 0, 0);
    for _ in 0..reps {
        let a: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-0.2..1.0)).collect();
        let at = Tensor::new(&[rows, cols], a.clone()).map_err(|e| AppError::Protocol(e.to_string()))?;
        let plain = lin.forward(&at).map_err(|e| AppError::Protocol(e.to_string()))?;

        let t0 = Instant::now();
        let em = batch_encrypt_matrix(&ctx, &a, rows, cols, layout, &mut rng).map_err(err)?;
        let am_bytes = em.to_bytes(ctx.public_ref());
        let t1 = Instant::now();
        let out = if batched {
            he_linear_batched(ctx.public_ref(), &em, &lin.w, cols, NUM_CLASSES, &lin.b)
        } else {
            he_linear_per_row(ctx.public_ref(), &em, &lin.w, cols, NUM_CLASSES, &lin.b)
        }
        .map_err(err)?;
        let out_bytes = out.to_bytes(ctx.public_ref());
        let t2 = Instant::now();
        let dec = batch_decrypt_matrix(&ctx, &out).map_err(err)?;
        let t3 = Instant::now();
        // backward on the server stays in plaintext
        let g = Tensor::new(&[rows, NUM_CLASSES], dec.clone()).map_err(|e| AppError::Protocol(e.to_string()))?;
        let _ = lin.input_grad(&g);
        let t4 = Instant::now();

        enc_s += (t1 - t0).as_secs_f64();
        eval_s += (t2 - t1).as_secs_f64();
        dec_s += (t3 - t2).as_secs_f64();
        batch_s += (t4 - t0).as_secs_f64();
        cts = em.len();
        bytes_am = am_bytes.len();
        bytes_out = out_bytes.len();
        let e = dec.iter().zip(plain.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        max_err = max_err.max(e);
    }
    let r = reps as f64;
    Ok(BenchRow {
        params: p.clone(),
        batched,
        rows,
        cols,
        ciphertexts: cts,
        bytes_am,
        bytes_out,
        keygen_s,
        enc_s: enc_s / r,
        eval_s: eval_s / r,
        dec_s: dec_s / r,
        batch_s: batch_s / r,
        max_err,
    })
}

pub fn bench_sweep(
    sets: &[HeParams],
    layouts: &[bool],
    rows: usize,
    cols: usize,
    reps: usize,
    seed: u64,
    mut progress: impl FnMut(&BenchRow),
) -> Result<Vec<BenchRow>, AppError> {
    let mut out = Vec::new();
    for p in sets {
        for &be in layouts {
            let r = bench_one(p, be, rows, cols, reps, seed)?;
            progress(&r);
            out.push(r);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_set_reports_sizes() {
        let p = HeParams::new(4096, &[40, 20, 20], 21).unwrap();
        let r = bench_one(&p, false, 2, 32, 1, 1).unwrap();
        assert_eq!(r.ciphertexts, 2);
        assert!(r.bytes_am > 0 && r.bytes_out > 0);
        assert!(r.max_err < 1e-2, "{}", r.max_err);
        assert_eq!(bench_csv(&[r]).lines().count(), 2);
    }
}
