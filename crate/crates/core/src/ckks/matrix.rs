//! Encrypted matrices and the encrypted linear layer.
//!
//! Two layouts are supported. Per-row packs one sample per ciphertext: the
//! row is zero padded to a power-of-two `stride` and replicated `copies`
//! times, which lets the linear layer produce `copies` outputs per
//! ciphertext with one plaintext product and `log2(stride)` rotations.
//! Batched packs one feature column of the batch per ciphertext; the linear
//! layer is then a sum of integer-scalar products with no rotation at all.

use super::context::{Ciphertext, PrivateContext, PublicContext};
use super::encoding::Plaintext;
use super::{CkksError, Decryptor};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// One ciphertext per row; entry `c` sits at slots `c + t*stride`, `t < copies`.
    PerRow { stride: usize, copies: usize },
    /// Per-row linear output; entry `c` of a row sits in ciphertext
    /// `c / per_ct` of that row at slot `(c % per_ct) * stride`.
    PerRowStrided { stride: usize, per_ct: usize },
    /// One ciphertext per column; entry `r` at slot `r`.
    Batched,
}

impl Layout {
    /// Input layout for a `cols`-wide row feeding a layer with `out` outputs.
    pub fn per_row_for(cols: usize, out: usize, slots: usize) -> Result<Layout, CkksError> {
        let stride = cols.max(1).next_power_of_two();
        if stride > slots {
            return Err(CkksError::Capacity { needed: stride, available: slots });
        }
        let copies = (slots / stride).min(out.max(1));
        Ok(Layout::PerRow { stride, copies })
    }

    pub fn plain_rows(cols: usize) -> Layout {
        Layout::PerRow { stride: cols.max(1).next_power_of_two(), copies: 1 }
    }

    pub fn tag(&self) -> u8 {
        match self {
            Layout::PerRow { .. } => 0,
            Layout::PerRowStrided { .. } => 1,
            Layout::Batched => 2,
        }
    }

    pub fn is_batched(&self) -> bool {
        matches!(self, Layout::Batched)
    }

    fn cts_per_row(&self, cols: usize) -> usize {
        match *self {
            Layout::PerRow { .. } => 1,
            Layout::PerRowStrided { per_ct, .. } => cols.div_ceil(per_ct),
            Layout::Batched => 0,
        }
    }
}

/// Rotation steps the per-row linear layer needs for `in_dim` inputs.
pub fn linear_rotation_steps(in_dim: usize, slots: usize) -> Vec<i64> {
    let stride = in_dim.max(1).next_power_of_two().min(slots);
    let mut v = Vec::new();
    let mut s = 1;
    while s < stride {
        v.push(s as i64);
        s <<= 1;
    }
    v
}

#[derive(Clone, Debug)]
pub struct EncryptedMatrix {
    pub layout: Layout,
    pub rows: usize,
    pub cols: usize,
    pub cts: Vec<Ciphertext>,
}

impl EncryptedMatrix {
    pub fn len(&self) -> usize {
        self.cts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cts.is_empty()
    }

    pub(crate) fn expected_count(&self) -> usize {
        match self.layout {
            Layout::Batched => self.cols,
            l => self.rows * l.cts_per_row(self.cols),
        }
    }
}

/// Who encrypts: a public context uses the public key, a private context
/// encrypts symmetrically under its secret key (lower fresh noise).
pub trait Encryptor {
    fn public_ctx(&self) -> &PublicContext;
    fn encrypt_plain<R: Rng + ?Sized>(&self, pt: &Plaintext, rng: &mut R) -> Ciphertext;

    /// Encodes at the top level and default scale, then encrypts.
    fn encrypt_slots<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R) -> Result<Ciphertext, CkksError> {
        Ok(self.encrypt_plain(&self.public_ctx().encode(values)?, rng))
    }
}

impl Encryptor for PublicContext {
    fn public_ctx(&self) -> &PublicContext {
        self
    }
    fn encrypt_plain<R: Rng + ?Sized>(&self, pt: &Plaintext, rng: &mut R) -> Ciphertext {
        self.encrypt(pt, rng)
    }
}

impl Encryptor for PrivateContext {
    fn public_ctx(&self) -> &PublicContext {
        self.public_ref()
    }
    fn encrypt_plain<R: Rng + ?Sized>(&self, pt: &Plaintext, rng: &mut R) -> Ciphertext {
        self.encrypt_symmetric(pt, rng)
    }
    fn encrypt_slots<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R) -> Result<Ciphertext, CkksError> {
        self.encrypt_values_symmetric(values, rng)
    }
}

/// Encrypts a row-major `rows x cols` matrix in the given layout.
pub fn batch_encrypt_matrix<E: Encryptor, R: Rng + ?Sized>(
    enc: &E,
    m: &[f64],
    rows: usize,
    cols: usize,
    layout: Layout,
    rng: &mut R,
) -> Result<EncryptedMatrix, CkksError> {
    if m.len() != rows * cols {
        return Err(CkksError::Shape(format!("{} values for a {rows}x{cols} matrix", m.len())));
    }
    let ctx = enc.public_ctx();
    let slots = ctx.slots();
    let mut cts = Vec::new();
    match layout {
        Layout::PerRow { stride, copies } => {
            if stride < cols || stride * copies > slots || copies == 0 {
                return Err(CkksError::Capacity { needed: cols.max(stride * copies), available: slots });
            }
            let mut buf = vec![0.0; stride * copies];
            for r in 0..rows {
                let row = &m[r * cols..(r + 1) * cols];
                for t in 0..copies {
                    buf[t * stride..t * stride + cols].copy_from_slice(row);
                }
                cts.push(enc.encrypt_slots(&buf, rng)?);
            }
        }
        Layout::Batched => {
            if rows > slots {
                return Err(CkksError::Capacity { needed: rows, available: slots });
            }
            let mut col = vec![0.0; rows];
            for c in 0..cols {
                for (r, v) in col.iter_mut().enumerate() {
                    *v = m[r * cols + c];
                }
                cts.push(enc.encrypt_slots(&col, rng)?);
            }
        }
        Layout::PerRowStrided { .. } => {
            return Err(CkksError::Shape("strided layout is an evaluation output only".into()));
        }
    }
    Ok(EncryptedMatrix { layout, rows, cols, cts })
}

pub fn batch_decrypt_matrix(ctx: &PrivateContext, em: &EncryptedMatrix) -> Result<Vec<f64>, CkksError> {
    if em.cts.len() != em.expected_count() {
        return Err(CkksError::Shape(format!("{} ciphertexts, layout needs {}", em.cts.len(), em.expected_count())));
    }
    let (rows, cols) = (em.rows, em.cols);
    let mut out = vec![0.0; rows * cols];
    match em.layout {
        Layout::PerRow { .. } => {
            for r in 0..rows {
                let v = ctx.decrypt_values(&em.cts[r])?;
                out[r * cols..(r + 1) * cols].copy_from_slice(&v[..cols]);
            }
        }
        Layout::PerRowStrided { stride, per_ct } => {
            let per_row = em.layout.cts_per_row(cols);
            for r in 0..rows {
                for g in 0..per_row {
                    let v = ctx.decrypt_values(&em.cts[r * per_row + g])?;
                    for t in 0..per_ct {
                        let c = g * per_ct + t;
                        if c < cols {
                            out[r * cols + c] = v[t * stride];
                        }
                    }
                }
            }
        }
        Layout::Batched => {
            for c in 0..cols {
                let v = ctx.decrypt_values(&em.cts[c])?;
                for r in 0..rows {
                    out[r * cols + c] = v[r];
                }
            }
        }
    }
    Ok(out)
}

fn check_linear(em: &EncryptedMatrix, w: &[f64], in_dim: usize, out_dim: usize, b: &[f64]) -> Result<(), CkksError> {
    if em.cols != in_dim || w.len() != in_dim * out_dim || b.len() != out_dim {
        return Err(CkksError::Shape(format!(
            "input width {} with weights {}x{} (len {}) and bias {}",
            em.cols,
            in_dim,
            out_dim,
            w.len(),
            b.len()
        )));
    }
    if em.cts.len() != em.expected_count() {
        return Err(CkksError::Shape("ciphertext count does not match layout".into()));
    }
    if let Some(ct) = em.cts.first() {
        if ct.level == 0 {
            return Err(CkksError::Depth);
        }
    }
    Ok(())
}

/// `row_i * w + b` for every row, with `w` row-major `[in_dim, out_dim]`.
pub fn he_linear_per_row(
    ctx: &PublicContext,
    em: &EncryptedMatrix,
    w: &[f64],
    in_dim: usize,
    out_dim: usize,
    b: &[f64],
) -> Result<EncryptedMatrix, CkksError> {
    check_linear(em, w, in_dim, out_dim, b)?;
    let (stride, copies) = match em.layout {
        Layout::PerRow { stride, copies } => (stride, copies),
        _ => return Err(CkksError::Shape("per-row evaluation needs a per-row layout".into())),
    };
    let groups = out_dim.div_ceil(copies);
    let mut rot = Vec::new();
    let mut s = 1;
    while s < stride {
        rot.push(s as i64);
        s <<= 1;
    }
    for &r in &rot {
        ctx.rotation_plan(r)?;
    }
    let mut out_cts = Vec::with_capacity(em.rows * groups);
    // plaintexts depend only on level and scale; rows share them
    let mut cache: Option<(usize, Vec<Plaintext>, Vec<Plaintext>)> = None;
    for ct in &em.cts {
        if ct.level == 0 {
            return Err(CkksError::Depth);
        }
        let fresh = !matches!(&cache, Some((lvl, _, _)) if *lvl == ct.level);
        if fresh {
            let q = ctx.neutral_plain_scale(ct);
            let mut weights = Vec::with_capacity(groups);
            let mut biases = Vec::with_capacity(groups);
            for g in 0..groups {
                let mut wv = vec![0.0; stride * copies];
                let mut bv = vec![0.0; stride * copies];
                for t in 0..copies {
                    let c = g * copies + t;
                    if c >= out_dim {
                        break;
                    }
                    for k in 0..in_dim {
                        wv[t * stride + k] = w[k * out_dim + c];
                    }
                    bv[t * stride] = b[c];
                }
                weights.push(ctx.encode_at(&wv, q, ct.level)?);
                biases.push(ctx.encode_at(&bv, ct.scale, ct.level - 1)?);
            }
            cache = Some((ct.level, weights, biases));
        }
        let (_, weights, biases) = cache.as_ref().unwrap();
        for g in 0..groups {
            let mut acc = ctx.mul_plain_raw(ct, &weights[g])?;
            for &r in &rot {
                let shifted = ctx.rotate(&acc, r)?;
                ctx.add_assign(&mut acc, &shifted)?;
            }
            let mut res = ctx.rescale(&acc)?;
            res.scale = ct.scale;
            out_cts.push(ctx.add_plain(&res, &biases[g])?);
        }
    }
    Ok(EncryptedMatrix {
        layout: Layout::PerRowStrided { stride, per_ct: copies },
        rows: em.rows,
        cols: out_dim,
        cts: out_cts,
    })
}

/// Column-batched linear layer: output column `k` is
/// `sum_j col_j * w[j,k] + b[k]`, with the weights applied as integers.
pub fn he_linear_batched(
    ctx: &PublicContext,
    em: &EncryptedMatrix,
    w: &[f64],
    in_dim: usize,
    out_dim: usize,
    b: &[f64],
) -> Result<EncryptedMatrix, CkksError> {
    check_linear(em, w, in_dim, out_dim, b)?;
    if !em.layout.is_batched() {
        return Err(CkksError::Shape("batched evaluation needs a batched layout".into()));
    }
    let first = em.cts.first().ok_or_else(|| CkksError::Shape("no input ciphertexts".into()))?;
    let (level, scale) = (first.level, first.scale);
    for ct in &em.cts {
        if ct.level != level || ct.scale != scale {
            return Err(CkksError::Alignment("input columns at different levels or scales".into()));
        }
    }
    let ring = ctx.ring();
    let basis = ring.level_basis(level);
    let q_top = ring.chain_primes()[level] as f64;
    let n = ring.degree();
    // integer weights, reduced per limb once
    let ints: Vec<i128> = w.iter().map(|&v| (v * q_top).round() as i128).collect();
    let mut acc0 = vec![vec![vec![0u64; n]; basis.len()]; out_dim];
    let mut acc1 = acc0.clone();
    // coefficient blocks keep every output's accumulator in cache
    const BLOCK: usize = 1024;
    for (t, &idx) in basis.iter().enumerate() {
        let m = ring.modulus(idx);
        let q = m.value();
        let ws: Vec<(u64, u64)> = ints
            .iter()
            .map(|&s| {
                let sv = m.reduce_i128(s);
                (sv, m.shoup(sv))
            })
            .collect();
        for start in (0..n).step_by(BLOCK) {
            let end = (start + BLOCK).min(n);
            for (j, ct) in em.cts.iter().enumerate() {
                let (x0, x1) = (&ct.c0.limbs[t][start..end], &ct.c1.limbs[t][start..end]);
                for k in 0..out_dim {
                    let (sv, sh) = ws[j * out_dim + k];
                    if sv == 0 {
                        continue;
                    }
                    mul_acc_lazy(&mut acc0[k][t][start..end], x0, sv, sh, q);
                    mul_acc_lazy(&mut acc1[k][t][start..end], x1, sv, sh, q);
                }
            }
        }
    }
    for (k0, k1) in acc0.iter_mut().zip(acc1.iter_mut()) {
        for ((l0, l1), &idx) in k0.iter_mut().zip(k1.iter_mut()).zip(&basis) {
            let q = ring.modulus(idx).value();
            for v in l0.iter_mut().chain(l1.iter_mut()) {
                *v = (*v).min(v.wrapping_sub(q));
            }
        }
    }
    let mut out = Vec::with_capacity(out_dim);
    for (k, (l0, l1)) in acc0.into_iter().zip(acc1).enumerate() {
        let prod = Ciphertext {
            c0: super::ring::RnsPoly { limbs: l0 },
            c1: super::ring::RnsPoly { limbs: l1 },
            scale: scale * q_top,
            level,
        };
        let mut res = ctx.rescale(&prod)?;
        res.scale = scale;
        let bias = ctx.encode_at(&vec![b[k]; em.rows], scale, level - 1)?;
        out.push(ctx.add_plain(&res, &bias)?);
    }
    Ok(EncryptedMatrix { layout: Layout::Batched, rows: em.rows, cols: out_dim, cts: out })
}

/// `acc += x * s`, branch-free, with `acc` kept in `[0, 2q)`.
#[inline(always)]
fn mul_acc_lazy(acc: &mut [u64], x: &[u64], s: u64, s_shoup: u64, q: u64) {
    let two_q = 2 * q;
    for (a, &c) in acc.iter_mut().zip(x) {
        let hi = ((c as u128 * s_shoup as u128) >> 64) as u64;
        let p = c.wrapping_mul(s).wrapping_sub(hi.wrapping_mul(q));
        let v = *a + p;
        *a = v.min(v.wrapping_sub(two_q));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::{keygen, HeParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plain_linear(a: &[f64], n: usize, d: usize, w: &[f64], m: usize, b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for k in 0..m {
                let mut s = b[k];
                for j in 0..d {
                    s += a[i * d + j] * w[j * m + k];
                }
                out[i * m + k] = s;
            }
        }
        out
    }

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn rand_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn layout_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let p = HeParams::new(4096, &[40, 20, 20], 21).unwrap();
        let ctx = keygen(&p, &[], &mut rng).unwrap();
        let m = rand_vec(&mut rng, 6);
        let em = batch_encrypt_matrix(&ctx, &m, 2, 3, Layout::Batched, &mut rng).unwrap();
        assert_eq!(em.len(), 3);
        let em = batch_encrypt_matrix(&ctx, &m, 2, 3, Layout::plain_rows(3), &mut rng).unwrap();
        assert_eq!(em.len(), 2);
        let sq = rand_vec(&mut rng, 16);
        let em = batch_encrypt_matrix(&ctx, &sq, 4, 4, Layout::Batched, &mut rng).unwrap();
        assert_eq!(em.len(), 4);
    }

    #[test]
    fn roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = HeParams::new(8192, &[60, 40, 40, 60], 40).unwrap();
        let ctx = keygen(&p, &[], &mut rng).unwrap();
        let m = rand_vec(&mut rng, 4 * 256);
        for layout in [Layout::Batched, Layout::per_row_for(256, 5, ctx.slots()).unwrap()] {
            let em = batch_encrypt_matrix(&ctx, &m, 4, 256, layout, &mut rng).unwrap();
            let back = batch_decrypt_matrix(&ctx, &em).unwrap();
            assert!(max_err(&back, &m) < 1e-3);
        }
        let z = vec![0.0; 12];
        let em = batch_encrypt_matrix(&ctx, &z, 3, 4, Layout::Batched, &mut rng).unwrap();
        assert!(max_err(&batch_decrypt_matrix(&ctx, &em).unwrap(), &z) < 1e-6);
    }

    #[test]
    fn linear_layer_both_layouts_match_plaintext() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = HeParams::new(4096, &[40, 20, 20], 21).unwrap();
        let (n, d, m) = (4, 256, 5);
        let ctx = keygen(&p, &linear_rotation_steps(d, 2048), &mut rng).unwrap();
        let pubc = ctx.public();
        let a = rand_vec(&mut rng, n * d);
        let w = rand_vec(&mut rng, d * m);
        let b = rand_vec(&mut rng, m);
        let expect = plain_linear(&a, n, d, &w, m, &b);

        let em =
            batch_encrypt_matrix(&ctx, &a, n, d, Layout::per_row_for(d, m, ctx.slots()).unwrap(), &mut rng).unwrap();
        let out = he_linear_per_row(&pubc, &em, &w, d, m, &b).unwrap();
        assert_eq!(out.len(), n);
        let per_row = batch_decrypt_matrix(&ctx, &out).unwrap();
        assert!(max_err(&per_row, &expect) < 1e-2, "per-row error {}", max_err(&per_row, &expect));

        let em = batch_encrypt_matrix(&ctx, &a, n, d, Layout::Batched, &mut rng).unwrap();
        let out = he_linear_batched(&pubc, &em, &w, d, m, &b).unwrap();
        assert_eq!(out.len(), m);
        let batched = batch_decrypt_matrix(&ctx, &out).unwrap();
        assert!(max_err(&batched, &expect) < 1e-2, "batched error {}", max_err(&batched, &expect));
        assert!(max_err(&batched, &per_row) < 1e-2);
    }

    #[test]
    fn identity_and_bias_only_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = HeParams::new(4096, &[40, 20, 40], 20).unwrap();
        let (n, d) = (3, 8);
        let ctx = keygen(&p, &linear_rotation_steps(d, 2048), &mut rng).unwrap();
        let a = rand_vec(&mut rng, n * d);
        let mut eye = vec![0.0; d * d];
        for i in 0..d {
            eye[i * d + i] = 1.0;
        }
        let zero_b = vec![0.0; d];
        let bias = rand_vec(&mut rng, d);
        for layout in [Layout::per_row_for(d, d, ctx.slots()).unwrap(), Layout::Batched] {
            let em = batch_encrypt_matrix(&ctx, &a, n, d, layout, &mut rng).unwrap();
            let f = if layout.is_batched() { he_linear_batched } else { he_linear_per_row };
            let out = batch_decrypt_matrix(&ctx, &f(&ctx, &em, &eye, d, d, &zero_b).unwrap()).unwrap();
            assert!(max_err(&out, &a) < 1e-2);
            let out = batch_decrypt_matrix(&ctx, &f(&ctx, &em, &vec![0.0; d * d], d, d, &bias).unwrap()).unwrap();
            let expect: Vec<f64> = (0..n).flat_map(|_| bias.clone()).collect();
            assert!(max_err(&out, &expect) < 1e-2);
        }
    }

    #[test]
    fn multi_group_output_when_copies_are_short() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let p = HeParams::new(4096, &[40, 20, 40], 20).unwrap();
        let (n, d, m) = (2, 700, 5);
        let ctx = keygen(&p, &linear_rotation_steps(d, 2048), &mut rng).unwrap();
        let layout = Layout::per_row_for(d, m, ctx.slots()).unwrap();
        assert_eq!(layout, Layout::PerRow { stride: 1024, copies: 2 });
        let a = rand_vec(&mut rng, n * d);
        let w = rand_vec(&mut rng, d * m);
        let b = rand_vec(&mut rng, m);
        let em = batch_encrypt_matrix(&ctx, &a, n, d, layout, &mut rng).unwrap();
        let out = he_linear_per_row(&ctx, &em, &w, d, m, &b).unwrap();
        assert_eq!(out.len(), n * 3);
        let got = batch_decrypt_matrix(&ctx, &out).unwrap();
        assert!(max_err(&got, &plain_linear(&a, n, d, &w, m, &b)) < 1e-2);
    }

    #[test]
    fn missing_rotation_keys_and_depth() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let p = HeParams::new(4096, &[40, 20, 20], 21).unwrap();
        let ctx = keygen(&p, &[], &mut rng).unwrap();
        let a = vec![0.5; 8];
        let em = batch_encrypt_matrix(&ctx, &a, 1, 8, Layout::plain_rows(8), &mut rng).unwrap();
        let r = he_linear_per_row(&ctx, &em, &[1.0; 8], 8, 1, &[0.0]);
        assert!(matches!(r, Err(CkksError::Capability(_))));
        let mut em = batch_encrypt_matrix(&ctx, &a, 1, 8, Layout::Batched, &mut rng).unwrap();
        let w = vec![0.5; 64];
        for _ in 0..2 {
            em = he_linear_batched(&ctx, &em, &w, 8, 8, &[0.0; 8]).unwrap();
        }
        assert_eq!(he_linear_batched(&ctx, &em, &w, 8, 8, &[0.0; 8]).unwrap_err(), CkksError::Depth);
    }
}
