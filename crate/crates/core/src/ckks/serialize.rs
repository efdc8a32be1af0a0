//! Canonical little-endian byte formats for ciphertexts, encrypted matrices
//! and contexts.
//!
//! Ciphertext: `"HSCT" | version u16 | N u32 | chain_len u16 | level u16 |
//! scale f64 | c0 limbs | c1 limbs`, each limb `N` u64 words in NTT form.

use super::context::{
    expand_uniform, full_basis, Ciphertext, GaloisKey, GaloisKeys, PrivateContext, PublicContext, PublicKey,
};
use super::encoding::Encoder;
use super::matrix::{EncryptedMatrix, Layout};
use super::params::HeParams;
use super::ring::{RingContext, RnsPoly};
use super::CkksError;
use std::collections::BTreeMap;
use std::sync::Arc;

const VERSION: u16 = 1;
pub const CT_HEADER_LEN: usize = 22;
pub const EM_HEADER_LEN: usize = 27;

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CkksError> {
        if self.buf.len() - self.pos < n {
            return Err(CkksError::Serialize("truncated input".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, CkksError> {
        Ok(self.take(1)?[0])
    }
    pub(crate) fn u16(&mut self) -> Result<u16, CkksError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    pub(crate) fn u32(&mut self) -> Result<u32, CkksError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn f64(&mut self) -> Result<f64, CkksError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn magic(&mut self, m: &[u8; 4]) -> Result<(), CkksError> {
        if self.take(4)? != m {
            return Err(CkksError::Serialize(format!("bad magic, expected {}", String::from_utf8_lossy(m))));
        }
        if self.u16()? != VERSION {
            return Err(CkksError::Serialize("unsupported version".into()));
        }
        Ok(())
    }

    fn limbs(&mut self, ring: &RingContext, basis: &[usize]) -> Result<RnsPoly, CkksError> {
        let n = ring.degree();
        let mut limbs = Vec::with_capacity(basis.len());
        for &idx in basis {
            let q = ring.modulus(idx).value();
            let raw = self.take(8 * n)?;
            let limb: Vec<u64> = raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
            if limb.iter().any(|&v| v >= q) {
                return Err(CkksError::Serialize("coefficient not reduced".into()));
            }
            limbs.push(limb);
        }
        Ok(RnsPoly { limbs })
    }

    pub(crate) fn finish(&self) -> Result<(), CkksError> {
        if self.pos != self.buf.len() {
            return Err(CkksError::Serialize(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_poly(out: &mut Vec<u8>, p: &RnsPoly) {
    for limb in &p.limbs {
        for &v in limb {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn put_limbs(out: &mut Vec<u8>, limbs: &[&[u64]]) {
    for limb in limbs {
        for &v in limb.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn ciphertext_size(degree: usize, level: usize) -> usize {
    CT_HEADER_LEN + 2 * (level + 1) * degree * 8
}

pub trait SerializedSize {
    fn serialized_size(&self) -> usize;
}

impl SerializedSize for Ciphertext {
    fn serialized_size(&self) -> usize {
        ciphertext_size(self.c0.limbs[0].len(), self.level)
    }
}

impl SerializedSize for EncryptedMatrix {
    fn serialized_size(&self) -> usize {
        EM_HEADER_LEN + self.cts.iter().map(|c| c.serialized_size()).sum::<usize>()
    }
}

impl Ciphertext {
    pub fn write_to(&self, out: &mut Vec<u8>, chain_len: usize) {
        out.extend_from_slice(b"HSCT");
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.c0.limbs[0].len() as u32).to_le_bytes());
        out.extend_from_slice(&(chain_len as u16).to_le_bytes());
        out.extend_from_slice(&(self.level as u16).to_le_bytes());
        out.extend_from_slice(&self.scale.to_le_bytes());
        put_poly(out, &self.c0);
        put_poly(out, &self.c1);
    }

    pub fn to_bytes(&self, ctx: &PublicContext) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_size());
        self.write_to(&mut out, ctx.ring().chain_len());
        out
    }

    pub(crate) fn read_from(r: &mut Reader<'_>, ring: &RingContext) -> Result<Self, CkksError> {
        r.magic(b"HSCT")?;
        let n = r.u32()? as usize;
        let chain = r.u16()? as usize;
        let level = r.u16()? as usize;
        let scale = r.f64()?;
        if n != ring.degree() || chain != ring.chain_len() {
            return Err(CkksError::Serialize("ciphertext parameters differ from context".into()));
        }
        if level > ring.top_level() || !(scale.is_finite() && scale > 0.0) {
            return Err(CkksError::Serialize("invalid level or scale".into()));
        }
        let basis = ring.level_basis(level);
        let c0 = r.limbs(ring, &basis)?;
        let c1 = r.limbs(ring, &basis)?;
        Ok(Ciphertext { c0, c1, scale, level })
    }

    pub fn from_bytes(bytes: &[u8], ctx: &PublicContext) -> Result<Self, CkksError> {
        let mut r = Reader::new(bytes);
        let ct = Self::read_from(&mut r, ctx.ring())?;
        r.finish()?;
        Ok(ct)
    }
}

impl EncryptedMatrix {
    pub fn to_bytes(&self, ctx: &PublicContext) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_size());
        out.extend_from_slice(b"HSEM");
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.layout.tag());
        let (a, b) = match self.layout {
            Layout::PerRow { stride, copies } => (stride, copies),
            Layout::PerRowStrided { stride, per_ct } => (stride, per_ct),
            Layout::Batched => (0, 0),
        };
        for v in [a, b, self.rows, self.cols, self.cts.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for ct in &self.cts {
            ct.write_to(&mut out, ctx.ring().chain_len());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], ctx: &PublicContext) -> Result<Self, CkksError> {
        let mut r = Reader::new(bytes);
        r.magic(b"HSEM")?;
        let tag = r.u8()?;
        let a = r.u32()? as usize;
        let b = r.u32()? as usize;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let count = r.u32()? as usize;
        let layout = match tag {
            0 => Layout::PerRow { stride: a, copies: b },
            1 => Layout::PerRowStrided { stride: a, per_ct: b },
            2 => Layout::Batched,
            t => return Err(CkksError::Serialize(format!("unknown layout tag {t}"))),
        };
        if let Layout::PerRow { stride, copies } | Layout::PerRowStrided { stride, per_ct: copies } = layout {
            if stride == 0 || copies == 0 || stride * copies > ctx.slots() {
                return Err(CkksError::Serialize("invalid layout geometry".into()));
            }
        }
        let per_ct = ciphertext_size(ctx.ring().degree(), 0);
        if count.saturating_mul(per_ct) > bytes.len() {
            return Err(CkksError::Serialize("ciphertext count exceeds payload".into()));
        }
        let mut cts = Vec::with_capacity(count);
        for _ in 0..count {
            cts.push(Ciphertext::read_from(&mut r, ctx.ring())?);
        }
        r.finish()?;
        let em = EncryptedMatrix { layout, rows, cols, cts };
        if em.cts.len() != em.expected_count() {
            return Err(CkksError::Serialize("ciphertext count does not match layout".into()));
        }
        Ok(em)
    }
}

fn write_params(out: &mut Vec<u8>, p: &HeParams) {
    out.extend_from_slice(&(p.degree as u32).to_le_bytes());
    out.push(p.chain_bits.len() as u8);
    for &b in &p.chain_bits {
        out.push(b as u8);
    }
    out.push(p.scale_bits as u8);
}

fn read_params(r: &mut Reader<'_>) -> Result<HeParams, CkksError> {
    let degree = r.u32()? as usize;
    let len = r.u8()? as usize;
    let chain: Vec<u32> = r.take(len)?.iter().map(|&b| b as u32).collect();
    let scale_bits = r.u8()? as u32;
    HeParams::new(degree, &chain, scale_bits).map_err(|e| CkksError::Serialize(e.to_string()))
}

impl PublicContext {
    /// Public export: parameters, public key and Galois keys. The uniform
    /// halves of all keys travel as 32-byte seeds.
    pub fn to_bytes(&self) -> Vec<u8> {
        let ring = self.ring();
        let mut out = Vec::new();
        out.extend_from_slice(b"HSPC");
        out.extend_from_slice(&VERSION.to_le_bytes());
        write_params(&mut out, self.params());
        out.extend_from_slice(&self.pk.seed);
        put_poly(&mut out, &self.pk.b);
        out.extend_from_slice(&(self.galois.keys.len() as u32).to_le_bytes());
        for (&step, key) in &self.galois.keys {
            out.extend_from_slice(&(step as u32).to_le_bytes());
            out.extend_from_slice(&key.seed);
            for b in &key.b {
                let limbs: Vec<&[u64]> = b.limbs.iter().map(|l| l.as_slice()).collect();
                put_limbs(&mut out, &limbs);
            }
        }
        debug_assert!(ring.chain_len() > 0);
        out
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self, CkksError> {
        r.magic(b"HSPC")?;
        let params = read_params(r)?;
        let ring = Arc::new(RingContext::new(&params)?);
        let encoder = Arc::new(Encoder::new(params.degree));
        let top = ring.level_basis(ring.top_level());
        let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
        let b = r.limbs(&ring, &top)?;
        let a = expand_uniform(&ring, &seed, 0, &top);
        let count = r.u32()? as usize;
        let full = full_basis(&ring);
        let key_bytes = ring.chain_len() * full.len() * ring.degree() * 8;
        if count.saturating_mul(key_bytes) > r.buf.len() {
            return Err(CkksError::Serialize("Galois key count exceeds payload".into()));
        }
        let mut keys = BTreeMap::new();
        for _ in 0..count {
            let step = r.u32()? as usize;
            if step == 0 || step >= ring.slots() {
                return Err(CkksError::Serialize(format!("invalid rotation step {step}")));
            }
            let kseed: [u8; 32] = r.take(32)?.try_into().unwrap();
            let mut bs = Vec::with_capacity(ring.chain_len());
            let mut as_ = Vec::with_capacity(ring.chain_len());
            for j in 0..ring.chain_len() {
                bs.push(r.limbs(&ring, &full)?);
                as_.push(expand_uniform(&ring, &kseed, j as u64, &full));
            }
            keys.insert(step, GaloisKey { galois_elt: ring.galois_element(step as i64), seed: kseed, b: bs, a: as_ });
        }
        Ok(PublicContext { ring, encoder, pk: PublicKey { seed, b, a }, galois: GaloisKeys { keys } })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CkksError> {
        let mut r = Reader::new(bytes);
        let ctx = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(ctx)
    }
}

impl PrivateContext {
    /// Explicit private export, including the secret key.
    pub fn to_private_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"HSSK");
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.secret_coeffs().len() as u32).to_le_bytes());
        out.extend(self.secret_coeffs().iter().map(|&c| c as i8 as u8));
        out.extend_from_slice(&self.public_ref().to_bytes());
        out
    }

    pub fn from_private_bytes(bytes: &[u8]) -> Result<Self, CkksError> {
        let mut r = Reader::new(bytes);
        r.magic(b"HSSK")?;
        let degree = r.u32()? as usize;
        if !super::params::SUPPORTED_DEGREES.contains(&degree) {
            return Err(CkksError::Serialize("unsupported degree".into()));
        }
        let raw = r.take(degree)?;
        let coeffs: Vec<i64> = raw.iter().map(|&b| b as i8 as i64).collect();
        if coeffs.iter().any(|c| c.abs() > 1) {
            return Err(CkksError::Serialize("secret key is not ternary".into()));
        }
        let public = PublicContext::read_from(&mut r)?;
        r.finish()?;
        if public.ring().degree() != degree {
            return Err(CkksError::Serialize("secret key length does not match degree".into()));
        }
        Ok(PrivateContext::from_parts(public, coeffs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::matrix::batch_encrypt_matrix;
    use crate::ckks::{keygen, Decryptor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ciphertext_roundtrip_and_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let ctx = keygen(&HeParams::new(4096, &[40, 20, 20], 21).unwrap(), &[], &mut rng).unwrap();
        let ct = ctx.encrypt_values(&[1.0, -2.0], &mut rng).unwrap();
        let bytes = ct.to_bytes(&ctx);
        assert_eq!(bytes.len(), ct.serialized_size());
        assert_eq!(bytes.len(), 22 + 2 * 3 * 4096 * 8);
        let back = Ciphertext::from_bytes(&bytes, &ctx).unwrap();
        assert_eq!(back.c0, ct.c0);
        assert_eq!(back.c1, ct.c1);
        assert!(Ciphertext::from_bytes(&bytes[..bytes.len() - 1], &ctx).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Ciphertext::from_bytes(&bad, &ctx).is_err());
    }

    #[test]
    fn size_grows_linearly_with_degree() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut sizes = Vec::new();
        for n in [2048, 4096, 8192] {
            let ctx = keygen(&HeParams::new(n, &[30, 30, 30], 25).unwrap(), &[], &mut rng).unwrap();
            let ct = ctx.encrypt_values(&[1.0], &mut rng).unwrap();
            sizes.push(ct.serialized_size() - CT_HEADER_LEN);
            assert_eq!(ct.serialized_size(), ct.to_bytes(&ctx).len());
        }
        assert_eq!(sizes[1], 2 * sizes[0]);
        assert_eq!(sizes[2], 2 * sizes[1]);
    }

    #[test]
    fn matrix_and_context_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let ctx = keygen(&HeParams::new(2048, &[30, 25, 25], 20).unwrap(), &[1, 2], &mut rng).unwrap();
        let m: Vec<f64> = (0..6).map(|i| i as f64 / 10.0).collect();
        let em = batch_encrypt_matrix(&ctx, &m, 2, 3, Layout::Batched, &mut rng).unwrap();
        let bytes = em.to_bytes(&ctx);
        assert_eq!(bytes.len(), em.serialized_size());
        let back = EncryptedMatrix::from_bytes(&bytes, &ctx).unwrap();
        assert_eq!(back.cts.len(), 3);

        let pub_bytes = ctx.public_ref().to_bytes();
        let pubc = PublicContext::from_bytes(&pub_bytes).unwrap();
        assert_eq!(pubc.galois_keys().steps(), vec![1, 2]);
        assert!(pubc.decrypt(&em.cts[0]).is_err());
        // ciphertexts made with the imported key decrypt under the original
        let ct = pubc.encrypt_values(&[0.25], &mut rng).unwrap();
        let r = pubc.rotate(&ct, 0).unwrap();
        assert!((ctx.decrypt_values(&r).unwrap()[0] - 0.25).abs() < 5e-2);
        let x = pubc.encrypt_values(&[1.0, 2.0, 3.0, 4.0], &mut rng).unwrap();
        let rot = pubc.rotate(&x, 3).unwrap();
        assert!((ctx.decrypt_values(&rot).unwrap()[0] - 4.0).abs() < 5e-2);

        let priv_bytes = ctx.to_private_bytes();
        let restored = PrivateContext::from_private_bytes(&priv_bytes).unwrap();
        assert_eq!(restored.secret_coeffs(), ctx.secret_coeffs());
        // the public export never contains the secret key
        let sk: Vec<u8> = ctx.secret_coeffs().iter().map(|&c| c as i8 as u8).collect();
        assert!(!pub_bytes.windows(sk.len()).any(|w| w == sk.as_slice()));
    }
}
