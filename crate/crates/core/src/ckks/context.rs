//! Key material, contexts, encryption and decryption.
//!
//! `PublicContext` carries everything the evaluating party needs; the secret
//! key lives only in `PrivateContext`, which dereferences to its public part.

use super::encoding::{Encoder, Plaintext};
use super::params::HeParams;
use super::ring::{RingContext, RnsPoly};
use super::CkksError;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;
use std::ops::Deref;
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub(crate) c0: RnsPoly,
    pub(crate) c1: RnsPoly,
    pub scale: f64,
    pub level: usize,
}

#[derive(Clone, Debug)]
pub struct SecretKey {
    pub(crate) coeffs: Vec<i64>,
    // NTT form over every chain prime and the special prime
    pub(crate) poly: RnsPoly,
}

#[derive(Clone, Debug)]
pub struct PublicKey {
    pub(crate) seed: [u8; 32],
    pub(crate) b: RnsPoly,
    pub(crate) a: RnsPoly,
}

/// Switching key from `s(X^g)` to `s`, one digit per chain prime.
#[derive(Clone, Debug)]
pub struct GaloisKey {
    pub(crate) galois_elt: usize,
    pub(crate) seed: [u8; 32],
    pub(crate) b: Vec<RnsPoly>,
    pub(crate) a: Vec<RnsPoly>,
}

#[derive(Clone, Debug, Default)]
pub struct GaloisKeys {
    // keyed by left-rotation step in [1, slots)
    pub(crate) keys: BTreeMap<usize, GaloisKey>,
}

impl GaloisKeys {
    pub fn steps(&self) -> Vec<usize> {
        self.keys.keys().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }
}

/// Expands a seed into uniform polynomials, one per stream index.
pub(crate) fn expand_uniform(ring: &RingContext, seed: &[u8; 32], stream: u64, basis: &[usize]) -> RnsPoly {
    let mut rng = ChaCha20Rng::from_seed(*seed);
    rng.set_stream(stream);
    ring.sample_uniform(basis, &mut rng)
}

pub(crate) fn full_basis(ring: &RingContext) -> Vec<usize> {
    (0..=ring.special_index()).collect()
}

/// Restricts a full-basis key polynomial to `level` plus the special prime.
pub(crate) fn key_limbs<'a>(ring: &RingContext, poly: &'a RnsPoly, level: usize) -> Vec<&'a [u64]> {
    let mut v: Vec<&[u64]> = poly.limbs[..=level].iter().map(|l| l.as_slice()).collect();
    v.push(&poly.limbs[ring.special_index()]);
    v
}

#[derive(Clone, Debug)]
pub struct PublicContext {
    pub(crate) ring: Arc<RingContext>,
    pub(crate) encoder: Arc<Encoder>,
    pub(crate) pk: PublicKey,
    pub(crate) galois: GaloisKeys,
}

#[derive(Clone, Debug)]
pub struct PrivateContext {
    public: PublicContext,
    pub(crate) sk: SecretKey,
}

impl Deref for PrivateContext {
    type Target = PublicContext;
    fn deref(&self) -> &PublicContext {
        &self.public
    }
}

pub fn keygen<R: RngCore + ?Sized>(
    params: &HeParams,
    rotations: &[i64],
    rng: &mut R,
) -> Result<PrivateContext, CkksError> {
    let ring = Arc::new(RingContext::new(params)?);
    let encoder = Arc::new(Encoder::new(params.degree));
    let full = full_basis(&ring);
    let coeffs = ring.sample_ternary(rng);
    let s = ring.from_signed(&coeffs, &full);
    let sk = SecretKey { coeffs, poly: s };

    let top = ring.level_basis(ring.top_level());
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let a = expand_uniform(&ring, &seed, 0, &top);
    let e = ring.from_signed(&ring.sample_gaussian(rng), &top);
    let s_top = RnsPoly { limbs: sk.poly.limbs[..top.len()].to_vec() };
    let mut b = ring.mul(&a, &s_top, &top);
    ring.neg_assign(&mut b, &top);
    ring.add_assign(&mut b, &e, &top);
    let pk = PublicKey { seed, b, a };

    let mut ctx = PrivateContext { public: PublicContext { ring, encoder, pk, galois: GaloisKeys::default() }, sk };
    let mut steps: Vec<usize> =
        rotations.iter().map(|&r| r.rem_euclid(ctx.ring.slots() as i64) as usize).filter(|&r| r != 0).collect();
    steps.sort_unstable();
    steps.dedup();
    for step in steps {
        let key = ctx.make_galois_key(step, rng);
        ctx.public.galois.keys.insert(step, key);
    }
    Ok(ctx)
}

impl PrivateContext {
    fn make_galois_key<R: RngCore + ?Sized>(&self, step: usize, rng: &mut R) -> GaloisKey {
        let ring = &self.ring;
        let full = full_basis(ring);
        let g = ring.galois_element(step as i64);
        let s_rot = ring.apply_permutation(&self.sk.poly, &ring.galois_permutation(g));
        let p = ring.special_prime();
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let mut bs = Vec::with_capacity(ring.chain_len());
        let mut as_ = Vec::with_capacity(ring.chain_len());
        for j in 0..ring.chain_len() {
            let a = expand_uniform(ring, &seed, j as u64, &full);
            let e = ring.from_signed(&ring.sample_gaussian(rng), &full);
            let mut b = ring.mul(&a, &self.sk.poly, &full);
            ring.neg_assign(&mut b, &full);
            ring.add_assign(&mut b, &e, &full);
            let m = ring.modulus(j);
            let pj = m.reduce(p);
            for (u, &sv) in b.limbs[j].iter_mut().zip(&s_rot.limbs[j]) {
                *u = m.add(*u, m.mul(pj, sv));
            }
            bs.push(b);
            as_.push(a);
        }
        GaloisKey { galois_elt: g, seed, b: bs, a: as_ }
    }

    pub fn public(&self) -> PublicContext {
        self.public.clone()
    }

    pub fn public_ref(&self) -> &PublicContext {
        &self.public
    }

    /// Adds rotation keys after the fact.
    pub fn add_rotation_keys<R: RngCore + ?Sized>(&mut self, rotations: &[i64], rng: &mut R) {
        for &r in rotations {
            let step = r.rem_euclid(self.ring.slots() as i64) as usize;
            if step == 0 || self.public.galois.keys.contains_key(&step) {
                continue;
            }
            let key = self.make_galois_key(step, rng);
            self.public.galois.keys.insert(step, key);
        }
    }

    /// Symmetric-key encryption: `c = (-a*s + e + m, a)`.
    pub fn encrypt_symmetric<R: Rng + ?Sized>(&self, pt: &Plaintext, rng: &mut R) -> Ciphertext {
        let ring = &self.ring;
        let basis = ring.level_basis(pt.level);
        let a = ring.sample_uniform(&basis, rng);
        let e = ring.from_signed(&ring.sample_gaussian(rng), &basis);
        // the secret key's leading limbs line up with the level basis
        let mut c0 = ring.mul(&a, &self.sk.poly, &basis);
        ring.neg_assign(&mut c0, &basis);
        ring.add_assign(&mut c0, &e, &basis);
        ring.add_assign(&mut c0, &pt.poly, &basis);
        Ciphertext { c0, c1: a, scale: pt.scale, level: pt.level }
    }

    /// Same ciphertext as `encrypt_symmetric(encode(values))`, with the
    /// message and error added before the single forward transform.
    fn encrypt_coeffs_symmetric<R: Rng + ?Sized>(&self, mut coeffs: Vec<i128>, rng: &mut R) -> Ciphertext {
        let ring = &self.ring;
        let level = ring.top_level();
        let basis = ring.level_basis(level);
        let a = ring.sample_uniform(&basis, rng);
        for (c, e) in coeffs.iter_mut().zip(ring.sample_gaussian(rng)) {
            *c += e as i128;
        }
        let m = ring.from_i128(&coeffs, &basis);
        let mut c0 = ring.mul(&a, &self.sk.poly, &basis);
        ring.neg_assign(&mut c0, &basis);
        ring.add_assign(&mut c0, &m, &basis);
        Ciphertext { c0, c1: a, scale: self.scale(), level }
    }

    pub fn encrypt_values_symmetric<R: Rng + ?Sized>(
        &self,
        values: &[f64],
        rng: &mut R,
    ) -> Result<Ciphertext, CkksError> {
        let enc = self.encoder.encode_coeffs(values, self.scale())?;
        Ok(self.encrypt_coeffs_symmetric(enc.coeffs, rng))
    }

    pub fn secret_coeffs(&self) -> &[i64] {
        &self.sk.coeffs
    }

    pub(crate) fn from_parts(public: PublicContext, coeffs: Vec<i64>) -> Self {
        let full = full_basis(&public.ring);
        let poly = public.ring.from_signed(&coeffs, &full);
        Self { public, sk: SecretKey { coeffs, poly } }
    }
}

impl PublicContext {
    pub fn params(&self) -> &HeParams {
        &self.ring.params
    }

    pub fn ring(&self) -> &RingContext {
        &self.ring
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn slots(&self) -> usize {
        self.ring.slots()
    }

    pub fn scale(&self) -> f64 {
        self.ring.params.scale()
    }

    pub fn top_level(&self) -> usize {
        self.ring.top_level()
    }

    pub fn galois_keys(&self) -> &GaloisKeys {
        &self.galois
    }

    /// Encodes at the default scale and the top level.
    pub fn encode(&self, values: &[f64]) -> Result<Plaintext, CkksError> {
        Plaintext::encode(&self.ring, &self.encoder, values, self.scale(), self.top_level())
    }

    pub fn encode_at(&self, values: &[f64], scale: f64, level: usize) -> Result<Plaintext, CkksError> {
        Plaintext::encode(&self.ring, &self.encoder, values, scale, level)
    }

    pub fn decode(&self, pt: &Plaintext) -> Vec<f64> {
        pt.decode(&self.ring, &self.encoder)
    }

    /// Public-key encryption: `c = (v*b + e0 + m, v*a + e1)`.
    pub fn encrypt<R: Rng + ?Sized>(&self, pt: &Plaintext, rng: &mut R) -> Ciphertext {
        let ring = &self.ring;
        let basis = ring.level_basis(pt.level);
        let v = ring.from_signed(&ring.sample_ternary(rng), &basis);
        let e0 = ring.from_signed(&ring.sample_gaussian(rng), &basis);
        let e1 = ring.from_signed(&ring.sample_gaussian(rng), &basis);
        let take = |p: &RnsPoly| RnsPoly { limbs: p.limbs[..basis.len()].to_vec() };
        let mut c0 = ring.mul(&v, &take(&self.pk.b), &basis);
        ring.add_assign(&mut c0, &e0, &basis);
        ring.add_assign(&mut c0, &pt.poly, &basis);
        let mut c1 = ring.mul(&v, &take(&self.pk.a), &basis);
        ring.add_assign(&mut c1, &e1, &basis);
        Ciphertext { c0, c1, scale: pt.scale, level: pt.level }
    }

    pub fn encrypt_values<R: Rng + ?Sized>(&self, values: &[f64], rng: &mut R) -> Result<Ciphertext, CkksError> {
        let pt = self.encode(values)?;
        Ok(self.encrypt(&pt, rng))
    }
}

/// Decryption capability. Only `PrivateContext` actually holds it.
pub trait Decryptor {
    fn decrypt(&self, ct: &Ciphertext) -> Result<Plaintext, CkksError>;

    fn decrypt_values(&self, ct: &Ciphertext) -> Result<Vec<f64>, CkksError>;
}

impl Decryptor for PublicContext {
    fn decrypt(&self, _ct: &Ciphertext) -> Result<Plaintext, CkksError> {
        Err(CkksError::Capability("public context holds no secret key".into()))
    }

    fn decrypt_values(&self, ct: &Ciphertext) -> Result<Vec<f64>, CkksError> {
        self.decrypt(ct).map(|_| Vec::new())
    }
}

impl Decryptor for PrivateContext {
    fn decrypt(&self, ct: &Ciphertext) -> Result<Plaintext, CkksError> {
        let ring = &self.ring;
        if ct.level > ring.top_level() || ct.c0.num_limbs() != ct.level + 1 {
            return Err(CkksError::Alignment("ciphertext level does not match its limbs".into()));
        }
        let basis = ring.level_basis(ct.level);
        let s = RnsPoly { limbs: self.sk.poly.limbs[..basis.len()].to_vec() };
        let mut m = ring.mul(&ct.c1, &s, &basis);
        ring.add_assign(&mut m, &ct.c0, &basis);
        Ok(Plaintext { poly: m, scale: ct.scale, level: ct.level })
    }

    fn decrypt_values(&self, ct: &Ciphertext) -> Result<Vec<f64>, CkksError> {
        let pt = self.decrypt(ct)?;
        Ok(self.decode(&pt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn fused_symmetric_encryption_matches_the_two_step_path() {
        let p = HeParams::new(4096, &[40, 20, 20], 21).unwrap();
        let ctx = keygen(&p, &[], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let v = [0.5, -1.25, 3.0];
        let a = ctx.encrypt_values_symmetric(&v, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = ctx.encrypt_symmetric(&ctx.encode(&v).unwrap(), &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a.c0.limbs, b.c0.limbs);
        assert_eq!(a.c1.limbs, b.c1.limbs);
        assert_eq!((a.scale, a.level), (b.scale, b.level));
    }

    #[test]
    fn keygen_8192_set_and_empty_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = HeParams::new(4096, &[40, 20, 20], 21).unwrap();
        let ctx = keygen(&p, &[], &mut rng).unwrap();
        assert!(ctx.galois_keys().is_empty());
        let ctx = keygen(&p, &[1, -1, 4096 + 1], &mut rng).unwrap();
        assert_eq!(ctx.galois_keys().steps(), vec![1, 2047]);
    }

    #[test]
    fn public_key_roundtrip_at_large_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = HeParams::new(8192, &[60, 40, 40, 60], 40).unwrap();
        let ctx = keygen(&p, &[], &mut rng).unwrap();
        let pubc = ctx.public();
        let ct = pubc.encrypt_values(&[1.0, 2.0, 3.0], &mut rng).unwrap();
        let d = ctx.decrypt_values(&ct).unwrap();
        assert!(max_err(&d[..3], &[1.0, 2.0, 3.0]) < 1e-3);
        assert!(d[3..].iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn encryption_is_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = HeParams::new(4096, &[40, 20, 20], 21).unwrap();
        let ctx = keygen(&p, &[], &mut rng).unwrap();
        let pt = ctx.encode(&[0.5]).unwrap();
        let a = ctx.encrypt(&pt, &mut rng);
        let b = ctx.encrypt(&pt, &mut rng);
        assert_ne!(a.c0, b.c0);
        let c = ctx.encrypt_symmetric(&pt, &mut rng);
        let d = ctx.encrypt_symmetric(&pt, &mut rng);
        assert_ne!(c.c1, d.c1);
    }

    #[test]
    fn public_context_cannot_decrypt() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = HeParams::new(4096, &[40, 20, 20], 21).unwrap();
        let ctx = keygen(&p, &[], &mut rng).unwrap();
        let pubc = ctx.public();
        let ct = pubc.encrypt_values(&[1.0], &mut rng).unwrap();
        assert!(matches!(pubc.decrypt(&ct), Err(CkksError::Capability(_))));
        assert!(matches!(pubc.decrypt_values(&ct), Err(CkksError::Capability(_))));
    }

    #[test]
    fn weakest_set_has_larger_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..1024).map(|i| ((i as f64) * 0.01).cos()).collect();
        let weak = keygen(&HeParams::new(2048, &[18, 18, 18], 16).unwrap(), &[], &mut rng).unwrap();
        let strong = keygen(&HeParams::new(8192, &[60, 40, 40, 60], 40).unwrap(), &[], &mut rng).unwrap();
        let ew = max_err(&weak.decrypt_values(&weak.encrypt_values(&vals, &mut rng).unwrap()).unwrap(), &vals);
        let es = max_err(&strong.decrypt_values(&strong.encrypt_values(&vals, &mut rng).unwrap()).unwrap(), &vals);
        // measured: about 0.3 at 2^16 with N=2048, below 1e-8 at 2^40
        assert!(ew < 1.0, "weak error {ew}");
        assert!(es < 1e-6, "strong error {es}");
        assert!(ew > 100.0 * es);
    }
}
