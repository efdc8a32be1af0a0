//! Homomorphic evaluation: additions, plaintext products with rescaling,
//! and slot rotations through Galois key switching.

use super::context::{key_limbs, Ciphertext, GaloisKey, PublicContext};
use super::encoding::Plaintext;
use super::ring::RnsPoly;
use super::CkksError;

const SCALE_TOLERANCE: f64 = 1e-9;

fn same_scale(a: f64, b: f64) -> bool {
    ((a - b) / a).abs() < SCALE_TOLERANCE
}

impl PublicContext {
    fn check_aligned(&self, la: usize, sa: f64, lb: usize, sb: f64) -> Result<(), CkksError> {
        if la != lb {
            return Err(CkksError::Alignment(format!("levels differ: {la} vs {lb}")));
        }
        if !same_scale(sa, sb) {
            return Err(CkksError::Alignment(format!("scales differ: {sa} vs {sb}")));
        }
        Ok(())
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, CkksError> {
        self.check_aligned(a.level, a.scale, b.level, b.scale)?;
        let basis = self.ring.level_basis(a.level);
        let mut out = a.clone();
        self.ring.add_assign(&mut out.c0, &b.c0, &basis);
        self.ring.add_assign(&mut out.c1, &b.c1, &basis);
        Ok(out)
    }

    pub fn add_assign(&self, a: &mut Ciphertext, b: &Ciphertext) -> Result<(), CkksError> {
        self.check_aligned(a.level, a.scale, b.level, b.scale)?;
        let basis = self.ring.level_basis(a.level);
        self.ring.add_assign(&mut a.c0, &b.c0, &basis);
        self.ring.add_assign(&mut a.c1, &b.c1, &basis);
        Ok(())
    }

    pub fn sub(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext, CkksError> {
        self.check_aligned(a.level, a.scale, b.level, b.scale)?;
        let basis = self.ring.level_basis(a.level);
        let mut out = a.clone();
        self.ring.sub_assign(&mut out.c0, &b.c0, &basis);
        self.ring.sub_assign(&mut out.c1, &b.c1, &basis);
        Ok(out)
    }

    pub fn add_plain(&self, a: &Ciphertext, p: &Plaintext) -> Result<Ciphertext, CkksError> {
        self.check_aligned(a.level, a.scale, p.level, p.scale)?;
        let basis = self.ring.level_basis(a.level);
        let mut out = a.clone();
        self.ring.add_assign(&mut out.c0, &p.poly, &basis);
        Ok(out)
    }

    /// Product with a plaintext at the same level, without rescaling.
    pub fn mul_plain_raw(&self, a: &Ciphertext, p: &Plaintext) -> Result<Ciphertext, CkksError> {
        if a.level != p.level {
            return Err(CkksError::Alignment(format!("levels differ: {} vs {}", a.level, p.level)));
        }
        let basis = self.ring.level_basis(a.level);
        Ok(Ciphertext {
            c0: self.ring.mul(&a.c0, &p.poly, &basis),
            c1: self.ring.mul(&a.c1, &p.poly, &basis),
            scale: a.scale * p.scale,
            level: a.level,
        })
    }

    /// Divides by the top prime of the current level and drops it.
    pub fn rescale(&self, a: &Ciphertext) -> Result<Ciphertext, CkksError> {
        if a.level == 0 {
            return Err(CkksError::Depth);
        }
        let basis = self.ring.level_basis(a.level);
        let q = self.ring.chain_primes()[a.level] as f64;
        let mut out = a.clone();
        self.ring.drop_last_rounded(&mut out.c0, &basis);
        self.ring.drop_last_rounded(&mut out.c1, &basis);
        out.level -= 1;
        out.scale /= q;
        Ok(out)
    }

    /// Ciphertext-plaintext product followed by one rescale.
    pub fn mul_plain(&self, a: &Ciphertext, p: &Plaintext) -> Result<Ciphertext, CkksError> {
        if a.level == 0 {
            return Err(CkksError::Depth);
        }
        let prod = self.mul_plain_raw(a, p)?;
        self.rescale(&prod)
    }

    /// Multiplies the message by an integer without touching the scale.
    pub fn mul_integer(&self, a: &Ciphertext, k: i64) -> Ciphertext {
        let basis = self.ring.level_basis(a.level);
        let scalars: Vec<u64> = basis.iter().map(|&i| self.ring.modulus(i).reduce_i64(k)).collect();
        let mut out = a.clone();
        self.ring.mul_scalar_assign(&mut out.c0, &scalars, &basis);
        self.ring.mul_scalar_assign(&mut out.c1, &scalars, &basis);
        out
    }

    /// Scale of a plaintext that, multiplied into `a` and rescaled, leaves the
    /// scale of `a` unchanged.
    pub fn neutral_plain_scale(&self, a: &Ciphertext) -> f64 {
        self.ring.chain_primes()[a.level] as f64
    }

    /// Splits a left rotation into steps that have keys: the step itself if
    /// present, otherwise its binary decomposition.
    pub fn rotation_plan(&self, steps: i64) -> Result<Vec<usize>, CkksError> {
        let slots = self.ring.slots();
        let k = steps.rem_euclid(slots as i64) as usize;
        if k == 0 {
            return Ok(Vec::new());
        }
        if self.galois.keys.contains_key(&k) {
            return Ok(vec![k]);
        }
        let mut plan = Vec::new();
        let mut bit = 1usize;
        while bit < slots {
            if k & bit != 0 {
                if !self.galois.keys.contains_key(&bit) {
                    return Err(CkksError::Capability(format!("no Galois key for rotation by {steps}")));
                }
                plan.push(bit);
            }
            bit <<= 1;
        }
        Ok(plan)
    }

    /// Cyclic left rotation of the slot vector by `steps`.
    pub fn rotate(&self, a: &Ciphertext, steps: i64) -> Result<Ciphertext, CkksError> {
        let plan = self.rotation_plan(steps)?;
        let mut out = a.clone();
        for step in plan {
            out = self.apply_galois(&out, &self.galois.keys[&step]);
        }
        Ok(out)
    }

    fn apply_galois(&self, a: &Ciphertext, key: &GaloisKey) -> Ciphertext {
        let ring = &self.ring;
        let level = a.level;
        let basis = ring.level_basis(level);
        let ext = ring.extended_basis(level);
        let perm = ring.galois_permutation(key.galois_elt);
        let c0 = ring.apply_permutation(&a.c0, &perm);
        let c1 = ring.apply_permutation(&a.c1, &perm);

        let mut coeff = c1.clone();
        ring.inverse(&mut coeff, &basis);
        let n = ring.degree();
        let mut acc0 = vec![vec![0u128; n]; ext.len()];
        let mut acc1 = vec![vec![0u128; n]; ext.len()];
        let mut digit = vec![0u64; n];
        for j in 0..=level {
            let qj = ring.modulus(j);
            let centered: Vec<i64> = coeff.limbs[j].iter().map(|&c| qj.center(c)).collect();
            let kb = key_limbs(ring, &key.b[j], level);
            let ka = key_limbs(ring, &key.a[j], level);
            for (t, &idx) in ext.iter().enumerate() {
                let d: &[u64] = if idx == j {
                    &c1.limbs[j]
                } else {
                    let m = ring.modulus(idx);
                    for (x, &c) in digit.iter_mut().zip(&centered) {
                        *x = m.reduce_i64(c);
                    }
                    ring.ntt(idx).forward(&mut digit);
                    &digit
                };
                for (((s0, s1), (&x, &kb)), &ka) in
                    acc0[t].iter_mut().zip(acc1[t].iter_mut()).zip(d.iter().zip(kb[t])).zip(ka[t])
                {
                    *s0 += x as u128 * kb as u128;
                    *s1 += x as u128 * ka as u128;
                }
            }
        }
        let reduce = |acc: Vec<Vec<u128>>| RnsPoly {
            limbs: acc
                .into_iter()
                .zip(&ext)
                .map(|(l, &idx)| {
                    let m = ring.modulus(idx);
                    l.into_iter().map(|v| m.reduce_u128(v)).collect()
                })
                .collect(),
        };
        let mut k0 = reduce(acc0);
        let mut k1 = reduce(acc1);
        ring.drop_last_rounded(&mut k0, &ext);
        ring.drop_last_rounded(&mut k1, &ext);
        ring.add_assign(&mut k0, &c0, &basis);
        Ciphertext { c0: k0, c1: k1, scale: a.scale, level }
    }
}

#[cfg(test)]
mod tests {
    use crate::ckks::context::{keygen, Decryptor};
    use crate::ckks::{CkksError, HeParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn big() -> HeParams {
        HeParams::new(8192, &[60, 40, 40, 60], 40).unwrap()
    }

    #[test]
    fn additions() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ctx = keygen(&big(), &[], &mut rng).unwrap();
        let x = ctx.encrypt_values(&[1.0, 2.0], &mut rng).unwrap();
        let y = ctx.encrypt_values(&[3.0, 4.0], &mut rng).unwrap();
        let z = ctx.encrypt_values(&[0.0], &mut rng).unwrap();
        let s = ctx.decrypt_values(&ctx.add(&x, &y).unwrap()).unwrap();
        assert!(max_err(&s[..2], &[4.0, 6.0]) < 1e-3);
        let s = ctx.decrypt_values(&ctx.add(&x, &z).unwrap()).unwrap();
        assert!(max_err(&s[..2], &[1.0, 2.0]) < 1e-3);
        let p = ctx.encode(&[0.5, -0.25]).unwrap();
        let s = ctx.decrypt_values(&ctx.add_plain(&x, &p).unwrap()).unwrap();
        assert!(max_err(&s[..2], &[1.5, 1.75]) < 1e-3);
    }

    #[test]
    fn misaligned_operands_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ctx = keygen(&big(), &[], &mut rng).unwrap();
        let x = ctx.encrypt_values(&[1.0], &mut rng).unwrap();
        let p = ctx.encode_at(&[1.0], ctx.neutral_plain_scale(&x), x.level).unwrap();
        let y = ctx.mul_plain(&x, &p).unwrap();
        assert!(matches!(ctx.add(&x, &y), Err(CkksError::Alignment(_))));
        let q = ctx.encode_at(&[1.0], ctx.scale() * 2.0, x.level).unwrap();
        assert!(matches!(ctx.add_plain(&x, &q), Err(CkksError::Alignment(_))));
    }

    #[test]
    fn plain_product_drops_one_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ctx = keygen(&big(), &[], &mut rng).unwrap();
        let x = ctx.encrypt_values(&[2.0], &mut rng).unwrap();
        let p = ctx.encode(&[3.0]).unwrap();
        let y = ctx.mul_plain(&x, &p).unwrap();
        assert_eq!(y.level, x.level - 1);
        assert!((ctx.decrypt_values(&y).unwrap()[0] - 6.0).abs() < 1e-3);
        let one = ctx.encode_at(&[1.0; 4], ctx.neutral_plain_scale(&x), x.level).unwrap();
        let y = ctx.mul_plain(&x, &one).unwrap();
        assert_eq!(y.scale, ctx.scale());
        assert!((ctx.decrypt_values(&y).unwrap()[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn depth_is_chain_length_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for p in
            [HeParams::new(4096, &[40, 20, 20], 21).unwrap(), HeParams::new(2048, &[18, 18, 18], 16).unwrap(), big()]
        {
            let ctx = keygen(&p, &[], &mut rng).unwrap();
            let mut x = ctx.encrypt_values(&[1.0], &mut rng).unwrap();
            for _ in 0..p.chain_bits.len() - 1 {
                let one = ctx.encode_at(&[1.0], ctx.neutral_plain_scale(&x), x.level).unwrap();
                x = ctx.mul_plain(&x, &one).unwrap();
            }
            assert_eq!(x.level, 0);
            let one = ctx.encode_at(&[1.0], ctx.scale(), 0).unwrap();
            assert_eq!(ctx.mul_plain(&x, &one).unwrap_err(), CkksError::Depth);
        }
    }

    #[test]
    fn rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let p = HeParams::new(4096, &[50, 40, 50], 40).unwrap();
        let ctx = keygen(&p, &[1, 2, 4, -1, 5], &mut rng).unwrap();
        let slots = ctx.slots();
        let x = ctx.encrypt_values_symmetric(&[1.0, 2.0, 3.0], &mut rng).unwrap();
        let same = ctx.decrypt_values(&ctx.rotate(&x, 0).unwrap()).unwrap();
        assert!(max_err(&same[..3], &[1.0, 2.0, 3.0]) < 1e-3);
        let r = ctx.decrypt_values(&ctx.rotate(&x, 1).unwrap()).unwrap();
        assert!(max_err(&r[..3], &[2.0, 3.0, 0.0]) < 1e-3);
        assert!((r[slots - 1] - 1.0).abs() < 1e-3);
        let back = ctx.rotate(&ctx.rotate(&x, 3).unwrap(), -3);
        assert!(back.is_err(), "no key for -3 or its decomposition");
        let back = ctx.rotate(&ctx.rotate(&x, 5).unwrap(), -1).unwrap();
        let b = ctx.decrypt_values(&back).unwrap();
        assert!(max_err(&b[..3], &[0.0; 3]) < 1e-3);
        assert!(max_err(&b[slots - 4..slots - 1], &[1.0, 2.0, 3.0]) < 1e-3);
        let rr = ctx.rotate(&ctx.rotate(&x, 1).unwrap(), -1).unwrap();
        assert!(max_err(&ctx.decrypt_values(&rr).unwrap()[..3], &[1.0, 2.0, 3.0]) < 1e-3);
        assert!(matches!(ctx.rotate(&x, 8), Err(CkksError::Capability(_))));
    }
}
