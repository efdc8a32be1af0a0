//! RNS polynomial arithmetic over the modulus chain plus the special prime.
//!
//! Modulus index `i < chain_len` is chain prime `q_i`; index `chain_len` is
//! the special prime `P` used during key switching. Polynomials are kept in
//! NTT form unless a function says otherwise.

use super::modarith::Modulus;
use super::ntt::{bit_reverse, NttTable};
use super::params::HeParams;
use super::CkksError;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const ERROR_STDDEV: f64 = 3.2;
const ERROR_BOUND: f64 = 6.0 * ERROR_STDDEV;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RnsPoly {
    pub limbs: Vec<Vec<u64>>,
}

impl RnsPoly {
    pub fn zero(limbs: usize, degree: usize) -> Self {
        Self { limbs: vec![vec![0u64; degree]; limbs] }
    }

    pub fn num_limbs(&self) -> usize {
        self.limbs.len()
    }
}

#[derive(Debug)]
pub struct RingContext {
    pub params: HeParams,
    degree: usize,
    chain: Vec<u64>,
    moduli: Vec<Modulus>,
    tables: Vec<NttTable>,
    // inv[a][b] = q_a^{-1} mod q_b
    inv: Vec<Vec<u64>>,
}

impl RingContext {
    pub fn new(params: &HeParams) -> Result<Self, CkksError> {
        params.validate()?;
        let (chain, special) = params.select_primes()?;
        let mut all = chain.clone();
        all.push(special);
        let moduli: Vec<Modulus> = all.iter().map(|&q| Modulus::new(q)).collect();
        let tables = moduli.iter().map(|&m| NttTable::new(m, params.degree)).collect();
        let inv = moduli
            .iter()
            .map(|a| moduli.iter().map(|b| if a == b { 0 } else { b.inv(b.reduce(a.value())) }).collect())
            .collect();
        Ok(Self { params: params.clone(), degree: params.degree, chain, moduli, tables, inv })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn slots(&self) -> usize {
        self.degree / 2
    }

    pub fn chain_len(&self) -> usize {
        self.chain.len()
    }

    pub fn top_level(&self) -> usize {
        self.chain.len() - 1
    }

    pub fn chain_primes(&self) -> &[u64] {
        &self.chain
    }

    pub fn special_index(&self) -> usize {
        self.chain.len()
    }

    pub fn special_prime(&self) -> u64 {
        self.moduli[self.chain.len()].value()
    }

    pub fn modulus(&self, idx: usize) -> &Modulus {
        &self.moduli[idx]
    }

    pub fn ntt(&self, idx: usize) -> &NttTable {
        &self.tables[idx]
    }

    /// Modulus indices of a ciphertext at `level`.
    pub fn level_basis(&self, level: usize) -> Vec<usize> {
        (0..=level).collect()
    }

    /// Level basis extended with the special prime.
    pub fn extended_basis(&self, level: usize) -> Vec<usize> {
        let mut b: Vec<usize> = (0..=level).collect();
        b.push(self.special_index());
        b
    }

    pub fn forward(&self, poly: &mut RnsPoly, basis: &[usize]) {
        for (limb, &idx) in poly.limbs.iter_mut().zip(basis) {
            self.tables[idx].forward(limb);
        }
    }

    pub fn inverse(&self, poly: &mut RnsPoly, basis: &[usize]) {
        for (limb, &idx) in poly.limbs.iter_mut().zip(basis) {
            self.tables[idx].inverse(limb);
        }
    }

    pub fn from_signed(&self, coeffs: &[i64], basis: &[usize]) -> RnsPoly {
        let limbs = basis
            .iter()
            .map(|&idx| {
                let m = &self.moduli[idx];
                let mut limb: Vec<u64> = coeffs.iter().map(|&c| m.reduce_i64(c)).collect();
                self.tables[idx].forward(&mut limb);
                limb
            })
            .collect();
        RnsPoly { limbs }
    }

    pub fn from_i128(&self, coeffs: &[i128], basis: &[usize]) -> RnsPoly {
        let limbs = basis
            .iter()
            .map(|&idx| {
                let m = &self.moduli[idx];
                let mut limb: Vec<u64> = coeffs
                    .iter()
                    .map(|&c| match i64::try_from(c) {
                        Ok(small) => m.reduce_i64(small),
                        Err(_) => m.reduce_i128(c),
                    })
                    .collect();
                self.tables[idx].forward(&mut limb);
                limb
            })
            .collect();
        RnsPoly { limbs }
    }

    pub fn add_assign(&self, a: &mut RnsPoly, b: &RnsPoly, basis: &[usize]) {
        for ((x, y), &idx) in a.limbs.iter_mut().zip(&b.limbs).zip(basis) {
            let m = &self.moduli[idx];
            for (u, &v) in x.iter_mut().zip(y) {
                *u = m.add(*u, v);
            }
        }
    }

    pub fn sub_assign(&self, a: &mut RnsPoly, b: &RnsPoly, basis: &[usize]) {
        for ((x, y), &idx) in a.limbs.iter_mut().zip(&b.limbs).zip(basis) {
            let m = &self.moduli[idx];
            for (u, &v) in x.iter_mut().zip(y) {
                *u = m.sub(*u, v);
            }
        }
    }

    pub fn neg_assign(&self, a: &mut RnsPoly, basis: &[usize]) {
        for (x, &idx) in a.limbs.iter_mut().zip(basis) {
            let m = &self.moduli[idx];
            for u in x.iter_mut() {
                *u = m.neg(*u);
            }
        }
    }

    /// Pointwise product (NTT domain).
    pub fn mul(&self, a: &RnsPoly, b: &RnsPoly, basis: &[usize]) -> RnsPoly {
        let limbs = a
            .limbs
            .iter()
            .zip(&b.limbs)
            .zip(basis)
            .map(|((x, y), &idx)| {
                let m = &self.moduli[idx];
                x.iter().zip(y).map(|(&u, &v)| m.mul(u, v)).collect()
            })
            .collect();
        RnsPoly { limbs }
    }

    /// Multiplies every limb by an integer constant given per limb.
    pub fn mul_scalar_assign(&self, a: &mut RnsPoly, scalars: &[u64], basis: &[usize]) {
        for ((x, &s), &idx) in a.limbs.iter_mut().zip(scalars).zip(basis) {
            let m = &self.moduli[idx];
            let sh = m.shoup(s);
            for u in x.iter_mut() {
                *u = m.mul_shoup(*u, s, sh);
            }
        }
    }

    /// Divides by the modulus of the last basis entry with rounding and drops
    /// that limb. Input and output are in NTT form.
    pub fn drop_last_rounded(&self, poly: &mut RnsPoly, basis: &[usize]) {
        let last_pos = basis.len() - 1;
        let last = basis[last_pos];
        let mut top = poly.limbs.pop().expect("empty polynomial");
        debug_assert_eq!(poly.limbs.len(), last_pos);
        self.tables[last].inverse(&mut top);
        let qm = &self.moduli[last];
        let centered: Vec<i64> = top.iter().map(|&c| qm.center(c)).collect();
        let mut tmp = vec![0u64; self.degree];
        for (limb, &idx) in poly.limbs.iter_mut().zip(&basis[..last_pos]) {
            let m = &self.moduli[idx];
            for (t, &c) in tmp.iter_mut().zip(&centered) {
                *t = m.reduce_i64(c);
            }
            self.tables[idx].forward(&mut tmp);
            let inv = self.inv[last][idx];
            let inv_sh = m.shoup(inv);
            for (u, &t) in limb.iter_mut().zip(&tmp) {
                *u = m.mul_shoup(m.sub(*u, t), inv, inv_sh);
            }
        }
    }

    /// Reconstructs centered coefficients from an RNS polynomial in
    /// coefficient form (not NTT), as `f64`.
    ///
    /// Uses a balanced mixed-radix (Garner) representation so values that are
    /// small relative to the full modulus come out exactly.
    pub fn to_centered_f64(&self, poly: &RnsPoly, basis: &[usize]) -> Vec<f64> {
        let k = basis.len();
        let mut out = vec![0f64; self.degree];
        let mut digits = vec![0i64; k];
        for (n, o) in out.iter_mut().enumerate() {
            for i in 0..k {
                let mi = &self.moduli[basis[i]];
                let mut t = poly.limbs[i][n];
                for j in 0..i {
                    t = mi.sub(t, mi.reduce_i64(digits[j]));
                    t = mi.mul(t, self.inv[basis[j]][basis[i]]);
                }
                digits[i] = mi.center(t);
            }
            let mut acc = 0f64;
            for i in (0..k).rev() {
                acc = acc * self.moduli[basis[i]].value() as f64 + digits[i] as f64;
            }
            *o = acc;
        }
        out
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, basis: &[usize], rng: &mut R) -> RnsPoly {
        let limbs = basis
            .iter()
            .map(|&idx| {
                let q = self.moduli[idx].value();
                (0..self.degree).map(|_| rng.gen_range(0..q)).collect()
            })
            .collect();
        RnsPoly { limbs }
    }

    pub fn sample_gaussian<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        let normal = Normal::new(0.0, ERROR_STDDEV).expect("valid stddev");
        (0..self.degree)
            .map(|_| loop {
                let x: f64 = normal.sample(rng);
                if x.abs() <= ERROR_BOUND {
                    break x.round() as i64;
                }
            })
            .collect()
    }

    pub fn sample_ternary<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<i64> {
        (0..self.degree).map(|_| rng.gen_range(-1i64..=1)).collect()
    }

    /// NTT-domain index permutation realizing `X -> X^galois_elt`.
    pub fn galois_permutation(&self, galois_elt: usize) -> Vec<usize> {
        let n = self.degree;
        let bits = n.trailing_zeros();
        let m = 2 * n;
        // position of exponent e (odd) in bit-reversed NTT order
        let mut pos_of = vec![0usize; m];
        for k in 0..n {
            let e = 2 * bit_reverse(k, bits) + 1;
            pos_of[e] = k;
        }
        (0..n)
            .map(|k| {
                let e = 2 * bit_reverse(k, bits) + 1;
                pos_of[(e * galois_elt) % m]
            })
            .collect()
    }

    /// Galois element for a left rotation of the slot vector by `steps`.
    pub fn galois_element(&self, steps: i64) -> usize {
        let slots = self.slots() as i64;
        let m = 2 * self.degree;
        let k = steps.rem_euclid(slots) as u64;
        let mut g = 1usize;
        for _ in 0..k {
            g = (g * 5) % m;
        }
        g
    }

    pub fn apply_permutation(&self, poly: &RnsPoly, perm: &[usize]) -> RnsPoly {
        let limbs = poly.limbs.iter().map(|limb| perm.iter().map(|&p| limb[p]).collect()).collect();
        RnsPoly { limbs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_ring() -> RingContext {
        RingContext::new(&HeParams::new(2048, &[30, 25, 25], 20).unwrap()).unwrap()
    }

    // Applies X -> X^g directly on coefficients.
    fn automorphism_coeffs(c: &[i64], g: usize) -> Vec<i64> {
        let n = c.len();
        let mut out = vec![0i64; n];
        for (i, &v) in c.iter().enumerate() {
            let e = (i * g) % (2 * n);
            if e < n {
                out[e] += v;
            } else {
                out[e - n] -= v;
            }
        }
        out
    }

    #[test]
    fn galois_permutation_matches_coefficient_automorphism() {
        let ring = small_ring();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c: Vec<i64> = (0..ring.degree()).map(|_| rng.gen_range(-50..50)).collect();
        let basis = ring.level_basis(2);
        for steps in [1i64, 3, -1, 100] {
            let g = ring.galois_element(steps);
            let via_ntt = ring.apply_permutation(&ring.from_signed(&c, &basis), &ring.galois_permutation(g));
            let direct = ring.from_signed(&automorphism_coeffs(&c, g), &basis);
            assert_eq!(via_ntt, direct, "steps {steps}");
        }
    }

    #[test]
    fn garner_reconstruction_is_exact_for_small_values() {
        let ring = small_ring();
        let basis = ring.level_basis(2);
        let vals: Vec<i128> = (0..ring.degree() as i128).map(|i| (i - 1000) * 123_456_789_012).collect();
        let mut p = ring.from_i128(&vals, &basis);
        ring.inverse(&mut p, &basis);
        let back = ring.to_centered_f64(&p, &basis);
        for (a, b) in vals.iter().zip(&back) {
            assert_eq!(*a as f64, *b);
        }
    }

    #[test]
    fn rounded_division_by_last_limb() {
        let ring = small_ring();
        let basis = ring.level_basis(2);
        let q2 = ring.chain_primes()[2] as i128;
        let vals: Vec<i128> = (0..ring.degree() as i128).map(|i| (i - 700) * q2 * 3 + (i % 7) - 3).collect();
        let mut p = ring.from_i128(&vals, &basis);
        ring.drop_last_rounded(&mut p, &basis);
        ring.inverse(&mut p, &basis[..2]);
        let back = ring.to_centered_f64(&p, &basis[..2]);
        for (i, b) in back.iter().enumerate() {
            assert_eq!(*b, ((i as f64) - 700.0) * 3.0);
        }
    }

    #[test]
    fn gaussian_is_bounded_and_centered() {
        let ring = small_ring();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = ring.sample_gaussian(&mut rng);
        assert!(e.iter().all(|&x| (x as f64).abs() <= ERROR_BOUND));
        let mean = e.iter().sum::<i64>() as f64 / e.len() as f64;
        let var = e.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / e.len() as f64;
        assert!(mean.abs() < 0.5);
        assert!((var.sqrt() - ERROR_STDDEV).abs() < 0.5);
    }
}
