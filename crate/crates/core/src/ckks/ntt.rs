//! Negacyclic NTT over `Z_q[X]/(X^N + 1)`.
//!
//! Forward transform is Cooley-Tukey with powers of a primitive 2N-th root
//! `psi` stored in bit-reversed order; the inverse is Gentleman-Sande. The
//! evaluation at output index `k` is at `psi^(2*bitrev(k)+1)`.

use super::modarith::Modulus;

#[derive(Clone, Debug)]
pub struct NttTable {
    modulus: Modulus,
    degree: usize,
    psi_rev: Vec<u64>,
    psi_rev_shoup: Vec<u64>,
    psi_inv_rev: Vec<u64>,
    psi_inv_rev_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

pub(crate) fn bit_reverse(mut x: usize, bits: u32) -> usize {
    let mut r = 0;
    for _ in 0..bits {
        r = (r << 1) | (x & 1);
        x >>= 1;
    }
    r
}

/// Finds an element of multiplicative order exactly `2n`.
fn primitive_root_2n(m: &Modulus, degree: usize) -> u64 {
    let q = m.value();
    let order = 2 * degree as u64;
    assert_eq!((q - 1) % order, 0, "modulus is not 1 mod 2N");
    for g in 2..q {
        let psi = m.pow(g, (q - 1) / order);
        // order divides 2N (a power of two); psi^N = -1 pins it to 2N.
        if m.pow(psi, degree as u64) == q - 1 {
            return psi;
        }
    }
    unreachable!("no primitive root found")
}

impl NttTable {
    pub fn new(modulus: Modulus, degree: usize) -> Self {
        assert!(degree.is_power_of_two() && degree >= 2);
        let bits = degree.trailing_zeros();
        let psi = primitive_root_2n(&modulus, degree);
        let psi_inv = modulus.inv(psi);
        let mut psi_rev = vec![0u64; degree];
        let mut psi_inv_rev = vec![0u64; degree];
        let mut pw = 1u64;
        let mut pw_inv = 1u64;
        for i in 0..degree {
            let r = bit_reverse(i, bits);
            psi_rev[r] = pw;
            psi_inv_rev[r] = pw_inv;
            pw = modulus.mul(pw, psi);
            pw_inv = modulus.mul(pw_inv, psi_inv);
        }
        let psi_rev_shoup = psi_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let psi_inv_rev_shoup = psi_inv_rev.iter().map(|&w| modulus.shoup(w)).collect();
        let n_inv = modulus.inv(degree as u64);
        Self {
            modulus,
            degree,
            psi_rev,
            psi_rev_shoup,
            psi_inv_rev,
            psi_inv_rev_shoup,
            n_inv,
            n_inv_shoup: modulus.shoup(n_inv),
        }
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    /// Harvey's lazy butterflies: values stay in `[0, 4q)` between stages,
    /// which needs `q < 2^62`.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.degree);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let n = self.degree;
        let mut t = n;
        let mut groups = 1;
        while groups < n {
            t >>= 1;
            let ws = &self.psi_rev[groups..2 * groups];
            let wss = &self.psi_rev_shoup[groups..2 * groups];
            for ((block, &w), &wsh) in a.chunks_exact_mut(2 * t).zip(ws).zip(wss) {
                let (lo, hi) = block.split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = (*x).min(x.wrapping_sub(two_q));
                    let v = lazy_mul_shoup(*y, w, wsh, q);
                    *x = u + v;
                    *y = u + two_q - v;
                }
            }
            groups <<= 1;
        }
        for x in a.iter_mut() {
            let v = (*x).min(x.wrapping_sub(two_q));
            *x = v.min(v.wrapping_sub(q));
        }
    }

    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.degree);
        let q = self.modulus.value();
        let two_q = 2 * q;
        let m = &self.modulus;
        let n = self.degree;
        let mut t = 1;
        let mut groups = n;
        while groups > 1 {
            let h = groups >> 1;
            let ws = &self.psi_inv_rev[h..groups];
            let wss = &self.psi_inv_rev_shoup[h..groups];
            for ((block, &w), &wsh) in a.chunks_exact_mut(2 * t).zip(ws).zip(wss) {
                let (lo, hi) = block.split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = *x;
                    let v = *y;
                    let s = u + v;
                    *x = s.min(s.wrapping_sub(two_q));
                    *y = lazy_mul_shoup(u + two_q - v, w, wsh, q);
                }
            }
            t <<= 1;
            groups = h;
        }
        for x in a.iter_mut() {
            *x = m.mul_shoup(*x, self.n_inv, self.n_inv_shoup);
        }
    }
}

/// `a * w mod q` in `[0, 2q)`.
#[inline(always)]
fn lazy_mul_shoup(a: u64, w: u64, w_shoup: u64, q: u64) -> u64 {
    let hi = ((a as u128 * w_shoup as u128) >> 64) as u64;
    a.wrapping_mul(w).wrapping_sub(hi.wrapping_mul(q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ckks::modarith::ntt_primes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Schoolbook negacyclic product: the independent reference.
    fn negacyclic_mul(a: &[u64], b: &[u64], m: &Modulus) -> Vec<u64> {
        let n = a.len();
        let mut out = vec![0u64; n];
        for i in 0..n {
            for j in 0..n {
                let p = m.mul(a[i], b[j]);
                let k = i + j;
                if k < n {
                    out[k] = m.add(out[k], p);
                } else {
                    out[k - n] = m.sub(out[k - n], p);
                }
            }
        }
        out
    }

    #[test]
    fn roundtrip_and_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (bits, n) in [(18u32, 64usize), (40, 128), (60, 256), (61, 32)] {
            let q = ntt_primes(bits, n, 1, &[])[0];
            let m = Modulus::new(q);
            let table = NttTable::new(m, n);
            let a: Vec<u64> = (0..n).map(|_| rng.gen_range(0..q)).collect();
            let b: Vec<u64> = (0..n).map(|_| rng.gen_range(0..q)).collect();
            let mut fa = a.clone();
            table.forward(&mut fa);
            let mut back = fa.clone();
            table.inverse(&mut back);
            assert_eq!(back, a);

            let mut fb = b.clone();
            table.forward(&mut fb);
            let mut prod: Vec<u64> = fa.iter().zip(&fb).map(|(x, y)| m.mul(*x, *y)).collect();
            table.inverse(&mut prod);
            assert_eq!(prod, negacyclic_mul(&a, &b, &m));
        }
    }

    #[test]
    fn evaluation_points_follow_bit_reversed_odd_powers() {
        let n = 16;
        let q = ntt_primes(30, n, 1, &[])[0];
        let m = Modulus::new(q);
        let table = NttTable::new(m, n);
        let a: Vec<u64> = (0..n as u64).map(|i| i * 3 + 1).collect();
        let mut fa = a.clone();
        table.forward(&mut fa);
        let root = primitive_root_2n(&m, n);
        for (k, &val) in fa.iter().enumerate() {
            let e = 2 * bit_reverse(k, 4) as u64 + 1;
            let x = m.pow(root, e);
            let mut acc = 0;
            for &c in a.iter().rev() {
                acc = m.add(m.mul(acc, x), c);
            }
            assert_eq!(val, acc, "index {k}");
        }
    }
}
