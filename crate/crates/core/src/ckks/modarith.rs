//! Word-sized modular arithmetic for RNS limbs.
//!
//! Every chain prime is below 2^62, so products fit in a `u128` and Shoup
//! precomputation works with a single high-half multiply.

/// An odd modulus below 2^62 with precomputed Barrett constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Modulus {
    value: u64,
    // floor(2^128 / value), split into 64-bit halves.
    barrett_lo: u64,
    barrett_hi: u64,
}

impl Modulus {
    pub fn new(value: u64) -> Self {
        assert!(value > 2 && value < (1u64 << 62), "modulus out of range");
        let r = u128::MAX / value as u128;
        Self { value, barrett_lo: r as u64, barrett_hi: (r >> 64) as u64 }
    }

    #[inline(always)]
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn bits(&self) -> u32 {
        64 - self.value.leading_zeros()
    }

    /// Reduces a 128-bit value below 2^127.
    #[inline(always)]
    pub fn reduce_u128(&self, x: u128) -> u64 {
        let x0 = x as u64 as u128;
        let x1 = (x >> 64) as u64 as u128;
        let r0 = self.barrett_lo as u128;
        let r1 = self.barrett_hi as u128;
        let mid = x1 * r0 + x0 * r1 + ((x0 * r0) >> 64);
        let quot = x1 * r1 + (mid >> 64);
        let mut rem = (x.wrapping_sub(quot.wrapping_mul(self.value as u128))) as u64;
        while rem >= self.value {
            rem -= self.value;
        }
        rem
    }

    #[inline(always)]
    pub fn reduce(&self, x: u64) -> u64 {
        if x < self.value {
            x
        } else {
            self.reduce_u128(x as u128)
        }
    }

    /// Maps a signed integer into `[0, value)`.
    #[inline(always)]
    pub fn reduce_i64(&self, x: i64) -> u64 {
        if x >= 0 {
            self.reduce(x as u64)
        } else {
            let r = self.reduce(x.unsigned_abs());
            if r == 0 {
                0
            } else {
                self.value - r
            }
        }
    }

    /// Maps a signed 128-bit integer into `[0, value)`.
    pub fn reduce_i128(&self, x: i128) -> u64 {
        let r = (x.unsigned_abs() % self.value as u128) as u64;
        if x >= 0 || r == 0 {
            r
        } else {
            self.value - r
        }
    }

    #[inline(always)]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        // branch-free: the wrapped difference is huge when s < q
        let s = a + b;
        s.min(s.wrapping_sub(self.value))
    }

    #[inline(always)]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        let d = a.wrapping_sub(b);
        d.min(d.wrapping_add(self.value))
    }

    #[inline(always)]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.value - a
        }
    }

    #[inline(always)]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce_u128(a as u128 * b as u128)
    }

    /// Precomputes `floor(b * 2^64 / value)` for repeated multiplication by `b`.
    #[inline(always)]
    pub fn shoup(&self, b: u64) -> u64 {
        (((b as u128) << 64) / self.value as u128) as u64
    }

    #[inline(always)]
    pub fn mul_shoup(&self, a: u64, b: u64, b_shoup: u64) -> u64 {
        let q = ((a as u128 * b_shoup as u128) >> 64) as u64;
        let r = a.wrapping_mul(b).wrapping_sub(q.wrapping_mul(self.value));
        r.min(r.wrapping_sub(self.value))
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64;
        base = self.reduce(base);
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Inverse via Fermat; `value` is prime.
    pub fn inv(&self, a: u64) -> u64 {
        debug_assert!(a % self.value != 0);
        self.pow(a, self.value - 2)
    }

    /// Centered representative in `(-value/2, value/2]`.
    #[inline(always)]
    pub fn center(&self, a: u64) -> i64 {
        if a > self.value / 2 {
            a as i64 - self.value as i64
        } else {
            a as i64
        }
    }
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    let mulmod = |a: u64, b: u64| ((a as u128 * b as u128) % n as u128) as u64;
    let powmod = |mut b: u64, mut e: u64| {
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = mulmod(acc, b);
            }
            b = mulmod(b, b);
            e >>= 1;
        }
        acc
    };
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = powmod(a, d);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mulmod(x, x);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest primes below `2^bits` that are `1 mod 2n`, skipping any in `exclude`.
pub fn ntt_primes(bits: u32, degree: usize, count: usize, exclude: &[u64]) -> Vec<u64> {
    let step = 2 * degree as u64;
    let lower = 1u64 << (bits - 1);
    let mut out = Vec::with_capacity(count);
    let mut candidate = (1u64 << bits) - step + 1;
    while out.len() < count && candidate > lower {
        if is_prime(candidate) && !exclude.contains(&candidate) {
            out.push(candidate);
        }
        candidate -= step;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q: u64 = 1152921504606830593; // 2^60 - 2^14 + 1

    #[test]
    fn small_primes() {
        assert!(is_prime(2));
        assert!(is_prime(249857));
        assert!(!is_prime(249859 * 3));
        assert!(is_prime(Q));
        assert!(!is_prime(1));
    }

    #[test]
    fn ntt_prime_search_matches_known_values() {
        // 18-bit primes = 1 mod 4096, largest first.
        assert_eq!(ntt_primes(18, 2048, 3, &[]), vec![249857, 188417, 184321]);
        assert_eq!(ntt_primes(20, 4096, 1, &[]), vec![1032193]);
        let skipped = ntt_primes(18, 2048, 1, &[249857]);
        assert_eq!(skipped, vec![188417]);
    }

    #[test]
    fn center_and_signed_reduce() {
        let m = Modulus::new(17);
        assert_eq!(m.center(16), -1);
        assert_eq!(m.center(8), 8);
        assert_eq!(m.reduce_i64(-1), 16);
        assert_eq!(m.reduce_i64(-34), 0);
        assert_eq!(m.reduce_i128(-35), 16);
    }

    proptest! {
        #[test]
        fn barrett_matches_u128_remainder(a in 0..Q, b in 0..Q) {
            let m = Modulus::new(Q);
            prop_assert_eq!(m.mul(a, b), ((a as u128 * b as u128) % Q as u128) as u64);
        }

        #[test]
        fn shoup_matches_barrett(a in 0..Q, b in 0..Q) {
            let m = Modulus::new(Q);
            prop_assert_eq!(m.mul_shoup(a, b, m.shoup(b)), m.mul(a, b));
        }

        #[test]
        fn inverse_is_inverse(a in 1..Q) {
            let m = Modulus::new(Q);
            prop_assert_eq!(m.mul(a, m.inv(a)), 1);
        }
    }
}
