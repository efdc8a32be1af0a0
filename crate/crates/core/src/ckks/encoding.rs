//! Canonical-embedding encoder.
//!
//! Slot `j` holds the evaluation of the message polynomial at `ζ^(5^j)` with
//! `ζ = exp(iπ/N)`. The special FFT below works directly on that ordering.

use super::ring::{RingContext, RnsPoly};
use super::CkksError;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
struct C64 {
    re: f64,
    im: f64,
}

impl C64 {
    fn add(self, o: C64) -> C64 {
        C64 { re: self.re + o.re, im: self.im + o.im }
    }
    fn sub(self, o: C64) -> C64 {
        C64 { re: self.re - o.re, im: self.im - o.im }
    }
    fn mul(self, o: C64) -> C64 {
        C64 { re: self.re * o.re - self.im * o.im, im: self.re * o.im + self.im * o.re }
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    degree: usize,
    rot_group: Vec<usize>,
    ksi: Vec<C64>,
}

fn bit_reverse_permute(v: &mut [C64]) {
    let n = v.len();
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            v.swap(i, j);
        }
    }
}

/// Coefficients of an encoded plaintext, before reduction into RNS limbs.
#[derive(Clone, Debug)]
pub struct EncodedCoeffs {
    pub coeffs: Vec<i128>,
}

impl Encoder {
    pub fn new(degree: usize) -> Self {
        let m = 2 * degree;
        let slots = degree / 2;
        let mut rot_group = Vec::with_capacity(slots);
        let mut g = 1usize;
        for _ in 0..slots {
            rot_group.push(g);
            g = (g * 5) % m;
        }
        let ksi = (0..=m)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / m as f64;
                C64 { re: a.cos(), im: a.sin() }
            })
            .collect();
        Self { degree, rot_group, ksi }
    }

    pub fn slots(&self) -> usize {
        self.degree / 2
    }

    fn fft_special(&self, vals: &mut [C64]) {
        let size = vals.len();
        let m = 2 * self.degree;
        bit_reverse_permute(vals);
        let mut len = 2;
        while len <= size {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (self.rot_group[j] % lenq) * gap;
                    let u = vals[i + j];
                    let v = vals[i + j + lenh].mul(self.ksi[idx]);
                    vals[i + j] = u.add(v);
                    vals[i + j + lenh] = u.sub(v);
                }
            }
            len <<= 1;
        }
    }

    fn fft_special_inv(&self, vals: &mut [C64]) {
        let size = vals.len();
        let m = 2 * self.degree;
        let mut len = size;
        while len >= 2 {
            let lenh = len >> 1;
            let lenq = len << 2;
            let gap = m / lenq;
            for i in (0..size).step_by(len) {
                for j in 0..lenh {
                    let idx = (lenq - (self.rot_group[j] % lenq)) * gap;
                    let u = vals[i + j].add(vals[i + j + lenh]);
                    let v = vals[i + j].sub(vals[i + j + lenh]).mul(self.ksi[idx]);
                    vals[i + j] = u;
                    vals[i + j + lenh] = v;
                }
            }
            len >>= 1;
        }
        bit_reverse_permute(vals);
        let inv = 1.0 / size as f64;
        for v in vals.iter_mut() {
            v.re *= inv;
            v.im *= inv;
        }
    }

    /// Scales and rounds `values` (zero padded to all slots) into integer
    /// coefficients.
    pub fn encode_coeffs(&self, values: &[f64], scale: f64) -> Result<EncodedCoeffs, CkksError> {
        let slots = self.slots();
        if values.len() > slots {
            return Err(CkksError::Capacity { needed: values.len(), available: slots });
        }
        if values.iter().any(|v| !v.is_finite()) || !(scale > 0.0) {
            return Err(CkksError::Params("non-finite value or scale".into()));
        }
        let mut vals = vec![C64 { re: 0.0, im: 0.0 }; slots];
        for (v, &x) in vals.iter_mut().zip(values) {
            v.re = x;
        }
        self.fft_special_inv(&mut vals);
        let mut coeffs = vec![0i128; self.degree];
        let limit = 2f64.powi(120);
        for (j, v) in vals.iter().enumerate() {
            let re = (v.re * scale).round();
            let im = (v.im * scale).round();
            if re.abs() >= limit || im.abs() >= limit {
                return Err(CkksError::Params("encoded value overflows coefficient range".into()));
            }
            coeffs[j] = re as i128;
            coeffs[j + slots] = im as i128;
        }
        Ok(EncodedCoeffs { coeffs })
    }

    /// Decodes real parts of all slots from centered coefficients.
    pub fn decode_coeffs(&self, coeffs: &[f64], scale: f64) -> Vec<f64> {
        let slots = self.slots();
        let mut vals: Vec<C64> =
            (0..slots).map(|j| C64 { re: coeffs[j] / scale, im: coeffs[j + slots] / scale }).collect();
        self.fft_special(&mut vals);
        vals.into_iter().map(|v| v.re).collect()
    }
}

/// A message encoded into RNS limbs at a given level and scale.
#[derive(Clone, Debug)]
pub struct Plaintext {
    pub(crate) poly: RnsPoly,
    pub scale: f64,
    pub level: usize,
}

impl Plaintext {
    pub fn encode(
        ring: &RingContext,
        encoder: &Encoder,
        values: &[f64],
        scale: f64,
        level: usize,
    ) -> Result<Self, CkksError> {
        if level > ring.top_level() {
            return Err(CkksError::Params(format!("level {level} beyond chain")));
        }
        let enc = encoder.encode_coeffs(values, scale)?;
        let poly = ring.from_i128(&enc.coeffs, &ring.level_basis(level));
        Ok(Self { poly, scale, level })
    }

    pub fn decode(&self, ring: &RingContext, encoder: &Encoder) -> Vec<f64> {
        let basis = ring.level_basis(self.level);
        let mut p = self.poly.clone();
        ring.inverse(&mut p, &basis);
        let coeffs = ring.to_centered_f64(&p, &basis);
        encoder.decode_coeffs(&coeffs, self.scale)
    }
}
