//! Layer primitives with explicit forward and backward passes.

use super::tensor::Tensor;
use super::NnError;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[out, in, kernel]`
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv1d {
    pub fn zeros(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            w: vec![0.0; out_channels * in_channels * kernel],
            b: vec![0.0; out_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub fn output_len(&self, t: usize) -> Result<usize, NnError> {
        let padded = t + 2 * self.padding;
        if self.stride == 0 || padded < self.kernel {
            return Err(NnError::Dimension(format!(
                "input length {t} too short for kernel {} with padding {}",
                self.kernel, self.padding
            )));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize), NnError> {
        if x.shape().len() != 3 || x.dim(1) != self.in_channels {
            return Err(NnError::Dimension(format!("conv expects [n, {}, T], got {:?}", self.in_channels, x.shape())));
        }
        Ok((x.dim(0), x.dim(2), self.output_len(x.dim(2))?))
    }

    /// Cross-correlation `z[o, i] = b[o] + sum_c sum_j w[o,c,j] * x[c, i*stride + j - pad]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let (n, t, to) = self.check_input(x)?;
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel);
        let xd = x.data();
        let mut out = vec![0.0; n * co * to];
        for s in 0..n {
            for o in 0..co {
                let row = &mut out[(s * co + o) * to..(s * co + o + 1) * to];
                row.fill(self.b[o]);
                for c in 0..ci {
                    let xr = &xd[(s * ci + c) * t..(s * ci + c + 1) * t];
                    let wr = &self.w[(o * ci + c) * k..(o * ci + c + 1) * k];
                    for (i, acc) in row.iter_mut().enumerate() {
                        let base = (i * self.stride) as isize - self.padding as isize;
                        for (j, &wv) in wr.iter().enumerate() {
                            let p = base + j as isize;
                            if p >= 0 && (p as usize) < t {
                                *acc += wv * xr[p as usize];
                            }
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_raw(&[n, co, to], out))
    }

    /// Returns `(dw, db, dx)` for upstream gradient `g` of shape `[n, out, T']`.
    pub fn backward(&self, x: &Tensor, g: &Tensor) -> Result<(Vec<f64>, Vec<f64>, Tensor), NnError> {
        let (n, t, to) = self.check_input(x)?;
        if g.shape() != [n, self.out_channels, to] {
            return Err(NnError::Dimension(format!("conv gradient shape {:?}", g.shape())));
        }
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel);
        let xd = x.data();
        let gd = g.data();
        let mut dw = vec![0.0; self.w.len()];
        let mut db = vec![0.0; co];
        let mut dx = vec![0.0; xd.len()];
        for s in 0..n {
            for o in 0..co {
                let gr = &gd[(s * co + o) * to..(s * co + o + 1) * to];
                db[o] += gr.iter().sum::<f64>();
                for c in 0..ci {
                    let xoff = (s * ci + c) * t;
                    let woff = (o * ci + c) * k;
                    for (i, &gv) in gr.iter().enumerate() {
                        let base = (i * self.stride) as isize - self.padding as isize;
                        for j in 0..k {
                            let p = base + j as isize;
                            if p >= 0 && (p as usize) < t {
                                let p = p as usize;
                                dw[woff + j] += gv * xd[xoff + p];
                                dx[xoff + p] += gv * self.w[woff + j];
                            }
                        }
                    }
                }
            }
        }
        Ok((dw, db, Tensor::from_raw(x.shape(), dx)))
    }
}

pub fn leaky_relu(x: &Tensor, alpha: f64) -> Tensor {
    let data = x.data().iter().map(|&v| if v >= 0.0 { v } else { alpha * v }).collect();
    Tensor::from_raw(x.shape(), data)
}

/// Gradient through Leaky ReLU given the pre-activation `z`.
pub fn leaky_relu_backward(z: &Tensor, g: &Tensor, alpha: f64) -> Tensor {
    let data = z.data().iter().zip(g.data()).map(|(&zv, &gv)| if zv >= 0.0 { gv } else { alpha * gv }).collect();
    Tensor::from_raw(z.shape(), data)
}

/// Windowed maxima along the last axis. Indices are positions within each
/// input row; ties resolve to the first maximum.
pub fn maxpool1d_forward(x: &Tensor, k: usize, stride: usize) -> Result<(Tensor, Vec<usize>), NnError> {
    let shape = x.shape();
    let t = *shape.last().unwrap();
    if k == 0 || stride == 0 || t < k {
        return Err(NnError::Dimension(format!("pool window {k} stride {stride} on length {t}")));
    }
    let rows = x.len() / t;
    let to = (t - k) / stride + 1;
    let mut out = Vec::with_capacity(rows * to);
    let mut idx = Vec::with_capacity(rows * to);
    for r in 0..rows {
        let xr = &x.data()[r * t..(r + 1) * t];
        for i in 0..to {
            let start = i * stride;
            let mut best = start;
            for p in start + 1..start + k {
                if xr[p] > xr[best] {
                    best = p;
                }
            }
            out.push(xr[best]);
            idx.push(best);
        }
    }
    let mut oshape = shape.to_vec();
    *oshape.last_mut().unwrap() = to;
    Ok((Tensor::from_raw(&oshape, out), idx))
}

/// Scatters `g` back to the recorded argmax positions.
pub fn maxpool1d_backward(g: &Tensor, idx: &[usize], input_shape: &[usize]) -> Result<Tensor, NnError> {
    if g.len() != idx.len() {
        return Err(NnError::State("pool indices do not match gradient".into()));
    }
    let t = *input_shape.last().unwrap();
    let to = *g.shape().last().unwrap();
    let mut dx = vec![0.0; input_shape.iter().product()];
    for (n, (&gv, &p)) in g.data().iter().zip(idx).enumerate() {
        let r = n / to;
        dx[r * t + p] += gv;
    }
    Ok(Tensor::from_raw(input_shape, dx))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `[in, out]`
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Self { in_features, out_features, w: vec![0.0; in_features * out_features], b: vec![0.0; out_features] }
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }

    fn check(&self, a: &Tensor) -> Result<usize, NnError> {
        if a.shape().len() != 2 || a.dim(1) != self.in_features {
            return Err(NnError::Dimension(format!("linear expects [n, {}], got {:?}", self.in_features, a.shape())));
        }
        Ok(a.dim(0))
    }

    /// `a * w + b`, row-wise.
    pub fn forward(&self, a: &Tensor) -> Result<Tensor, NnError> {
        let n = self.check(a)?;
        let (di, dout) = (self.in_features, self.out_features);
        let mut out = vec![0.0; n * dout];
        for s in 0..n {
            let row = &a.data()[s * di..(s + 1) * di];
            let o = &mut out[s * dout..(s + 1) * dout];
            o.copy_from_slice(&self.b);
            for (j, &av) in row.iter().enumerate() {
                let wr = &self.w[j * dout..(j + 1) * dout];
                for (ov, &wv) in o.iter_mut().zip(wr) {
                    *ov += av * wv;
                }
            }
        }
        Ok(Tensor::from_raw(&[n, dout], out))
    }

    /// `dW = a^T g`, `db = sum over rows of g`, `da = g W^T`.
    pub fn backward(&self, a: &Tensor, g: &Tensor) -> Result<(Vec<f64>, Vec<f64>, Tensor), NnError> {
        let n = self.check(a)?;
        if g.shape() != [n, self.out_features] {
            return Err(NnError::Dimension(format!("linear gradient shape {:?}", g.shape())));
        }
        let dw = weight_grad(a.data(), g.data(), n, self.in_features, self.out_features);
        let db = bias_grad(g.data(), n, self.out_features);
        let da = self.input_grad(g)?;
        Ok((dw, db, da))
    }

    /// `g W^T` only.
    pub fn input_grad(&self, g: &Tensor) -> Result<Tensor, NnError> {
        if g.shape().len() != 2 || g.dim(1) != self.out_features {
            return Err(NnError::Dimension(format!("linear gradient shape {:?}", g.shape())));
        }
        let n = g.dim(0);
        let (di, dout) = (self.in_features, self.out_features);
        let mut da = vec![0.0; n * di];
        for s in 0..n {
            let gr = &g.data()[s * dout..(s + 1) * dout];
            for j in 0..di {
                let wr = &self.w[j * dout..(j + 1) * dout];
                da[s * di + j] = wr.iter().zip(gr).map(|(w, g)| w * g).sum();
            }
        }
        Ok(Tensor::from_raw(&[n, di], da))
    }
}

/// `a^T g` for `a: [n, di]`, `g: [n, dout]`.
pub fn weight_grad(a: &[f64], g: &[f64], n: usize, di: usize, dout: usize) -> Vec<f64> {
    let mut dw = vec![0.0; di * dout];
    for s in 0..n {
        let gr = &g[s * dout..(s + 1) * dout];
        for j in 0..di {
            let av = a[s * di + j];
            for (d, &gv) in dw[j * dout..(j + 1) * dout].iter_mut().zip(gr) {
                *d += av * gv;
            }
        }
    }
    dw
}

/// Bias gradient: the batch sum of `g`.
pub fn bias_grad(g: &[f64], n: usize, dout: usize) -> Vec<f64> {
    let mut db = vec![0.0; dout];
    for s in 0..n {
        for (d, &gv) in db.iter_mut().zip(&g[s * dout..(s + 1) * dout]) {
            *d += gv;
        }
    }
    db
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax(z: &Tensor) -> Result<Tensor, NnError> {
    if z.shape().len() != 2 {
        return Err(NnError::Dimension(format!("softmax expects [n, m], got {:?}", z.shape())));
    }
    let m = z.dim(1);
    let mut out = z.data().to_vec();
    for row in out.chunks_mut(m) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(Tensor::from_raw(z.shape(), out))
}

pub const PROB_EPS: f64 = 1e-12;

/// Mean categorical cross-entropy, `-(1/n) sum y log(yhat)`.
pub fn cross_entropy(yhat: &Tensor, y: &Tensor) -> Result<f64, NnError> {
    if yhat.shape() != y.shape() || yhat.shape().len() != 2 {
        return Err(NnError::Dimension(format!("prediction {:?} vs target {:?}", yhat.shape(), y.shape())));
    }
    let n = yhat.dim(0) as f64;
    let s: f64 =
        yhat.data().iter().zip(y.data()).filter(|(_, &t)| t != 0.0).map(|(&p, &t)| t * p.max(PROB_EPS).ln()).sum();
    Ok(-s / n)
}

/// Gradient of mean cross-entropy with respect to the logits, `(yhat - y)/n`.
pub fn softmax_ce_grad(yhat: &Tensor, y: &Tensor) -> Result<Tensor, NnError> {
    if yhat.shape() != y.shape() {
        return Err(NnError::Dimension("prediction and target shapes differ".into()));
    }
    let n = yhat.dim(0) as f64;
    let data = yhat.data().iter().zip(y.data()).map(|(p, t)| (p - t) / n).collect();
    Ok(Tensor::from_raw(yhat.shape(), data))
}
