//! Client half (conv layers) and server half (linear head) of the network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::layers::*;
use super::optim::{sgd_step, AdamState};
use super::tensor::Tensor;
use super::{NnError, LEAKY_ALPHA};

pub const NUM_CLASSES: usize = 5;
pub const INIT_RANGE: f64 = 0.05;
const POOL: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelVariant {
    M1,
    M2,
    M3,
}

impl ModelVariant {
    pub fn in_channels(self) -> usize {
        match self {
            ModelVariant::M3 => 12,
            _ => 1,
        }
    }

    pub fn timesteps(self) -> usize {
        match self {
            ModelVariant::M3 => 1000,
            _ => 128,
        }
    }

    pub fn hidden_channels(self) -> usize {
        16
    }

    pub fn am_channels(self) -> usize {
        match self {
            ModelVariant::M2 => 16,
            _ => 8,
        }
    }

    /// Flattened activation map width at the split layer.
    pub fn am_dim(self) -> usize {
        self.am_channels() * self.timesteps() / (POOL * POOL)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::M1 => "m1",
            ModelVariant::M2 => "m2",
            ModelVariant::M3 => "m3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "m1" => Some(ModelVariant::M1),
            "m2" => Some(ModelVariant::M2),
            "m3" => Some(ModelVariant::M3),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Intermediate values of one client forward pass.
#[derive(Clone, Debug, Default)]
pub struct ActivationCache {
    x: Option<Tensor>,
    z1: Option<Tensor>,
    a1: Option<Tensor>,
    idx1: Vec<usize>,
    p1: Option<Tensor>,
    z2: Option<Tensor>,
    a2: Option<Tensor>,
    idx2: Vec<usize>,
}

impl ActivationCache {
    pub fn clear(&mut self) {
        *self = Self::default();
    }

    pub fn is_populated(&self) -> bool {
        self.x.is_some()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientGrads {
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
}

impl ClientGrads {
    pub fn blocks(&self) -> [&[f64]; 4] {
        [&self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b]
    }
}

/// Layers 1..l: conv, Leaky ReLU, max-pool, twice, then flatten.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientModel {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
}

impl ClientModel {
    pub fn zeros(v: ModelVariant) -> Self {
        Self {
            conv1: Conv1d::zeros(v.in_channels(), v.hidden_channels(), 7, 1, 3),
            conv2: Conv1d::zeros(v.hidden_channels(), v.am_channels(), 5, 1, 2),
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        vec![self.conv1.w.len(), self.conv1.b.len(), self.conv2.w.len(), self.conv2.b.len()]
    }

    pub fn new_adam(&self, lr: f64) -> AdamState {
        AdamState::new(lr, &self.block_sizes())
    }

    /// Activation map `a(l)` flattened channel-major to `[n, C2 * T/4]`.
    pub fn forward(&self, x: &Tensor, cache: &mut ActivationCache) -> Result<Tensor, NnError> {
        cache.clear();
        let z1 = self.conv1.forward(x)?;
        let a1 = leaky_relu(&z1, LEAKY_ALPHA);
        let (p1, idx1) = maxpool1d_forward(&a1, POOL, POOL)?;
        let z2 = self.conv2.forward(&p1)?;
        let a2 = leaky_relu(&z2, LEAKY_ALPHA);
        let (p2, idx2) = maxpool1d_forward(&a2, POOL, POOL)?;
        let n = p2.dim(0);
        let width = p2.len() / n;
        let out = p2.reshape(&[n, width])?;
        *cache = ActivationCache {
            x: Some(x.clone()),
            z1: Some(z1),
            a1: Some(a1),
            idx1,
            p1: Some(p1),
            z2: Some(z2),
            a2: Some(a2),
            idx2,
        };
        Ok(out)
    }

    /// Backpropagates `dJ/da(l)` through the cached forward pass.
    pub fn backward(&self, cache: &ActivationCache, g_am: &Tensor) -> Result<ClientGrads, NnError> {
        let missing = || NnError::State("activation cache is empty".into());
        let x = cache.x.as_ref().ok_or_else(missing)?;
        let z1 = cache.z1.as_ref().ok_or_else(missing)?;
        let a1 = cache.a1.as_ref().ok_or_else(missing)?;
        let p1 = cache.p1.as_ref().ok_or_else(missing)?;
        let z2 = cache.z2.as_ref().ok_or_else(missing)?;
        let a2 = cache.a2.as_ref().ok_or_else(missing)?;
        let n = x.dim(0);
        let pooled_t = a2.dim(2) / POOL;
        if g_am.shape() != [n, a2.dim(1) * pooled_t] {
            return Err(NnError::Dimension(format!("activation-map gradient shape {:?}", g_am.shape())));
        }
        let g_p2 = g_am.clone().reshape(&[n, a2.dim(1), pooled_t])?;
        let g_a2 = maxpool1d_backward(&g_p2, &cache.idx2, a2.shape())?;
        let g_z2 = leaky_relu_backward(z2, &g_a2, LEAKY_ALPHA);
        let (conv2_w, conv2_b, g_p1) = self.conv2.backward(p1, &g_z2)?;
        let g_a1 = maxpool1d_backward(&g_p1, &cache.idx1, a1.shape())?;
        let g_z1 = leaky_relu_backward(z1, &g_a1, LEAKY_ALPHA);
        let (conv1_w, conv1_b, _) = self.conv1.backward(x, &g_z1)?;
        Ok(ClientGrads { conv1_w, conv1_b, conv2_w, conv2_b })
    }

    pub fn apply_adam(&mut self, state: &mut AdamState, g: &ClientGrads) -> Result<(), NnError> {
        state.step(&mut [&mut self.conv1.w, &mut self.conv1.b, &mut self.conv2.w, &mut self.conv2.b], &g.blocks())
    }
}

/// Layer L: the linear head evaluated by the server.
#[derive(Clone, Debug, PartialEq)]
pub struct ServerModel {
    pub linear: Linear,
}

impl ServerModel {
    pub fn zeros(v: ModelVariant) -> Self {
        Self { linear: Linear::zeros(v.am_dim(), NUM_CLASSES) }
    }

    pub fn param_count(&self) -> usize {
        self.linear.param_count()
    }

    pub fn forward(&self, a: &Tensor) -> Result<Tensor, NnError> {
        self.linear.forward(a)
    }

    /// `dJ/da(l) = dJ/da(L) W^T`, computed with the current weights.
    pub fn input_grad(&self, g_out: &Tensor) -> Result<Tensor, NnError> {
        self.linear.input_grad(g_out)
    }

    /// Gradient-descent update of weights and biases.
    pub fn apply_gd(&mut self, dw: &[f64], db: &[f64], lr: f64) -> Result<(), NnError> {
        sgd_step(&mut self.linear.w, dw, lr)?;
        sgd_step(&mut self.linear.b, db, lr)
    }
}

/// Full parameter set, split after layer 2 of 3.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub variant: ModelVariant,
    pub client: ClientModel,
    pub server: ServerModel,
}

impl ModelParams {
    pub const SPLIT_LAYER: usize = 2;
    pub const LAYER_COUNT: usize = 3;

    /// Uniform draws in `[-0.05, 0.05]`, in layer order, weights before biases.
    pub fn init(variant: ModelVariant, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut client = ClientModel::zeros(variant);
        let mut server = ServerModel::zeros(variant);
        for block in [
            &mut client.conv1.w,
            &mut client.conv1.b,
            &mut client.conv2.w,
            &mut client.conv2.b,
            &mut server.linear.w,
            &mut server.linear.b,
        ] {
            for v in block.iter_mut() {
                *v = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
            }
        }
        Self { variant, client, server }
    }

    pub fn param_count(&self) -> usize {
        self.client.param_count() + self.server.param_count()
    }

    /// All parameters concatenated in init order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for b in [
            &self.client.conv1.w,
            &self.client.conv1.b,
            &self.client.conv2.w,
            &self.client.conv2.b,
            &self.server.linear.w,
            &self.server.linear.b,
        ] {
            out.extend_from_slice(b);
        }
        out
    }

    /// Logits for a batch.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut cache = ActivationCache::default();
        let am = self.client.forward(x, &mut cache)?;
        self.server.forward(&am)
    }

    /// Class predictions over a dataset, evaluated in chunks.
    pub fn predict(&self, x: &Tensor, chunk: usize) -> Result<Vec<usize>, NnError> {
        let mut out = Vec::with_capacity(x.dim(0));
        let mut start = 0;
        while start < x.dim(0) {
            let end = (start + chunk.max(1)).min(x.dim(0));
            let logits = self.logits(&x.slice_rows(start, end))?;
            out.extend(argmax_rows(&logits));
            start = end;
        }
        Ok(out)
    }
}

pub fn argmax_rows(t: &Tensor) -> Vec<usize> {
    let m = t.dim(1);
    t.data()
        .chunks(m)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Percentage of predictions equal to the labels.
pub fn accuracy(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    100.0 * hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(ModelParams::init(ModelVariant::M1, 0).param_count(), 2061);
        assert_eq!(ModelParams::init(ModelVariant::M2, 0).param_count(), 3989);
        assert_eq!(ModelParams::init(ModelVariant::M3, 0).param_count(), 12013);
        assert_eq!(ModelVariant::M1.am_dim(), 256);
        assert_eq!(ModelVariant::M2.am_dim(), 512);
        assert_eq!(ModelVariant::M3.am_dim(), 2000);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ModelParams::init(ModelVariant::M1, 7);
        assert_eq!(a, ModelParams::init(ModelVariant::M1, 7));
        assert_ne!(a, ModelParams::init(ModelVariant::M1, 8));
        assert!(a.flatten().iter().all(|v| v.abs() <= INIT_RANGE));
    }

    #[test]
    fn backward_needs_cache() {
        let p = ModelParams::init(ModelVariant::M1, 1);
        let cache = ActivationCache::default();
        let g = Tensor::zeros(&[1, 256]);
        assert!(matches!(p.client.backward(&cache, &g), Err(NnError::State(_))));
    }

    fn block_mut(p: &mut ModelParams, sel: usize) -> &mut Vec<f64> {
        match sel {
            0 => &mut p.client.conv1.w,
            1 => &mut p.client.conv1.b,
            2 => &mut p.client.conv2.w,
            3 => &mut p.client.conv2.b,
            4 => &mut p.server.linear.w,
            _ => &mut p.server.linear.b,
        }
    }

    fn loss(p: &ModelParams, x: &Tensor, y: &Tensor) -> f64 {
        let yhat = softmax(&p.logits(x).unwrap()).unwrap();
        cross_entropy(&yhat, y).unwrap()
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / na.max(nb).max(1e-300)
    }

    #[test]
    fn whole_model_gradients_match_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let mut p = ModelParams::init(ModelVariant::M1, 5);
        // larger weights so gradients are not dominated by rounding
        for v in p.client.conv1.w.iter_mut().chain(p.client.conv2.w.iter_mut()) {
            *v *= 10.0;
        }
        let n = 3;
        let x = Tensor::new(&[n, 1, 128], (0..n * 128).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut y = vec![0.0; n * NUM_CLASSES];
        for s in 0..n {
            y[s * NUM_CLASSES + s % NUM_CLASSES] = 1.0;
        }
        let y = Tensor::new(&[n, NUM_CLASSES], y).unwrap();

        let mut cache = ActivationCache::default();
        let am = p.client.forward(&x, &mut cache).unwrap();
        let yhat = softmax(&p.server.forward(&am).unwrap()).unwrap();
        let g = softmax_ce_grad(&yhat, &y).unwrap();
        let (dw, db, g_am) = p.server.linear.backward(&am, &g).unwrap();
        let cg = p.client.backward(&cache, &g_am).unwrap();

        let h = 1e-5;
        let numeric = |p: &mut ModelParams, sel: usize, count: usize| -> Vec<f64> {
            (0..count)
                .map(|i| {
                    let orig = block_mut(p, sel)[i];
                    block_mut(p, sel)[i] = orig + h;
                    let lp = loss(p, &x, &y);
                    block_mut(p, sel)[i] = orig - h;
                    let lm = loss(p, &x, &y);
                    block_mut(p, sel)[i] = orig;
                    (lp - lm) / (2.0 * h)
                })
                .collect()
        };
        let analytic: [&[f64]; 6] = [&cg.conv1_w, &cg.conv1_b, &cg.conv2_w, &cg.conv2_b, &dw, &db];
        for (sel, a) in analytic.iter().enumerate() {
            let num = numeric(&mut p, sel, a.len());
            let e = rel(a, &num);
            assert!(e < 1e-4, "block {sel}: relative error {e}");
        }
    }

    #[test]
    fn accuracy_properties() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]), 100.0);
        let t = Tensor::new(&[2, 3], vec![0.1, 0.5, 0.2, 3.0, -1.0, 0.0]).unwrap();
        let scaled = Tensor::new(&[2, 3], t.data().iter().map(|v| v * 7.5).collect()).unwrap();
        assert_eq!(argmax_rows(&t), argmax_rows(&scaled));
        assert_eq!(argmax_rows(&t), vec![1, 0]);
    }
}
