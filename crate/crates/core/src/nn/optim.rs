use super::NnError;

/// Adam moments for a list of parameter blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::State("Adam block count mismatch".into()));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(NnError::State("Adam block size mismatch".into()));
            }
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// `p <- p - lr * g`.
pub fn sgd_step(p: &mut [f64], g: &[f64], lr: f64) -> Result<(), NnError> {
    if p.len() != g.len() {
        return Err(NnError::Dimension(format!("parameter {} vs gradient {}", p.len(), g.len())));
    }
    for (pv, gv) in p.iter_mut().zip(g) {
        *pv -= lr * gv;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adam_single_step() {
        let mut st = AdamState::new(0.001, &[1]);
        let mut p = vec![0.0];
        st.step(&mut [&mut p], &[&[0.5]]).unwrap();
        // m_hat = 0.5, v_hat = 0.25, so the step is lr * 0.5 / (0.5 + eps)
        let want = -0.001 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - want).abs() < 1e-15);
        assert!((p[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut st = AdamState::new(0.001, &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        st.step(&mut [&mut p], &[&[0.0; 3]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert!(st.step(&mut [&mut p], &[&[0.0; 2]]).is_err());
    }

    #[test]
    fn sgd_examples() {
        let mut p = vec![1.0];
        sgd_step(&mut p, &[2.0], 0.001).unwrap();
        assert_eq!(p, vec![0.998]);
        let mut p = vec![3.0, 4.0];
        sgd_step(&mut p, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(p, vec![3.0, 4.0]);
    }

    #[test]
    fn sgd_matches_elementwise_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut p = w.clone();
        sgd_step(&mut p, &g, 0.01).unwrap();
        for i in 0..20 {
            assert_eq!(p[i], w[i] - 0.01 * g[i]);
        }
    }

    proptest! {
        #[test]
        fn adam_steps_are_bounded(g in -100.0f64..100.0, lr in 1e-4f64..1e-1) {
            prop_assume!(g.abs() > 1e-6);
            let mut st = AdamState::new(lr, &[1]);
            let mut p = vec![0.0];
            for _ in 0..2 {
                let before = p[0];
                st.step(&mut [&mut p], &[&[g]]).unwrap();
                prop_assert!((p[0] - before).abs() <= lr * (1.0 + 1e-9));
            }
        }
    }
}
