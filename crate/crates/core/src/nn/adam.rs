use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Rescale the gradient when its L2 norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 3e-4, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, clip_norm: None }
    }
}

/// First and second moment estimates for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub step: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![S::zero(); len], v: vec![S::zero(); len], step: 0 }
    }

    pub fn update(&mut self, cfg: &AdamConfig, params: &mut [S], grads: &[S]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let mut scale = S::one();
        if let Some(max) = cfg.clip_norm {
            let norm = grads.iter().map(|&g| g * g).sum::<S>().sqrt();
            if norm.to_f64_lossy() > max {
                scale = S::of(max) / norm;
            }
        }
        let (b1, b2) = (S::of(cfg.beta1), S::of(cfg.beta2));
        let t = self.step as i32;
        let bc1 = S::one() - S::of(cfg.beta1.powi(t));
        let bc2 = S::one() - S::of(cfg.beta2.powi(t));
        let lr = S::of(cfg.learning_rate);
        let eps = S::of(cfg.epsilon);
        for i in 0..params.len() {
            let g = grads[i] * scale;
            self.m[i] = b1 * self.m[i] + (S::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (S::one() - b2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] = params[i] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}
