use crate::config::TrainConfig;
use crate::params::ModelParams;
use crate::scalar::Scalar;

/// Adam with L2 weight decay added to the gradient.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    steps: i32,
    m: ModelParams<S>,
    v: ModelParams<S>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &ModelParams<S>, config: &TrainConfig) -> Self {
        Self {
            lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            eps: config.adam_eps,
            weight_decay: config.weight_decay,
            steps: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.steps
    }

    pub fn step(&mut self, params: &mut ModelParams<S>, grads: &ModelParams<S>) {
        self.steps += 1;
        let (b1, b2) = (S::from_f64(self.beta1), S::from_f64(self.beta2));
        let c1 = S::from_f64(1.0 - self.beta1.powi(self.steps));
        let c2 = S::from_f64(1.0 - self.beta2.powi(self.steps));
        let (lr, eps, wd) = (S::from_f64(self.lr), S::from_f64(self.eps), S::from_f64(self.weight_decay));
        let one = S::one();
        for (((p, g), m), v) in params
            .tensors
            .iter_mut()
            .zip(&grads.tensors)
            .zip(&mut self.m.tensors)
            .zip(&mut self.v.tensors)
        {
            for i in 0..p.data.len() {
                let grad = g.data[i] + wd * p.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * grad;
                v.data[i] = b2 * v.data[i] + (one - b2) * grad * grad;
                let m_hat = m.data[i] / c1;
                let v_hat = v.data[i] / c2;
                p.data[i] = p.data[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
