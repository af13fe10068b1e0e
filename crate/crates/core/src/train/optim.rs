use super::config::Optimizer;

/// Adam or plain SGD over a flat parameter vector. Weight decay is added to
/// the gradient as an L2 term.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: Optimizer, lr: f64, weight_decay: f64, len: usize) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            match self.kind {
                Optimizer::Sgd => params[i] -= self.lr * g,
                Optimizer::Adam => {
                    self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
                    self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        for kind in [Optimizer::Adam, Optimizer::Sgd] {
            let mut x = vec![3.0, -2.0];
            let mut opt = OptimizerState::new(kind, 0.05, 0.0, 2);
            for _ in 0..2000 {
                let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
                opt.step(&mut x, &g);
            }
            assert!(x.iter().all(|v| v.abs() < 1e-3), "{kind:?}: {x:?}");
        }
    }

    #[test]
    fn first_adam_step_has_learning_rate_size() {
        let mut x = vec![1.0];
        let mut opt = OptimizerState::new(Optimizer::Adam, 1e-3, 0.0, 1);
        opt.step(&mut x, &[123.0]);
        assert!((x[0] - (1.0 - 1e-3)).abs() < 1e-9);
    }
}
