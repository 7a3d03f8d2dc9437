use super::param::Param;

/// Adam with bias correction. Moment buffers are matched to parameters by
/// position, so callers must pass the same parameter list on every step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, params: Vec<&mut Param>) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for ((p, m), v) in params.into_iter().zip(&mut self.m).zip(&mut self.v) {
            let (value, grad) = p.value_and_grad_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                value[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut p = Param::new("w", Tensor::row_vector(&[1.0, -1.0]).unwrap());
        p.add_grad(&[3.0, -0.5]);
        let mut opt = Adam::new(0.01);
        opt.step(vec![&mut p]);
        let v = p.value().data();
        assert!((v[0] - 0.99).abs() < 1e-6);
        assert!((v[1] + 0.99).abs() < 1e-6);
        assert_eq!(p.grad(), &[0.0, 0.0]);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Param::new("x", Tensor::scalar(5.0));
        let mut opt = Adam::new(0.1);
        for _ in 0..2000 {
            let x = p.value().data()[0];
            p.add_grad(&[2.0 * (x - 2.0)]);
            opt.step(vec![&mut p]);
        }
        assert!((p.value().data()[0] - 2.0).abs() < 1e-3);
    }
}
