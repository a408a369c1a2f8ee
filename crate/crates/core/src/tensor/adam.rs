use super::array::Tensor;
use crate::error::{Error, Result};

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: Self::BETA1,
            beta2: Self::BETA2,
            eps: Self::EPS,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: vec![params.len()],
                rhs: vec![grads.len()],
            });
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != g.len() || p.len() != m.len() {
                return Err(Error::Shape {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut adam = Adam::new(0.01);
        adam.eps = 0.0;
        let mut params = vec![Tensor::from_vec(vec![1.0, -2.0, 0.5])];
        adam.step(&mut params, &[vec![3.0, -0.2, 1e-3]]).unwrap();
        let expect = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, b) in params[0].data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(0.1);
        let mut params = vec![Tensor::from_vec(vec![1.0, 2.0])];
        adam.step(&mut params, &[vec![0.0, 0.0]]).unwrap();
        assert_eq!(params[0].data(), &[1.0, 2.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn two_steps_match_scalar_recurrence() {
        // Oracle: the textbook recurrence written out for a scalar.
        fn oracle(w0: f64, g: f64, lr: f64, steps: i32) -> f64 {
            let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8f64);
            let (mut m, mut v, mut w) = (0.0f64, 0.0f64, w0);
            for t in 1..=steps {
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g * g;
                let mh = m / (1.0 - b1.powi(t));
                let vh = v / (1.0 - b2.powi(t));
                w -= lr * mh / (vh.sqrt() + eps);
            }
            w
        }
        let mut adam = Adam::new(1e-3);
        let mut params = vec![Tensor::from_vec(vec![0.3, -0.7])];
        let g = vec![0.25, -4.0];
        adam.step(&mut params, &[g.clone()]).unwrap();
        adam.step(&mut params, &[g.clone()]).unwrap();
        assert!((params[0].data()[0] - oracle(0.3, 0.25, 1e-3, 2)).abs() < 1e-15);
        assert!((params[0].data()[1] - oracle(-0.7, -4.0, 1e-3, 2)).abs() < 1e-15);
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let mut adam = Adam::new(0.1);
        let mut params = vec![Tensor::from_vec(vec![1.0, 2.0])];
        assert!(adam.step(&mut params, &[vec![0.0]]).is_err());
    }
}
