use ndarray::{Array2, Zip};

/// Bias-corrected Adam over a list of matrices.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// One update of every parameter matrix with its gradient.
    pub fn step(&mut self, params: &mut [&mut Array2<f64>], grads: &[&Array2<f64>]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (self.lr, self.eps);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            Zip::from(&mut **p)
                .and(*g)
                .and(&mut self.m[k])
                .and(&mut self.v[k])
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *w -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matches_hand_rolled_scalar_trace() {
        // minimise f(w) = w^2 from w = 1; gradient 2w.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let mut w = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
            expected.push(w);
        }
        let mut p = array![[1.0]];
        let mut adam = Adam::new(lr, b1, b2, eps);
        for want in expected {
            let g = p.mapv(|x| 2.0 * x);
            adam.step(&mut [&mut p], &[&g]);
            assert!((p[[0, 0]] - want).abs() < 1e-15);
        }
        // first step moves by ~lr regardless of gradient scale
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut p = array![[0.5, -0.5]];
        let g = Array2::zeros((1, 2));
        let mut adam = Adam::new(1e-3, 0.9, 0.999, 1e-8);
        adam.step(&mut [&mut p], &[&g]);
        assert_eq!(p, array![[0.5, -0.5]]);
    }
}
