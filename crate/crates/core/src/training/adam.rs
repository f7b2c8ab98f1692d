use crate::model::Params;
use crate::numeric::{cst, Real};

/// Adam with bias correction; moments are kept as flat vectors in the
/// parameter declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<R> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<R>,
    pub v: Vec<R>,
}

impl<R: Real> Adam<R> {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![R::zero(); n_params],
            v: vec![R::zero(); n_params],
        }
    }

    /// Applies one update to `params` given `grads` of identical layout.
    pub fn update<P: Params<R>>(&mut self, params: &mut P, grads: &mut P) {
        let g = grads.flatten();
        assert_eq!(g.len(), self.m.len(), "gradient length does not match optimizer state");
        self.step += 1;
        let t = self.step as i32;
        let b1: R = cst(self.beta1);
        let b2: R = cst(self.beta2);
        let one = R::one();
        let c1: R = cst(1.0 / (1.0 - self.beta1.powi(t)));
        let c2: R = cst(1.0 / (1.0 - self.beta2.powi(t)));
        let lr: R = cst(self.lr);
        let eps: R = cst(self.eps);
        let (m, v) = (&mut self.m, &mut self.v);
        let mut k = 0;
        params.visit_params(&mut |_, w| {
            for x in w.iter_mut() {
                let gi = g[k];
                m[k] = b1 * m[k] + (one - b1) * gi;
                v[k] = b2 * v[k] + (one - b2) * gi * gi;
                let m_hat = m[k] * c1;
                let v_hat = v[k] * c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
                k += 1;
            }
        });
    }
}
