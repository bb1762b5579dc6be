use crate::error::{shape_err, Error, Result};
use crate::nn::{ParamGrads, Real, Tensor, WeightStore};

/// Bias-corrected Adam with per-parameter first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    /// Number of updates applied so far.
    pub step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(store: &WeightStore<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor<T>> = store.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Self { beta1: T::lit(beta1), beta2: T::lit(beta2), eps: T::lit(eps), m: zeros.clone(), v: zeros, step: 0 }
    }

    pub fn step(&mut self, store: &mut WeightStore<T>, grads: &ParamGrads<T>, lr: f64) -> Result<()> {
        if !(lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
        }
        if grads.grads.len() != store.len() || self.m.len() != store.len() {
            return Err(shape_err!("optimizer state does not match the parameter store"));
        }
        self.step += 1;
        let t = self.step as i32;
        let one = T::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        let lr = T::lit(lr);
        for i in 0..store.len() {
            let g = grads.grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let w = store.tensor_mut(crate::nn::ParamId(i)).data_mut();
            for j in 0..w.len() {
                m[j] = self.beta1 * m[j] + (one - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (one - self.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                w[j] = w[j] - lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
