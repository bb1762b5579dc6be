//! Out-of-tape tensor operations.

use crate::error::{shape_err, Result};
use crate::nn::kernels::{channel_norm_forward, gated_tanh_forward};
use crate::nn::{Real, Tensor};

/// Zero mean, unit variance across channels at every time step.
pub fn channel_norm<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 2 {
        return Err(shape_err!("channel_norm expects a rank-2 tensor, got {:?}", x.shape()));
    }
    let (y, _) = channel_norm_forward(x.data(), x.channels(), x.time());
    Tensor::from_vec(x.shape(), y)
}

/// `tanh(a) ⊙ softmax(b)` with the softmax taken across channels.
pub fn softmax_gated_tanh<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() || a.rank() != 2 {
        return Err(shape_err!("gated tanh operands {:?} and {:?}", a.shape(), b.shape()));
    }
    let (y, _) = gated_tanh_forward(a.data(), b.data(), a.channels(), a.time());
    Tensor::from_vec(a.shape(), y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_norm_moments() {
        let x = Tensor::from_vec(&[3, 2], vec![1.0f64, 10.0, 2.0, 20.0, 6.0, -5.0]).unwrap();
        let y = channel_norm(&x).unwrap();
        for t in 0..2 {
            let col: Vec<f64> = (0..3).map(|c| y.channel(c)[t]).collect();
            let mean = col.iter().sum::<f64>() / 3.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn gate_weights_sum_to_one() {
        let a = Tensor::full(&[4, 3], 50.0f64);
        let b = Tensor::from_vec(&[4, 3], (0..12).map(|i| i as f64 * 0.3).collect()).unwrap();
        let y = softmax_gated_tanh(&a, &b).unwrap();
        for t in 0..3 {
            let s: f64 = (0..4).map(|c| y.channel(c)[t]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(softmax_gated_tanh(&a, &Tensor::zeros(&[4, 2])).is_err());
    }
}
