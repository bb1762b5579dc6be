//! Causal convolution with optional carried history.

use crate::error::{shape_err, Result};
use crate::nn::kernels::{conv_forward, left_pad};
use crate::nn::{ConvSpec, Real, Tensor};

/// Input history of one causal convolution between streaming calls.
///
/// Holds the last `dilation · (kernel − 1)` input samples per channel, plus
/// the phase of a strided layer.
#[derive(Clone, Debug)]
pub struct StreamCtx<T> {
    spec: ConvSpec,
    history: Vec<T>,
    phase: usize,
}

impl<T: Real> StreamCtx<T> {
    pub fn new(spec: ConvSpec) -> Self {
        Self { spec, history: vec![T::zero(); spec.in_ch * spec.receptive_pad()], phase: 0 }
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.spec
    }

    pub(crate) fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn reset(&mut self) {
        self.history.fill(T::zero());
        self.phase = 0;
    }

    /// Convolve a `in_ch × len` block, continuing from the retained history.
    pub fn process(&mut self, x: &[T], len: usize, weight: &[T], bias: Option<&[T]>) -> Vec<T> {
        let spec = self.spec;
        let pad = spec.receptive_pad();
        let ext_len = pad + len;
        let mut ext = vec![T::zero(); spec.in_ch * ext_len];
        for c in 0..spec.in_ch {
            ext[c * ext_len..c * ext_len + pad].copy_from_slice(&self.history[c * pad..(c + 1) * pad]);
            ext[c * ext_len + pad..(c + 1) * ext_len].copy_from_slice(&x[c * len..(c + 1) * len]);
        }
        // First output of this block sits at absolute input index `phase`.
        let start = self.phase;
        let out_len = if start >= len { 0 } else { (len - start).div_ceil(spec.stride) };
        let y = if start == 0 {
            conv_forward(&spec, &ext, ext_len, weight, bias, out_len)
        } else {
            let shifted: Vec<T> = (0..spec.in_ch).flat_map(|c| ext[c * ext_len + start..(c + 1) * ext_len].iter().copied()).collect();
            conv_forward(&spec, &shifted, ext_len - start, weight, bias, out_len)
        };
        let consumed = start + out_len * spec.stride;
        self.phase = consumed - len;
        for c in 0..spec.in_ch {
            let row = &ext[c * ext_len..(c + 1) * ext_len];
            self.history[c * pad..(c + 1) * pad].copy_from_slice(&row[ext_len - pad..]);
        }
        y
    }
}

/// Causal 1-D convolution of a `C_in × L` tensor with a `C_out × C_in/groups × K`
/// kernel. With a context the call continues from earlier input.
pub fn causal_conv1d<T: Real>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    dilation: usize,
    ctx: Option<&mut StreamCtx<T>>,
) -> Result<Tensor<T>> {
    if x.rank() != 2 || weight.rank() != 3 {
        return Err(shape_err!("conv expects input C×L and kernel O×I×K, got {:?} and {:?}", x.shape(), weight.shape()));
    }
    let (out_ch, in_g, kernel) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
    if in_g == 0 || !x.channels().is_multiple_of(in_g) {
        return Err(shape_err!("kernel input width {in_g} does not divide {} channels", x.channels()));
    }
    let spec = ConvSpec::new(x.channels(), out_ch, kernel).dilation(dilation).groups(x.channels() / in_g);
    if !spec.is_valid() {
        return Err(shape_err!("invalid convolution {spec:?}"));
    }
    if let Some(b) = bias {
        if b.len() != out_ch {
            return Err(shape_err!("bias has {} values for {out_ch} channels", b.len()));
        }
    }
    let len = x.time();
    let bias = bias.map(Tensor::data);
    let y = match ctx {
        Some(ctx) => {
            if ctx.spec.in_ch != spec.in_ch || ctx.spec.receptive_pad() != spec.receptive_pad() || ctx.spec.stride != 1 {
                return Err(shape_err!("stream context {:?} does not fit {spec:?}", ctx.spec));
            }
            ctx.process(x.data(), len, weight.data(), bias)
        }
        None => {
            let pad = spec.receptive_pad();
            let ext = left_pad(x.data(), spec.in_ch, len, pad);
            conv_forward(&spec, &ext, len + pad, weight.data(), bias, len)
        }
    };
    Tensor::from_vec(&[out_ch, len], y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_response_is_kernel() {
        let mut x = Tensor::zeros(&[1, 8]);
        x.data_mut()[0] = 1.0f64;
        let w = Tensor::from_vec(&[1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = causal_conv1d(&x, &w, None, 2, None).unwrap();
        // Tap k sees x[t − (K−1−k)·d].
        assert_eq!(y.data(), &[2.0, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn streaming_matches_batch() {
        let x = Tensor::from_vec(&[2, 24], (0..48).map(|i| ((i * 7) % 11) as f64 - 5.0).collect()).unwrap();
        let w = Tensor::from_vec(&[3, 2, 3], (0..18).map(|i| 0.1 * i as f64 - 0.7).collect()).unwrap();
        let b = Tensor::from_vec(&[3], vec![0.1, 0.2, -0.3]).unwrap();
        let batch = causal_conv1d(&x, &w, Some(&b), 3, None).unwrap();
        let mut ctx = StreamCtx::new(ConvSpec::new(2, 3, 3).dilation(3));
        let mut parts = Vec::new();
        for (s, e) in [(0, 5), (5, 6), (6, 17), (17, 24)] {
            parts.push(causal_conv1d(&x.slice_time(s, e), &w, Some(&b), 3, Some(&mut ctx)).unwrap());
        }
        assert_eq!(Tensor::cat_time(&parts).unwrap(), batch);
    }

    #[test]
    fn strided_stream_matches_batch() {
        let spec = ConvSpec::new(1, 1, 5).stride(2);
        let x: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = [0.2, -0.1, 0.4, 0.3, -0.5];
        let pad = spec.receptive_pad();
        let ext = left_pad(&x, 1, 20, pad);
        let batch = conv_forward(&spec, &ext, 20 + pad, &w, None, spec.output_len(20));
        let mut ctx = StreamCtx::new(spec);
        let mut out = Vec::new();
        for (s, e) in [(0, 3), (3, 4), (4, 11), (11, 20)] {
            out.extend(ctx.process(&x[s..e], e - s, &w, None));
        }
        assert_eq!(out, batch);
    }

    #[test]
    fn rejects_mismatched_kernel() {
        let x = Tensor::<f32>::zeros(&[3, 4]);
        let w = Tensor::zeros(&[2, 2, 3]);
        assert!(causal_conv1d(&x, &w, None, 1, None).is_err());
    }
}
