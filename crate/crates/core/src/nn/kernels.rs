//! Numeric kernels shared by the tape ops and the streaming layers, so both
//! paths perform identical arithmetic per output element.

use crate::nn::Real;

/// Geometry of a 1-D convolution. Weight layout is `out × (in / groups) × kernel`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub stride: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize) -> Self {
        Self { in_ch, out_ch, kernel, dilation: 1, stride: 1, groups: 1 }
    }

    pub fn dilation(mut self, d: usize) -> Self {
        self.dilation = d;
        self
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn groups(mut self, g: usize) -> Self {
        self.groups = g;
        self
    }

    /// Left padding (batch) or history length (streaming).
    pub fn receptive_pad(&self) -> usize {
        (self.kernel - 1) * self.dilation
    }

    pub fn in_per_group(&self) -> usize {
        self.in_ch / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_ch / self.groups
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_per_group() * self.kernel
    }

    /// Causal output length for `len` input samples.
    pub fn output_len(&self, len: usize) -> usize {
        len.div_ceil(self.stride)
    }

    pub fn is_valid(&self) -> bool {
        self.kernel >= 1
            && self.dilation >= 1
            && self.stride >= 1
            && self.groups >= 1
            && self.in_ch.is_multiple_of(self.groups)
            && self.out_ch.is_multiple_of(self.groups)
            && self.in_ch > 0
            && self.out_ch > 0
    }
}

/// `y[co, t] = b[co] + Σ w[co, ci, k] · x_ext[ci, t·stride + k·dilation]`.
///
/// `x_ext` holds `in_ch` rows of `ext_len` samples whose first
/// `receptive_pad()` samples are history (zeros in batch mode).
pub fn conv_forward<T: Real>(
    spec: &ConvSpec,
    x_ext: &[T],
    ext_len: usize,
    weight: &[T],
    bias: Option<&[T]>,
    out_len: usize,
) -> Vec<T> {
    let cin_g = spec.in_per_group();
    let cout_g = spec.out_per_group();
    let k_len = spec.kernel;
    let mut y = vec![T::zero(); spec.out_ch * out_len];
    for co in 0..spec.out_ch {
        let group = co / cout_g;
        let row = &mut y[co * out_len..(co + 1) * out_len];
        if let Some(b) = bias {
            row.fill(b[co]);
        }
        for cil in 0..cin_g {
            let ci = group * cin_g + cil;
            let xrow = &x_ext[ci * ext_len..(ci + 1) * ext_len];
            for k in 0..k_len {
                let wv = weight[(co * cin_g + cil) * k_len + k];
                let off = k * spec.dilation;
                if spec.stride == 1 {
                    let src = &xrow[off..off + out_len];
                    for (acc, &xv) in row.iter_mut().zip(src) {
                        *acc = *acc + wv * xv;
                    }
                } else {
                    for (t, acc) in row.iter_mut().enumerate() {
                        *acc = *acc + wv * xrow[off + t * spec.stride];
                    }
                }
            }
        }
    }
    y
}

/// Adjoint of [`conv_forward`]. Accumulates into the provided buffers.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Real>(
    spec: &ConvSpec,
    x_ext: &[T],
    ext_len: usize,
    weight: &[T],
    dy: &[T],
    out_len: usize,
    dx_ext: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let cin_g = spec.in_per_group();
    let cout_g = spec.out_per_group();
    let k_len = spec.kernel;
    if let Some(db) = db {
        for co in 0..spec.out_ch {
            db[co] = db[co] + dy[co * out_len..(co + 1) * out_len].iter().copied().sum::<T>();
        }
    }
    if let Some(dw) = dw {
        for co in 0..spec.out_ch {
            let group = co / cout_g;
            let g = &dy[co * out_len..(co + 1) * out_len];
            for cil in 0..cin_g {
                let ci = group * cin_g + cil;
                let xrow = &x_ext[ci * ext_len..(ci + 1) * ext_len];
                for k in 0..k_len {
                    let off = k * spec.dilation;
                    let mut acc = T::zero();
                    if spec.stride == 1 {
                        for (&gv, &xv) in g.iter().zip(&xrow[off..off + out_len]) {
                            acc = acc + gv * xv;
                        }
                    } else {
                        for (t, &gv) in g.iter().enumerate() {
                            acc = acc + gv * xrow[off + t * spec.stride];
                        }
                    }
                    let idx = (co * cin_g + cil) * k_len + k;
                    dw[idx] = dw[idx] + acc;
                }
            }
        }
    }
    if let Some(dx) = dx_ext {
        for co in 0..spec.out_ch {
            let group = co / cout_g;
            let g = &dy[co * out_len..(co + 1) * out_len];
            for cil in 0..cin_g {
                let ci = group * cin_g + cil;
                let dxrow = &mut dx[ci * ext_len..(ci + 1) * ext_len];
                for k in 0..k_len {
                    let wv = weight[(co * cin_g + cil) * k_len + k];
                    let off = k * spec.dilation;
                    if spec.stride == 1 {
                        for (d, &gv) in dxrow[off..off + out_len].iter_mut().zip(g) {
                            *d = *d + wv * gv;
                        }
                    } else {
                        for (t, &gv) in g.iter().enumerate() {
                            let d = &mut dxrow[off + t * spec.stride];
                            *d = *d + wv * gv;
                        }
                    }
                }
            }
        }
    }
}

/// Prepend `pad` zeros to every row of a `channels × len` buffer.
pub fn left_pad<T: Real>(x: &[T], channels: usize, len: usize, pad: usize) -> Vec<T> {
    let ext = len + pad;
    let mut out = vec![T::zero(); channels * ext];
    for c in 0..channels {
        out[c * ext + pad..(c + 1) * ext].copy_from_slice(&x[c * len..(c + 1) * len]);
    }
    out
}

/// Channel normalisation constant.
pub const CHANNEL_NORM_EPS: f64 = 1e-5;

/// Normalise each time step across channels. Returns `(y, inv_std per t)`.
pub fn channel_norm_forward<T: Real>(x: &[T], channels: usize, len: usize) -> (Vec<T>, Vec<T>) {
    let mut y = vec![T::zero(); channels * len];
    let mut inv = vec![T::zero(); len];
    let cn = T::lit(channels as f64);
    let eps = T::lit(CHANNEL_NORM_EPS);
    for t in 0..len {
        let mut mean = T::zero();
        for c in 0..channels {
            mean = mean + x[c * len + t];
        }
        mean = mean / cn;
        let mut var = T::zero();
        for c in 0..channels {
            let d = x[c * len + t] - mean;
            var = var + d * d;
        }
        var = var / cn;
        let is = T::one() / (var + eps).sqrt();
        inv[t] = is;
        for c in 0..channels {
            y[c * len + t] = (x[c * len + t] - mean) * is;
        }
    }
    (y, inv)
}

/// `tanh(a) ⊙ softmax_channels(b)`. Returns `(y, softmax(b))`.
pub fn gated_tanh_forward<T: Real>(a: &[T], b: &[T], channels: usize, len: usize) -> (Vec<T>, Vec<T>) {
    let mut y = vec![T::zero(); channels * len];
    let mut s = vec![T::zero(); channels * len];
    for t in 0..len {
        let mut mx = T::neg_infinity();
        for c in 0..channels {
            mx = mx.max(b[c * len + t]);
        }
        let mut z = T::zero();
        for c in 0..channels {
            let e = (b[c * len + t] - mx).exp();
            s[c * len + t] = e;
            z = z + e;
        }
        for c in 0..channels {
            let i = c * len + t;
            s[i] = s[i] / z;
            y[i] = a[i].tanh() * s[i];
        }
    }
    (y, s)
}

#[inline]
pub fn leaky_relu<T: Real>(v: T, slope: T) -> T {
    if v >= T::zero() {
        v
    } else {
        v * slope
    }
}
