//! Reverse-mode automatic differentiation over a linear tape.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_traits::Float;
use rustfft::num_complex::Complex;

use crate::dsp::pqmf::{analysis_adjoint, analysis_ext, synthesis_adjoint};
use crate::dsp::resample::{resample_rows, resample_rows_adjoint};
use crate::dsp::{PqmfBank, Ratio, StftPlan};
use crate::error::{shape_err, Error, Result};
use crate::nn::kernels::{channel_norm_forward, conv_backward, conv_forward, gated_tanh_forward, left_pad};
use crate::nn::weights::weight_norm;
use crate::nn::{ConvSpec, ParamGrads, ParamId, Real, Tensor, WeightStore};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

enum Op<T: Real> {
    Leaf,
    WeightNorm { g: usize, v: usize, norms: Vec<T> },
    Conv { x: usize, w: usize, b: Option<usize>, spec: ConvSpec },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, T),
    Offset(usize),
    Tanh(usize),
    LeakyRelu(usize, T),
    Square(usize),
    Sqrt(usize),
    Ln(usize),
    Abs(usize),
    Sum(usize),
    Mean(usize),
    ChannelNorm { x: usize, inv_std: Vec<T> },
    GatedTanh { a: usize, b: usize, soft: Vec<T> },
    Concat(Vec<usize>),
    SliceTime { x: usize, start: usize },
    Resample { x: usize, ratio: Ratio },
    AvgPool { x: usize, factor: usize },
    PqmfAnalysis { x: usize, bank: Arc<PqmfBank> },
    PqmfSynthesis { x: usize, bank: Arc<PqmfBank> },
    StftMag { x: usize, plan: Arc<StftPlan<T>>, spec: Vec<Complex<T>> },
}

impl<T: Real> Op<T> {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::WeightNorm { g, v, .. } => vec![*g, *v],
            Op::Conv { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b.iter());
                v
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![*a, *b],
            Op::GatedTanh { a, b, .. } => vec![*a, *b],
            Op::Scale(a, _) | Op::LeakyRelu(a, _) => vec![*a],
            Op::Offset(a) | Op::Tanh(a) | Op::Square(a) | Op::Sqrt(a) | Op::Ln(a) | Op::Abs(a) | Op::Sum(a) | Op::Mean(a) => {
                vec![*a]
            }
            Op::ChannelNorm { x, .. }
            | Op::SliceTime { x, .. }
            | Op::Resample { x, .. }
            | Op::AvgPool { x, .. }
            | Op::PqmfAnalysis { x, .. }
            | Op::PqmfSynthesis { x, .. }
            | Op::StftMag { x, .. } => vec![*x],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

struct Node<T: Real> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// A tape of recorded operations. Values are computed eagerly.
pub struct Graph<T: Real> {
    id: u64,
    nodes: Vec<Node<T>>,
    params: HashMap<(u64, ParamId), usize>,
    frozen: Vec<u64>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!("{what}: {:?} vs {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

fn rank2<T: Real>(a: &Tensor<T>, what: &str) -> Result<()> {
    if a.rank() != 2 {
        return Err(shape_err!("{what} expects a rank-2 tensor, got {:?}", a.shape()));
    }
    Ok(())
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Vec<T> {
    a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect()
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed), nodes: Vec::new(), params: HashMap::new(), frozen: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        let needs_grad = op.inputs().iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    fn push_leaf(&mut self, value: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad });
        Var { tape: self.id, index: self.nodes.len() - 1 }
    }

    fn val(&self, i: usize) -> &Tensor<T> {
        &self.nodes[i].value
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        Ok(self.val(self.idx(v)?))
    }

    /// Scalar value of a one-element variable.
    pub fn scalar(&self, v: Var) -> Result<T> {
        let t = self.value(v)?;
        if t.len() != 1 {
            return Err(shape_err!("expected a scalar, got {:?}", t.shape()));
        }
        Ok(t.data()[0])
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, true)
    }

    /// A leaf without a gradient; nothing downstream of constants alone is differentiated.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push_leaf(t, false)
    }

    /// Parameters of `store` recorded from now on are constants.
    pub fn freeze(&mut self, store: &WeightStore<T>) {
        self.frozen.push(store.uid());
    }

    /// Record a stored parameter. Repeated requests return the same variable.
    pub fn param(&mut self, store: &WeightStore<T>, name: &str) -> Result<Var> {
        let id = store.id(name)?;
        let key = (store.uid(), id);
        if let Some(&i) = self.params.get(&key) {
            return Ok(Var { tape: self.id, index: i });
        }
        let trainable = !self.frozen.contains(&store.uid());
        let v = self.push_leaf(store.tensor(id).clone(), trainable);
        self.params.insert(key, v.index);
        Ok(v)
    }

    /// `g · v / ‖v‖` per output channel (first axis).
    pub fn weight_norm(&mut self, g: Var, v: Var) -> Result<Var> {
        let (gi, vi) = (self.idx(g)?, self.idx(v)?);
        let (gt, vt) = (self.val(gi), self.val(vi));
        if gt.len() != vt.shape()[0] || vt.len() % gt.len() != 0 {
            return Err(shape_err!("weight norm gain {:?} vs direction {:?}", gt.shape(), vt.shape()));
        }
        let (w, norms) = weight_norm(gt.data(), vt.data(), gt.len());
        let value = Tensor::from_vec(vt.shape(), w)?;
        Ok(self.push(value, Op::WeightNorm { g: gi, v: vi, norms }))
    }

    /// Causal convolution of a `C_in × L` input; output length `ceil(L / stride)`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, spec: ConvSpec) -> Result<Var> {
        let (xi, wi) = (self.idx(x)?, self.idx(w)?);
        let bi = b.map(|b| self.idx(b)).transpose()?;
        let xt = self.val(xi);
        rank2(xt, "conv")?;
        if !spec.is_valid() || xt.channels() != spec.in_ch || self.val(wi).len() != spec.weight_len() {
            return Err(shape_err!("conv {spec:?} with input {:?} and kernel {:?}", xt.shape(), self.val(wi).shape()));
        }
        if let Some(bi) = bi {
            if self.val(bi).len() != spec.out_ch {
                return Err(shape_err!("conv bias {:?} for {} channels", self.val(bi).shape(), spec.out_ch));
            }
        }
        let len = xt.time();
        let pad = spec.receptive_pad();
        let ext = left_pad(xt.data(), spec.in_ch, len, pad);
        let out_len = spec.output_len(len);
        let y = conv_forward(&spec, &ext, len + pad, self.val(wi).data(), bi.map(|b| self.val(b).data()), out_len);
        let value = Tensor::from_vec(&[spec.out_ch, out_len], y)?;
        Ok(self.push(value, Op::Conv { x: xi, w: wi, b: bi, spec }))
    }

    /// Weight-normalised convolution registered in `store` as `name`.
    pub fn conv_layer(&mut self, store: &WeightStore<T>, name: &str, spec: ConvSpec, x: Var) -> Result<Var> {
        let g = self.param(store, &format!("{name}.g"))?;
        let v = self.param(store, &format!("{name}.v"))?;
        let b = self.param(store, &format!("{name}.b"))?;
        let w = self.weight_norm(g, v)?;
        self.conv1d(x, w, Some(b), spec)
    }

    fn binary(&mut self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T, op: fn(usize, usize) -> Op<T>) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        same_shape(self.val(ai), self.val(bi), what)?;
        let data = zip_map(self.val(ai), self.val(bi), f);
        let value = Tensor::from_vec(self.val(ai).shape(), data)?;
        Ok(self.push(value, op(ai, bi)))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.nodes[a.index].value.map(f);
        self.push(value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let i = self.idx(a)?;
        let c = T::lit(c);
        Ok(self.unary(a, |x| x * c, Op::Scale(i, c)))
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Result<Var> {
        let i = self.idx(a)?;
        let c = T::lit(c);
        Ok(self.unary(a, |x| x + c, Op::Offset(i)))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let i = self.idx(a)?;
        Ok(self.unary(a, T::tanh, Op::Tanh(i)))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let i = self.idx(a)?;
        let s = T::lit(slope);
        Ok(self.unary(a, |x| crate::nn::kernels::leaky_relu(x, s), Op::LeakyRelu(i, s)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.leaky_relu(a, 0.0)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let i = self.idx(a)?;
        Ok(self.unary(a, |x| x * x, Op::Square(i)))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let i = self.idx(a)?;
        Ok(self.unary(a, T::sqrt, Op::Sqrt(i)))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        let i = self.idx(a)?;
        Ok(self.unary(a, T::ln, Op::Ln(i)))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let i = self.idx(a)?;
        Ok(self.unary(a, |x: T| Float::abs(x), Op::Abs(i)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let i = self.idx(a)?;
        let s = self.val(i).sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(i)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let i = self.idx(a)?;
        if self.val(i).is_empty() {
            return Err(shape_err!("mean of an empty tensor"));
        }
        let s = self.val(i).mean();
        Ok(self.push(Tensor::scalar(s), Op::Mean(i)))
    }

    /// Normalise each time step across channels.
    pub fn channel_norm(&mut self, x: Var) -> Result<Var> {
        let i = self.idx(x)?;
        let t = self.val(i);
        rank2(t, "channel_norm")?;
        let (y, inv_std) = channel_norm_forward(t.data(), t.channels(), t.time());
        let value = Tensor::from_vec(t.shape(), y)?;
        Ok(self.push(value, Op::ChannelNorm { x: i, inv_std }))
    }

    /// `tanh(a) ⊙ softmax(b)`, softmax across channels.
    pub fn gated_tanh(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        let (at, bt) = (self.val(ai), self.val(bi));
        rank2(at, "gated_tanh")?;
        same_shape(at, bt, "gated_tanh")?;
        let (y, soft) = gated_tanh_forward(at.data(), bt.data(), at.channels(), at.time());
        let value = Tensor::from_vec(at.shape(), y)?;
        Ok(self.push(value, Op::GatedTanh { a: ai, b: bi, soft }))
    }

    /// Stack rank-2 tensors of equal length along channels.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let idx: Vec<usize> = parts.iter().map(|&p| self.idx(p)).collect::<Result<_>>()?;
        let Some(&first) = idx.first() else {
            return Err(shape_err!("concat of nothing"));
        };
        let len = self.val(first).time();
        let mut data = Vec::new();
        let mut channels = 0;
        for &i in &idx {
            let t = self.val(i);
            rank2(t, "concat")?;
            if t.time() != len {
                return Err(shape_err!("concat lengths {} vs {len}", t.time()));
            }
            channels += t.channels();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::from_vec(&[channels, len], data)?;
        Ok(self.push(value, Op::Concat(idx)))
    }

    /// Columns `[start, start + len)`.
    pub fn slice_time(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let i = self.idx(x)?;
        let t = self.val(i);
        rank2(t, "slice_time")?;
        if start + len > t.time() {
            return Err(shape_err!("slice {start}+{len} beyond length {}", t.time()));
        }
        let value = t.slice_time(start, start + len);
        Ok(self.push(value, Op::SliceTime { x: i, start }))
    }

    /// Causal linear-interpolation resampling of every row.
    pub fn resample(&mut self, x: Var, ratio: Ratio) -> Result<Var> {
        let i = self.idx(x)?;
        let t = self.val(i);
        rank2(t, "resample")?;
        let out_len = ratio.output_len(t.time());
        let y = resample_rows(t.data(), t.channels(), t.time(), ratio);
        let value = Tensor::from_vec(&[t.channels(), out_len], y)?;
        Ok(self.push(value, Op::Resample { x: i, ratio }))
    }

    /// Non-overlapping average pooling; length `floor(L / factor)`.
    pub fn avg_pool(&mut self, x: Var, factor: usize) -> Result<Var> {
        let i = self.idx(x)?;
        let t = self.val(i);
        rank2(t, "avg_pool")?;
        if factor == 0 {
            return Err(Error::InvalidArgument("pooling factor must be positive".into()));
        }
        let out_len = t.time() / factor;
        let inv = T::lit(1.0 / factor as f64);
        let mut y = Vec::with_capacity(t.channels() * out_len);
        for c in 0..t.channels() {
            let row = t.channel(c);
            y.extend((0..out_len).map(|m| row[m * factor..(m + 1) * factor].iter().copied().sum::<T>() * inv));
        }
        let value = Tensor::from_vec(&[t.channels(), out_len], y)?;
        Ok(self.push(value, Op::AvgPool { x: i, factor }))
    }

    /// `1 × L` signal to `B × L/B` subbands; `L` must be a multiple of `B`.
    pub fn pqmf_analysis(&mut self, x: Var, bank: &Arc<PqmfBank>) -> Result<Var> {
        let i = self.idx(x)?;
        let t = self.val(i);
        let b = bank.num_bands();
        if t.rank() != 2 || t.channels() != 1 || !t.time().is_multiple_of(b) {
            return Err(shape_err!("analysis needs 1 × (multiple of {b}), got {:?}", t.shape()));
        }
        let hist = bank.analysis_history();
        let ext = left_pad(t.data(), 1, t.time(), hist);
        let m = t.time() / b;
        let y = analysis_ext(&bank.analysis_coeffs(), &ext, hist, m);
        let value = Tensor::from_vec(&[b, m], y)?;
        Ok(self.push(value, Op::PqmfAnalysis { x: i, bank: Arc::clone(bank) }))
    }

    /// `B × M` subbands to a `1 × B·M` signal.
    pub fn pqmf_synthesis(&mut self, x: Var, bank: &Arc<PqmfBank>) -> Result<Var> {
        let i = self.idx(x)?;
        let t = self.val(i);
        if t.rank() != 2 || t.channels() != bank.num_bands() {
            return Err(shape_err!("synthesis needs {} bands, got {:?}", bank.num_bands(), t.shape()));
        }
        let y = bank.synthesis_tensor(t);
        let value = Tensor::row(y);
        Ok(self.push(value, Op::PqmfSynthesis { x: i, bank: Arc::clone(bank) }))
    }

    /// STFT magnitude `frames × bins` of a `1 × L` signal, `sqrt(max(|X|², floor²))`.
    pub fn stft_mag(&mut self, x: Var, plan: &Arc<StftPlan<T>>) -> Result<Var> {
        let i = self.idx(x)?;
        let t = self.val(i);
        if t.rank() != 2 || t.channels() != 1 {
            return Err(shape_err!("stft expects a 1 × L signal, got {:?}", t.shape()));
        }
        if t.time() < plan.resolution.window_length {
            return Err(shape_err!("signal of {} samples is shorter than the window", t.time()));
        }
        let spec = plan.compute(t.data());
        let floor = T::lit(STFT_POWER_FLOOR);
        let mags: Vec<T> = spec.data.iter().map(|c| c.norm_sqr().max(floor).sqrt()).collect();
        let value = Tensor::from_vec(&[spec.frames, spec.bins()], mags)?;
        Ok(self.push(value, Op::StftMag { x: i, plan: Arc::clone(plan), spec: spec.data }))
    }

    /// Gradients of a scalar variable with respect to every recorded value.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let li = self.idx(loss)?;
        if self.val(li).len() != 1 {
            return Err(shape_err!("backward needs a scalar loss, got {:?}", self.val(li).shape()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[li] = Some(Tensor::full(self.val(li).shape(), T::one()));
        for i in (0..=li).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(dy);
                continue;
            }
            self.propagate(i, &dy, &mut grads)?;
        }
        Ok(Gradients { tape: self.id, grads, params: self.params.clone() })
    }

    fn propagate(&self, i: usize, dy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut acc = |j: usize, g: Vec<T>| -> Result<()> {
            if !self.nodes[j].needs_grad {
                return Ok(());
            }
            let shape = self.val(j).shape();
            match &mut grads[j] {
                Some(t) => {
                    for (a, b) in t.data_mut().iter_mut().zip(g) {
                        *a = *a + b;
                    }
                }
                slot => *slot = Some(Tensor::from_vec(shape, g)?),
            }
            Ok(())
        };
        let d = dy.data();
        let node_needs = |j: usize| self.nodes[j].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::WeightNorm { g, v, norms } => {
                let gv = self.val(*g).data();
                let vv = self.val(*v).data();
                let out = gv.len();
                let fan = vv.len() / out;
                let mut dg = vec![T::zero(); out];
                let mut dv = vec![T::zero(); vv.len()];
                for o in 0..out {
                    let n = norms[o];
                    let row = o * fan..(o + 1) * fan;
                    let dot: T = d[row.clone()].iter().zip(&vv[row.clone()]).map(|(&a, &b)| a * b).sum();
                    dg[o] = dot / n;
                    let c = gv[o] * dot / (n * n * n);
                    for j in row {
                        dv[j] = gv[o] / n * d[j] - c * vv[j];
                    }
                }
                acc(*g, dg)?;
                acc(*v, dv)?;
            }
            Op::Conv { x, w, b, spec } => {
                let xt = self.val(*x);
                let len = xt.time();
                let pad = spec.receptive_pad();
                let ext_len = len + pad;
                let ext = left_pad(xt.data(), spec.in_ch, len, pad);
                let out_len = dy.time();
                let (want_x, want_w) = (node_needs(*x), node_needs(*w));
                let mut dx_ext = if want_x { vec![T::zero(); ext.len()] } else { Vec::new() };
                let mut dw = if want_w { vec![T::zero(); spec.weight_len()] } else { Vec::new() };
                let mut db = vec![T::zero(); spec.out_ch];
                conv_backward(
                    spec,
                    &ext,
                    ext_len,
                    self.val(*w).data(),
                    d,
                    out_len,
                    want_x.then_some(dx_ext.as_mut_slice()),
                    want_w.then_some(dw.as_mut_slice()),
                    b.filter(|&b| node_needs(b)).map(|_| db.as_mut_slice()),
                );
                if want_x {
                    let mut dx = Vec::with_capacity(spec.in_ch * len);
                    for c in 0..spec.in_ch {
                        dx.extend_from_slice(&dx_ext[c * ext_len + pad..(c + 1) * ext_len]);
                    }
                    acc(*x, dx)?;
                }
                if want_w {
                    acc(*w, dw)?;
                }
                if let Some(b) = b {
                    acc(*b, db)?;
                }
            }
            Op::Add(a, b) => {
                acc(*a, d.to_vec())?;
                acc(*b, d.to_vec())?;
            }
            Op::Sub(a, b) => {
                acc(*a, d.to_vec())?;
                acc(*b, d.iter().map(|&v| -v).collect())?;
            }
            Op::Mul(a, b) => {
                let (at, bt) = (self.val(*a), self.val(*b));
                acc(*a, zip_map(dy, bt, |g, v| g * v))?;
                acc(*b, zip_map(dy, at, |g, v| g * v))?;
            }
            Op::Div(a, b) => {
                let bt = self.val(*b);
                acc(*a, zip_map(dy, bt, |g, v| g / v))?;
                let db: Vec<T> = d.iter().zip(y.data()).zip(bt.data()).map(|((&g, &q), &v)| -g * q / v).collect();
                acc(*b, db)?;
            }
            Op::Scale(a, c) => acc(*a, d.iter().map(|&g| g * *c).collect())?,
            Op::Offset(a) => acc(*a, d.to_vec())?,
            Op::Tanh(a) => acc(*a, zip_map(dy, y, |g, t| g * (T::one() - t * t)))?,
            Op::LeakyRelu(a, s) => {
                let s = *s;
                acc(*a, zip_map(dy, self.val(*a), |g, x| if x >= T::zero() { g } else { g * s }))?
            }
            Op::Square(a) => acc(*a, zip_map(dy, self.val(*a), |g, x| T::lit(2.0) * x * g))?,
            Op::Sqrt(a) => acc(*a, zip_map(dy, y, |g, r| if r > T::zero() { g / (T::lit(2.0) * r) } else { T::zero() }))?,
            Op::Ln(a) => acc(*a, zip_map(dy, self.val(*a), |g, x| g / x))?,
            Op::Abs(a) => acc(
                *a,
                zip_map(dy, self.val(*a), |g, x| {
                    if x > T::zero() {
                        g
                    } else if x < T::zero() {
                        -g
                    } else {
                        T::zero()
                    }
                }),
            )?,
            Op::Sum(a) => acc(*a, vec![d[0]; self.val(*a).len()])?,
            Op::Mean(a) => {
                let n = self.val(*a).len();
                acc(*a, vec![d[0] / T::lit(n as f64); n])?
            }
            Op::ChannelNorm { x, inv_std } => {
                let (c_n, len) = (y.channels(), y.time());
                let cn = T::lit(c_n as f64);
                let yv = y.data();
                let mut dx = vec![T::zero(); yv.len()];
                for t in 0..len {
                    let mut md = T::zero();
                    let mut mdy = T::zero();
                    for c in 0..c_n {
                        md = md + d[c * len + t];
                        mdy = mdy + d[c * len + t] * yv[c * len + t];
                    }
                    md = md / cn;
                    mdy = mdy / cn;
                    for c in 0..c_n {
                        let k = c * len + t;
                        dx[k] = inv_std[t] * (d[k] - md - yv[k] * mdy);
                    }
                }
                acc(*x, dx)?;
            }
            Op::GatedTanh { a, b, soft } => {
                let at = self.val(*a);
                let (c_n, len) = (at.channels(), at.time());
                let av = at.data();
                let mut da = vec![T::zero(); av.len()];
                let mut ds = vec![T::zero(); av.len()];
                for k in 0..av.len() {
                    let th = av[k].tanh();
                    da[k] = d[k] * soft[k] * (T::one() - th * th);
                    ds[k] = d[k] * th;
                }
                let mut db = vec![T::zero(); av.len()];
                for t in 0..len {
                    let dot: T = (0..c_n).map(|c| ds[c * len + t] * soft[c * len + t]).sum();
                    for c in 0..c_n {
                        let k = c * len + t;
                        db[k] = soft[k] * (ds[k] - dot);
                    }
                }
                acc(*a, da)?;
                acc(*b, db)?;
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.val(p).len();
                    acc(p, d[off..off + n].to_vec())?;
                    off += n;
                }
            }
            Op::SliceTime { x, start } => {
                let xt = self.val(*x);
                let (len, w) = (xt.time(), dy.time());
                let mut dx = vec![T::zero(); xt.len()];
                for c in 0..xt.channels() {
                    dx[c * len + start..c * len + start + w].copy_from_slice(dy.channel(c));
                }
                acc(*x, dx)?;
            }
            Op::Resample { x, ratio } => {
                let xt = self.val(*x);
                let mut dx = vec![T::zero(); xt.len()];
                resample_rows_adjoint(d, xt.channels(), xt.time(), *ratio, &mut dx);
                acc(*x, dx)?;
            }
            Op::AvgPool { x, factor } => {
                let xt = self.val(*x);
                let (len, out_len) = (xt.time(), dy.time());
                let inv = T::lit(1.0 / *factor as f64);
                let mut dx = vec![T::zero(); xt.len()];
                for c in 0..xt.channels() {
                    for m in 0..out_len {
                        let g = d[c * out_len + m] * inv;
                        dx[c * len + m * factor..c * len + (m + 1) * factor].fill(g);
                    }
                }
                acc(*x, dx)?;
            }
            Op::PqmfAnalysis { x, bank } => {
                let mut dx = vec![T::zero(); self.val(*x).len()];
                analysis_adjoint(&bank.analysis_coeffs(), d, dy.time(), &mut dx);
                acc(*x, dx)?;
            }
            Op::PqmfSynthesis { x, bank } => {
                let xt = self.val(*x);
                let mut dv = vec![T::zero(); xt.len()];
                synthesis_adjoint(&bank.synthesis_coeffs(), d, xt.time(), &mut dv);
                acc(*x, dv)?;
            }
            Op::StftMag { x, plan, spec } => {
                let floor = T::lit(STFT_POWER_FLOOR);
                let g: Vec<Complex<T>> = spec
                    .iter()
                    .zip(d.iter().zip(y.data()))
                    .map(|(c, (&g, &m))| if c.norm_sqr() > floor { *c * (g / m) } else { Complex::new(T::zero(), T::zero()) })
                    .collect();
                let mut dx = vec![T::zero(); self.val(*x).len()];
                plan.adjoint(&g, dy.channels(), &mut dx);
                acc(*x, dx)?;
            }
        }
        Ok(())
    }
}

/// Power floor applied before the square root in [`Graph::stft_mag`].
pub const STFT_POWER_FLOOR: f64 = 1e-14;


/// Result of [`Graph::backward`].
pub struct Gradients<T: Real> {
    tape: u64,
    grads: Vec<Option<Tensor<T>>>,
    params: HashMap<(u64, ParamId), usize>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a leaf; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Result<Option<&Tensor<T>>> {
        if v.tape != self.tape || v.index >= self.grads.len() {
            return Err(Error::ForeignVar);
        }
        Ok(self.grads[v.index].as_ref())
    }

    /// Gradients for every parameter of `store`, zero where unused.
    pub fn for_store(&self, store: &WeightStore<T>) -> ParamGrads<T> {
        let mut out = ParamGrads::zeros_like(store);
        for (&(uid, id), &node) in &self.params {
            if uid == store.uid() {
                if let Some(g) = &self.grads[node] {
                    out.grads[id.0] = g.clone();
                }
            }
        }
        out
    }
}
