//! One network description, two executors: the tape for training and a
//! stateful block-wise executor for streaming inference.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dsp::pqmf::{StreamingAnalysis, StreamingSynthesis};
use crate::dsp::{PqmfBank, Ratio, StreamingResampler};
use crate::error::{shape_err, Error, Result};
use crate::nn::{ops, ConvSpec, Graph, Real, StreamCtx, Tensor, Var, WeightStore};

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub name: String,
    pub spec: ConvSpec,
}

impl ConvLayer {
    pub fn new(name: impl Into<String>, spec: ConvSpec) -> Self {
        Self { name: name.into(), spec }
    }
}

/// Where additive bottleneck noise comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseSource {
    Seeded(u64),
    Entropy,
}

impl NoiseSource {
    pub fn rng(self) -> ChaCha8Rng {
        match self {
            NoiseSource::Seeded(s) => ChaCha8Rng::seed_from_u64(s),
            NoiseSource::Entropy => ChaCha8Rng::from_os_rng(),
        }
    }
}

/// Standard normal samples drawn time-major for a `channels × len` block.
fn draw_noise<T: Real>(rng: &mut ChaCha8Rng, channels: usize, len: usize, std: f64) -> Vec<T> {
    let mut out = vec![T::zero(); channels * len];
    for t in 0..len {
        for c in 0..channels {
            let z: f64 = rng.sample(StandardNormal);
            out[c * len + t] = T::lit(z * std);
        }
    }
    out
}

pub trait Backend<T: Real> {
    type Value;

    fn time(&self, x: &Self::Value) -> usize;
    fn conv(&mut self, layer: &ConvLayer, x: &Self::Value) -> Result<Self::Value>;
    fn resample(&mut self, x: &Self::Value, ratio: Ratio) -> Result<Self::Value>;
    fn channel_norm(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn gated_tanh(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn leaky_relu(&mut self, x: &Self::Value, slope: f64) -> Result<Self::Value>;
    fn tanh(&mut self, x: &Self::Value) -> Result<Self::Value>;
    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn concat(&mut self, a: &Self::Value, b: &Self::Value) -> Result<Self::Value>;
    fn add_noise(&mut self, x: &Self::Value, std: f64) -> Result<Self::Value>;
    fn analysis(&mut self, x: &Self::Value, bank: &Arc<PqmfBank>) -> Result<Self::Value>;
    fn synthesis(&mut self, x: &Self::Value, bank: &Arc<PqmfBank>) -> Result<Self::Value>;
}

/// Records onto a tape with gradients flowing to `store`.
pub struct GraphBackend<'a, T: Real> {
    pub graph: &'a mut Graph<T>,
    pub store: &'a WeightStore<T>,
    rng: ChaCha8Rng,
}

impl<'a, T: Real> GraphBackend<'a, T> {
    pub fn new(graph: &'a mut Graph<T>, store: &'a WeightStore<T>, noise: NoiseSource) -> Self {
        Self { graph, store, rng: noise.rng() }
    }
}

impl<T: Real> Backend<T> for GraphBackend<'_, T> {
    type Value = Var;

    fn time(&self, x: &Var) -> usize {
        self.graph.value(*x).map_or(0, Tensor::time)
    }

    fn conv(&mut self, layer: &ConvLayer, x: &Var) -> Result<Var> {
        self.graph.conv_layer(self.store, &layer.name, layer.spec, *x)
    }

    fn resample(&mut self, x: &Var, ratio: Ratio) -> Result<Var> {
        if ratio.is_identity() {
            return Ok(*x);
        }
        self.graph.resample(*x, ratio)
    }

    fn channel_norm(&mut self, x: &Var) -> Result<Var> {
        self.graph.channel_norm(*x)
    }

    fn gated_tanh(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.graph.gated_tanh(*a, *b)
    }

    fn leaky_relu(&mut self, x: &Var, slope: f64) -> Result<Var> {
        self.graph.leaky_relu(*x, slope)
    }

    fn tanh(&mut self, x: &Var) -> Result<Var> {
        self.graph.tanh(*x)
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.graph.add(*a, *b)
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.graph.mul(*a, *b)
    }

    fn concat(&mut self, a: &Var, b: &Var) -> Result<Var> {
        self.graph.concat(&[*a, *b])
    }

    fn add_noise(&mut self, x: &Var, std: f64) -> Result<Var> {
        let shape = self.graph.value(*x)?.shape().to_vec();
        let n = draw_noise(&mut self.rng, shape[0], shape[1], std);
        let c = self.graph.constant(Tensor::from_vec(&shape, n)?);
        self.graph.add(*x, c)
    }

    fn analysis(&mut self, x: &Var, bank: &Arc<PqmfBank>) -> Result<Var> {
        self.graph.pqmf_analysis(*x, bank)
    }

    fn synthesis(&mut self, x: &Var, bank: &Arc<PqmfBank>) -> Result<Var> {
        self.graph.pqmf_synthesis(*x, bank)
    }
}

/// Effective (weight-normalised) convolution weights, computed once.
#[derive(Clone, Debug, Default)]
pub struct InferenceWeights<T> {
    convs: HashMap<String, (Vec<T>, Vec<T>)>,
}

impl<T: Real> InferenceWeights<T> {
    pub fn from_store(store: &WeightStore<T>) -> Result<Self> {
        let mut convs = HashMap::new();
        for (name, _) in store.iter() {
            if let Some(base) = name.strip_suffix(".g") {
                let w = store.effective_weight(base)?;
                let b = store.get(&format!("{base}.b")).map(|b| b.data().to_vec()).unwrap_or_default();
                convs.insert(base.to_string(), (w.into_data(), b));
            }
        }
        Ok(Self { convs })
    }

    fn get(&self, name: &str) -> Result<&(Vec<T>, Vec<T>)> {
        self.convs.get(name).ok_or_else(|| Error::InvalidArgument(format!("no weights for layer {name}")))
    }
}

#[derive(Clone, Debug)]
enum Slot<T> {
    Conv(StreamCtx<T>),
    Resample(StreamingResampler<T>),
    Noise { seed: NoiseSource, rng: ChaCha8Rng },
    Analysis(StreamingAnalysis<T>),
    Synthesis(StreamingSynthesis<T>),
}

/// Per-operation state carried between streaming calls, in call order.
#[derive(Clone, Debug, Default)]
pub struct StreamSlots<T> {
    slots: Vec<Slot<T>>,
}

impl<T: Real> StreamSlots<T> {
    pub fn new() -> Self {
        Self { slots: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Scalars of carried history across all slots.
    pub fn state_len(&self) -> usize {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Conv(c) => c.history_len(),
                Slot::Resample(r) => r.history_len(),
                Slot::Noise { .. } => 0,
                Slot::Analysis(a) => a.history_len(),
                Slot::Synthesis(s) => s.history_len(),
            })
            .sum()
    }

    pub fn reset(&mut self) {
        for s in &mut self.slots {
            match s {
                Slot::Conv(c) => c.reset(),
                Slot::Resample(r) => r.reset(),
                Slot::Noise { seed, rng } => *rng = seed.rng(),
                Slot::Analysis(a) => a.reset(),
                Slot::Synthesis(s) => s.reset(),
            }
        }
    }
}

/// Executes one block, reading and updating [`StreamSlots`].
pub struct StreamBackend<'a, T: Real> {
    weights: &'a InferenceWeights<T>,
    slots: &'a mut StreamSlots<T>,
    noise: NoiseSource,
    cursor: usize,
}

impl<'a, T: Real> StreamBackend<'a, T> {
    pub fn new(weights: &'a InferenceWeights<T>, slots: &'a mut StreamSlots<T>, noise: NoiseSource) -> Self {
        Self { weights, slots, noise, cursor: 0 }
    }

    fn slot(&mut self, make: impl FnOnce() -> Slot<T>) -> &mut Slot<T> {
        if self.cursor == self.slots.slots.len() {
            self.slots.slots.push(make());
        }
        self.cursor += 1;
        &mut self.slots.slots[self.cursor - 1]
    }
}

fn check_same<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!("operands {:?} and {:?}", a.shape(), b.shape()));
    }
    Ok(())
}

const SLOT_ORDER: &str = "stream state does not match the network";

impl<T: Real> Backend<T> for StreamBackend<'_, T> {
    type Value = Tensor<T>;

    fn time(&self, x: &Tensor<T>) -> usize {
        x.time()
    }

    fn conv(&mut self, layer: &ConvLayer, x: &Tensor<T>) -> Result<Tensor<T>> {
        let weights = self.weights;
        let (w, b) = weights.get(&layer.name)?;
        let spec = layer.spec;
        if x.channels() != spec.in_ch {
            return Err(shape_err!("layer {} expects {} channels, got {}", layer.name, spec.in_ch, x.channels()));
        }
        let Slot::Conv(ctx) = self.slot(|| Slot::Conv(StreamCtx::new(spec))) else {
            return Err(Error::InvalidArgument(SLOT_ORDER.into()));
        };
        let len = x.time();
        let y = ctx.process(x.data(), len, w, Some(b));
        let out_len = y.len() / spec.out_ch;
        Tensor::from_vec(&[spec.out_ch, out_len], y)
    }

    fn resample(&mut self, x: &Tensor<T>, ratio: Ratio) -> Result<Tensor<T>> {
        let channels = x.channels();
        let Slot::Resample(r) = self.slot(|| Slot::Resample(StreamingResampler::new(ratio, channels))) else {
            return Err(Error::InvalidArgument(SLOT_ORDER.into()));
        };
        let (y, n) = r.process(x.data(), x.time());
        Tensor::from_vec(&[channels, n], y)
    }

    fn channel_norm(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        ops::channel_norm(x)
    }

    fn gated_tanh(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        ops::softmax_gated_tanh(a, b)
    }

    fn leaky_relu(&mut self, x: &Tensor<T>, slope: f64) -> Result<Tensor<T>> {
        let s = T::lit(slope);
        Ok(x.map(|v| crate::nn::kernels::leaky_relu(v, s)))
    }

    fn tanh(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.map(T::tanh))
    }

    fn add(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        check_same(a, b)?;
        let mut y = a.clone();
        y.add_assign(b);
        Ok(y)
    }

    fn mul(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        check_same(a, b)?;
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
        Tensor::from_vec(a.shape(), data)
    }

    fn concat(&mut self, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
        if a.time() != b.time() {
            return Err(shape_err!("concat lengths {} vs {}", a.time(), b.time()));
        }
        let mut data = a.data().to_vec();
        data.extend_from_slice(b.data());
        Tensor::from_vec(&[a.channels() + b.channels(), a.time()], data)
    }

    fn add_noise(&mut self, x: &Tensor<T>, std: f64) -> Result<Tensor<T>> {
        let seed = self.noise;
        let Slot::Noise { rng, .. } = self.slot(|| Slot::Noise { seed, rng: seed.rng() }) else {
            return Err(Error::InvalidArgument(SLOT_ORDER.into()));
        };
        let n = draw_noise::<T>(rng, x.channels(), x.time(), std);
        let mut y = x.clone();
        for (a, b) in y.data_mut().iter_mut().zip(n) {
            *a = *a + b;
        }
        Ok(y)
    }

    fn analysis(&mut self, x: &Tensor<T>, bank: &Arc<PqmfBank>) -> Result<Tensor<T>> {
        if x.channels() != 1 || !x.time().is_multiple_of(bank.num_bands()) {
            return Err(shape_err!("analysis block {:?} for {} bands", x.shape(), bank.num_bands()));
        }
        let Slot::Analysis(a) = self.slot(|| Slot::Analysis(StreamingAnalysis::new(bank))) else {
            return Err(Error::InvalidArgument(SLOT_ORDER.into()));
        };
        Ok(a.process(x.data()))
    }

    fn synthesis(&mut self, x: &Tensor<T>, bank: &Arc<PqmfBank>) -> Result<Tensor<T>> {
        if x.channels() != bank.num_bands() {
            return Err(shape_err!("synthesis block {:?} for {} bands", x.shape(), bank.num_bands()));
        }
        let Slot::Synthesis(s) = self.slot(|| Slot::Synthesis(StreamingSynthesis::new(bank))) else {
            return Err(Error::InvalidArgument(SLOT_ORDER.into()));
        };
        Ok(Tensor::row(s.process(x)))
    }
}
