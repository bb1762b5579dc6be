use std::sync::Arc;

use crate::dsp::{MelFrontend, MelStream};
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::nn::{InferenceWeights, NoiseSource, Real, StreamBackend, StreamSlots, Tensor, WeightStore};

/// Read-only inference bundle; cheap to clone and share across streams.
#[derive(Clone)]
pub struct InferenceModel<T: Real = f32> {
    generator: Arc<Generator>,
    weights: Arc<InferenceWeights<T>>,
    mel: Arc<MelFrontend<T>>,
}

impl<T: Real> InferenceModel<T> {
    pub fn new(generator: Arc<Generator>, store: &WeightStore<T>) -> Result<Self> {
        let mel = Arc::new(MelFrontend::new(&generator.config().mel)?);
        Ok(Self { weights: Arc::new(InferenceWeights::from_store(store)?), generator, mel })
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn frame_size(&self) -> usize {
        self.generator.config().mel.hop
    }

    /// Whole-signal enhancement. The tail is zero-padded to a whole frame
    /// and the padding is trimmed from the output.
    pub fn enhance(&self, x: &[T], noise: NoiseSource) -> Result<Vec<T>> {
        let hop = self.frame_size();
        let padded_len = x.len().div_ceil(hop) * hop;
        if padded_len == 0 {
            return Ok(Vec::new());
        }
        let mut padded = x.to_vec();
        padded.resize(padded_len, T::zero());
        let mel = self.mel.compute(&padded);
        let mut slots = StreamSlots::new();
        let mut be = StreamBackend::new(&self.weights, &mut slots, noise);
        let y = self.generator.forward(&mut be, &Tensor::row(padded), &mel.data)?;
        let mut y = y.into_data();
        y.truncate(x.len());
        Ok(y)
    }

    pub fn stream(&self, noise: NoiseSource) -> GeneratorState<T> {
        GeneratorState::new(self.clone(), noise)
    }
}

/// Frame-by-frame generator state. Output frame `k` equals frame `k − 1` of
/// the whole-signal output; the first output frame is silence.
pub struct GeneratorState<T: Real = f32> {
    model: InferenceModel<T>,
    noise: NoiseSource,
    slots: StreamSlots<T>,
    mel: MelStream<T>,
    pending: Option<Vec<T>>,
}

impl<T: Real> GeneratorState<T> {
    pub fn new(model: InferenceModel<T>, noise: NoiseSource) -> Self {
        let mel = MelStream::new(Arc::clone(&model.mel));
        Self { model, noise, slots: StreamSlots::new(), mel, pending: None }
    }

    /// Back to the freshly constructed state.
    pub fn reset(&mut self) {
        self.slots.reset();
        self.mel.reset();
        self.pending = None;
    }

    /// Scalars of state carried between frames.
    pub fn state_len(&self) -> usize {
        self.slots.state_len() + self.pending.as_ref().map_or(0, Vec::len)
    }

    /// Frames of output delay relative to the whole-signal output.
    pub fn lag_frames(&self) -> usize {
        1
    }

    pub fn step(&mut self, frame: &[T]) -> Result<Vec<T>> {
        let hop = self.model.frame_size();
        if frame.len() != hop {
            return Err(Error::InvalidArgument(format!("stream frames must have {hop} samples, got {}", frame.len())));
        }
        let mel = self.mel.push(frame);
        let out = match (self.pending.take(), mel) {
            (Some(prev), Some(col)) => self.run(prev, col)?,
            _ => vec![T::zero(); hop],
        };
        self.pending = Some(frame.to_vec());
        Ok(out)
    }

    /// Emit the frame still held back by the mel lookahead.
    pub fn flush(&mut self) -> Result<Vec<T>> {
        let Some(prev) = self.pending.take() else { return Ok(Vec::new()) };
        let hop = self.model.frame_size();
        let col = self.mel.push(&vec![T::zero(); hop]).ok_or_else(|| Error::InvalidArgument("mel stream not primed".into()))?;
        self.run(prev, col)
    }

    fn run(&mut self, audio: Vec<T>, mel_col: Vec<T>) -> Result<Vec<T>> {
        let n_mels = mel_col.len();
        let mel = Tensor::from_vec(&[n_mels, 1], mel_col)?;
        let mut be = StreamBackend::new(&self.model.weights, &mut self.slots, self.noise);
        Ok(self.model.generator.forward(&mut be, &Tensor::row(audio), &mel)?.into_data())
    }
}
