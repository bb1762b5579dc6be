//! Subband GAN post-processor for coded speech.
//!
//! The crate is organised bottom-up:
//!
//! - [`dsp`]: PQMF filter banks, STFT, log-mel features, causal linear resampling.
//! - [`nn`]: tensors, a reverse-mode tape, weight-normalised parameters, Adam,
//!   streaming layer state and the checkpoint file format.
//! - [`generator`]: the U-Net style subband generator with CondNet conditioning,
//!   encoder-side modulation parameters and TADE decoder blocks, plus the
//!   frame-by-frame streaming engine and cost accounting.
//! - [`discriminator`]: the six-member subband / multi-scale ensemble.
//! - [`losses`]: multi-resolution STFT loss, hinge losses and the generator objective.
//! - [`training`]: dataset ingestion, pretraining and adversarial steps, checkpoints.
//! - [`runtime`]: WAV I/O, delay accounting, file enhancement, raw PCM streaming
//!   and the invariant suite behind `postgan verify`.

pub mod discriminator;
pub mod dsp;
pub mod error;
pub mod generator;
pub mod losses;
pub mod nn;
pub mod runtime;
pub mod training;

pub use error::{Error, Result};

/// Pipeline sample rate in Hz.
pub const SAMPLE_RATE: u32 = 16_000;
/// Streaming frame length in samples (10 ms).
pub const FRAME_SIZE: usize = 160;
