use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleKind {
    Int16,
    Float32,
}

/// Decoded WAV contents with interleaved samples scaled to `[-1, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WavFile {
    pub sample_rate: u32,
    pub channels: u16,
    pub kind: SampleKind,
    pub samples: Vec<f32>,
}

impl WavFile {
    pub fn mono(sample_rate: u32, kind: SampleKind, samples: Vec<f32>) -> Self {
        Self { sample_rate, channels: 1, kind, samples }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let reader = WavReader::open(path).map_err(|e| match e {
            hound::Error::IoError(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
            other => Error::Format(format!("{}: {other}", path.display())),
        })?;
        let spec = reader.spec();
        let (kind, samples) = match (spec.sample_format, spec.bits_per_sample) {
            (SampleFormat::Int, 16) => {
                (SampleKind::Int16, reader.into_samples::<i16>().map(|s| s.map(|v| v as f32 / 32768.0)).collect::<Result<_, _>>()?)
            }
            (SampleFormat::Float, 32) => (SampleKind::Float32, reader.into_samples::<f32>().collect::<Result<_, _>>()?),
            (f, b) => return Err(Error::Format(format!("{}: {b}-bit {f:?} samples are not supported", path.display()))),
        };
        Ok(Self { sample_rate: spec.sample_rate, channels: spec.channels, kind, samples })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let (bits, format) = match self.kind {
            SampleKind::Int16 => (16, SampleFormat::Int),
            SampleKind::Float32 => (32, SampleFormat::Float),
        };
        let spec = WavSpec { channels: self.channels, sample_rate: self.sample_rate, bits_per_sample: bits, sample_format: format };
        let mut w = WavWriter::create(path, spec)?;
        match self.kind {
            SampleKind::Int16 => {
                for &s in &self.samples {
                    w.write_sample(to_i16(s))?;
                }
            }
            SampleKind::Float32 => {
                for &s in &self.samples {
                    w.write_sample(s)?;
                }
            }
        }
        w.finalize()?;
        Ok(())
    }

    /// Samples of a mono file at `rate`, or a format error naming the mismatch.
    pub fn require_mono(&self, rate: u32) -> Result<&[f32]> {
        if self.channels != 1 {
            return Err(Error::Format(format!("input must be mono, got {} channels", self.channels)));
        }
        if self.sample_rate != rate {
            return Err(Error::Format(format!("input must be sampled at {rate} Hz, got {} Hz", self.sample_rate)));
        }
        Ok(&self.samples)
    }
}

/// Round to the nearest 16-bit code, saturating.
pub fn to_i16(s: f32) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}
