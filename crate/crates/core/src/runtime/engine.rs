use std::io::{ErrorKind, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use crate::error::Result;
use crate::generator::{DelayBudget, InferenceModel};
use crate::nn::NoiseSource;
use crate::runtime::{to_i16, WavFile};
use crate::SAMPLE_RATE;

/// Enhance a mono 16 kHz file, keeping its length, rate and sample format.
pub fn enhance_file(model: &InferenceModel, input: impl AsRef<Path>, output: impl AsRef<Path>, noise: NoiseSource) -> Result<()> {
    let wav = WavFile::read(input)?;
    let x = wav.require_mono(SAMPLE_RATE)?;
    let y = model.enhance(x, noise)?;
    WavFile::mono(SAMPLE_RATE, wav.kind, y).write(output)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamStats {
    pub frames: u64,
    /// Samples of a partial trailing frame that were dropped.
    pub discarded_samples: usize,
    pub processing: Duration,
}

impl StreamStats {
    pub fn audio_seconds(&self) -> f64 {
        (self.frames * crate::FRAME_SIZE as u64) as f64 / SAMPLE_RATE as f64
    }

    /// Processing time over audio duration.
    pub fn real_time_factor(&self) -> f64 {
        let a = self.audio_seconds();
        if a == 0.0 {
            0.0
        } else {
            self.processing.as_secs_f64() / a
        }
    }
}

/// Fill `buf` unless the reader ends first; returns the bytes read.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

/// Little-endian 16-bit PCM in, one enhanced frame out per input frame.
/// Output frame `k` holds whole-signal output frame `k − 1`.
pub fn stream_pcm(model: &InferenceModel, input: &mut impl Read, output: &mut impl Write, noise: NoiseSource) -> Result<StreamStats> {
    let hop = model.frame_size();
    let mut state = model.stream(noise);
    let mut bytes = vec![0u8; 2 * hop];
    let mut frame = vec![0f32; hop];
    let mut out = vec![0u8; 2 * hop];
    let mut stats = StreamStats { frames: 0, discarded_samples: 0, processing: Duration::ZERO };
    loop {
        let n = read_full(input, &mut bytes)?;
        if n < bytes.len() {
            stats.discarded_samples = n / 2;
            break;
        }
        for (f, b) in frame.iter_mut().zip(bytes.chunks_exact(2)) {
            *f = i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0;
        }
        let t0 = Instant::now();
        let y = state.step(&frame)?;
        stats.processing += t0.elapsed();
        for (o, &v) in out.chunks_exact_mut(2).zip(&y) {
            o.copy_from_slice(&to_i16(v).to_le_bytes());
        }
        output.write_all(&out)?;
        stats.frames += 1;
    }
    output.flush()?;
    Ok(stats)
}

/// Latency components observed by running the engine, in samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasuredLatency {
    pub frame_buffer: usize,
    /// Shift between streamed and whole-signal output.
    pub stream_lag: usize,
    /// Peak position of the filter bank's impulse response.
    pub filter_delay: usize,
    pub stream_max_dev: f64,
}

impl MeasuredLatency {
    pub fn total_samples(&self) -> usize {
        self.frame_buffer + self.stream_lag + self.filter_delay
    }

    pub fn total_ms(&self) -> f64 {
        self.total_samples() as f64 * 1000.0 / SAMPLE_RATE as f64
    }

    /// Whether the measurement agrees with the computed budget within one frame.
    pub fn matches(&self, budget: &DelayBudget) -> bool {
        (self.total_ms() - budget.total_ms).abs() <= 1000.0 * crate::FRAME_SIZE as f64 / SAMPLE_RATE as f64
    }
}

/// Stream `x` frame by frame and collect the output, flushing the held-back frame.
pub fn stream_signal(model: &InferenceModel, x: &[f32], noise: NoiseSource, flush: bool) -> Result<Vec<f32>> {
    let hop = model.frame_size();
    let mut state = model.stream(noise);
    let mut y = Vec::with_capacity(x.len() + hop);
    for frame in x.chunks_exact(hop) {
        y.extend(state.step(frame)?);
    }
    if flush {
        y.extend(state.flush()?);
    }
    Ok(y)
}

pub fn measure_latency(model: &InferenceModel, probe: &[f32], noise_seed: u64) -> Result<MeasuredLatency> {
    let hop = model.frame_size();
    let n = probe.len() / hop * hop;
    let probe = &probe[..n];
    let batch = model.enhance(probe, NoiseSource::Seeded(noise_seed))?;
    let streamed = stream_signal(model, probe, NoiseSource::Seeded(noise_seed), false)?;
    let (mut best, mut best_dev) = (0, f64::INFINITY);
    for shift in 0..=(4 * hop).min(n / 2) {
        let dev = (0..n - shift).map(|i| (streamed[i + shift] - batch[i]).abs() as f64).fold(0.0, f64::max);
        if dev < best_dev {
            best = shift;
            best_dev = dev;
        }
    }
    let bank = model.generator().bank();
    let len = 4 * bank.taps() + bank.num_bands();
    let mut impulse = vec![0f64; len];
    impulse[0] = 1.0;
    let response = bank.synthesis(&bank.analysis(&impulse))?;
    let filter_delay =
        response.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map_or(0, |(i, _)| i);
    Ok(MeasuredLatency { frame_buffer: hop, stream_lag: best, filter_delay, stream_max_dev: best_dev })
}
