use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Real;

/// One STFT setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftResolution {
    pub fft_size: usize,
    pub hop: usize,
    pub window_length: usize,
}

impl StftResolution {
    pub const fn new(fft_size: usize, hop: usize, window_length: usize) -> Self {
        Self { fft_size, hop, window_length }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 {
            return Err(Error::InvalidArgument("STFT hop must be positive".into()));
        }
        if self.window_length == 0 || self.window_length > self.fft_size {
            return Err(Error::InvalidArgument(format!(
                "STFT window {} must be in 1..={}",
                self.window_length, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// `floor((len − window) / hop) + 1`, or zero when the signal is shorter than a window.
    pub fn frames(&self, len: usize) -> usize {
        if len < self.window_length {
            0
        } else {
            (len - self.window_length) / self.hop + 1
        }
    }
}

/// Periodic Hann window.
pub fn hann_window<T: Real>(len: usize) -> Vec<T> {
    (0..len).map(|n| T::lit(0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())).collect()
}

/// `frames × bins` complex spectrum, row-major.
#[derive(Clone, Debug)]
pub struct ComplexSpectrogram<T> {
    pub resolution: StftResolution,
    pub frames: usize,
    pub data: Vec<Complex<T>>,
}

impl<T: Real> ComplexSpectrogram<T> {
    pub fn bins(&self) -> usize {
        self.resolution.bins()
    }

    pub fn frame(&self, f: usize) -> &[Complex<T>] {
        let b = self.bins();
        &self.data[f * b..(f + 1) * b]
    }

    pub fn magnitudes(&self) -> Vec<T> {
        self.data.iter().map(|c| c.norm()).collect()
    }
}

/// Reusable forward/inverse FFT plan plus window for one resolution.
pub struct StftPlan<T: Real> {
    pub resolution: StftResolution,
    window: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> StftPlan<T> {
    pub fn new(resolution: StftResolution) -> Result<Self> {
        resolution.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            resolution,
            window: hann_window(resolution.window_length),
            forward: planner.plan_fft_forward(resolution.fft_size),
            inverse: planner.plan_fft_inverse(resolution.fft_size),
        })
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    /// Spectrum of the windowed segment starting at `x[0]`, written to `out` (`bins` values).
    pub fn frame_spectrum(&self, x: &[T], scratch: &mut Vec<Complex<T>>, out: &mut [Complex<T>]) {
        let n = self.resolution.fft_size;
        scratch.clear();
        scratch.extend(self.window.iter().zip(x).map(|(&w, &v)| Complex::new(w * v, T::zero())));
        scratch.resize(n, Complex::new(T::zero(), T::zero()));
        self.forward.process(scratch);
        out.copy_from_slice(&scratch[..self.resolution.bins()]);
    }

    pub fn compute(&self, x: &[T]) -> ComplexSpectrogram<T> {
        let frames = self.resolution.frames(x.len());
        let bins = self.resolution.bins();
        let mut data = vec![Complex::new(T::zero(), T::zero()); frames * bins];
        let mut scratch = Vec::with_capacity(self.resolution.fft_size);
        for f in 0..frames {
            let start = f * self.resolution.hop;
            let seg = &x[start..start + self.resolution.window_length];
            self.frame_spectrum(seg, &mut scratch, &mut data[f * bins..(f + 1) * bins]);
        }
        ComplexSpectrogram { resolution: self.resolution, frames, data }
    }

    /// Gradient w.r.t. the signal given `∂L/∂Re X` and `∂L/∂Im X` per bin.
    /// Accumulates into `dx`.
    pub fn adjoint(&self, grad: &[Complex<T>], frames: usize, dx: &mut [T]) {
        let n = self.resolution.fft_size;
        let bins = self.resolution.bins();
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        for f in 0..frames {
            buf.fill(Complex::new(T::zero(), T::zero()));
            // Re X_k = Σ u cos θ, Im X_k = −Σ u sin θ  ⇒  ∂L/∂u = Re Σ_k (g_re + i g_im) e^{+iθ}
            buf[..bins].copy_from_slice(&grad[f * bins..(f + 1) * bins]);
            self.inverse.process(&mut buf);
            let start = f * self.resolution.hop;
            for (i, &w) in self.window.iter().enumerate() {
                dx[start + i] = dx[start + i] + buf[i].re * w;
            }
        }
    }
}

/// Hann-windowed STFT without padding; frame `f` starts at `f · hop`.
pub fn stft<T: Real>(signal: &[T], fft_size: usize, hop: usize, window_length: usize) -> Result<ComplexSpectrogram<T>> {
    let plan = StftPlan::new(StftResolution::new(fft_size, hop, window_length))?;
    Ok(plan.compute(signal))
}
