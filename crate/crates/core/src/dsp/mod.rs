//! Multirate signal processing: PQMF banks, STFT, log-mel features and causal
//! linear resampling. Everything here is a pure function of its inputs.

pub mod mel;
pub mod pqmf;
pub mod resample;
pub mod stft;

pub use mel::{mel_spectrogram, MelConfig, MelFrontend, MelSpectrogram, MelStream};
pub use pqmf::{design_pqmf, tune_cutoff, PqmfBank, SubbandSignal};
pub use resample::{fractional_resample, Ratio, StreamingResampler};
pub use stft::{hann_window, stft, ComplexSpectrogram, StftPlan, StftResolution};

use crate::nn::Real;

/// Signal-to-noise ratio of `estimate` against `reference`, in dB.
pub fn snr_db<T: Real>(reference: &[T], estimate: &[T]) -> f64 {
    let (mut sig, mut err) = (0.0f64, 0.0f64);
    for (&r, &e) in reference.iter().zip(estimate) {
        let r = r.f64();
        sig += r * r;
        err += (r - e.f64()).powi(2);
    }
    if err == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (sig / err).log10()
}
