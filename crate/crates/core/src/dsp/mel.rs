//! Log-mel conditioning features.
//!
//! Frame `f` covers `[f·hop − window/2, f·hop + window/2)` of the input with
//! zeros outside the signal, so a signal of `L` samples yields `⌊L / hop⌋`
//! frames and frame `f` reads `window/2 − hop` samples past the end of its own
//! hop span.

use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use super::stft::{StftPlan, StftResolution};
use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub sample_rate: u32,
    pub hop: usize,
    pub window: usize,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self { sample_rate: 16_000, hop: 160, window: 640, fft_size: 1024, n_mels: 80, fmin: 0.0, fmax: 8000.0, log_floor: 1e-5 }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        StftResolution::new(self.fft_size, self.hop, self.window).validate()?;
        if !self.window.is_multiple_of(2) || self.window / 2 < self.hop {
            return Err(Error::Config(format!("mel window {} must be even and at least 2·hop", self.window)));
        }
        if self.n_mels == 0 || !(self.fmax > self.fmin) || self.fmax > self.sample_rate as f64 / 2.0 {
            return Err(Error::Config("mel band layout is invalid".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log floor must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    /// Samples past the end of a frame's hop span that the frame reads.
    pub fn lookahead(&self) -> usize {
        self.window / 2 - self.hop
    }

    pub fn frames(&self, len: usize) -> usize {
        len / self.hop
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = 6.4f64.ln() / 27.0;
    if hz >= min_log_hz {
        min_log_mel + (hz / min_log_hz).ln() / logstep
    } else {
        hz / f_sp
    }
}

fn mel_to_hz(mel: f64) -> f64 {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = 6.4f64.ln() / 27.0;
    if mel >= min_log_mel {
        min_log_hz * (logstep * (mel - min_log_mel)).exp()
    } else {
        f_sp * mel
    }
}

/// Slaney-scale triangular filters with area normalisation, `n_mels × bins`.
pub fn mel_filterbank(cfg: &MelConfig) -> Vec<Vec<f64>> {
    let bins = cfg.fft_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    let pts: Vec<f64> =
        (0..cfg.n_mels + 2).map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64)).collect();
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64).collect();
    (0..cfg.n_mels)
        .map(|m| {
            let (l, c, r) = (pts[m], pts[m + 1], pts[m + 2]);
            let norm = 2.0 / (r - l);
            freqs
                .iter()
                .map(|&f| {
                    let up = (f - l) / (c - l);
                    let down = (r - f) / (r - c);
                    up.min(down).max(0.0) * norm
                })
                .collect()
        })
        .collect()
}

/// `n_mels × frames` log-mel features.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram<T> {
    pub data: Tensor<T>,
    pub hop: usize,
    pub window: usize,
}

impl<T: Real> MelSpectrogram<T> {
    pub fn frames(&self) -> usize {
        self.data.time()
    }

    pub fn bands(&self) -> usize {
        self.data.channels()
    }
}

/// Filterbank and FFT plan; shared by batch and streaming feature extraction.
pub struct MelFrontend<T: Real> {
    cfg: MelConfig,
    plan: StftPlan<T>,
    /// Sparse rows: `(first bin, weights)`.
    rows: Vec<(usize, Vec<T>)>,
    floor: T,
}

impl<T: Real> MelFrontend<T> {
    pub fn new(cfg: &MelConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = StftPlan::new(StftResolution::new(cfg.fft_size, cfg.hop, cfg.window))?;
        let rows = mel_filterbank(cfg)
            .into_iter()
            .map(|row| {
                let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w > 0.0).map_or(first, |l| l + 1);
                (first, row[first..last].iter().map(|&w| T::lit(w)).collect())
            })
            .collect();
        Ok(Self { cfg: cfg.clone(), plan, rows, floor: T::lit(cfg.log_floor) })
    }

    pub fn config(&self) -> &MelConfig {
        &self.cfg
    }

    /// Log-mel vector of one analysis window (`window` samples).
    pub fn frame(&self, window: &[T], scratch: &mut Vec<Complex<T>>, spec: &mut [Complex<T>], out: &mut [T]) {
        self.plan.frame_spectrum(window, scratch, spec);
        for (o, (first, w)) in out.iter_mut().zip(&self.rows) {
            let mut acc = T::zero();
            for (j, &wv) in w.iter().enumerate() {
                acc = acc + wv * spec[first + j].norm();
            }
            *o = acc.max(self.floor).ln();
        }
    }

    pub fn compute(&self, signal: &[T]) -> MelSpectrogram<T> {
        let cfg = &self.cfg;
        let frames = cfg.frames(signal.len());
        let half = cfg.window / 2;
        let mut data = vec![T::zero(); cfg.n_mels * frames];
        let mut win = vec![T::zero(); cfg.window];
        let mut scratch = Vec::with_capacity(cfg.fft_size);
        let mut spec = vec![Complex::new(T::zero(), T::zero()); cfg.fft_size / 2 + 1];
        let mut col = vec![T::zero(); cfg.n_mels];
        for f in 0..frames {
            let start = (f * cfg.hop) as isize - half as isize;
            for (i, w) in win.iter_mut().enumerate() {
                let idx = start + i as isize;
                *w = if idx >= 0 && (idx as usize) < signal.len() { signal[idx as usize] } else { T::zero() };
            }
            self.frame(&win, &mut scratch, &mut spec, &mut col);
            for (m, &v) in col.iter().enumerate() {
                data[m * frames + f] = v;
            }
        }
        MelSpectrogram {
            data: Tensor::from_vec(&[cfg.n_mels, frames], data).expect("shape"),
            hop: cfg.hop,
            window: cfg.window,
        }
    }
}

/// 80-band log-mel features with the default frontend settings.
pub fn mel_spectrogram<T: Real>(signal: &[T], cfg: &MelConfig) -> Result<MelSpectrogram<T>> {
    Ok(MelFrontend::new(cfg)?.compute(signal))
}

/// Incremental frame producer. After pushing hop-sized block `k`, the frame
/// for block `k − lookahead_frames` becomes available.
pub struct MelStream<T: Real> {
    frontend: std::sync::Arc<MelFrontend<T>>,
    buffer: Vec<T>,
    pushed: usize,
    scratch: Vec<Complex<T>>,
    spec: Vec<Complex<T>>,
}

impl<T: Real> MelStream<T> {
    pub fn new(frontend: std::sync::Arc<MelFrontend<T>>) -> Self {
        let cfg = frontend.config().clone();
        Self {
            frontend,
            buffer: vec![T::zero(); cfg.window + cfg.hop],
            pushed: 0,
            scratch: Vec::with_capacity(cfg.fft_size),
            spec: vec![Complex::new(T::zero(), T::zero()); cfg.fft_size / 2 + 1],
        }
    }

    pub fn reset(&mut self) {
        self.buffer.fill(T::zero());
        self.pushed = 0;
    }

    /// Blocks of delay between pushing a block and receiving its frame.
    pub fn lookahead_frames(&self) -> usize {
        self.frontend.config().lookahead().div_ceil(self.frontend.config().hop)
    }

    /// Push one hop of samples; returns the frame that just became complete, if any.
    pub fn push(&mut self, block: &[T]) -> Option<Vec<T>> {
        let cfg = self.frontend.config();
        debug_assert_eq!(block.len(), cfg.hop);
        self.buffer.rotate_left(cfg.hop);
        let n = self.buffer.len();
        self.buffer[n - cfg.hop..].copy_from_slice(block);
        self.pushed += 1;
        let lag = self.lookahead_frames();
        if self.pushed <= lag {
            return None;
        }
        // buffer ends at sample pushed·hop; the ready frame f = pushed − 1 − lag
        // spans [f·hop − window/2, f·hop + window/2), which must end there too
        let f = self.pushed - 1 - lag;
        let end = f * cfg.hop + cfg.window / 2;
        let start_in_buf = n as isize - (self.pushed * cfg.hop) as isize + (end as isize - cfg.window as isize);
        let mut out = vec![T::zero(); cfg.n_mels];
        let s = start_in_buf as usize;
        let win: Vec<T> = self.buffer[s..s + cfg.window].to_vec();
        self.frontend.frame(&win, &mut self.scratch, &mut self.spec, &mut out);
        Some(out)
    }
}
