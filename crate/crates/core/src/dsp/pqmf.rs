//! Cosine-modulated pseudo-QMF filter banks.
//!
//! The prototype is a Kaiser-windowed sinc of `taps` coefficients centred at
//! `(taps - 1) / 2`. Analysis and synthesis filters are cosine modulations of
//! it with opposite `±π/4` phase offsets and a `√B` gain on each side, so the
//! subband energies add up to the input energy and the analysis → synthesis
//! chain reproduces the input delayed by `taps - 1` samples.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::nn::{Real, Tensor};

/// Default prototype length.
pub const DEFAULT_TAPS: usize = 62;
/// Default Kaiser window shape.
pub const DEFAULT_KAISER_BETA: f64 = 9.0;

#[derive(Clone, Debug, PartialEq)]
pub struct PqmfBank {
    num_bands: usize,
    taps: usize,
    kaiser_beta: f64,
    cutoff_ratio: f64,
    prototype: Vec<f64>,
    analysis: Vec<Vec<f64>>,
    synthesis: Vec<Vec<f64>>,
}

/// `B` critically decimated channels at `rate / B`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSignal<T> {
    pub bands: Tensor<T>,
    /// Zeros appended to the input to make its length a multiple of `B`.
    pub padding: usize,
}

impl<T: Real> SubbandSignal<T> {
    pub fn num_bands(&self) -> usize {
        self.bands.channels()
    }

    pub fn len(&self) -> usize {
        self.bands.time()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.time() == 0
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn kaiser(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / (len - 1) as f64 - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Build a bank. A one-band bank is the single-tap identity whatever `taps` says.
pub fn design_pqmf(num_bands: usize, taps: usize, kaiser_beta: f64, cutoff_ratio: f64) -> Result<PqmfBank> {
    if num_bands < 1 {
        return Err(Error::InvalidArgument("PQMF needs at least one band".into()));
    }
    if !(cutoff_ratio > 0.0 && cutoff_ratio < 0.5) {
        return Err(Error::InvalidArgument(format!("PQMF cutoff ratio {cutoff_ratio} outside (0, 0.5)")));
    }
    if num_bands == 1 {
        return Ok(PqmfBank {
            num_bands: 1,
            taps: 1,
            kaiser_beta,
            cutoff_ratio,
            prototype: vec![1.0],
            analysis: vec![vec![1.0]],
            synthesis: vec![vec![1.0]],
        });
    }
    if taps < 2 * num_bands {
        return Err(Error::InvalidArgument(format!("PQMF with {num_bands} bands needs at least {} taps", 2 * num_bands)));
    }
    let centre = (taps - 1) as f64 / 2.0;
    let wc = PI * cutoff_ratio;
    let window = kaiser(taps, kaiser_beta);
    let prototype: Vec<f64> = (0..taps)
        .map(|n| {
            let m = n as f64 - centre;
            let sinc = if m == 0.0 { wc / PI } else { (wc * m).sin() / (PI * m) };
            sinc * window[n]
        })
        .collect();
    let gain = (num_bands as f64).sqrt();
    let mut analysis = Vec::with_capacity(num_bands);
    let mut synthesis = Vec::with_capacity(num_bands);
    for b in 0..num_bands {
        let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
        let omega = (2 * b + 1) as f64 * PI / (2 * num_bands) as f64;
        let phase = sign * PI / 4.0;
        analysis.push(
            (0..taps)
                .map(|n| gain * 2.0 * prototype[n] * (omega * (n as f64 - centre) + phase).cos())
                .collect(),
        );
        synthesis.push(
            (0..taps)
                .map(|n| gain * 2.0 * prototype[n] * (omega * (n as f64 - centre) - phase).cos())
                .collect(),
        );
    }
    Ok(PqmfBank { num_bands, taps, kaiser_beta, cutoff_ratio, prototype, analysis, synthesis })
}

fn tuning_signal() -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b0a7);
    (0..8192).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Reconstruction SNR in dB of analysis → synthesis on `x`, aligned by the bank delay.
pub fn reconstruction_snr(bank: &PqmfBank, x: &[f64]) -> f64 {
    let sub = bank.analysis(x);
    let y = bank.synthesis(&sub).expect("matching bank");
    let d = bank.delay();
    let n = x.len().saturating_sub(d);
    super::snr_db(&x[..n], &y[d..d + n])
}

/// Grid search for the cutoff ratio maximising reconstruction SNR.
pub fn tune_cutoff(num_bands: usize, taps: usize, kaiser_beta: f64) -> Result<f64> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, u64), f64>>> = OnceLock::new();
    if num_bands == 1 {
        return Ok(0.25);
    }
    let key = (num_bands, taps, kaiser_beta.to_bits());
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&c) = cache.lock().unwrap().get(&key) {
        return Ok(c);
    }
    let x = tuning_signal();
    let score = |c: f64| -> Result<f64> { Ok(reconstruction_snr(&design_pqmf(num_bands, taps, kaiser_beta, c)?, &x)) };
    let nominal = 0.5 / num_bands as f64;
    let (mut best, mut best_snr) = (nominal, f64::NEG_INFINITY);
    let mut lo = nominal * 0.7;
    let mut hi = (nominal * 1.4).min(0.499);
    for step in [2e-3, 1e-4, 1e-5] {
        let mut c = lo;
        while c <= hi {
            let s = score(c)?;
            if s > best_snr {
                best_snr = s;
                best = c;
            }
            c += step;
        }
        lo = (best - step).max(1e-6);
        hi = (best + step).min(0.499);
    }
    cache.lock().unwrap().insert(key, best);
    Ok(best)
}

impl PqmfBank {
    /// Default bank for `num_bands`: 62 taps, Kaiser β = 9, tuned cutoff.
    pub fn tuned(num_bands: usize) -> Result<Self> {
        let cutoff = tune_cutoff(num_bands, DEFAULT_TAPS, DEFAULT_KAISER_BETA)?;
        design_pqmf(num_bands, DEFAULT_TAPS, DEFAULT_KAISER_BETA, cutoff)
    }

    pub fn num_bands(&self) -> usize {
        self.num_bands
    }

    pub fn taps(&self) -> usize {
        self.taps
    }

    pub fn kaiser_beta(&self) -> f64 {
        self.kaiser_beta
    }

    pub fn cutoff_ratio(&self) -> f64 {
        self.cutoff_ratio
    }

    pub fn prototype(&self) -> &[f64] {
        &self.prototype
    }

    pub fn analysis_filters(&self) -> &[Vec<f64>] {
        &self.analysis
    }

    pub fn synthesis_filters(&self) -> &[Vec<f64>] {
        &self.synthesis
    }

    /// End-to-end analysis → synthesis delay in samples.
    pub fn delay(&self) -> usize {
        self.taps - 1
    }

    /// Past full-rate samples the analysis filters need.
    pub fn analysis_history(&self) -> usize {
        self.taps - 1
    }

    /// Past subband samples per band the synthesis filters need.
    pub fn synthesis_history(&self) -> usize {
        (self.taps - 1).div_ceil(self.num_bands)
    }

    pub(crate) fn analysis_coeffs<T: Real>(&self) -> Vec<Vec<T>> {
        self.analysis.iter().map(|h| h.iter().map(|&v| T::lit(v)).collect()).collect()
    }

    pub(crate) fn synthesis_coeffs<T: Real>(&self) -> Vec<Vec<T>> {
        self.synthesis.iter().map(|h| h.iter().map(|&v| T::lit(v)).collect()).collect()
    }

    /// Causal analysis; the input is zero-padded to a multiple of `B`.
    pub fn analysis<T: Real>(&self, x: &[T]) -> SubbandSignal<T> {
        let b = self.num_bands;
        let padding = (b - x.len() % b) % b;
        let hist = self.analysis_history();
        let mut ext = vec![T::zero(); hist + x.len() + padding];
        ext[hist..hist + x.len()].copy_from_slice(x);
        let m = (x.len() + padding) / b;
        let data = analysis_ext(&self.analysis_coeffs(), &ext, hist, m);
        SubbandSignal { bands: Tensor::from_vec(&[b, m], data).expect("shape"), padding }
    }

    /// Upsample, filter and sum; output length is `B × subband length`.
    pub fn synthesis<T: Real>(&self, sub: &SubbandSignal<T>) -> Result<Vec<T>> {
        if sub.num_bands() != self.num_bands {
            return Err(shape_err!("synthesis bank has {} bands, signal has {}", self.num_bands, sub.num_bands()));
        }
        Ok(self.synthesis_tensor(&sub.bands))
    }

    pub(crate) fn synthesis_tensor<T: Real>(&self, bands: &Tensor<T>) -> Vec<T> {
        let hist = self.synthesis_history();
        let m = bands.time();
        let ext = crate::nn::kernels::left_pad(bands.data(), self.num_bands, m, hist);
        synthesis_ext(&self.synthesis_coeffs(), &ext, hist, m)
    }
}

/// `v_b[m] = Σ_k h_b[k] · x[B·m − k]`, where `x_ext[hist + i]` holds `x[i]`.
pub(crate) fn analysis_ext<T: Real>(filters: &[Vec<T>], x_ext: &[T], hist: usize, out_len: usize) -> Vec<T> {
    let b_n = filters.len();
    let mut out = vec![T::zero(); b_n * out_len];
    for (b, h) in filters.iter().enumerate() {
        for m in 0..out_len {
            let pos = hist + b_n * m;
            let mut acc = T::zero();
            for (k, &hk) in h.iter().enumerate() {
                acc = acc + hk * x_ext[pos - k];
            }
            out[b * out_len + m] = acc;
        }
    }
    out
}

/// Adjoint of [`analysis_ext`] with zero history: accumulates into `dx` (length `B·out_len`).
pub(crate) fn analysis_adjoint<T: Real>(filters: &[Vec<T>], dv: &[T], out_len: usize, dx: &mut [T]) {
    let b_n = filters.len();
    for (b, h) in filters.iter().enumerate() {
        for m in 0..out_len {
            let g = dv[b * out_len + m];
            let pos = b_n * m;
            for (k, &hk) in h.iter().enumerate() {
                if k <= pos {
                    dx[pos - k] = dx[pos - k] + hk * g;
                }
            }
        }
    }
}

/// `y[n] = Σ_b Σ_{k ≡ n (mod B)} g_b[k] · v_b[(n − k) / B]`, where
/// `v_ext[b][hist + j]` holds `v_b[j]` of the current block.
pub(crate) fn synthesis_ext<T: Real>(filters: &[Vec<T>], v_ext: &[T], hist: usize, in_len: usize) -> Vec<T> {
    let b_n = filters.len();
    let ext_len = hist + in_len;
    let mut y = vec![T::zero(); b_n * in_len];
    for (n, out) in y.iter_mut().enumerate() {
        let r = n % b_n;
        let q = (n / b_n) as isize;
        let mut acc = T::zero();
        for (b, g) in filters.iter().enumerate() {
            let row = &v_ext[b * ext_len..(b + 1) * ext_len];
            let mut k = r;
            let mut j = q;
            while k < g.len() {
                acc = acc + g[k] * row[(hist as isize + j) as usize];
                k += b_n;
                j -= 1;
            }
        }
        *out = acc;
    }
    y
}

/// Adjoint of synthesis with zero history: accumulates into `dv` (`B × in_len`).
pub(crate) fn synthesis_adjoint<T: Real>(filters: &[Vec<T>], dy: &[T], in_len: usize, dv: &mut [T]) {
    let b_n = filters.len();
    for (b, g) in filters.iter().enumerate() {
        for m in 0..in_len {
            let mut acc = T::zero();
            for (k, &gk) in g.iter().enumerate() {
                let n = b_n * m + k;
                if n < dy.len() {
                    acc = acc + gk * dy[n];
                }
            }
            dv[b * in_len + m] = dv[b * in_len + m] + acc;
        }
    }
}

/// Frame-wise analysis with retained history.
#[derive(Clone, Debug)]
pub struct StreamingAnalysis<T> {
    filters: Vec<Vec<T>>,
    history: Vec<T>,
}

impl<T: Real> StreamingAnalysis<T> {
    pub fn new(bank: &PqmfBank) -> Self {
        Self { filters: bank.analysis_coeffs(), history: vec![T::zero(); bank.analysis_history()] }
    }

    pub(crate) fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn reset(&mut self) {
        self.history.fill(T::zero());
    }

    /// `x.len()` must be a multiple of the band count.
    pub fn process(&mut self, x: &[T]) -> Tensor<T> {
        let b_n = self.filters.len();
        let hist = self.history.len();
        let mut ext = Vec::with_capacity(hist + x.len());
        ext.extend_from_slice(&self.history);
        ext.extend_from_slice(x);
        let m = x.len() / b_n;
        let data = analysis_ext(&self.filters, &ext, hist, m);
        let n = ext.len();
        self.history.copy_from_slice(&ext[n - hist..]);
        Tensor::from_vec(&[b_n, m], data).expect("shape")
    }
}

/// Frame-wise synthesis with retained subband history.
#[derive(Clone, Debug)]
pub struct StreamingSynthesis<T> {
    filters: Vec<Vec<T>>,
    hist: usize,
    history: Vec<T>,
}

impl<T: Real> StreamingSynthesis<T> {
    pub fn new(bank: &PqmfBank) -> Self {
        let hist = bank.synthesis_history();
        Self { filters: bank.synthesis_coeffs(), hist, history: vec![T::zero(); hist * bank.num_bands()] }
    }

    pub(crate) fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn reset(&mut self) {
        self.history.fill(T::zero());
    }

    pub fn process(&mut self, bands: &Tensor<T>) -> Vec<T> {
        let b_n = self.filters.len();
        let m = bands.time();
        let ext_len = self.hist + m;
        let mut ext = vec![T::zero(); b_n * ext_len];
        for b in 0..b_n {
            ext[b * ext_len..b * ext_len + self.hist].copy_from_slice(&self.history[b * self.hist..(b + 1) * self.hist]);
            ext[b * ext_len + self.hist..(b + 1) * ext_len].copy_from_slice(bands.channel(b));
        }
        let y = synthesis_ext(&self.filters, &ext, self.hist, m);
        for b in 0..b_n {
            let row = &ext[b * ext_len..(b + 1) * ext_len];
            self.history[b * self.hist..(b + 1) * self.hist].copy_from_slice(&row[ext_len - self.hist..]);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn one_band_is_identity() {
        let bank = design_pqmf(1, 1, 9.0, 0.25).unwrap();
        let x = noise(1, 333);
        let sub = bank.analysis(&x);
        assert_eq!(sub.bands.data(), &x[..]);
        assert_eq!(bank.synthesis(&sub).unwrap(), x);
        assert_eq!(bank.delay(), 0);
    }

    #[test]
    fn rejects_bad_designs() {
        assert!(design_pqmf(0, 62, 9.0, 0.1).is_err());
        assert!(design_pqmf(4, 7, 9.0, 0.1).is_err());
        assert!(design_pqmf(4, 62, 9.0, 0.0).is_err());
        assert!(design_pqmf(4, 62, 9.0, 0.5).is_err());
    }

    #[test]
    fn tuned_banks_reconstruct() {
        for b in [2, 4] {
            let bank = PqmfBank::tuned(b).unwrap();
            let snr = reconstruction_snr(&bank, &noise(7, 16000));
            assert!(snr >= 50.0, "B={b}: {snr:.2} dB at cutoff {}", bank.cutoff_ratio());
        }
    }

    #[test]
    fn impulse_gives_decimated_filters() {
        let bank = PqmfBank::tuned(4).unwrap();
        let mut x = vec![0.0f64; 128];
        x[0] = 1.0;
        let sub = bank.analysis(&x);
        for b in 0..4 {
            for m in 0..32 {
                let expect = bank.analysis_filters()[b].get(4 * m).copied().unwrap_or(0.0);
                assert_eq!(sub.bands.channel(b)[m], expect);
            }
        }
    }

    #[test]
    fn pads_to_band_multiple() {
        let bank = PqmfBank::tuned(4).unwrap();
        let sub = bank.analysis(&noise(3, 1001));
        assert_eq!(sub.padding, 3);
        assert_eq!(sub.len(), 251);
    }

    #[test]
    fn synthesis_rejects_band_mismatch() {
        let b4 = PqmfBank::tuned(4).unwrap();
        let b2 = PqmfBank::tuned(2).unwrap();
        let sub = b2.analysis(&noise(3, 64));
        assert!(b4.synthesis(&sub).is_err());
    }

    #[test]
    fn streaming_matches_batch() {
        let bank = PqmfBank::tuned(4).unwrap();
        let x: Vec<f32> = noise(9, 1600).into_iter().map(|v| v as f32).collect();
        let batch = bank.analysis(&x);
        let batch_y = bank.synthesis(&batch).unwrap();
        let mut a = StreamingAnalysis::new(&bank);
        let mut s = StreamingSynthesis::new(&bank);
        let mut parts = Vec::new();
        let mut ys = Vec::new();
        for frame in x.chunks(160) {
            let sub = a.process(frame);
            ys.extend(s.process(&sub));
            parts.push(sub);
        }
        assert_eq!(Tensor::cat_time(&parts).unwrap(), batch.bands);
        assert_eq!(ys, batch_y);
    }
}
