//! Synthetic stand-in for coded speech: harmonic voiced segments and noise
//! bursts as references, and copies degraded by coarse spectral
//! quantisation with holes and a band limit.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::Result;
use crate::runtime::{SampleKind, WavFile};
use crate::SAMPLE_RATE;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorpusSpec {
    pub items: usize,
    pub seconds: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self { items: 16, seconds: 2.0, seed: 7 }
    }
}

/// Reference signal of `len` samples.
pub fn synth_reference(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let f0 = rng.random_range(90.0..240.0);
    let vibrato = rng.random_range(2.0..6.0);
    let syllables = rng.random_range(2.5..5.0);
    let formants = [rng.random_range(400.0..900.0), rng.random_range(1000.0..2200.0), rng.random_range(2300.0..3300.0)];
    let phase0 = rng.random_range(0.0..1.0);
    let mut phase = 0.0f64;
    let mut noise_state = 0.0f64;
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let t = n as f64 / sr;
        let f = f0 * (1.0 + 0.08 * (2.0 * PI * vibrato * t).sin());
        phase += 2.0 * PI * f / sr;
        let syl = (PI * (syllables * t + phase0)).sin();
        let voiced = syl.max(0.0).sqrt();
        let mut v = 0.0;
        let mut k = 1.0;
        while k * f < 7600.0 {
            let fk = k * f;
            let env: f64 = formants.iter().map(|&fm| 1.0 / (1.0 + ((fk - fm) / 250.0).powi(2))).sum();
            v += env / k.sqrt() * (k * phase).sin();
            k += 1.0;
        }
        // First-difference noise: tilted towards high frequencies like a fricative.
        let z: f64 = rng.sample(StandardNormal);
        let hf = z - noise_state;
        noise_state = z;
        let unvoiced = (-syl).max(0.0).powi(2);
        out.push(0.12 * voiced * v + 0.05 * unvoiced * hf + 0.002 * z);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    out.iter_mut().for_each(|v| *v *= 0.6 / peak);
    out
}

/// Quantise each spectral frame coarsely, zeroing weak bins and everything
/// above `cutoff_hz`. Overlap-add with a square-root Hann pair.
pub fn degrade(x: &[f64], step_ratio: f64, hole_ratio: f64, cutoff_hz: f64) -> Vec<f64> {
    let n = 256;
    let hop = n / 2;
    let win: Vec<f64> = (0..n).map(|i| (PI * i as f64 / n as f64).sin()).collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let cutoff_bin = (cutoff_hz / SAMPLE_RATE as f64 * n as f64) as usize;
    let padded_len = x.len() + 2 * n;
    let mut padded = vec![0.0; padded_len];
    padded[n..n + x.len()].copy_from_slice(x);
    let mut y = vec![0.0; padded_len];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut start = 0;
    while start + n <= padded_len {
        for i in 0..n {
            buf[i] = Complex::new(padded[start + i] * win[i], 0.0);
        }
        fwd.process(&mut buf);
        let peak = buf.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let step = (peak * step_ratio).max(1e-12);
        for (k, c) in buf.iter_mut().enumerate() {
            let bin = k.min(n - k);
            if bin > cutoff_bin || c.norm() < peak * hole_ratio {
                *c = Complex::new(0.0, 0.0);
            } else {
                *c = Complex::new((c.re / step).round() * step, (c.im / step).round() * step);
            }
        }
        inv.process(&mut buf);
        for i in 0..n {
            y[start + i] += buf[i].re / n as f64 * win[i];
        }
        start += hop;
    }
    y[n..n + x.len()].to_vec()
}

/// `(coded, reference)` pair of `len` samples.
pub fn synth_pair(len: usize, rng: &mut impl Rng) -> (Vec<f32>, Vec<f32>) {
    let reference = synth_reference(len, rng);
    let coded = degrade(&reference, 0.12, 0.06, 6000.0);
    (coded.iter().map(|&v| v as f32).collect(), reference.iter().map(|&v| v as f32).collect())
}

/// Write `coded_NN.wav`, `ref_NN.wav` and `manifest.tsv` into `dir`.
/// Returns the manifest path.
pub fn generate_corpus(dir: impl AsRef<Path>, spec: CorpusSpec) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let len = (spec.seconds * SAMPLE_RATE as f64).round() as usize;
    let manifest = dir.join("manifest.tsv");
    let mut m = std::fs::File::create(&manifest)?;
    for i in 0..spec.items {
        let (coded, reference) = synth_pair(len, &mut rng);
        let (c, r) = (format!("coded_{i:02}.wav"), format!("ref_{i:02}.wav"));
        WavFile::mono(SAMPLE_RATE, SampleKind::Int16, coded).write(dir.join(&c))?;
        WavFile::mono(SAMPLE_RATE, SampleKind::Int16, reference).write(dir.join(&r))?;
        writeln!(m, "{c}\t{r}")?;
    }
    Ok(manifest)
}
