use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::dsp::pqmf::{reconstruction_snr, DEFAULT_KAISER_BETA, DEFAULT_TAPS};
use crate::dsp::{design_pqmf, tune_cutoff};
use crate::error::Result;
use crate::generator::{DelayBudget, Generator, GeneratorConfig, InferenceModel};
use crate::losses::{generator_objective, hinge_d_loss, GraphLosses, DEFAULT_RESOLUTIONS};
use crate::nn::gradcheck::{check_inputs, check_store};
use crate::nn::{ConvSpec, NoiseSource, Tensor, WeightStore};
use crate::runtime::{measure_latency, stream_signal, SampleKind, WavFile};

pub const PQMF_MIN_SNR_DB: f64 = 50.0;
pub const STREAM_TOLERANCE: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const DELAY_RANGE_MS: (f64, f64) = (20.0, 25.0);

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    /// Replace the tuned cutoff of the filter bank under test.
    pub pqmf_cutoff: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: String,
    pub passed: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    fn push(&mut self, name: &'static str, measured: f64, tolerance: impl Into<String>, passed: bool) {
        self.checks.push(CheckResult { name, measured, tolerance: tolerance.into(), passed });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{status} {:<22} measured {:<14.6e} required {}", c.name, c.measured, c.tolerance)?;
        }
        let failed = self.failures().len();
        write!(f, "{} checks, {} failed", self.checks.len(), failed)
    }
}

fn noise(len: usize, rng: &mut impl Rng, amp: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-amp..amp)).collect()
}

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, noise(n, rng, 1.0)).expect("shape")
}

/// Module invariants with fixed seeds.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = VerifyReport::default();

    let cutoff = match opts.pqmf_cutoff {
        Some(c) => c,
        None => tune_cutoff(4, DEFAULT_TAPS, DEFAULT_KAISER_BETA)?,
    };
    let bank = design_pqmf(4, DEFAULT_TAPS, DEFAULT_KAISER_BETA, cutoff)?;
    let snr = (0..10).map(|_| reconstruction_snr(&bank, &noise(4096, &mut rng, 1.0))).fold(f64::INFINITY, f64::min);
    report.push("pqmf_reconstruction", snr, format!(">= {PQMF_MIN_SNR_DB} dB"), snr >= PQMF_MIN_SNR_DB);
    report.push("pqmf_delay", bank.delay() as f64, "== 61 samples", bank.delay() == 61);

    let cfg = GeneratorConfig::default();
    let cum = cfg.cumulative_downsampling();
    let total: f64 = cfg.scaling_factors.iter().product();
    let worst = cfg.condnet_factors.iter().zip(&cum).map(|(c, d)| (c * d - 40.0).abs()).fold((total - 40.0).abs(), f64::max);
    report.push("factor_consistency", worst, "== 0 deviation from 40", worst == 0.0);

    let budget = DelayBudget::from_config(&cfg);
    let parts: f64 = budget.parts().iter().map(|p| p.1).sum();
    let in_range = (DELAY_RANGE_MS.0..=DELAY_RANGE_MS.1).contains(&budget.total_ms) && parts == budget.total_ms;
    report.push("delay_budget", budget.total_ms, format!("in [{}, {}] ms, parts sum exactly", DELAY_RANGE_MS.0, DELAY_RANGE_MS.1), in_range);

    let generator = Arc::new(Generator::new(cfg)?);
    let store = generator.init_weights::<f32>(&mut rng)?;
    let model = InferenceModel::new(generator, &store)?;
    let x: Vec<f32> = noise(16_000, &mut rng, 0.5).into_iter().map(|v| v as f32).collect();
    let batch = model.enhance(&x, NoiseSource::Seeded(opts.seed))?;
    let streamed = stream_signal(&model, &x, NoiseSource::Seeded(opts.seed), true)?;
    let hop = model.frame_size();
    let dev = batch.iter().zip(&streamed[hop..]).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max);
    report.push("stream_equivalence", dev, format!("<= {STREAM_TOLERANCE:e} max abs"), dev <= STREAM_TOLERANCE);

    let cut = 8_000;
    let mut perturbed = x.clone();
    perturbed[cut..].iter_mut().for_each(|v| *v = -*v);
    let changed = stream_signal(&model, &perturbed, NoiseSource::Seeded(opts.seed), true)?;
    let leak = streamed[..cut].iter().zip(&changed[..cut]).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max);
    report.push("causality", leak, "== 0 before the perturbation", leak == 0.0);

    let latency = measure_latency(&model, &x[..8000], opts.seed)?;
    report.push("measured_latency", latency.total_ms(), format!("within one frame of {:.4} ms", budget.total_ms), latency.matches(&budget));

    let grad = gradient_checks(&mut rng)?;
    report.push("gradients", grad, format!("<= {GRAD_TOLERANCE:e} relative"), grad <= GRAD_TOLERANCE);

    let fake: Vec<Tensor<f64>> = (0..6).map(|_| Tensor::full(&[1, 8], 1.0)).collect();
    let zero: Vec<Tensor<f64>> = (0..6).map(|_| Tensor::zeros(&[1, 8])).collect();
    let sig = noise(4000, &mut rng, 0.5);
    let g_obj = generator_objective(&sig, &sig, &fake, &DEFAULT_RESOLUTIONS)?.total;
    let d_obj = hinge_d_loss(&zero, &zero)?;
    let dev = (g_obj + 1.0).abs().max((d_obj - 2.0).abs());
    report.push("objective_arithmetic", dev, "== 0 (totals -1 and 2)", dev == 0.0);

    let path = std::env::temp_dir().join(format!("postgan-verify-{}-{}.wav", std::process::id(), opts.seed));
    let mut wav_ok = true;
    for kind in [SampleKind::Int16, SampleKind::Float32] {
        let samples: Vec<f32> = (0..1000).map(|i| ((i * 7919) % 65536) as f32 / 32768.0 - 1.0).collect();
        let w = WavFile::mono(16_000, kind, samples);
        w.write(&path)?;
        let once = WavFile::read(&path)?;
        once.write(&path)?;
        wav_ok &= WavFile::read(&path)? == once;
    }
    let _ = std::fs::remove_file(&path);
    report.push("wav_round_trip", if wav_ok { 0.0 } else { 1.0 }, "bit-exact", wav_ok);

    Ok(report)
}

/// Zero biases put pre-activations of silent regions on the leaky-ReLU kink,
/// and small initial gains shrink deep gradients towards round-off.
fn randomize_affine(store: &mut WeightStore<f64>, rng: &mut impl Rng) {
    let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
    for n in names {
        let t = store.get_mut(&n).expect("listed");
        if n.ends_with(".b") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        } else if n.ends_with(".g") {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.7..1.3));
        }
    }
}

/// Worst relative error over a weight-normalised convolution, both loss
/// families, one discriminator member and the whole small generator.
fn gradient_checks(rng: &mut ChaCha8Rng) -> Result<f64> {
    let eps = 1e-5;
    let mut worst: f64 = 0.0;

    let spec = ConvSpec::new(3, 4, 3).dilation(2);
    let mut store = WeightStore::<f64>::new();
    store.add_conv("c", &spec, rng, 0.5)?;
    let x = random_tensor(&[3, 12], rng);
    let proj = random_tensor(&[4, 12], rng);
    let r = check_store(&store, eps, 8, |g, s| {
        let xi = g.constant(x.clone());
        let y = g.conv_layer(s, "c", spec, xi)?;
        let p = g.constant(proj.clone());
        let m = g.mul(y, p)?;
        g.sum(m)
    })?;
    worst = worst.max(r.max_rel_error);

    let res = [crate::dsp::StftResolution::new(64, 16, 48)];
    let losses = GraphLosses::<f64>::new(&res)?;
    let target = Tensor::row(noise(160, rng, 0.5));
    let r = check_inputs(&[Tensor::row(noise(160, rng, 0.5))], eps, |g, v| {
        let t = g.constant(target.clone());
        Ok(losses.aux(g, v[0], t)?.total)
    })?;
    worst = worst.max(r.max_rel_error);

    let fake: Vec<Tensor<f64>> = (0..6).map(|_| random_tensor(&[1, 5], rng)).collect();
    let real: Vec<Tensor<f64>> = (0..6).map(|_| random_tensor(&[1, 5], rng)).collect();
    let mut inputs = real.clone();
    inputs.extend(fake.iter().cloned());
    let r = check_inputs(&inputs, eps, |g, v| {
        let d = crate::losses::hinge_d_graph(g, &v[..6], &v[6..])?;
        let (a, _) = crate::losses::generator_adv_graph(g, &v[6..])?;
        g.add(d, a)
    })?;
    worst = worst.max(r.max_rel_error);

    let disc = Discriminator::new(DiscriminatorConfig::tiny())?;
    let mut d_stores = disc.init_weights::<f64>(rng, 0.3)?;
    d_stores.iter_mut().for_each(|s| randomize_affine(s, rng));
    let sig = Tensor::row(noise(2048, rng, 0.5));
    let window = disc.sample_windows(2048, rng)?;
    for k in [1, 4] {
        let w = if k < 3 { Some(window[k]) } else { None };
        let r = check_store(&d_stores[k], 1e-6, 2, |g, s| {
            let xi = g.constant(sig.clone());
            let y = disc.member_forward(g, s, k, xi, w)?;
            g.mean(y)
        })?;
        worst = worst.max(r.max_rel_error);
    }

    let gen = Generator::new(GeneratorConfig::tiny())?;
    let mut g_store = gen.init_weights::<f64>(rng)?;
    randomize_affine(&mut g_store, rng);
    let audio = noise(640, rng, 0.5);
    let mel = crate::dsp::MelFrontend::<f64>::new(&gen.config().mel)?.compute(&audio).data;
    let proj = Tensor::row(noise(640, rng, 1.0));
    let r = check_store(&g_store, eps, 1, |g, s| {
        let xi = g.constant(Tensor::row(audio.clone()));
        let mi = g.constant(mel.clone());
        let y = gen.forward_graph(g, s, xi, mi, NoiseSource::Seeded(5))?;
        let p = g.constant(proj.clone());
        let m = g.mul(y, p)?;
        g.sum(m)
    })?;
    worst = worst.max(r.max_rel_error);
    Ok(worst)
}
