use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use postgan::generator::{report_cost, DelayBudget, GeneratorConfig};
use postgan::nn::NoiseSource;
use postgan::runtime::{
    cost_report_text, enhance_file, measure_latency, run_verify, stream_pcm, to_i16, SampleKind, VerifyOptions, WavFile,
};
use postgan::training::{generate_corpus, load_inference, CorpusSpec, ExperimentConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_postgan"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn postgan")
}

fn tiny_checkpoint(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.pgan");
    Trainer::new(ExperimentConfig::preset("tiny").unwrap(), 4).unwrap().save(&path).unwrap();
    path
}

fn speech_like(len: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|i| 0.3 * (i as f32 * 0.05).sin() + rng.random_range(-0.05..0.05)).collect()
}

#[test]
fn enhance_cli_keeps_length_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path());
    let input = dir.path().join("in.wav");
    WavFile::mono(16_000, SampleKind::Int16, speech_like(16_000, 1)).write(&input).unwrap();
    let mut outputs = Vec::new();
    for name in ["a.wav", "b.wav"] {
        let out = dir.path().join(name);
        let o = run(bin().arg("enhance").arg(&input).arg(&out).arg("--checkpoint").arg(&ckpt).args(["--seed", "3"]));
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let w = WavFile::read(&out).unwrap();
        assert_eq!((w.samples.len(), w.sample_rate, w.kind), (16_000, 16_000, SampleKind::Int16));
        outputs.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn enhance_rejects_stereo_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("st.wav");
    WavFile { sample_rate: 16_000, channels: 2, kind: SampleKind::Int16, samples: vec![0.0; 3200] }.write(&input).unwrap();
    let model = load_inference(tiny_checkpoint(dir.path())).unwrap();
    let err = enhance_file(&model, &input, dir.path().join("o.wav"), NoiseSource::Seeded(0)).unwrap_err();
    assert!(err.to_string().contains("mono"), "{err}");
}

#[test]
fn stream_pcm_matches_enhance_one_frame_later() {
    let dir = tempfile::tempdir().unwrap();
    let model = load_inference(tiny_checkpoint(dir.path())).unwrap();
    let x: Vec<f32> = speech_like(8_000, 2).iter().map(|&v| to_i16(v) as f32 / 32768.0).collect();
    let pcm: Vec<u8> = x.iter().flat_map(|&v| to_i16(v).to_le_bytes()).collect();
    let mut out = Vec::new();
    let stats = stream_pcm(&model, &mut &pcm[..], &mut out, NoiseSource::Seeded(4)).unwrap();
    assert_eq!((stats.frames, stats.discarded_samples), (50, 0));
    let streamed: Vec<f32> = out.chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0).collect();
    let batch = model.enhance(&x, NoiseSource::Seeded(4)).unwrap();
    assert_eq!(streamed.len(), x.len());
    assert!(streamed[..160].iter().all(|&v| v == 0.0));
    let dev = batch.iter().zip(&streamed[160..]).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
    assert!(dev <= 1e-4, "{dev}");
}

#[test]
fn stream_pcm_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let model = load_inference(tiny_checkpoint(dir.path())).unwrap();
    let mut out = Vec::new();
    let stats = stream_pcm(&model, &mut &[][..], &mut out, NoiseSource::Seeded(0)).unwrap();
    assert!(out.is_empty() && stats.frames == 0);
    let partial = vec![0u8; 2 * 250];
    let stats = stream_pcm(&model, &mut &partial[..], &mut out, NoiseSource::Seeded(0)).unwrap();
    assert_eq!((stats.frames, stats.discarded_samples, out.len()), (1, 90, 320));
}

#[test]
fn stream_cli_reports_discarded_tail() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path());
    let pcm = dir.path().join("in.pcm");
    std::fs::write(&pcm, vec![0u8; 2 * 400]).unwrap();
    let o = run(bin().arg("stream").arg("--checkpoint").arg(&ckpt).stdin(std::fs::File::open(&pcm).unwrap()));
    assert!(o.status.success());
    assert_eq!(o.stdout.len(), 2 * 320);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("discarded 80 samples") && err.contains("real-time factor"), "{err}");
}

#[test]
fn report_matches_cost_model_and_delay_parts_sum() {
    for cfg in [GeneratorConfig::desk(), GeneratorConfig::full()] {
        let r = report_cost(&cfg).unwrap();
        let text = cost_report_text(&cfg, false).unwrap();
        assert!(text.contains(&format!("parameters      {} ", r.params)));
        assert!(text.contains(&format!("{:.4} GMACs/s", r.gmacs())));
        let parts: f64 = r.delay.parts().iter().map(|p| p.1).sum();
        assert_eq!(parts, r.delay.total_ms);
    }
    let o = run(bin().args(["report", "--config", "full"]));
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), cost_report_text(&GeneratorConfig::full(), false).unwrap());
}

#[test]
fn measured_latency_matches_budget() {
    let dir = tempfile::tempdir().unwrap();
    let model = load_inference(tiny_checkpoint(dir.path())).unwrap();
    let budget = DelayBudget::from_config(model.generator().config());
    let m = measure_latency(&model, &speech_like(4_000, 5), 1).unwrap();
    assert_eq!((m.frame_buffer, m.stream_lag, m.filter_delay), (160, 160, 61));
    assert!(m.matches(&budget));
    assert!((m.total_ms() - budget.total_ms).abs() <= 10.0);
}

#[test]
fn verify_passes_and_catches_a_broken_filter_bank() {
    let report = run_verify(&VerifyOptions::default()).unwrap();
    assert!(report.all_passed(), "{report}");
    let broken = run_verify(&VerifyOptions { pqmf_cutoff: Some(0.4), seed: 0 }).unwrap();
    assert_eq!(broken.failures(), vec!["pqmf_reconstruction"]);
    let o = run(bin().args(["verify", "--pqmf-cutoff", "0.4"]));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL pqmf_reconstruction"));
}

#[test]
fn train_without_manifest_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().arg("train").arg("--manifest").arg(dir.path().join("none.tsv")).arg("--outdir").arg(dir.path()));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("none.tsv"));
}

#[test]
fn train_cli_resume_continues_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_corpus(dir.path().join("corpus"), CorpusSpec { items: 3, seconds: 0.5, seed: 1 }).unwrap();
    let mut cfg = ExperimentConfig::preset("tiny").unwrap();
    cfg.train.segment_length = 2400;
    cfg.train.lr_switch_epoch = 1;
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, cfg.to_toml().unwrap()).unwrap();
    let train = |outdir: &Path, pre: &str, adv: &str, resume: Option<PathBuf>| {
        let mut c = bin();
        c.arg("train").arg("--manifest").arg(&manifest).arg("--config").arg(&config).arg("--outdir").arg(outdir);
        c.args(["--steps-pretrain", pre, "--steps-adv", adv]);
        if let Some(r) = resume {
            c.arg("--checkpoint").arg(r);
        }
        let o = run(&mut c);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(outdir.join("train.log")).unwrap()
    };
    let straight = train(&dir.path().join("a"), "2", "2", None);
    let part = dir.path().join("b");
    train(&part, "2", "0", None);
    let resumed = train(&part, "2", "2", Some(part.join("checkpoint.pgan")));
    assert_eq!(straight.lines().count(), 4);
    assert_eq!(resumed, straight);
}
