use std::path::Path;

use postgan::dsp::MelFrontend;
use postgan::nn::{Checkpoint, Tensor};
use postgan::runtime::{SampleKind, WavFile};
use postgan::training::{
    draw_batch, load_dataset, synth_pair, ExperimentConfig, PairedDataset, TrainConfig, Trainer, ADVERSARIAL, PRETRAIN,
};
use postgan::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn write_wav(dir: &Path, name: &str, rate: u32, channels: u16, samples: Vec<f32>) {
    WavFile { sample_rate: rate, channels, kind: SampleKind::Int16, samples }.write(dir.join(name)).unwrap();
}

fn tone(len: usize, f: f32) -> Vec<f32> {
    (0..len).map(|i| 0.3 * (i as f32 * f).sin()).collect()
}

fn synthetic(items: usize, len: usize, seed: u64) -> PairedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PairedDataset::from_pairs((0..items).map(|_| synth_pair(len, &mut rng)).collect())
}

/// Tiny generator and discriminator on short segments with a quick schedule.
fn tiny_config(pretrain: u64, adversarial: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset("tiny").unwrap();
    cfg.train.pretrain_steps = pretrain;
    cfg.train.adversarial_steps = adversarial;
    cfg.train.segment_length = 2400;
    cfg.train.lr_switch_epoch = 1;
    cfg.train.checkpoint_every = 1;
    cfg
}

#[test]
fn empty_manifest_gives_empty_dataset_and_warning() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.tsv");
    std::fs::write(&m, "# nothing here\n\n").unwrap();
    let ds = load_dataset(&m).unwrap();
    assert!(ds.is_empty());
    assert_eq!(ds.warnings.len(), 1);
}

#[test]
fn small_length_mismatch_is_trimmed_large_one_skipped() {
    let dir = tempfile::tempdir().unwrap();
    write_wav(dir.path(), "c.wav", 16_000, 1, tone(4000, 0.1));
    write_wav(dir.path(), "r.wav", 16_000, 1, tone(4080, 0.1));
    write_wav(dir.path(), "long.wav", 16_000, 1, tone(4400, 0.1));
    let m = dir.path().join("m.tsv");
    std::fs::write(&m, "c.wav\tr.wav\nc.wav\tlong.wav\n").unwrap();
    let ds = load_dataset(&m).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.items[0].coded.len(), 4000);
    assert_eq!(ds.items[0].reference.len(), 4000);
    assert_eq!(ds.skipped.len(), 1);
}

#[test]
fn wrong_rate_channels_or_missing_file_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_wav(dir.path(), "ok.wav", 16_000, 1, tone(1600, 0.1));
    write_wav(dir.path(), "hi.wav", 48_000, 1, tone(4800, 0.1));
    write_wav(dir.path(), "st.wav", 16_000, 2, tone(3200, 0.1));
    for (line, needle) in [("hi.wav\tok.wav", "48000"), ("ok.wav\tst.wav", "mono"), ("ok.wav\tnone.wav", "none.wav")] {
        let m = dir.path().join("m.tsv");
        std::fs::write(&m, line).unwrap();
        match load_dataset(&m) {
            Err(Error::Dataset(msg)) => assert!(msg.contains(needle), "{msg}"),
            other => panic!("{line}: {other:?}"),
        }
    }
    assert!(matches!(load_dataset(dir.path().join("absent.tsv")), Err(Error::Dataset(_))));
}

#[test]
fn batches_are_aligned_reproducible_and_paired() {
    let cfg = ExperimentConfig::preset("desk").unwrap();
    let mel = MelFrontend::<f32>::new(&cfg.generator.mel).unwrap();
    let reference: Vec<f32> = (0..40_000).map(|i| (i as f32 * 1e-4).sin()).collect();
    let coded = reference.iter().map(|v| v * 0.5).collect();
    let ds = PairedDataset::from_pairs(vec![(coded, reference)]);
    let a = draw_batch(&ds, &mel, 4, 16_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = draw_batch(&ds, &mel, 4, 16_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    for (s, t) in a.iter().zip(&b) {
        assert_eq!(s.offset % 160, 0);
        assert_eq!(s.offset, t.offset);
        assert_eq!(s.coded.len(), 16_000);
        // L / hop frames with no extra boundary frames
        assert_eq!((s.mel.channels(), s.mel.time()), (80, 100));
        assert!(s.coded.iter().zip(&s.reference).all(|(c, r)| *c == r * 0.5));
        assert_eq!(s.mel, mel.compute(&s.coded).data);
    }
    assert!(draw_batch(&ds, &mel, 1, 50_000, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
}

#[test]
fn learning_rate_switches_at_epoch_150() {
    let t = TrainConfig::full();
    assert_eq!(t.lr_g_at(149 * 10 + 9, 10), 1e-4);
    assert_eq!(t.lr_g_at(150 * 10, 10), 5e-5);
    assert_eq!(t.steps_per_epoch(100), 4);
    let mut cfg = tiny_config(4, 0);
    cfg.train.lr_switch_epoch = 4;
    assert!(cfg.validate_schedule(1).is_ok());
    assert!(cfg.validate_schedule(8).is_err());
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let mut cfg = tiny_config(1, 1);
    cfg.train.lr_g = 0.0;
    cfg.train.lr_g_late = 0.0;
    cfg.train.lr_d = 0.0;
    let ds = synthetic(2, 4000, 1);
    let mut t = Trainer::new(cfg, ds.len()).unwrap();
    let before = t.generator_weights().clone();
    let d_before = t.discriminator_weights().to_vec();
    t.train_step(&ds).unwrap();
    t.train_step(&ds).unwrap();
    assert_eq!(*t.generator_weights(), before);
    assert_eq!(t.discriminator_weights(), &d_before[..]);
}

#[test]
fn same_seed_same_log() {
    let ds = synthetic(3, 4000, 2);
    let run = || {
        let mut t = Trainer::new(tiny_config(3, 3), ds.len()).unwrap();
        (0..6).map(|_| t.train_step(&ds).unwrap().log_line()).collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a[2].contains(PRETRAIN) && a[3].contains(ADVERSARIAL));
}

#[test]
fn zero_discriminator_first_step() {
    let ds = synthetic(2, 4000, 3);
    let mut t = Trainer::new(tiny_config(0, 1), ds.len()).unwrap();
    t.zero_discriminator();
    let r = t.train_step(&ds).unwrap();
    assert_eq!(r.d_loss, Some(2.0));
    assert_eq!((r.real_score, r.fake_score), (Some(0.0), Some(0.0)));
    assert_eq!(r.adv, vec![0.0; 6]);
    assert_eq!(r.total, r.l_aux);
}

#[test]
fn resume_reproduces_the_next_step() {
    let ds = synthetic(3, 4000, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.pgan");
    let mut t = Trainer::new(tiny_config(2, 3), ds.len()).unwrap();
    for _ in 0..3 {
        t.train_step(&ds).unwrap();
    }
    t.save(&path).unwrap();
    let next: Vec<String> = (0..2).map(|_| t.train_step(&ds).unwrap().log_line()).collect();
    let mut resumed = Trainer::load(&path).unwrap();
    assert_eq!(resumed.step(), 3);
    let again: Vec<String> = (0..2).map(|_| resumed.train_step(&ds).unwrap().log_line()).collect();
    assert_eq!(next, again);
}

#[test]
fn run_writes_log_and_resumes_identically() {
    let ds = synthetic(3, 4000, 5);
    let full = tempfile::tempdir().unwrap();
    Trainer::new(tiny_config(2, 2), ds.len()).unwrap().run(&ds, full.path()).unwrap();
    let full_log = std::fs::read_to_string(full.path().join("train.log")).unwrap();
    assert_eq!(full_log.lines().count(), 4);

    let part = tempfile::tempdir().unwrap();
    Trainer::new(tiny_config(2, 0), ds.len()).unwrap().run(&ds, part.path()).unwrap();
    let mut t = Trainer::load(part.path().join("checkpoint.pgan")).unwrap();
    t.set_schedule(2, 2).unwrap();
    t.run(&ds, part.path()).unwrap();
    assert_eq!(std::fs::read_to_string(part.path().join("train.log")).unwrap(), full_log);
    assert!(t.set_schedule(1, 2).is_err());
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let ds = synthetic(1, 4000, 6);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.pgan");
    Trainer::new(tiny_config(1, 0), ds.len()).unwrap().save(&path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let truncated = dir.path().join("t.pgan");
    std::fs::write(&truncated, &bytes[..bytes.len() - 7]).unwrap();
    assert!(Trainer::load(&truncated).is_err());
    bytes[0] = b'X';
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(Trainer::load(&path), Err(Error::Checkpoint(_))));
}

#[test]
fn desk_checkpoint_size_follows_parameter_count() {
    let cfg = ExperimentConfig::preset("desk").unwrap();
    let t = Trainer::new(cfg, 8).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.pgan");
    t.save(&path).unwrap();
    let scalars = t.generator_weights().num_scalars()
        + t.discriminator_weights().iter().map(|s| s.num_scalars()).sum::<usize>();
    let size = std::fs::metadata(&path).unwrap().len() as usize;
    // weights plus two moments, four bytes each, plus headers
    assert!(size >= 12 * scalars && size < 12 * scalars + 256 * 1024, "{size} for {scalars}");
    assert!(size < 200 * 1024 * 1024);
    let ckpt = Checkpoint::load(&path).unwrap();
    assert!(ckpt.get("g.pre.v").is_some() && ckpt.get("adam.d6.v.head.g").is_some());
}

#[test]
fn non_finite_loss_aborts() {
    let ds = synthetic(1, 4000, 7);
    let mut t = Trainer::new(tiny_config(2, 0), ds.len()).unwrap();
    *t.generator_weights_mut().get_mut("post.b").unwrap() = Tensor::full(&[4], f32::NAN);
    match t.train_step(&ds) {
        Err(Error::NonFinite { step: 0, phase }) => assert_eq!(phase, PRETRAIN),
        other => panic!("{other:?}"),
    }
    assert_eq!(t.step(), 0);
}

#[test]
fn copy_task_pretraining_halves_the_spectral_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pairs = (0..4)
        .map(|_| {
            let (_, reference) = synth_pair(8000, &mut rng);
            (reference.clone(), reference)
        })
        .collect();
    let ds = PairedDataset::from_pairs(pairs);
    let mut t = Trainer::new(tiny_config(300, 0), ds.len()).unwrap();
    let losses: Vec<f64> = (0..300).map(|_| t.train_step(&ds).unwrap().l_aux).collect();
    let head = losses[..20].iter().sum::<f64>() / 20.0;
    let tail = losses[280..].iter().sum::<f64>() / 20.0;
    assert!(tail <= head / 2.0, "{head} -> {tail}");
}
