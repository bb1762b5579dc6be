use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{Discriminator, WindowSlice};
use crate::dsp::MelFrontend;
use crate::error::{Error, Result};
use crate::generator::{Generator, InferenceModel, INIT_STD};
use crate::losses::{generator_adv_graph, hinge_d_graph, multires_stft_loss, GraphLosses, LossReport};
use crate::nn::{Adam, Checkpoint, Graph, NoiseSource, ParamGrads, Tensor, Var, WeightStore};
use crate::training::{draw_batch, ExperimentConfig, PairedDataset, Segment};

pub const PRETRAIN: &str = "pretrain";
pub const ADVERSARIAL: &str = "adversarial";

/// Everything besides the tensors needed to resume a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TrainerState {
    step: u64,
    steps_per_epoch: u64,
    rng_seed: String,
    rng_stream: String,
    rng_word_pos: String,
    adam_g_step: u64,
    adam_d_steps: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    config: ExperimentConfig,
    state: TrainerState,
}

/// Generator config stored in any checkpoint written by [`Trainer::save`].
#[derive(Deserialize)]
struct GeneratorOnlyMeta {
    config: GeneratorSection,
}

#[derive(Deserialize)]
struct GeneratorSection {
    generator: crate::generator::GeneratorConfig,
}

/// Generator and its weights from a training checkpoint.
pub fn load_generator(path: impl AsRef<Path>) -> Result<(Arc<Generator>, WeightStore<f32>)> {
    let ckpt = Checkpoint::load(path)?;
    let meta: GeneratorOnlyMeta = toml::from_str(&ckpt.metadata).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let generator = Generator::new(meta.config.generator)?;
    let mut store = generator.init_weights::<f32>(&mut ChaCha8Rng::seed_from_u64(0))?;
    ckpt.load_store("g.", &mut store)?;
    Ok((Arc::new(generator), store))
}

/// Inference model from a training checkpoint.
pub fn load_inference(path: impl AsRef<Path>) -> Result<InferenceModel<f32>> {
    let (g, store) = load_generator(path)?;
    InferenceModel::new(g, &store)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<Vec<u8>> {
    let bad = || Error::Checkpoint(format!("malformed hex field {s:?}"));
    if !s.len().is_multiple_of(2) {
        return Err(bad());
    }
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).map_err(|_| bad())).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn mean_of_columns(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.first().map_or(0, |r| r.len());
    (0..n).map(|i| mean(&rows.iter().map(|r| r[i]).collect::<Vec<_>>())).collect()
}

fn check_finite(report: &LossReport, grads_ok: bool) -> Result<()> {
    let mut values = vec![report.total, report.l_aux];
    values.extend(report.d_loss);
    if !grads_ok || values.iter().any(|v| !v.is_finite()) {
        let phase = if report.phase == PRETRAIN { PRETRAIN } else { ADVERSARIAL };
        return Err(Error::NonFinite { step: report.step, phase });
    }
    Ok(())
}

/// Generator and discriminator ensemble with their optimizers.
pub struct Trainer {
    cfg: ExperimentConfig,
    generator: Arc<Generator>,
    disc: Discriminator,
    g: WeightStore<f32>,
    d: Vec<WeightStore<f32>>,
    adam_g: Adam<f32>,
    adam_d: Vec<Adam<f32>>,
    mel: MelFrontend<f32>,
    losses: GraphLosses<f32>,
    rng: ChaCha8Rng,
    step: u64,
    steps_per_epoch: u64,
}

impl Trainer {
    /// Fresh run; weights are initialised from `cfg.train.seed`.
    pub fn new(cfg: ExperimentConfig, items: usize) -> Result<Self> {
        cfg.validate()?;
        let generator = Arc::new(Generator::new(cfg.generator.clone())?);
        let disc = Discriminator::new(cfg.discriminator.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let g = generator.init_weights(&mut rng)?;
        let d = disc.init_weights(&mut rng, INIT_STD)?;
        let t = &cfg.train;
        let adam_g = Adam::new(&g, t.beta1, t.beta2, t.adam_eps);
        let adam_d = d.iter().map(|s| Adam::new(s, t.beta1, t.beta2, t.adam_eps)).collect();
        let mel = MelFrontend::new(&cfg.generator.mel)?;
        let losses = GraphLosses::new(&t.resolutions)?;
        let steps_per_epoch = t.steps_per_epoch(items);
        Ok(Self { cfg, generator, disc, g, d, adam_g, adam_d, mel, losses, rng, step: 0, steps_per_epoch })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn generator(&self) -> &Arc<Generator> {
        &self.generator
    }

    pub fn generator_weights(&self) -> &WeightStore<f32> {
        &self.g
    }

    pub fn generator_weights_mut(&mut self) -> &mut WeightStore<f32> {
        &mut self.g
    }

    pub fn discriminator_weights(&self) -> &[WeightStore<f32>] {
        &self.d
    }

    /// Set every discriminator weight to zero, so every score is zero.
    pub fn zero_discriminator(&mut self) {
        for s in &mut self.d {
            s.zero_gains();
            for (name, t) in s.iter().map(|(n, t)| (n.to_string(), t.len())).collect::<Vec<_>>() {
                if name.ends_with(".b") {
                    *s.get_mut(&name).expect("listed") = Tensor::zeros(&[t]);
                }
            }
        }
    }

    pub fn inference_model(&self) -> Result<InferenceModel<f32>> {
        InferenceModel::new(self.generator.clone(), &self.g)
    }

    /// Change the phase lengths of a run, e.g. to extend a resumed one.
    pub fn set_schedule(&mut self, pretrain_steps: u64, adversarial_steps: u64) -> Result<()> {
        if pretrain_steps + adversarial_steps < self.step {
            return Err(Error::Config(format!("the run is already at step {}", self.step)));
        }
        if self.step > pretrain_steps.min(self.cfg.train.pretrain_steps) && pretrain_steps != self.cfg.train.pretrain_steps {
            return Err(Error::Config("the pretraining length cannot change once adversarial training began".into()));
        }
        self.cfg.train.pretrain_steps = pretrain_steps;
        self.cfg.train.adversarial_steps = adversarial_steps;
        Ok(())
    }

    pub fn phase(&self) -> &'static str {
        if self.step < self.cfg.train.pretrain_steps {
            PRETRAIN
        } else {
            ADVERSARIAL
        }
    }

    pub fn lr_g(&self) -> f64 {
        self.cfg.train.lr_g_at(self.step, self.steps_per_epoch)
    }

    pub fn draw_batch(&mut self, ds: &PairedDataset) -> Result<Vec<Segment>> {
        draw_batch(ds, &self.mel, self.cfg.train.batch_size, self.cfg.train.segment_length, &mut self.rng)
    }

    /// Generator forward on the tape; returns the output variable.
    fn record_generator(&self, g: &mut Graph<f32>, seg: &Segment, seed: u64) -> Result<Var> {
        let x = g.constant(Tensor::row(seg.coded.clone()));
        let mel = g.constant(seg.mel.clone());
        self.generator.forward_graph(g, &self.g, x, mel, NoiseSource::Seeded(seed))
    }

    fn apply_generator(&mut self, mut grads: ParamGrads<f32>, n: usize) -> Result<bool> {
        grads.scale(1.0 / n as f32);
        let ok = grads.all_finite();
        let lr = self.lr_g();
        if ok && lr > 0.0 {
            self.adam_g.step(&mut self.g, &grads, lr)?;
        }
        Ok(ok)
    }

    /// One spectral-loss update of the generator.
    pub fn pretrain_step(&mut self, batch: &[Segment]) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut grads = ParamGrads::zeros_like(&self.g);
        let (mut sc, mut mag, mut aux) = (Vec::new(), Vec::new(), Vec::new());
        for seg in batch {
            let seed = self.rng.next_u64();
            let mut g = Graph::new();
            let y = self.record_generator(&mut g, seg, seed)?;
            let target = g.constant(Tensor::row(seg.reference.clone()));
            let l = self.losses.aux(&mut g, y, target)?;
            let values = |vs: &[Var]| vs.iter().map(|&v| g.scalar(v).map(|s| s as f64)).collect::<Result<Vec<_>>>();
            sc.push(values(&l.l_sc)?);
            mag.push(values(&l.l_mag)?);
            aux.push(g.scalar(l.total)? as f64);
            grads.add_assign(&g.backward(l.total)?.for_store(&self.g));
        }
        let l_aux = mean(&aux);
        let report = LossReport {
            step: self.step,
            phase: PRETRAIN.into(),
            l_sc: mean_of_columns(&sc),
            l_mag: mean_of_columns(&mag),
            l_aux,
            total: l_aux,
            ..LossReport::default()
        };
        check_finite(&report, true)?;
        let ok = self.apply_generator(grads, batch.len())?;
        check_finite(&report, ok)?;
        self.step += 1;
        Ok(report)
    }

    /// One discriminator update on real versus generated speech followed
    /// by one generator update on the adversarial plus spectral objective.
    pub fn adversarial_step(&mut self, batch: &[Segment]) -> Result<LossReport> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let seg_len = batch[0].coded.len();
        let mut recorded: Vec<(Graph<f32>, Var, Vec<WindowSlice>)> = Vec::with_capacity(batch.len());
        for seg in batch {
            let seed = self.rng.next_u64();
            let windows = self.disc.sample_windows(seg_len, &mut self.rng)?;
            let mut g = Graph::new();
            let y = self.record_generator(&mut g, seg, seed)?;
            recorded.push((g, y, windows));
        }

        let mut d_grads: Vec<ParamGrads<f32>> = self.d.iter().map(ParamGrads::zeros_like).collect();
        let (mut d_losses, mut real_scores, mut fake_scores) = (Vec::new(), Vec::new(), Vec::new());
        for (seg, (gg, y, windows)) in batch.iter().zip(&recorded) {
            let mut g = Graph::new();
            let real = g.constant(Tensor::row(seg.reference.clone()));
            let fake = g.constant(gg.value(*y)?.clone());
            let rs = self.disc.ensemble_forward(&mut g, &self.d, real, windows)?;
            let fs = self.disc.ensemble_forward(&mut g, &self.d, fake, windows)?;
            let score = |g: &Graph<f32>, vs: &[Var]| -> Result<f64> {
                Ok(mean(&vs.iter().map(|&v| g.value(v).map(|t| t.mean() as f64)).collect::<Result<Vec<_>>>()?))
            };
            real_scores.push(score(&g, &rs)?);
            fake_scores.push(score(&g, &fs)?);
            let loss = hinge_d_graph(&mut g, &rs, &fs)?;
            d_losses.push(g.scalar(loss)? as f64);
            let grads = g.backward(loss)?;
            for (acc, store) in d_grads.iter_mut().zip(&self.d) {
                acc.add_assign(&grads.for_store(store));
            }
        }
        let d_loss = mean(&d_losses);
        let mut d_ok = d_loss.is_finite();
        for grads in &mut d_grads {
            grads.scale(1.0 / batch.len() as f32);
            d_ok &= grads.all_finite();
        }
        if !d_ok {
            return Err(Error::NonFinite { step: self.step, phase: ADVERSARIAL });
        }
        if self.cfg.train.lr_d > 0.0 {
            for ((adam, store), grads) in self.adam_d.iter_mut().zip(&mut self.d).zip(&d_grads) {
                adam.step(store, grads, self.cfg.train.lr_d)?;
            }
        }

        let mut grads = ParamGrads::zeros_like(&self.g);
        let (mut sc, mut mag, mut aux, mut adv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (seg, (mut g, y, windows)) in batch.iter().zip(recorded) {
            for store in &self.d {
                g.freeze(store);
            }
            let fs = self.disc.ensemble_forward(&mut g, &self.d, y, &windows)?;
            let (adv_total, terms) = generator_adv_graph(&mut g, &fs)?;
            let target = g.constant(Tensor::row(seg.reference.clone()));
            let l = self.losses.aux(&mut g, y, target)?;
            let total = g.add(adv_total, l.total)?;
            let values = |vs: &[Var]| vs.iter().map(|&v| g.scalar(v).map(|s| s as f64)).collect::<Result<Vec<_>>>();
            sc.push(values(&l.l_sc)?);
            mag.push(values(&l.l_mag)?);
            adv.push(values(&terms)?);
            aux.push(g.scalar(l.total)? as f64);
            grads.add_assign(&g.backward(total)?.for_store(&self.g));
        }
        let mut report = LossReport {
            step: self.step,
            phase: ADVERSARIAL.into(),
            l_sc: mean_of_columns(&sc),
            l_mag: mean_of_columns(&mag),
            l_aux: mean(&aux),
            adv: mean_of_columns(&adv),
            d_loss: Some(d_loss),
            real_score: Some(mean(&real_scores)),
            fake_score: Some(mean(&fake_scores)),
            ..LossReport::default()
        };
        report.total = report.adv_total() + report.l_aux;
        check_finite(&report, true)?;
        let ok = self.apply_generator(grads, batch.len())?;
        check_finite(&report, ok)?;
        self.step += 1;
        Ok(report)
    }

    /// Draw a batch and run the step the schedule calls for.
    pub fn train_step(&mut self, ds: &PairedDataset) -> Result<LossReport> {
        let batch = self.draw_batch(ds)?;
        if self.phase() == PRETRAIN {
            self.pretrain_step(&batch)
        } else {
            self.adversarial_step(&batch)
        }
    }

    /// Spectral loss of the current generator on fixed segments.
    pub fn evaluate(&self, segments: &[Segment], noise_seed: u64) -> Result<f64> {
        let model = self.inference_model()?;
        let res = &self.cfg.train.resolutions;
        let losses = segments
            .iter()
            .map(|s| {
                let y = model.enhance(&s.coded, NoiseSource::Seeded(noise_seed))?;
                Ok(multires_stft_loss(&y, &s.reference, res)?.total)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(mean(&losses))
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let state = TrainerState {
            step: self.step,
            steps_per_epoch: self.steps_per_epoch,
            rng_seed: hex(&self.rng.get_seed()),
            rng_stream: format!("{:016x}", self.rng.get_stream()),
            rng_word_pos: format!("{:032x}", self.rng.get_word_pos()),
            adam_g_step: self.adam_g.step,
            adam_d_steps: self.adam_d.iter().map(|a| a.step).collect(),
        };
        let meta = CheckpointMeta { config: self.cfg.clone(), state };
        let mut ckpt = Checkpoint::new(toml::to_string(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?);
        ckpt.push_store("g.", &self.g);
        for (k, s) in self.d.iter().enumerate() {
            ckpt.push_store(&format!("d{}.", k + 1), s);
        }
        push_moments(&mut ckpt, "adam.g", &self.g, &self.adam_g);
        for (k, (s, a)) in self.d.iter().zip(&self.adam_d).enumerate() {
            push_moments(&mut ckpt, &format!("adam.d{}", k + 1), s, a);
        }
        Ok(ckpt)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: CheckpointMeta = toml::from_str(&ckpt.metadata).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let st = meta.state;
        let mut t = Self::new(meta.config, 1)?;
        t.steps_per_epoch = st.steps_per_epoch;
        t.step = st.step;
        ckpt.load_store("g.", &mut t.g)?;
        for (k, s) in t.d.iter_mut().enumerate() {
            ckpt.load_store(&format!("d{}.", k + 1), s)?;
        }
        if st.adam_d_steps.len() != t.adam_d.len() {
            return Err(Error::Checkpoint("discriminator optimizer count does not match".into()));
        }
        load_moments(ckpt, "adam.g", &t.g, &mut t.adam_g, st.adam_g_step)?;
        for (k, ((s, a), &n)) in t.d.iter().zip(&mut t.adam_d).zip(&st.adam_d_steps).enumerate() {
            load_moments(ckpt, &format!("adam.d{}", k + 1), s, a, n)?;
        }
        let seed: [u8; 32] =
            unhex(&st.rng_seed)?.try_into().map_err(|_| Error::Checkpoint("rng seed must be 32 bytes".into()))?;
        let stream = u64::from_str_radix(&st.rng_stream, 16).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let pos = u128::from_str_radix(&st.rng_word_pos, 16).map_err(|e| Error::Checkpoint(e.to_string()))?;
        t.rng = ChaCha8Rng::from_seed(seed);
        t.rng.set_stream(stream);
        t.rng.set_word_pos(pos);
        Ok(t)
    }

    /// Write atomically: a temporary file is renamed over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        self.to_checkpoint()?.save(&tmp)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Train until the schedule ends, appending one log line per step to
    /// `outdir/train.log` and checkpointing to `outdir/checkpoint.pgan`.
    pub fn run(&mut self, ds: &PairedDataset, outdir: impl AsRef<Path>) -> Result<Vec<LossReport>> {
        let outdir = outdir.as_ref();
        std::fs::create_dir_all(outdir)?;
        let mut log = OpenOptions::new().create(true).append(true).open(outdir.join("train.log"))?;
        let ckpt = checkpoint_path(outdir);
        let mut reports = Vec::new();
        while self.step < self.cfg.train.total_steps() {
            let r = self.train_step(ds)?;
            writeln!(log, "{}", r.log_line())?;
            reports.push(r);
            if self.step.is_multiple_of(self.cfg.train.checkpoint_every) || self.step == self.cfg.train.total_steps() {
                log.flush()?;
                self.save(&ckpt)?;
            }
        }
        Ok(reports)
    }
}

pub fn checkpoint_path(outdir: impl AsRef<Path>) -> PathBuf {
    outdir.as_ref().join("checkpoint.pgan")
}

fn push_moments(ckpt: &mut Checkpoint, prefix: &str, store: &WeightStore<f32>, adam: &Adam<f32>) {
    for ((name, _), (m, v)) in store.iter().zip(adam.m.iter().zip(&adam.v)) {
        ckpt.push(format!("{prefix}.m.{name}"), m.clone());
        ckpt.push(format!("{prefix}.v.{name}"), v.clone());
    }
}

fn load_moments(ckpt: &Checkpoint, prefix: &str, store: &WeightStore<f32>, adam: &mut Adam<f32>, step: u64) -> Result<()> {
    for (i, (name, t)) in store.iter().enumerate() {
        for (kind, dst) in [("m", &mut adam.m[i]), ("v", &mut adam.v[i])] {
            let key = format!("{prefix}.{kind}.{name}");
            let src = ckpt.get(&key).ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
            if src.shape() != t.shape() {
                return Err(Error::Checkpoint(format!("tensor {key} has the wrong shape")));
            }
            *dst = src.clone();
        }
    }
    adam.step = step;
    Ok(())
}
