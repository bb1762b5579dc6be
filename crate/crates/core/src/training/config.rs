use serde::{Deserialize, Serialize};

use crate::discriminator::DiscriminatorConfig;
use crate::dsp::StftResolution;
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::losses::DEFAULT_RESOLUTIONS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub segment_length: usize,
    pub pretrain_steps: u64,
    pub adversarial_steps: u64,
    pub lr_g: f64,
    /// Generator learning rate from `lr_switch_epoch` on.
    pub lr_g_late: f64,
    pub lr_switch_epoch: u64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub resolutions: Vec<StftResolution>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl TrainConfig {
    /// Published schedule.
    pub fn full() -> Self {
        Self {
            batch_size: 32,
            segment_length: 16_000,
            pretrain_steps: 105_000,
            adversarial_steps: 645_000,
            lr_g: 1e-4,
            lr_g_late: 5e-5,
            lr_switch_epoch: 150,
            lr_d: 5e-5,
            beta1: 0.5,
            beta2: 0.9,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_every: 5_000,
            resolutions: DEFAULT_RESOLUTIONS.to_vec(),
        }
    }

    /// Short CPU run on the synthetic corpus.
    pub fn desk() -> Self {
        Self {
            batch_size: 1,
            segment_length: 3_200,
            pretrain_steps: 300,
            adversarial_steps: 200,
            lr_g: 1e-3,
            lr_g_late: 5e-4,
            lr_switch_epoch: 20,
            lr_d: 5e-4,
            checkpoint_every: 100,
            ..Self::full()
        }
    }

    pub fn total_steps(&self) -> u64 {
        self.pretrain_steps + self.adversarial_steps
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.segment_length == 0 || self.checkpoint_every == 0 {
            return bad("batch_size, segment_length and checkpoint_every must be positive");
        }
        if self.total_steps() == 0 {
            return bad("at least one training step is required");
        }
        if ![self.lr_g, self.lr_g_late, self.lr_d, self.adam_eps].iter().all(|&v| v >= 0.0 && v.is_finite()) {
            return bad("learning rates and eps must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.resolutions.is_empty() {
            return bad("at least one STFT resolution is required");
        }
        for r in &self.resolutions {
            r.validate()?;
            if r.window_length > self.segment_length {
                return bad("every STFT window must fit in a segment");
            }
        }
        Ok(())
    }

    /// Batches per pass over `items` training items.
    pub fn steps_per_epoch(&self, items: usize) -> u64 {
        items.div_ceil(self.batch_size).max(1) as u64
    }

    /// Generator learning rate at a global step.
    pub fn lr_g_at(&self, step: u64, steps_per_epoch: u64) -> f64 {
        if step / steps_per_epoch.max(1) < self.lr_switch_epoch {
            self.lr_g
        } else {
            self.lr_g_late
        }
    }
}

/// Everything a training run depends on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Named combination of generator and schedule presets.
    pub fn preset(name: &str) -> Result<Self> {
        let (generator, train) = match name {
            "desk" => (GeneratorConfig::desk(), TrainConfig::desk()),
            "full" => (GeneratorConfig::full(), TrainConfig::full()),
            "tiny" => (GeneratorConfig::tiny(), TrainConfig::desk()),
            _ => return Err(Error::Config(format!("unknown preset {name} (expected desk, full or tiny)"))),
        };
        let discriminator = if name == "tiny" { DiscriminatorConfig::tiny() } else { DiscriminatorConfig::default() };
        Ok(Self { generator, discriminator, train })
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.discriminator.validate()?;
        self.train.validate()?;
        let hop = self.generator.mel.hop;
        if !self.train.segment_length.is_multiple_of(hop) {
            return Err(Error::Config(format!("segment length must be a multiple of {hop}")));
        }
        if self.train.segment_length < 4 * self.discriminator.window {
            return Err(Error::Config(format!(
                "segments need at least {} samples for the coarsest multi-scale discriminator",
                4 * self.discriminator.window
            )));
        }
        Ok(())
    }

    /// The learning-rate switch must happen within the run.
    pub fn validate_schedule(&self, items: usize) -> Result<()> {
        let epochs = self.train.total_steps().div_ceil(self.train.steps_per_epoch(items));
        if self.train.lr_switch_epoch > epochs {
            return Err(Error::Config(format!(
                "learning-rate switch at epoch {} but the run lasts {epochs} epochs",
                self.train.lr_switch_epoch
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_switches_at_epoch() {
        let cfg = TrainConfig::full();
        assert_eq!(cfg.lr_g_at(149 * 10 + 9, 10), 1e-4);
        assert_eq!(cfg.lr_g_at(150 * 10, 10), 5e-5);
        assert_eq!(cfg.steps_per_epoch(33), 2);
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for p in ["desk", "full", "tiny"] {
            let cfg = ExperimentConfig::preset(p).unwrap();
            cfg.validate().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
        }
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml("[train]\nbatch_size = 4\nsegment_length = 3200\n").unwrap();
        assert_eq!(cfg.train.batch_size, 4);
        assert_eq!(cfg.generator, GeneratorConfig::desk());
        assert!(ExperimentConfig::from_toml("[train]\nbogus = 1\n").is_err());
    }

    #[test]
    fn short_segments_rejected() {
        let mut cfg = ExperimentConfig::preset("desk").unwrap();
        cfg.train.segment_length = 1600;
        assert!(cfg.validate().is_err());
    }
}
