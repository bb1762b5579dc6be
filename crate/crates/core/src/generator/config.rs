use serde::{Deserialize, Serialize};

use crate::dsp::{MelConfig, Ratio};
use crate::error::{Error, Result};

/// Generator hyperparameters. Block `i` runs at the rate reached after
/// the scaling factors of the blocks before it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub pqmf_bands: usize,
    pub pqmf_taps: usize,
    /// Encoder downsampling factor per block; the decoder mirrors them.
    pub scaling_factors: Vec<f64>,
    /// Mel frame rate to block rate, per block.
    pub condnet_factors: Vec<f64>,
    /// Width of each encoder block and of its paired decoder block.
    pub channels: Vec<usize>,
    /// Output width of the pre-conv.
    pub stem_channels: usize,
    pub pre_kernel: usize,
    pub post_kernel: usize,
    pub block_kernel: usize,
    pub condnet_kernel: usize,
    /// TADE residual units per decoder block (1 or 2).
    pub tade_units: usize,
    /// Standard deviation of the bottleneck noise.
    pub noise_std: f64,
    pub leaky_slope: f64,
    pub mel: MelConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl GeneratorConfig {
    /// Reduced widths for CPU training and real-time streaming.
    pub fn desk() -> Self {
        Self {
            pqmf_bands: 4,
            pqmf_taps: crate::dsp::pqmf::DEFAULT_TAPS,
            scaling_factors: vec![1.0, 2.0, 2.0, 2.0, 2.5, 2.0],
            condnet_factors: vec![40.0, 40.0, 20.0, 10.0, 5.0, 2.0],
            channels: vec![16, 32, 48, 64, 64, 96],
            stem_channels: 16,
            pre_kernel: 7,
            post_kernel: 7,
            block_kernel: 3,
            condnet_kernel: 3,
            tade_units: 1,
            noise_std: 1.0,
            leaky_slope: 0.2,
            mel: MelConfig::default(),
        }
    }

    /// Widths sized to the published parameter and complexity budget.
    pub fn full() -> Self {
        Self { channels: vec![112, 96, 96, 96, 96, 96], stem_channels: 48, ..Self::desk() }
    }

    /// At most eight channels everywhere; for gradient checks.
    pub fn tiny() -> Self {
        Self {
            channels: vec![4, 6, 8, 8, 8, 8],
            stem_channels: 4,
            mel: MelConfig { n_mels: 8, ..MelConfig::default() },
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            "tiny" => Ok(Self::tiny()),
            _ => Err(Error::Config(format!("unknown preset {name} (expected desk, full or tiny)"))),
        }
    }

    pub fn num_blocks(&self) -> usize {
        self.channels.len()
    }

    /// Subband samples per mel frame.
    pub fn subband_per_frame(&self) -> f64 {
        self.mel.hop as f64 / self.pqmf_bands as f64
    }

    pub fn scaling_ratios(&self) -> Result<Vec<Ratio>> {
        self.scaling_factors.iter().map(|&s| Ratio::from_f64(s)).collect()
    }

    pub fn condnet_ratios(&self) -> Result<Vec<Ratio>> {
        self.condnet_factors.iter().map(|&s| Ratio::from_f64(s)).collect()
    }

    /// Product of the scaling factors before each block.
    pub fn cumulative_downsampling(&self) -> Vec<f64> {
        let mut acc = 1.0;
        self.scaling_factors
            .iter()
            .map(|&s| {
                let before = acc;
                acc *= s;
                before
            })
            .collect()
    }

    /// Input length of every encoder block for a subband length.
    pub fn block_lengths(&self, subband_len: usize) -> Result<Vec<usize>> {
        let mut len = subband_len;
        let mut out = Vec::with_capacity(self.num_blocks());
        for r in self.scaling_ratios()? {
            out.push(len);
            len = r.inverse().output_len(len);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.mel.validate()?;
        let n = self.num_blocks();
        if self.scaling_factors.len() != n || self.condnet_factors.len() != n {
            return bad(format!(
                "{} widths, {} scaling factors and {} condnet factors must agree",
                n,
                self.scaling_factors.len(),
                self.condnet_factors.len()
            ));
        }
        if self.pqmf_bands == 0 || !self.mel.hop.is_multiple_of(self.pqmf_bands) {
            return bad(format!("{} bands do not divide the {}-sample frame", self.pqmf_bands, self.mel.hop));
        }
        if self.stem_channels == 0 || self.channels.contains(&0) {
            return bad("channel widths must be positive".into());
        }
        if [self.pre_kernel, self.post_kernel, self.block_kernel, self.condnet_kernel].contains(&0) {
            return bad("kernel sizes must be positive".into());
        }
        if !(1..=2).contains(&self.tade_units) {
            return bad(format!("tade_units must be 1 or 2, got {}", self.tade_units));
        }
        if !(self.noise_std >= 0.0) || !(0.0..1.0).contains(&self.leaky_slope) {
            return bad("noise_std must be non-negative and leaky_slope in [0, 1)".into());
        }
        if self.scaling_factors.iter().chain(&self.condnet_factors).any(|&f| !(f >= 1.0)) {
            return bad("scaling and condnet factors must be at least 1".into());
        }
        self.scaling_ratios()?;
        self.condnet_ratios()?;
        if n == 0 {
            return Ok(());
        }
        let per_frame = self.subband_per_frame();
        let total: f64 = self.scaling_factors.iter().product();
        let rate = total * self.pqmf_bands as f64 * self.mel.frame_rate();
        if (rate - self.mel.sample_rate as f64).abs() > 1e-6 {
            return bad(format!(
                "scaling product {total} × {} bands × {} frames/s = {rate}, expected {}",
                self.pqmf_bands,
                self.mel.frame_rate(),
                self.mel.sample_rate
            ));
        }
        for (i, (&c, before)) in self.condnet_factors.iter().zip(self.cumulative_downsampling()).enumerate() {
            if (c * before - per_frame).abs() > 1e-9 {
                return bad(format!("block {}: condnet factor {c} × prior downsampling {before} ≠ {per_frame}", i + 1));
            }
        }
        // Every block must see a whole number of samples per frame.
        let mut len = per_frame;
        for (i, &s) in self.scaling_factors.iter().enumerate() {
            if (len - len.round()).abs() > 1e-9 {
                return bad(format!("block {} runs at a fractional {len} samples per frame", i + 1));
            }
            len /= s;
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
