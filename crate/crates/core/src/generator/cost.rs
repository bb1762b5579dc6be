use serde::Serialize;

use crate::error::Result;
use crate::generator::{Generator, GeneratorConfig};
use crate::nn::ConvLayer;

/// Algorithmic delay of the streaming generator, in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DelayBudget {
    /// Waiting for a whole input frame.
    pub frame_buffer_ms: f64,
    /// Whole frames of mel window past the current frame.
    pub mel_lookahead_ms: f64,
    pub pqmf_analysis_ms: f64,
    pub pqmf_synthesis_ms: f64,
    pub total_ms: f64,
}

impl DelayBudget {
    pub fn from_config(cfg: &GeneratorConfig) -> Self {
        let sr = cfg.mel.sample_rate as f64;
        let hop = cfg.mel.hop;
        let ms = |samples: f64| samples * 1000.0 / sr;
        let lookahead_frames = cfg.mel.lookahead().div_ceil(hop);
        let filter = if cfg.pqmf_bands == 1 { 0.0 } else { (cfg.pqmf_taps - 1) as f64 / 2.0 };
        let frame_buffer_ms = ms(hop as f64);
        let mel_lookahead_ms = ms((lookahead_frames * hop) as f64);
        let pqmf_analysis_ms = ms(filter);
        let pqmf_synthesis_ms = ms(filter);
        let total_ms = frame_buffer_ms + mel_lookahead_ms + pqmf_analysis_ms + pqmf_synthesis_ms;
        Self { frame_buffer_ms, mel_lookahead_ms, pqmf_analysis_ms, pqmf_synthesis_ms, total_ms }
    }

    pub fn parts(&self) -> [(&'static str, f64); 4] {
        [
            ("frame buffer", self.frame_buffer_ms),
            ("mel lookahead", self.mel_lookahead_ms),
            ("pqmf analysis", self.pqmf_analysis_ms),
            ("pqmf synthesis", self.pqmf_synthesis_ms),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    /// Output samples per second.
    pub rate: f64,
    pub macs_per_second: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub params: u64,
    pub macs_per_second: f64,
    pub layers: Vec<LayerCost>,
    pub pqmf_macs_per_second: f64,
    pub delay: DelayBudget,
}

impl CostReport {
    pub fn gmacs(&self) -> f64 {
        self.macs_per_second / 1e9
    }
}

fn layer_cost(l: &ConvLayer, rate: f64) -> LayerCost {
    let s = &l.spec;
    let params = (s.weight_len() + 2 * s.out_ch) as u64;
    let macs = (s.out_ch * s.in_per_group() * s.kernel) as f64 * rate;
    LayerCost { name: l.name.clone(), params, rate, macs_per_second: macs }
}

/// Stored parameter count (gain, direction and bias of every convolution)
/// and multiply-accumulates per second of audio.
pub fn report_cost(cfg: &GeneratorConfig) -> Result<CostReport> {
    let g = Generator::new(cfg.clone())?;
    let sr = cfg.mel.sample_rate as f64;
    let sub = sr / cfg.pqmf_bands as f64;
    let mut layers = vec![layer_cost(&g.pre, sub)];
    let rates: Vec<f64> = cfg.cumulative_downsampling().iter().map(|c| sub / c).collect();
    for (b, &r) in g.blocks.iter().zip(&rates) {
        layers.extend(b.encoder_convs().into_iter().map(|l| layer_cost(l, r)));
        layers.push(layer_cost(&b.down2, r / b.scale.as_f64()));
    }
    for (b, &r) in g.blocks.iter().zip(&rates).rev() {
        layers.push(layer_cost(&b.up1, r / b.scale.as_f64()));
        layers.push(layer_cost(&b.up2, r));
        for t in &b.tade {
            layers.extend([&t.a, &t.b, &t.out].map(|l| layer_cost(l, r)));
        }
    }
    layers.push(layer_cost(&g.post, sub));
    let pqmf = if cfg.pqmf_bands == 1 { 0.0 } else { 2.0 * sr * cfg.pqmf_taps as f64 };
    Ok(CostReport {
        params: layers.iter().map(|l| l.params).sum(),
        macs_per_second: layers.iter().map(|l| l.macs_per_second).sum::<f64>() + pqmf,
        layers,
        pqmf_macs_per_second: pqmf,
        delay: DelayBudget::from_config(cfg),
    })
}
