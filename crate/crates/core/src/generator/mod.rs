//! Subband U-Net generator with mel conditioning and TADE decoder blocks.

mod config;
mod cost;
mod net;
mod stream;

pub use config::GeneratorConfig;
pub use cost::{report_cost, CostReport, DelayBudget, LayerCost};
pub use net::{BlockLayers, Generator, ModulationParams, TadeLayers, INIT_STD};
pub use stream::{GeneratorState, InferenceModel};
