//! Enhance a WAV file with a checkpoint, or with fresh weights when none is given.
//!
//! cargo run --release --example enhance_file -- in.wav out.wav [model.pgan]

use std::sync::Arc;

use anyhow::Context;
use postgan::generator::{Generator, GeneratorConfig, InferenceModel};
use postgan::nn::NoiseSource;
use postgan::runtime::{enhance_file, SampleKind, WavFile};
use postgan::training::{load_inference, synth_pair};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = std::env::temp_dir();
    let input = match args.first() {
        Some(p) => p.into(),
        None => {
            let (coded, _) = synth_pair(32_000, &mut ChaCha8Rng::seed_from_u64(1));
            let p = dir.join("postgan_coded.wav");
            WavFile::mono(16_000, SampleKind::Int16, coded).write(&p)?;
            p
        }
    };
    let output = args.get(1).map_or_else(|| dir.join("postgan_enhanced.wav"), Into::into);
    let model = match args.get(2) {
        Some(ckpt) => load_inference(ckpt).with_context(|| format!("loading {ckpt}"))?,
        None => {
            let g = Arc::new(Generator::new(GeneratorConfig::desk())?);
            let store = g.init_weights(&mut ChaCha8Rng::seed_from_u64(0))?;
            InferenceModel::new(g, &store)?
        }
    };
    enhance_file(&model, &input, &output, NoiseSource::Seeded(0))?;
    let out = WavFile::read(&output)?;
    println!("{} -> {} ({} samples)", input.display(), output.display(), out.samples.len());
    Ok(())
}
