//! Frame-by-frame enhancement state, checked against the whole-signal output.

use std::sync::Arc;
use std::time::Instant;

use postgan::generator::{DelayBudget, Generator, GeneratorConfig, InferenceModel};
use postgan::nn::NoiseSource;
use postgan::runtime::measure_latency;
use postgan::training::synth_pair;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> postgan::Result<()> {
    let g = Arc::new(Generator::new(GeneratorConfig::desk())?);
    let store = g.init_weights::<f32>(&mut ChaCha8Rng::seed_from_u64(0))?;
    let model = InferenceModel::new(g, &store)?;
    let (x, _) = synth_pair(32_000, &mut ChaCha8Rng::seed_from_u64(2));

    let mut state = model.stream(NoiseSource::Seeded(5));
    let t0 = Instant::now();
    let mut y = Vec::with_capacity(x.len());
    for frame in x.chunks_exact(model.frame_size()) {
        y.extend(state.step(frame)?);
    }
    let elapsed = t0.elapsed().as_secs_f64();
    y.extend(state.flush()?);
    println!("{} frames in {elapsed:.3} s, real-time factor {:.3}, state {} values", x.len() / 160, elapsed / 2.0, state.state_len());

    let batch = model.enhance(&x, NoiseSource::Seeded(5))?;
    let lag = state.lag_frames() * model.frame_size();
    let dev = batch.iter().zip(&y[lag..]).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
    println!("stream lags by {lag} samples; max deviation from batch {dev:.2e}");

    let budget = DelayBudget::from_config(model.generator().config());
    for (name, ms) in budget.parts() {
        println!("  {name:<15}{ms:>8.4} ms");
    }
    let m = measure_latency(&model, &x[..8000], 1)?;
    println!("budget {:.4} ms, measured {:.4} ms ({} samples)", budget.total_ms, m.total_ms(), m.total_samples());
    Ok(())
}
