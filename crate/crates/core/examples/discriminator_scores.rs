//! Score maps of the six discriminator members for one second of audio.

use postgan::discriminator::{Discriminator, DiscriminatorConfig};
use postgan::nn::{Graph, Tensor};
use postgan::training::synth_reference;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> postgan::Result<()> {
    let disc = Discriminator::new(DiscriminatorConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stores = disc.init_weights::<f32>(&mut rng, 0.02)?;
    let audio: Vec<f32> = synth_reference(16_000, &mut rng).into_iter().map(|v| v as f32).collect();
    let windows = disc.sample_windows(audio.len(), &mut rng)?;

    let mut g = Graph::new();
    let x = g.constant(Tensor::row(audio));
    let scores = disc.ensemble_forward(&mut g, &stores, x, &windows)?;
    for (k, s) in scores.iter().enumerate() {
        let t = g.value(*s)?;
        println!("member {}: {} scores, mean {:+.5}", k + 1, t.time(), t.mean());
    }
    Ok(())
}
