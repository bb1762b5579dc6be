//! Multi-resolution STFT loss and the GAN objectives on hand-made scores.

use postgan::losses::{generator_objective, hinge_d_loss, multires_stft_loss, DEFAULT_RESOLUTIONS};
use postgan::nn::Tensor;
use postgan::training::synth_reference;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> postgan::Result<()> {
    let x = synth_reference(16_000, &mut ChaCha8Rng::seed_from_u64(0));
    for gain in [1.0, 0.9, 0.5] {
        let y: Vec<f64> = x.iter().map(|v| v * gain).collect();
        let l = multires_stft_loss(&y, &x, &DEFAULT_RESOLUTIONS)?;
        let sc: Vec<String> = l.terms.iter().map(|t| format!("{:.4}", t.l_sc)).collect();
        println!("gain {gain}: L_sc [{}] total {:.4}", sc.join(", "), l.total);
    }

    let real: Vec<Tensor<f64>> = (0..6).map(|_| Tensor::full(&[1, 10], 0.8)).collect();
    let fake: Vec<Tensor<f64>> = (0..6).map(|_| Tensor::full(&[1, 10], -0.3)).collect();
    println!("hinge D loss {:.3}", hinge_d_loss(&real, &fake)?);
    let g = generator_objective(&x, &x, &fake, &DEFAULT_RESOLUTIONS)?;
    println!("generator: aux {:.3} adv {:.3} total {:.3}", g.l_aux, g.adv_total(), g.total);
    Ok(())
}
