//! Four-band PQMF analysis and synthesis of white noise.

use postgan::dsp::pqmf::reconstruction_snr;
use postgan::dsp::PqmfBank;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> postgan::Result<()> {
    let bank = PqmfBank::tuned(4)?;
    println!("{} bands, {} taps, cutoff ratio {:.6}, delay {} samples", bank.num_bands(), bank.taps(), bank.cutoff_ratio(), bank.delay());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x: Vec<f64> = (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sub = bank.analysis(&x);
    println!("subbands {} x {}", sub.num_bands(), sub.len());

    let y = bank.synthesis(&sub)?;
    let d = bank.delay();
    let err = x[..x.len() - d].iter().zip(&y[d..]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max error after {d}-sample alignment {err:.3e}, SNR {:.2} dB", reconstruction_snr(&bank, &x));
    Ok(())
}
