//! Fit a weight-normalised dilated convolution to a fixed target filter with
//! the reverse-mode tape and Adam.

use postgan::nn::{causal_conv1d, Adam, ConvSpec, Graph, Tensor, WeightStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> postgan::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = ConvSpec::new(2, 3, 3).dilation(2);
    let x: Vec<f64> = (0..2 * 200).map(|_| rng.random_range(-1.0..1.0)).collect();
    let input = Tensor::from_vec(&[2, 200], x)?;
    let true_w = Tensor::from_vec(&[3, 2, 3], (0..spec.weight_len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let target = causal_conv1d(&input, &true_w, None, 2, None)?;

    let mut store = WeightStore::<f64>::new();
    store.add_conv("conv", &spec, &mut rng, 0.1)?;
    let mut adam = Adam::new(&store, 0.9, 0.999, 1e-8);
    for step in 0..=400 {
        let mut g = Graph::new();
        let xi = g.constant(input.clone());
        let y = g.conv_layer(&store, "conv", spec, xi)?;
        let t = g.constant(target.clone());
        let d = g.sub(y, t)?;
        let sq = g.square(d)?;
        let loss = g.mean(sq)?;
        if step % 100 == 0 {
            println!("step {step:>3} mse {:.3e}", g.scalar(loss)?);
        }
        let grads = g.backward(loss)?.for_store(&store);
        adam.step(&mut store, &grads, 0.02)?;
    }
    Ok(())
}
