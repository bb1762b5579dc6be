use std::sync::Arc;

use postgan::dsp::{PqmfBank, Ratio, StftPlan, StftResolution};
use postgan::nn::gradcheck::{check_inputs, check_store};
use postgan::nn::{ConvSpec, Graph, Tensor, Var, WeightStore};
use postgan::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-5;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Contract against a fixed random tensor so that every output element matters.
fn project(g: &mut Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = g.value(y)?.shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = g.constant(rand_tensor(&mut rng, &shape, 1.0));
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn assert_ok(name: &str, r: postgan::nn::gradcheck::GradCheck) {
    assert!(r.checked > 0, "{name}: nothing checked");
    assert!(r.max_rel_error <= TOL, "{name}: worst {} at {}", r.max_rel_error, r.worst);
}

fn unary_case(name: &str, shape: &[usize], scale: f64, f: impl Fn(&mut Graph<f64>, Var) -> Result<Var>) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    let x = rand_tensor(&mut rng, shape, scale);
    let r = check_inputs(&[x], EPS, |g, v| {
        let y = f(g, v[0])?;
        project(g, y, 9)
    })
    .unwrap();
    assert_ok(name, r);
}

#[test]
fn elementwise_ops() {
    unary_case("tanh", &[2, 5], 2.0, |g, x| g.tanh(x));
    unary_case("leaky", &[2, 5], 1.0, |g, x| g.leaky_relu(x, 0.2));
    unary_case("square", &[3, 4], 1.0, |g, x| g.square(x));
    unary_case("scale", &[3, 4], 1.0, |g, x| g.scale(x, -1.7));
    unary_case("offset", &[3, 4], 1.0, |g, x| g.offset(x, 0.3));
    unary_case("sqrt", &[2, 4], 1.0, |g, x| {
        let s = g.square(x)?;
        let s = g.offset(s, 0.5)?;
        g.sqrt(s)
    });
    unary_case("ln", &[2, 4], 1.0, |g, x| {
        let s = g.square(x)?;
        let s = g.offset(s, 0.2)?;
        g.ln(s)
    });
    unary_case("abs", &[2, 6], 1.0, |g, x| g.abs(x));
    unary_case("mean", &[2, 6], 1.0, |g, x| {
        let s = g.square(x)?;
        g.mean(s)
    });
}

#[test]
fn binary_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_tensor(&mut rng, &[3, 4], 1.0);
    let b = rand_tensor(&mut rng, &[3, 4], 1.0).map(|v| v + 2.0);
    for (name, op) in [("add", 0), ("sub", 1), ("mul", 2), ("div", 3)] {
        let r = check_inputs(&[a.clone(), b.clone()], EPS, |g, v| {
            let y = match op {
                0 => g.add(v[0], v[1])?,
                1 => g.sub(v[0], v[1])?,
                2 => g.mul(v[0], v[1])?,
                _ => g.div(v[0], v[1])?,
            };
            project(g, y, 4)
        })
        .unwrap();
        assert_ok(name, r);
    }
}

#[test]
fn structural_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = rand_tensor(&mut rng, &[2, 9], 1.0);
    let b = rand_tensor(&mut rng, &[3, 9], 1.0);
    let r = check_inputs(&[a.clone(), b.clone()], EPS, |g, v| {
        let y = g.concat(&[v[0], v[1]])?;
        project(g, y, 5)
    })
    .unwrap();
    assert_ok("concat", r);
    unary_case("slice", &[2, 10], 1.0, |g, x| g.slice_time(x, 3, 5));
    unary_case("avg_pool", &[2, 11], 1.0, |g, x| g.avg_pool(x, 3));
    unary_case("channel_norm", &[5, 6], 1.0, |g, x| g.channel_norm(x));
    let r = check_inputs(&[b.clone(), b.map(|v| v * 2.0 - 0.3)], EPS, |g, v| {
        let y = g.gated_tanh(v[0], v[1])?;
        project(g, y, 6)
    })
    .unwrap();
    assert_ok("gated_tanh", r);
}

#[test]
fn resampling_ops() {
    for (num, den) in [(5, 2), (2, 5), (3, 1), (1, 4), (7, 3)] {
        let ratio = Ratio::new(num, den).unwrap();
        unary_case(&format!("resample {num}/{den}"), &[2, 13], 1.0, |g, x| g.resample(x, ratio));
    }
}

#[test]
fn convolution_and_weight_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let specs = [
        ConvSpec::new(2, 3, 3),
        ConvSpec::new(2, 3, 3).dilation(2),
        ConvSpec::new(4, 4, 5).stride(2).groups(2),
        ConvSpec::new(3, 2, 1),
    ];
    for spec in specs {
        let x = rand_tensor(&mut rng, &[spec.in_ch, 11], 1.0);
        let w = rand_tensor(&mut rng, &[spec.out_ch, spec.in_per_group(), spec.kernel], 0.5);
        let b = rand_tensor(&mut rng, &[spec.out_ch], 0.5);
        let r = check_inputs(&[x, w, b], EPS, |g, v| {
            let y = g.conv1d(v[0], v[1], Some(v[2]), spec)?;
            project(g, y, 7)
        })
        .unwrap();
        assert_ok(&format!("conv {spec:?}"), r);
    }
    let mut store = WeightStore::<f64>::new();
    let spec = ConvSpec::new(3, 4, 3).dilation(2);
    store.add_conv("c", &spec, &mut rng, 0.5).unwrap();
    store.get_mut("c.g").unwrap().data_mut().copy_from_slice(&[0.3, 1.2, -0.7, 2.0]);
    store.get_mut("c.b").unwrap().data_mut().copy_from_slice(&[0.1, -0.2, 0.3, 0.0]);
    let x = rand_tensor(&mut rng, &[3, 10], 1.0);
    let r = check_store(&store, EPS, 100, |g, s| {
        let xv = g.constant(x.clone());
        let y = g.conv_layer(s, "c", spec, xv)?;
        project(g, y, 8)
    })
    .unwrap();
    assert_ok("weight-normalised conv", r);
}

#[test]
fn pqmf_ops() {
    for bands in [2, 4] {
        let bank = Arc::new(PqmfBank::tuned(bands).unwrap());
        unary_case("analysis", &[1, 24 * bands], 1.0, |g, x| g.pqmf_analysis(x, &bank));
        unary_case("synthesis", &[bands, 20], 1.0, |g, x| g.pqmf_synthesis(x, &bank));
    }
}

#[test]
fn stft_magnitude() {
    let plan = Arc::new(StftPlan::new(StftResolution::new(32, 8, 24)).unwrap());
    unary_case("stft_mag", &[1, 64], 1.0, |g, x| g.stft_mag(x, &plan));
    unary_case("log stft_mag", &[1, 64], 1.0, |g, x| {
        let m = g.stft_mag(x, &plan)?;
        g.ln(m)
    });
}

#[test]
fn foreign_variables_are_rejected() {
    let mut a = Graph::<f64>::new();
    let mut b = Graph::<f64>::new();
    let x = a.input(Tensor::scalar(1.0));
    let _ = b.input(Tensor::scalar(2.0));
    assert!(matches!(b.tanh(x), Err(postgan::Error::ForeignVar)));
    assert!(b.backward(x).is_err());
}

#[test]
fn non_scalar_backward_is_rejected() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros(&[2, 2]));
    assert!(g.backward(x).is_err());
}

#[test]
fn shared_parameter_accumulates() {
    let mut store = WeightStore::<f64>::new();
    store.insert("p", Tensor::from_vec(&[1, 3], vec![0.5, -1.0, 2.0]).unwrap()).unwrap();
    let mut g = Graph::new();
    let p1 = g.param(&store, "p").unwrap();
    let p2 = g.param(&store, "p").unwrap();
    assert_eq!(p1, p2);
    let y = g.mul(p1, p2).unwrap();
    let s = g.sum(y).unwrap();
    let grads = g.backward(s).unwrap().for_store(&store);
    assert_eq!(grads.grads[0].data(), &[1.0, -2.0, 4.0]);
}
