//! Central finite-difference checks of tape gradients.

use crate::error::Result;
use crate::nn::{Graph, ParamId, Tensor, Var, WeightStore};

/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter or input and element index of the worst entry.
    pub worst: String,
    pub checked: usize,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

impl GradCheck {
    fn new() -> Self {
        Self { max_rel_error: 0.0, worst: String::new(), checked: 0 }
    }

    fn record(&mut self, what: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let e = rel_error(analytic, numeric);
        self.checked += 1;
        if e > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = self.max_rel_error.max(e);
            self.worst = what();
        }
    }
}

/// Checks the gradient of `f` with respect to every element of `inputs`.
pub fn check_inputs<F>(inputs: &[Tensor<f64>], eps: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
        let y = f(&mut g, &vars)?;
        g.scalar(y)
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
    let y = f(&mut g, &vars)?;
    let grads = g.backward(y)?;
    let mut report = GradCheck::new();
    let mut xs = inputs.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var)?.cloned().unwrap_or_else(|| Tensor::zeros(inputs[k].shape()));
        for j in 0..inputs[k].len() {
            let orig = xs[k].data()[j];
            xs[k].data_mut()[j] = orig + eps;
            let plus = eval(&xs)?;
            xs[k].data_mut()[j] = orig - eps;
            let minus = eval(&xs)?;
            xs[k].data_mut()[j] = orig;
            report.record(|| format!("input {k}[{j}]"), analytic.data()[j], (plus - minus) / (2.0 * eps));
        }
    }
    Ok(report)
}

/// Checks the gradient of `f` with respect to the parameters of `store`.
/// At most `per_tensor` evenly spaced elements of each tensor are probed.
pub fn check_store<F>(store: &WeightStore<f64>, eps: f64, per_tensor: usize, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &WeightStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let y = f(&mut g, store)?;
    let grads = g.backward(y)?.for_store(store);
    let mut probe = store.clone();
    let mut report = GradCheck::new();
    for id in (0..store.len()).map(ParamId) {
        let n = store.tensor(id).len();
        let step = n.div_ceil(per_tensor.max(1)).max(1);
        for j in (0..n).step_by(step) {
            let orig = probe.tensor(id).data()[j];
            probe.tensor_mut(id).data_mut()[j] = orig + eps;
            let mut gp = Graph::new();
            let yp = f(&mut gp, &probe)?;
            let plus = gp.scalar(yp)?;
            probe.tensor_mut(id).data_mut()[j] = orig - eps;
            let mut gm = Graph::new();
            let ym = f(&mut gm, &probe)?;
            let minus = gm.scalar(ym)?;
            probe.tensor_mut(id).data_mut()[j] = orig;
            report.record(|| format!("{}[{j}]", store.name(id)), grads.grads[id.0].data()[j], (plus - minus) / (2.0 * eps));
        }
    }
    Ok(report)
}
