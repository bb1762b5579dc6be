//! Multi-resolution STFT loss, hinge adversarial losses and the generator objective.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::discriminator::NUM_MEMBERS;
use crate::dsp::{StftPlan, StftResolution};
use crate::error::{shape_err, Error, Result};
use crate::nn::{Graph, Real, Tensor, Var};

/// Magnitudes are clamped to this before the logarithm.
pub const MAG_FLOOR: f64 = 1e-7;

pub const DEFAULT_RESOLUTIONS: [StftResolution; 3] =
    [StftResolution::new(512, 50, 240), StftResolution::new(1024, 120, 600), StftResolution::new(2048, 240, 1200)];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StftTerms {
    pub l_sc: f64,
    pub l_mag: f64,
}

fn magnitudes<T: Real>(plan: &StftPlan<T>, x: &[T]) -> Vec<f64> {
    plan.compute(x).data.iter().map(|c| c.norm().f64().max(MAG_FLOOR)).collect()
}

/// Spectral convergence and mean absolute log-magnitude difference.
pub fn stft_loss<T: Real>(x_hat: &[T], x: &[T], res: StftResolution) -> Result<StftTerms> {
    let plan = StftPlan::new(res)?;
    stft_loss_with(&plan, x_hat, x)
}

fn stft_loss_with<T: Real>(plan: &StftPlan<T>, x_hat: &[T], x: &[T]) -> Result<StftTerms> {
    if x_hat.len() != x.len() {
        return Err(shape_err!("loss operands have {} and {} samples", x_hat.len(), x.len()));
    }
    if x.len() < plan.resolution.window_length {
        return Err(shape_err!("{} samples is shorter than the {}-sample window", x.len(), plan.resolution.window_length));
    }
    let (mh, m) = (magnitudes(plan, x_hat), magnitudes(plan, x));
    let num: f64 = m.iter().zip(&mh).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = m.iter().map(|a| a * a).sum();
    let l_mag = m.iter().zip(&mh).map(|(a, b)| (a.ln() - b.ln()).abs()).sum::<f64>() / m.len() as f64;
    Ok(StftTerms { l_sc: (num / den).sqrt(), l_mag })
}

/// Per-resolution terms and their mean of `l_sc + l_mag`.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxLoss {
    pub terms: Vec<StftTerms>,
    pub total: f64,
}

pub fn multires_stft_loss<T: Real>(x_hat: &[T], x: &[T], resolutions: &[StftResolution]) -> Result<AuxLoss> {
    if resolutions.is_empty() {
        return Err(Error::InvalidArgument("no STFT resolutions configured".into()));
    }
    let terms = resolutions.iter().map(|&r| stft_loss(x_hat, x, r)).collect::<Result<Vec<_>>>()?;
    let total = terms.iter().map(|t| t.l_sc + t.l_mag).sum::<f64>() / terms.len() as f64;
    Ok(AuxLoss { terms, total })
}

fn check_members<T>(maps: &[T]) -> Result<()> {
    if maps.len() != NUM_MEMBERS {
        return Err(Error::InvalidArgument(format!("expected {NUM_MEMBERS} score maps, got {}", maps.len())));
    }
    Ok(())
}

/// Mean over members of `mean(relu(1 − real)) + mean(relu(1 + fake))`.
pub fn hinge_d_loss<T: Real>(real: &[Tensor<T>], fake: &[Tensor<T>]) -> Result<f64> {
    check_members(real)?;
    check_members(fake)?;
    let hinge = |t: &Tensor<T>, sign: f64| t.data().iter().map(|v| (1.0 + sign * v.f64()).max(0.0)).sum::<f64>() / t.len() as f64;
    let total: f64 = real.iter().zip(fake).map(|(r, f)| hinge(r, -1.0) + hinge(f, 1.0)).sum();
    Ok(total / NUM_MEMBERS as f64)
}

/// Itemised generator objective of one step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub step: u64,
    pub phase: String,
    pub l_sc: Vec<f64>,
    pub l_mag: Vec<f64>,
    pub l_aux: f64,
    /// `mean(−D_k(x̂))` per member; empty during pretraining.
    pub adv: Vec<f64>,
    pub total: f64,
    pub d_loss: Option<f64>,
    pub real_score: Option<f64>,
    pub fake_score: Option<f64>,
}

impl LossReport {
    /// `(1/6) Σ_k mean(−D_k)`.
    pub fn adv_total(&self) -> f64 {
        if self.adv.is_empty() {
            0.0
        } else {
            self.adv.iter().sum::<f64>() / self.adv.len() as f64
        }
    }

    /// One log line; numbers print with full round-trip precision.
    pub fn log_line(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(",");
        let mut s = format!(
            "step={} phase={} l_sc=[{}] l_mag=[{}] aux={:e} adv={:e} total={:e}",
            self.step,
            self.phase,
            list(&self.l_sc),
            list(&self.l_mag),
            self.l_aux,
            self.adv_total(),
            self.total
        );
        if let Some(d) = self.d_loss {
            let _ = write!(s, " d_loss={d:e}");
        }
        if let (Some(r), Some(f)) = (self.real_score, self.fake_score) {
            let _ = write!(s, " real={r:e} fake={f:e}");
        }
        s
    }
}

/// `(1/6) Σ_k mean(−D_k(x̂)) + L_aux(x̂, x)`.
pub fn generator_objective<T: Real>(
    x_hat: &[T],
    x: &[T],
    fake: &[Tensor<T>],
    resolutions: &[StftResolution],
) -> Result<LossReport> {
    check_members(fake)?;
    let aux = multires_stft_loss(x_hat, x, resolutions)?;
    let adv: Vec<f64> = fake.iter().map(|t| -t.mean().f64()).collect();
    let mut r = LossReport {
        l_sc: aux.terms.iter().map(|t| t.l_sc).collect(),
        l_mag: aux.terms.iter().map(|t| t.l_mag).collect(),
        l_aux: aux.total,
        adv,
        ..LossReport::default()
    };
    r.total = r.adv_total() + r.l_aux;
    Ok(r)
}

/// Differentiable counterparts recorded on a tape.
pub struct GraphLosses<T: Real> {
    plans: Vec<Arc<StftPlan<T>>>,
}

/// Tape variables of the auxiliary loss.
pub struct AuxVars {
    pub l_sc: Vec<Var>,
    pub l_mag: Vec<Var>,
    pub total: Var,
}

impl<T: Real> GraphLosses<T> {
    pub fn new(resolutions: &[StftResolution]) -> Result<Self> {
        if resolutions.is_empty() {
            return Err(Error::InvalidArgument("no STFT resolutions configured".into()));
        }
        Ok(Self { plans: resolutions.iter().map(|&r| StftPlan::new(r).map(Arc::new)).collect::<Result<_>>()? })
    }

    pub fn resolutions(&self) -> Vec<StftResolution> {
        self.plans.iter().map(|p| p.resolution).collect()
    }

    /// `x_hat` and `x` are `1 × L`.
    pub fn aux(&self, g: &mut Graph<T>, x_hat: Var, x: Var) -> Result<AuxVars> {
        if g.value(x_hat)?.shape() != g.value(x)?.shape() {
            return Err(shape_err!("loss operands {:?} and {:?}", g.value(x_hat)?.shape(), g.value(x)?.shape()));
        }
        let (mut l_sc, mut l_mag, mut terms) = (Vec::new(), Vec::new(), Vec::new());
        for plan in &self.plans {
            let mh = g.stft_mag(x_hat, plan)?;
            let m = g.stft_mag(x, plan)?;
            let diff = g.sub(m, mh)?;
            let sq = g.square(diff)?;
            let num = g.sum(sq)?;
            let num = g.sqrt(num)?;
            let msq = g.square(m)?;
            let den = g.sum(msq)?;
            let den = g.sqrt(den)?;
            let sc = g.div(num, den)?;
            let lh = g.ln(mh)?;
            let lm = g.ln(m)?;
            let ld = g.sub(lm, lh)?;
            let ad = g.abs(ld)?;
            let mag = g.mean(ad)?;
            terms.push(g.add(sc, mag)?);
            l_sc.push(sc);
            l_mag.push(mag);
        }
        let total = sum_vars(g, &terms)?;
        let total = g.scale(total, 1.0 / terms.len() as f64)?;
        Ok(AuxVars { l_sc, l_mag, total })
    }
}

fn sum_vars<T: Real>(g: &mut Graph<T>, vars: &[Var]) -> Result<Var> {
    let (&first, rest) = vars.split_first().ok_or_else(|| shape_err!("sum of no terms"))?;
    rest.iter().try_fold(first, |acc, &v| g.add(acc, v))
}

/// Hinge discriminator loss on the tape.
pub fn hinge_d_graph<T: Real>(g: &mut Graph<T>, real: &[Var], fake: &[Var]) -> Result<Var> {
    check_members(real)?;
    check_members(fake)?;
    let mut terms = Vec::with_capacity(2 * NUM_MEMBERS);
    for (&r, &f) in real.iter().zip(fake) {
        let nr = g.scale(r, -1.0)?;
        let nr = g.offset(nr, 1.0)?;
        let hr = g.relu(nr)?;
        terms.push(g.mean(hr)?);
        let pf = g.offset(f, 1.0)?;
        let hf = g.relu(pf)?;
        terms.push(g.mean(hf)?);
    }
    let s = sum_vars(g, &terms)?;
    g.scale(s, 1.0 / NUM_MEMBERS as f64)
}

/// `(1/6) Σ_k mean(−D_k(x̂))` on the tape, with the per-member terms.
pub fn generator_adv_graph<T: Real>(g: &mut Graph<T>, fake: &[Var]) -> Result<(Var, Vec<Var>)> {
    check_members(fake)?;
    let terms = fake
        .iter()
        .map(|&f| {
            let m = g.mean(f)?;
            g.scale(m, -1.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let s = sum_vars(g, &terms)?;
    Ok((g.scale(s, 1.0 / NUM_MEMBERS as f64)?, terms))
}
