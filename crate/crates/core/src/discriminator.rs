//! Ensemble of three subband and three multi-scale discriminators.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{design_pqmf, PqmfBank};
use crate::error::{shape_err, Error, Result};
use crate::nn::{ConvLayer, ConvSpec, Graph, Real, Var, WeightStore};

pub const WINDOW_LEN: usize = 512;
pub const NUM_MEMBERS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberKind {
    /// PQMF analysis of a random window.
    Subband,
    /// Average-pooled full segment.
    Multiscale,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemberSpec {
    pub kind: MemberKind,
    pub factor: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub widths: Vec<usize>,
    pub kernels: Vec<usize>,
    pub groups: Vec<usize>,
    pub stride: usize,
    pub leaky_slope: f64,
    pub window: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            widths: vec![16, 32, 64, 64],
            kernels: vec![15, 11, 11, 5],
            groups: vec![1, 4, 4, 1],
            stride: 2,
            leaky_slope: 0.2,
            window: WINDOW_LEN,
        }
    }
}

impl DiscriminatorConfig {
    /// Eight channels at most; for gradient checks.
    pub fn tiny() -> Self {
        Self { widths: vec![4, 8, 8, 8], kernels: vec![5, 3, 3, 3], groups: vec![1, 2, 2, 1], ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.widths.len();
        if n == 0 || self.kernels.len() != n || self.groups.len() != n {
            return Err(Error::Config("discriminator widths, kernels and groups must have one entry per layer".into()));
        }
        if self.stride == 0 || self.window == 0 || !self.window.is_multiple_of(4) {
            return Err(Error::Config("discriminator stride and window must be positive, window a multiple of 4".into()));
        }
        for i in 0..n {
            let cin = if i == 0 { 4 } else { self.widths[i - 1] };
            let spec = ConvSpec::new(cin, self.widths[i], self.kernels[i]).groups(self.groups[i]);
            if !spec.is_valid() || (i == 0 && self.groups[0] != 1) {
                return Err(Error::Config(format!("discriminator layer {} is invalid: {spec:?}", i + 1)));
            }
        }
        Ok(())
    }
}

/// A window of the discriminator input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSlice {
    pub start: usize,
    pub len: usize,
    pub source_len: usize,
}

/// Uniform start over every valid position.
pub fn sample_window(source_len: usize, len: usize, rng: &mut impl Rng) -> Result<WindowSlice> {
    if source_len < len {
        return Err(Error::InvalidArgument(format!("signal of {source_len} samples is shorter than the {len}-sample window")));
    }
    Ok(WindowSlice { start: rng.random_range(0..=source_len - len), len, source_len })
}

#[derive(Clone, Debug)]
pub struct Member {
    pub spec: MemberSpec,
    pub layers: Vec<ConvLayer>,
    pub head: ConvLayer,
    bank: Option<Arc<PqmfBank>>,
}

impl Member {
    pub fn init_weights<T: Real>(&self, rng: &mut impl Rng, std: f64) -> Result<WeightStore<T>> {
        let mut store = WeightStore::new();
        for l in self.layers.iter().chain(std::iter::once(&self.head)) {
            store.add_conv(&l.name, &l.spec, rng, std)?;
        }
        Ok(store)
    }

    /// Length of the score map for a segment of `len` samples.
    pub fn score_len(&self, len: usize, window: usize) -> usize {
        let mut n = match self.spec.kind {
            MemberKind::Subband => window / self.spec.factor,
            MemberKind::Multiscale => len / self.spec.factor,
        };
        for l in &self.layers {
            n = l.spec.output_len(n);
        }
        n
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    cfg: DiscriminatorConfig,
    pub members: Vec<Member>,
}

impl Discriminator {
    pub fn new(cfg: DiscriminatorConfig) -> Result<Self> {
        cfg.validate()?;
        let specs = [
            MemberSpec { kind: MemberKind::Subband, factor: 1 },
            MemberSpec { kind: MemberKind::Subband, factor: 2 },
            MemberSpec { kind: MemberKind::Subband, factor: 4 },
            MemberSpec { kind: MemberKind::Multiscale, factor: 1 },
            MemberSpec { kind: MemberKind::Multiscale, factor: 2 },
            MemberSpec { kind: MemberKind::Multiscale, factor: 4 },
        ];
        let members = specs
            .iter()
            .map(|&spec| {
                let cin0 = if spec.kind == MemberKind::Subband { spec.factor } else { 1 };
                let mut cin = cin0;
                let layers = (0..cfg.widths.len())
                    .map(|i| {
                        let s = ConvSpec::new(cin, cfg.widths[i], cfg.kernels[i]).stride(cfg.stride).groups(cfg.groups[i]);
                        cin = cfg.widths[i];
                        ConvLayer::new(format!("conv{}", i + 1), s)
                    })
                    .collect();
                let head = ConvLayer::new("head", ConvSpec::new(cin, 1, 1));
                let bank = match spec.kind {
                    MemberKind::Subband if spec.factor == 1 => Some(Arc::new(design_pqmf(1, 1, 0.0, 0.25)?)),
                    MemberKind::Subband => Some(Arc::new(PqmfBank::tuned(spec.factor)?)),
                    MemberKind::Multiscale => None,
                };
                Ok(Member { spec, layers, head, bank })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { cfg, members })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    /// One store per member, in member order.
    pub fn init_weights<T: Real>(&self, rng: &mut impl Rng, std: f64) -> Result<Vec<WeightStore<T>>> {
        self.members.iter().map(|m| m.init_weights(rng, std)).collect()
    }

    /// Fresh windows for the three subband members.
    pub fn sample_windows(&self, source_len: usize, rng: &mut impl Rng) -> Result<Vec<WindowSlice>> {
        self.members
            .iter()
            .filter(|m| m.spec.kind == MemberKind::Subband)
            .map(|_| sample_window(source_len, self.cfg.window, rng))
            .collect()
    }

    /// Network input of member `k`: the analysed window or the pooled signal.
    pub fn member_input<T: Real>(&self, g: &mut Graph<T>, k: usize, x: Var, window: Option<WindowSlice>) -> Result<Var> {
        let m = &self.members[k];
        let len = g.value(x)?.time();
        match m.spec.kind {
            MemberKind::Subband => {
                let w = window.ok_or_else(|| Error::InvalidArgument(format!("member {} needs a window", k + 1)))?;
                if w.len != self.cfg.window || w.start + w.len > len || w.len % m.spec.factor != 0 {
                    return Err(shape_err!("window {w:?} does not fit a {len}-sample input"));
                }
                let s = g.slice_time(x, w.start, w.len)?;
                g.pqmf_analysis(s, m.bank.as_ref().expect("subband bank"))
            }
            MemberKind::Multiscale => {
                let need = self.cfg.window * m.spec.factor;
                if len < need {
                    return Err(Error::InvalidArgument(format!(
                        "multi-scale member {} needs at least {need} samples, got {len}",
                        k + 1
                    )));
                }
                if m.spec.factor == 1 {
                    Ok(x)
                } else {
                    g.avg_pool(x, m.spec.factor)
                }
            }
        }
    }

    /// Score map `1 × T'` of member `k`.
    pub fn member_forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &WeightStore<T>,
        k: usize,
        x: Var,
        window: Option<WindowSlice>,
    ) -> Result<Var> {
        let m = self.members.get(k).ok_or_else(|| Error::InvalidArgument(format!("no discriminator member {}", k + 1)))?;
        let mut h = self.member_input(g, k, x, window)?;
        for l in &m.layers {
            h = g.conv_layer(store, &l.name, l.spec, h)?;
            h = g.leaky_relu(h, self.cfg.leaky_slope)?;
        }
        g.conv_layer(store, &m.head.name, m.head.spec, h)
    }

    /// All six score maps. `windows` holds one window per subband member.
    pub fn ensemble_forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        stores: &[WeightStore<T>],
        x: Var,
        windows: &[WindowSlice],
    ) -> Result<Vec<Var>> {
        if stores.len() != NUM_MEMBERS {
            return Err(Error::InvalidArgument(format!("expected {NUM_MEMBERS} member stores, got {}", stores.len())));
        }
        let mut wi = windows.iter();
        (0..NUM_MEMBERS)
            .map(|k| {
                let w = match self.members[k].spec.kind {
                    MemberKind::Subband => Some(*wi.next().ok_or_else(|| Error::InvalidArgument("too few windows".into()))?),
                    MemberKind::Multiscale => None,
                };
                self.member_forward(g, &stores[k], k, x, w)
            })
            .collect()
    }
}
