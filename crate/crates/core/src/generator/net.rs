use std::sync::Arc;

use rand::Rng;

use crate::dsp::{design_pqmf, tune_cutoff, PqmfBank, Ratio};
use crate::error::{shape_err, Result};
use crate::generator::GeneratorConfig;
use crate::nn::{Backend, ConvLayer, ConvSpec, Graph, GraphBackend, NoiseSource, Real, Var, WeightStore};

/// Standard deviation of the initial weight directions.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct TadeLayers {
    pub a: ConvLayer,
    pub b: ConvLayer,
    pub out: ConvLayer,
}

/// One encoder block, its CondNet branch and its paired decoder block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockLayers {
    pub scale: Ratio,
    pub cond_ratio: Ratio,
    pub enc_in: ConvLayer,
    pub cond: ConvLayer,
    pub gamma: ConvLayer,
    pub beta: ConvLayer,
    pub gate_a: ConvLayer,
    pub gate_b: ConvLayer,
    pub down1: ConvLayer,
    pub down2: ConvLayer,
    pub up1: ConvLayer,
    pub up2: ConvLayer,
    pub tade: Vec<TadeLayers>,
}

impl BlockLayers {
    /// Convolutions at the block's own rate, then those after downsampling.
    pub fn encoder_convs(&self) -> [&ConvLayer; 7] {
        [&self.enc_in, &self.cond, &self.gamma, &self.beta, &self.gate_a, &self.gate_b, &self.down1]
    }
}

/// Architecture of the generator: layer plan plus the filter bank.
#[derive(Clone, Debug)]
pub struct Generator {
    cfg: GeneratorConfig,
    bank: Arc<PqmfBank>,
    pub pre: ConvLayer,
    pub blocks: Vec<BlockLayers>,
    pub post: ConvLayer,
}

/// Per-block modulation of the paired decoder block.
#[derive(Clone, Debug)]
pub struct ModulationParams<V> {
    pub gamma: V,
    pub beta: V,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig) -> Result<Self> {
        cfg.validate()?;
        let bank = if cfg.pqmf_bands == 1 {
            design_pqmf(1, cfg.pqmf_taps, crate::dsp::pqmf::DEFAULT_KAISER_BETA, 0.25)?
        } else {
            let beta = crate::dsp::pqmf::DEFAULT_KAISER_BETA;
            let cutoff = tune_cutoff(cfg.pqmf_bands, cfg.pqmf_taps, beta)?;
            design_pqmf(cfg.pqmf_bands, cfg.pqmf_taps, beta, cutoff)?
        };
        let k = cfg.block_kernel;
        let conv = |name: String, i: usize, o: usize, k: usize| ConvLayer::new(name, ConvSpec::new(i, o, k));
        let pre = conv("pre".into(), cfg.pqmf_bands, cfg.stem_channels, cfg.pre_kernel);
        let mut blocks = Vec::with_capacity(cfg.num_blocks());
        let scale = cfg.scaling_ratios()?;
        let cond = cfg.condnet_ratios()?;
        for (i, &c) in cfg.channels.iter().enumerate() {
            let n = i + 1;
            let cin = if i == 0 { cfg.stem_channels } else { cfg.channels[i - 1] };
            let dec_in = cfg.channels.get(i + 1).copied().unwrap_or(c);
            let e = |s: &str, ci, co, k| conv(format!("enc{n}.{s}"), ci, co, k);
            let d = |s: &str, ci, co| conv(format!("dec{n}.{s}"), ci, co, k);
            blocks.push(BlockLayers {
                scale: scale[i],
                cond_ratio: cond[i],
                enc_in: e("in", cin, c, k),
                cond: e("cond", cfg.mel.n_mels, c, cfg.condnet_kernel),
                gamma: e("gamma", 2 * c, c, k),
                beta: e("beta", 2 * c, c, k),
                gate_a: e("gate_a", c, c, k),
                gate_b: e("gate_b", c, c, k),
                down1: e("down1", c, c, k),
                down2: e("down2", c, c, k),
                up1: d("up1", dec_in, c),
                up2: d("up2", c, c),
                tade: (1..=cfg.tade_units)
                    .map(|r| TadeLayers {
                        a: d(&format!("tade{r}.a"), c, c),
                        b: d(&format!("tade{r}.b"), c, c),
                        out: d(&format!("tade{r}.out"), c, c),
                    })
                    .collect(),
            });
        }
        let last = cfg.channels.first().copied().unwrap_or(cfg.stem_channels);
        let post = conv("post".into(), last, cfg.pqmf_bands, cfg.post_kernel);
        Ok(Self { cfg, bank: Arc::new(bank), pre, blocks, post })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn bank(&self) -> &Arc<PqmfBank> {
        &self.bank
    }

    /// Every convolution in forward order.
    pub fn layers(&self) -> Vec<&ConvLayer> {
        let mut out = vec![&self.pre];
        for b in &self.blocks {
            out.extend(b.encoder_convs());
            out.push(&b.down2);
        }
        for b in self.blocks.iter().rev() {
            out.push(&b.up1);
            out.push(&b.up2);
            for t in &b.tade {
                out.extend([&t.a, &t.b, &t.out]);
            }
        }
        out.push(&self.post);
        out
    }

    /// Fresh weights: directions `N(0, 0.02²)`, gains `‖v‖`, zero biases.
    pub fn init_weights<T: Real>(&self, rng: &mut impl Rng) -> Result<WeightStore<T>> {
        let mut store = WeightStore::new();
        for l in self.layers() {
            store.add_conv(&l.name, &l.spec, rng, INIT_STD)?;
        }
        Ok(store)
    }

    /// Mel features at encoder block `index` (0-based): resample to the
    /// block rate, convolve, activate.
    pub fn condnet_forward<T: Real, B: Backend<T>>(&self, be: &mut B, mel: &B::Value, index: usize) -> Result<B::Value> {
        let blk = self.blocks.get(index).ok_or_else(|| shape_err!("block index {index} out of range"))?;
        let up = be.resample(mel, blk.cond_ratio)?;
        let c = be.conv(&blk.cond, &up)?;
        be.leaky_relu(&c, self.cfg.leaky_slope)
    }

    /// Returns the downsampled latent and the modulation for the paired decoder.
    pub fn encoder_block_forward<T: Real, B: Backend<T>>(
        &self,
        be: &mut B,
        x: &B::Value,
        cond: &B::Value,
        index: usize,
    ) -> Result<(B::Value, ModulationParams<B::Value>)> {
        let blk = &self.blocks[index];
        let z = be.conv(&blk.enc_in, x)?;
        if be.time(&z) != be.time(cond) {
            return Err(shape_err!(
                "block {}: latent has {} steps, conditioning has {}",
                index + 1,
                be.time(&z),
                be.time(cond)
            ));
        }
        let zc = be.concat(&z, cond)?;
        let gamma = be.conv(&blk.gamma, &zc)?;
        let beta = be.conv(&blk.beta, &zc)?;
        let a = be.conv(&blk.gate_a, &z)?;
        let b = be.conv(&blk.gate_b, &z)?;
        let g = be.gated_tanh(&a, &b)?;
        let d = be.conv(&blk.down1, &g)?;
        let d = be.resample(&d, blk.scale.inverse())?;
        let d = be.conv(&blk.down2, &d)?;
        Ok((d, ModulationParams { gamma, beta }))
    }

    /// Upsample, then TADE residual units modulated by `mods`.
    pub fn decoder_block_forward<T: Real, B: Backend<T>>(
        &self,
        be: &mut B,
        x: &B::Value,
        mods: &ModulationParams<B::Value>,
        index: usize,
    ) -> Result<B::Value> {
        let blk = &self.blocks[index];
        let u = be.conv(&blk.up1, x)?;
        let u = be.resample(&u, blk.scale)?;
        let mut y = be.conv(&blk.up2, &u)?;
        if be.time(&y) != be.time(&mods.gamma) {
            return Err(shape_err!(
                "decoder block {}: {} steps against {} modulation steps",
                index + 1,
                be.time(&y),
                be.time(&mods.gamma)
            ));
        }
        for t in &blk.tade {
            let n = be.channel_norm(&y)?;
            let m = be.mul(&mods.gamma, &n)?;
            let m = be.add(&m, &mods.beta)?;
            let a = be.conv(&t.a, &m)?;
            let b = be.conv(&t.b, &m)?;
            let h = be.gated_tanh(&a, &b)?;
            let o = be.conv(&t.out, &h)?;
            y = be.add(&y, &o)?;
        }
        Ok(y)
    }

    /// `x`: `1 × L` coded signal, `mel`: `n_mels × L/hop` features.
    pub fn forward<T: Real, B: Backend<T>>(&self, be: &mut B, x: &B::Value, mel: &B::Value) -> Result<B::Value> {
        let sub = be.analysis(x, &self.bank)?;
        let mut h = be.conv(&self.pre, &sub)?;
        let mut mods = Vec::with_capacity(self.blocks.len());
        for i in 0..self.blocks.len() {
            let c = self.condnet_forward(be, mel, i)?;
            let (d, m) = self.encoder_block_forward(be, &h, &c, i)?;
            h = d;
            mods.push(m);
        }
        if !self.blocks.is_empty() {
            h = be.add_noise(&h, self.cfg.noise_std)?;
        }
        for i in (0..self.blocks.len()).rev() {
            h = self.decoder_block_forward(be, &h, &mods[i], i)?;
        }
        let p = be.conv(&self.post, &h)?;
        let s = be.synthesis(&p, &self.bank)?;
        be.tanh(&s)
    }

    /// Record a forward pass on `graph`.
    pub fn forward_graph<T: Real>(
        &self,
        graph: &mut Graph<T>,
        store: &WeightStore<T>,
        x: Var,
        mel: Var,
        noise: NoiseSource,
    ) -> Result<Var> {
        let hop = self.cfg.mel.hop;
        let (len, frames) = (graph.value(x)?.time(), graph.value(mel)?.time());
        if len % hop != 0 || frames != len / hop {
            return Err(shape_err!("{len} samples need a multiple of {hop} and {} mel frames, got {frames}", len / hop));
        }
        let mut be = GraphBackend::new(graph, store, noise);
        self.forward(&mut be, &x, &mel)
    }
}
