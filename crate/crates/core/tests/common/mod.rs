use postgan::generator::GeneratorConfig;

/// Convolutions enumerated independently of the generator's own layer list.
pub fn counting_oracle(cfg: &GeneratorConfig) -> (u64, f64) {
    let (mut params, mut macs) = (0u64, 0f64);
    let mut conv = |ci: usize, co: usize, k: usize, rate: f64| {
        params += (ci * co * k + 2 * co) as u64;
        macs += (ci * co * k) as f64 * rate;
    };
    let b = cfg.pqmf_bands;
    let sub = 16_000.0 / b as f64;
    let k = cfg.block_kernel;
    conv(b, cfg.stem_channels, cfg.pre_kernel, sub);
    let mut rate = sub;
    for (i, &c) in cfg.channels.iter().enumerate() {
        let cin = if i == 0 { cfg.stem_channels } else { cfg.channels[i - 1] };
        let s = cfg.scaling_factors[i];
        conv(cin, c, k, rate);
        conv(cfg.mel.n_mels, c, cfg.condnet_kernel, rate);
        conv(2 * c, c, k, rate);
        conv(2 * c, c, k, rate);
        for _ in 0..3 {
            conv(c, c, k, rate);
        }
        conv(c, c, k, rate / s);
        let din = cfg.channels.get(i + 1).copied().unwrap_or(c);
        conv(din, c, k, rate / s);
        conv(c, c, k, rate);
        for _ in 0..3 * cfg.tade_units {
            conv(c, c, k, rate);
        }
        rate /= s;
    }
    conv(cfg.channels[0], b, cfg.post_kernel, sub);
    (params, macs + 2.0 * 16_000.0 * cfg.pqmf_taps as f64)
}
