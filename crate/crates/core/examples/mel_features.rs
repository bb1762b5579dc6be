//! Log-mel features of a chirp, batch and frame by frame.

use std::sync::Arc;

use postgan::dsp::{MelConfig, MelFrontend, MelStream};

fn main() -> postgan::Result<()> {
    let cfg = MelConfig::default();
    let x: Vec<f32> = (0..16_000).map(|i| {
        let t = i as f32 / 16_000.0;
        0.5 * (2.0 * std::f32::consts::PI * (200.0 + 1800.0 * t) * t).sin()
    }).collect();

    let frontend = Arc::new(MelFrontend::new(&cfg)?);
    let mel = frontend.compute(&x);
    println!("{} bands x {} frames at {} frames/s", mel.bands(), mel.frames(), cfg.frame_rate());

    let mut stream = MelStream::new(frontend.clone());
    println!("streaming lookahead: {} frame(s), {} samples", stream.lookahead_frames(), cfg.lookahead());
    let frames: Vec<Vec<f32>> = x.chunks_exact(cfg.hop).filter_map(|b| stream.push(b)).collect();
    let peak_band = |col: &[f32]| col.iter().enumerate().fold((0, f32::MIN), |a, (i, &v)| if v > a.1 { (i, v) } else { a }).0;
    for f in [0, 25, 50, 75] {
        println!("frame {f:>2}: loudest band {}", peak_band(&frames[f]));
    }
    Ok(())
}
