use std::fmt::Write;

use crate::error::Result;
use crate::generator::{report_cost, GeneratorConfig};

pub const REFERENCE_GMACS: f64 = 5.1;
pub const REFERENCE_PARAMS: f64 = 2.6e6;
pub const REFERENCE_DELAY_MS: f64 = 22.5;

/// Complexity, size and delay of a generator configuration as text.
pub fn cost_report_text(cfg: &GeneratorConfig, per_layer: bool) -> Result<String> {
    let r = report_cost(cfg)?;
    let mut s = String::new();
    let _ = writeln!(s, "parameters      {} ({:.3} M)", r.params, r.params as f64 / 1e6);
    let _ = writeln!(s, "complexity      {:.4} GMACs/s (filter bank {:.4})", r.gmacs(), r.pqmf_macs_per_second / 1e9);
    let _ = writeln!(s, "delay           {:.4} ms", r.delay.total_ms);
    for (name, ms) in r.delay.parts() {
        let _ = writeln!(s, "  {name:<14} {ms:.4} ms");
    }
    let _ = writeln!(s, "reference       {REFERENCE_GMACS} GMACs/s, {:.1} M parameters, {REFERENCE_DELAY_MS} ms", REFERENCE_PARAMS / 1e6);
    let _ = writeln!(
        s,
        "ratio           complexity {:.3}, parameters {:.3}, delay {:.3}",
        r.gmacs() / REFERENCE_GMACS,
        r.params as f64 / REFERENCE_PARAMS,
        r.delay.total_ms / REFERENCE_DELAY_MS
    );
    if per_layer {
        for l in &r.layers {
            let _ = writeln!(s, "  {:<22} {:>9} params {:>12.0} MACs/s", l.name, l.params, l.macs_per_second);
        }
    }
    Ok(s)
}
