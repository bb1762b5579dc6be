//! The invariant suite, once as built and once with a mistuned filter bank.

use postgan::runtime::{run_verify, VerifyOptions};

fn main() -> postgan::Result<()> {
    let report = run_verify(&VerifyOptions::default())?;
    println!("{report}\n");
    let broken = run_verify(&VerifyOptions { pqmf_cutoff: Some(0.4), seed: 0 })?;
    println!("with cutoff 0.4, failing: {:?}", broken.failures());
    Ok(())
}
