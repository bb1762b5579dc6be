//! Write the synthetic coded/reference corpus and load it back.

use postgan::losses::{multires_stft_loss, DEFAULT_RESOLUTIONS};
use postgan::training::{generate_corpus, load_dataset, CorpusSpec};

fn main() -> postgan::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("postgan_corpus"), Into::into);
    let manifest = generate_corpus(&dir, CorpusSpec { items: 4, ..CorpusSpec::default() })?;
    let ds = load_dataset(&manifest)?;
    println!("{} pairs listed in {}", ds.len(), manifest.display());
    for item in &ds.items {
        let loss = multires_stft_loss(&item.coded, &item.reference, &DEFAULT_RESOLUTIONS)?;
        println!("  {} vs reference: L_aux {:.3}", item.coded_path.display(), loss.total);
    }
    Ok(())
}
