use std::path::{Path, PathBuf};

use rand::Rng;

use crate::dsp::MelFrontend;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::runtime::WavFile;
use crate::{FRAME_SIZE, SAMPLE_RATE};

/// Coded and reference signals of one utterance, trimmed to equal length.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedItem {
    pub coded_path: PathBuf,
    pub reference_path: PathBuf,
    pub coded: Vec<f32>,
    pub reference: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairedDataset {
    pub items: Vec<PairedItem>,
    /// `(manifest line, reason)` of every pair that was left out.
    pub skipped: Vec<(usize, String)>,
    pub warnings: Vec<String>,
}

/// Pairs whose lengths differ by more than this are skipped.
pub const MAX_LENGTH_MISMATCH: usize = FRAME_SIZE;

fn load_mono(path: &Path) -> Result<Vec<f32>> {
    WavFile::read(path)
        .and_then(|wav| wav.require_mono(SAMPLE_RATE).map(<[f32]>::to_vec))
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
}

/// Read a manifest of tab-separated `coded<TAB>reference` WAV paths. Relative
/// paths resolve against the manifest's directory; blank lines and lines
/// starting with `#` are ignored.
pub fn load_dataset(manifest: impl AsRef<Path>) -> Result<PairedDataset> {
    let manifest = manifest.as_ref();
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| Error::Dataset(format!("cannot read manifest {}: {e}", manifest.display())))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut ds = PairedDataset::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(c), Some(r), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::Dataset(format!("{}:{line_no}: expected two tab-separated paths", manifest.display())));
        };
        let (coded_path, reference_path) = (base.join(c.trim()), base.join(r.trim()));
        let mut coded = load_mono(&coded_path)?;
        let mut reference = load_mono(&reference_path)?;
        let diff = coded.len().abs_diff(reference.len());
        if diff > MAX_LENGTH_MISMATCH {
            ds.skipped.push((line_no, format!("lengths differ by {diff} samples")));
            continue;
        }
        let n = coded.len().min(reference.len());
        coded.truncate(n);
        reference.truncate(n);
        ds.items.push(PairedItem { coded_path, reference_path, coded, reference });
    }
    if ds.items.is_empty() {
        ds.warnings.push(format!("manifest {} lists no usable pairs", manifest.display()));
    }
    Ok(ds)
}

impl PairedDataset {
    /// In-memory pairs, trimmed to equal length.
    pub fn from_pairs(pairs: Vec<(Vec<f32>, Vec<f32>)>) -> Self {
        let items = pairs
            .into_iter()
            .map(|(mut coded, mut reference)| {
                let n = coded.len().min(reference.len());
                coded.truncate(n);
                reference.truncate(n);
                PairedItem { coded_path: PathBuf::new(), reference_path: PathBuf::new(), coded, reference }
            })
            .collect();
        Self { items, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// One training example.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub item: usize,
    pub offset: usize,
    pub coded: Vec<f32>,
    pub reference: Vec<f32>,
    /// Features of the coded segment, `n_mels × segment/hop`.
    pub mel: Tensor<f32>,
}

/// Random items at random frame-aligned offsets.
pub fn draw_batch(
    ds: &PairedDataset,
    mel: &MelFrontend<f32>,
    batch: usize,
    segment: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Segment>> {
    let hop = mel.config().hop;
    let eligible: Vec<usize> = (0..ds.items.len()).filter(|&i| ds.items[i].coded.len() >= segment).collect();
    if eligible.is_empty() {
        return Err(Error::Dataset(format!("no item holds a {segment}-sample segment")));
    }
    (0..batch)
        .map(|_| {
            let item = eligible[rng.random_range(0..eligible.len())];
            let it = &ds.items[item];
            let offset = hop * rng.random_range(0..=(it.coded.len() - segment) / hop);
            let coded = it.coded[offset..offset + segment].to_vec();
            let reference = it.reference[offset..offset + segment].to_vec();
            let mel = mel.compute(&coded).data;
            Ok(Segment { item, offset, coded, reference, mel })
        })
        .collect()
}
