//! Two-phase training: spectral pretraining of the generator, then
//! adversarial fine-tuning against the discriminator ensemble.

mod config;
mod corpus;
mod dataset;
mod trainer;

pub use config::{ExperimentConfig, TrainConfig};
pub use corpus::{degrade, generate_corpus, synth_pair, synth_reference, CorpusSpec};
pub use dataset::{draw_batch, load_dataset, PairedDataset, PairedItem, Segment, MAX_LENGTH_MISMATCH};
pub use trainer::{checkpoint_path, load_generator, load_inference, Trainer, ADVERSARIAL, PRETRAIN};
