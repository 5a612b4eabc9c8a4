//! Datasets: representation, synthetic generation, file I/O, augmentation,
//! trigger embedding, and client partitioning.

mod augment;
mod fileio;
mod partition;
mod synth;
mod types;

pub use augment::{augment, augment_with, AugmentPolicy};
pub use fileio::{load_dataset, save_dataset};
pub use partition::{partition, Partition, PartitionMode};
pub use synth::generate_synthetic;
pub use types::{embed_trigger, Dataset, Example, Shape, Trigger};
