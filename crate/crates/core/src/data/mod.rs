//! Image files, datasets, synthetic data and checkpoints.

pub mod checkpoint;
pub mod dataset;
pub mod image_io;
pub mod synthetic;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use dataset::{load_example, scan_dataset, DatasetHandle, DatasetOptions, DomainFiles, ImageSource, MemoryDataset};
pub use synthetic::{make_synthetic_dataset, SyntheticSpec};
