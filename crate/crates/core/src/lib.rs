//! Multi-domain unpaired image translation with one encoder, one decoder and
//! one discriminator per domain.

pub mod data;
pub mod domain;
pub mod error;
pub mod inference;
pub mod layers;
pub mod networks;
pub mod objectives;
pub mod optim;
pub mod registry;
pub mod scheduler;
pub mod tensor;
pub mod trainer;

pub use data::{
    load_checkpoint, make_synthetic_dataset, save_checkpoint, scan_dataset, Checkpoint, DatasetHandle, DatasetOptions,
    ImageSource, MemoryDataset, SyntheticSpec,
};
pub use domain::{model_count, AdversarialLoss, DomainId, ImageTensor, LatentCode, ModelCount, ObjectiveConfig};
pub use error::{Error, Result};
pub use inference::{LatentCache, Translator};
pub use networks::{decode, discriminate, encode, ArchSpec, Gradients, Network, Role, ScoreMap, Width};
pub use objectives::{adv_loss_discriminator, adv_loss_generator, cycle_loss, total_generator_loss, LossReport};
pub use registry::DomainRegistry;
pub use scheduler::{learning_rate_at, required_epochs, sample_pair, LrRole, PairSampler, TrainPlan};
pub use tensor::{Real, Tensor};
pub use trainer::{LogSink, TrainOptions, TrainState, Trainer};
