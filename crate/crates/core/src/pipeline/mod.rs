//! The two-stage offline distillation procedure (SFT, then training on a
//! precomputed rollout dataset) and a standard online trainer.

mod ablation;
mod data;
mod sft;
mod train;

pub use ablation::{consistency_ablation, AblationCell, AblationConfig, AblationGrid, DominanceSummary, Paradigm};
pub use data::{generate_sft_data, precompute_dataset, OfflineDataset, RecordSampler, SftDataset};
pub use sft::{mean_log_likelihood, sft_fit, sft_fit_traced, SftConfig};
pub use train::{
    train_offline, train_offline_observed, train_online, LiveTeacher, TrainConfig, TrainLog, TrainRecord,
    TRAIN_LOG_HEADER,
};
