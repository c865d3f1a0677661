//! Training stack: imitation pretraining, advantage estimation, the clipped
//! policy-gradient update, and the iteration harness with its selection
//! strategies.

pub mod gae;
pub mod harness;
pub mod il;
pub mod ppo;

pub use gae::gae;
pub use harness::{
    collect_rollout, run_training, run_training_from, select_ppns, IterLog, Rollout, Strategy,
    TrainConfig, TrainReport,
};
pub use il::{collect_il_data, train_il, IlConfig, IlDataset, IlReport};
pub use ppo::{ppo_update, PpoConfig, Trajectory, UpdateStats};
