//! Optimiser, schedule, training loop, evaluation and ablations.

pub mod ablation;
pub mod adam;
pub mod config;
pub mod schedule;
pub mod trainer;

pub use ablation::{run_ablation, Variant};
pub use adam::Adam;
pub use config::TrainConfig;
pub use schedule::Schedule;
pub use trainer::{
    evaluate, inpaint, loss_trace, train, BucketMetrics, StepLog, TrainOutcome, TrainState,
};
