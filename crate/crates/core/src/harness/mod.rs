//! Training loop, augmentation-free evaluation, metrics, stratified
//! k-fold cross-validation and run artifacts.

mod config;
mod eval;
mod experiment;
mod kfold;
mod metrics;
mod train;

pub use config::{RunConfig, TrainConfig};
pub use eval::{evaluate, predict, summarize, BagPrediction, Evaluation, StratumAcc};
pub use experiment::{
    embeddings_csv, load_data, loss_csv, run_experiment, run_fold, write_artifacts, EpochLoss, Experiment, FoldOutcome,
    FoldReport, MeanStd, MetricsReport, StratumSummary, Summary,
};
pub use kfold::kfold_split;
pub use metrics::{auc, compute_metrics, f1_for, mean_std, Metrics};
pub use train::{
    student_loss, teacher_targets, train_model, train_step, LossVars, StepLosses, Streams, TeacherTargets, TrainState, Trained,
    GROUP_NORM_EPS, TEACHER_PREFIXES,
};
