//! Losses, optimizers, initialisation, dataset splitting, gradient checking,
//! the training loop and the LEDM model format.

pub mod gradcheck;
mod init;
pub mod ledm;
mod loss;
mod optim;
mod split;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, TensorCheck};
pub use init::{he_bound, init_nested, init_patch};
pub use ledm::{load_model, save_model, LoadError, Model};
pub use loss::{bce_loss, class_weights, mse_loss, output_loss, total_loss, LossConfig, LossKind, TotalLoss, PROB_EPS};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use split::{split_counts, split_dataset};
mod trainer;

pub use trainer::{fit, nested_f1, train_nested, train_patch, EpochRecord, RunLog, TrainConfig, Trainable};
