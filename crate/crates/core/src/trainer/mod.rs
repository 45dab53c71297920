//! Adversarial training of the extractor, label predictor and domain critic.

mod checkpoint;
mod config;
mod model;
mod steps;
mod train;

pub use checkpoint::{checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint};
pub use config::{CriticLoss, DannConfig, DEFAULT_LAMBDA, DEFAULT_LAMBDA_CROSS_LINGUAL};
pub use model::{
    argmax, build_model, critic_objective, multi_domain_critic_loss, wasserstein_estimate, Critic, DannModel,
    DataSpec,
};
pub use steps::{critic_step, joint_step, JointStepOut};
pub use train::{evaluate, train, EpochRecord, StepStats, TrainHistory, TrainOptions, Trainer};
