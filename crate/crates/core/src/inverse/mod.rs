//! Forward model composition and the joint inverse problem.

mod config;
mod init;
mod kl;
mod model;
mod optimizer;
mod tv;

pub use config::{KlParams, OptimConfig};
pub use init::{initialize, localize_frame, widefield_volume, InitStrategy, Initialization, LocalizerSettings};
pub use kl::{kl_divergence, kl_gradient, DEFAULT_BETA};
pub use model::{BaseImage, ForwardModel, ModelSettings};
pub use optimizer::{
    joint_optimize, Block, Diagnostic, ObjectiveRecord, OptimState, Reconstruction, AMPLITUDE_FLOOR,
    FISTA_VARIANT, MIN_POSITION_STEP_UM,
};
pub use tv::{total_variation, tv_prox, TvProx};
