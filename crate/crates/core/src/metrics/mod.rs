//! Reconstruction quality metrics and the three-arm comparison experiment.

mod experiment;
mod matching;
mod render;
mod ssim;

pub use experiment::{
    build_model, evaluate, prepare_dataset, reconstruction_stack, run_arm, run_experiment, ArmReport,
    Dataset, Evaluation, ExperimentOutcome, ExperimentReport,
};
pub use matching::{match_and_rmse, MatchResult, MatchedPair, DEFAULT_MATCH_RADIUS_UM};
pub use render::{
    encode_gray_png, max_projection_xy, max_projection_xz, render_projections, RenderScale,
};
pub use ssim::{ssim_volume, DEFAULT_WINDOW_SIGMA};
