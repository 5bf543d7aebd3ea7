//! trajforge-core: build pseudo-labeled trajectory datasets from synthetic
//! perception data and train/evaluate a small multi-modal forecaster on
//! them.
//!
//! The pipeline stages are plain functions over plain data:
//!
//! 1. [`sim`] generates ground-truth scenes and simulated detections.
//! 2. [`tracker`] turns detection frames into pseudo-labeled trajectories.
//! 3. [`dataset`] windows trajectories into agent-centric forecast samples.
//! 4. [`forecaster`] and [`train`] fit the multi-modal model, from scratch
//!    or pretrain-then-fine-tune.
//! 5. [`metrics`] scores forecasts, pseudo-label quality and end-to-end
//!    forecasting precision.
//!
//! Every stage is deterministic given its config and seed; see [`rng`].

pub mod assignment;
pub mod dataset;
pub mod error;
pub mod forecaster;
pub mod geometry;
pub mod metrics;
pub mod rng;
pub mod sim;
pub mod tracker;
pub mod train;

pub use assignment::hungarian;
pub use dataset::{
    fraction_samples, merge_sets, sample_fraction, window_samples, ForecastSample, Pose2,
    SplitSpec, SplitUnit, WindowConfig,
};
pub use error::{Error, Result};
pub use forecaster::{
    featurize, fit_anchors, forward, loss_and_grad, ForecastOutput, ForecasterParams,
    LossBreakdown,
};
pub use geometry::{
    bev_iou, center_distance, resample_linear, Box3D, ClassId, Provenance, TrajState, Trajectory,
};
pub use metrics::{
    assess_pseudo_quality, eval_sample, eval_set, map_f, E2EReport, E2ePrediction, E2eTarget,
    MetricsConfig, MetricsReport, QualityReport,
};
pub use sim::{detect, generate_scene, gt_frames, DetectionFrame, DetectorProfile, SceneConfig};
pub use tracker::{kalman_predict, kalman_update, nms, track_sequence, KalmanTrack, TrackerConfig};
pub use train::{
    ppt_protocol, train, OptimizerKind, PptOutcome, TrainConfig, TrainInit, TrainMode, TrainRun,
};
