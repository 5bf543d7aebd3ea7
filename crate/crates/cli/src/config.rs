//! Pipeline configuration: one TOML file with a section per stage, CLI
//! flag overrides addressed by config path (`--tracker.max-age 2`), and a
//! `TRAJFORGE_SEED` environment override for the global seeds. Unknown
//! keys are rejected at load time.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use trajforge_core::dataset::WindowConfig;
use trajforge_core::metrics::MetricsConfig;
use trajforge_core::sim::{DetectorProfile, MotionMix, SceneConfig, ScoreModel};
use trajforge_core::tracker::{AssociationCost, TrackerConfig};
use trajforge_core::train::{OptimizerKind, TrainConfig};

pub const SEED_ENV_VAR: &str = "TRAJFORGE_SEED";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MotionMixSection {
    pub constant_velocity: f64,
    pub constant_turn: f64,
    pub stop_and_go: f64,
    pub lane_change: f64,
}

impl Default for MotionMixSection {
    fn default() -> Self {
        let m = MotionMix::default();
        MotionMixSection {
            constant_velocity: m.constant_velocity,
            constant_turn: m.constant_turn,
            stop_and_go: m.stop_and_go,
            lane_change: m.lane_change,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub duration: f64,
    pub frame_hz: f64,
    pub n_agents: [usize; 2],
    pub roi: f64,
    pub motion_mix: MotionMixSection,
    pub seed: u64,
    /// Scenes generated by `simulate` when no count flag is given.
    pub count: usize,
}

impl Default for SceneSection {
    fn default() -> Self {
        let s = SceneConfig::default();
        SceneSection {
            duration: s.duration,
            frame_hz: s.frame_hz,
            n_agents: [s.n_agents.0, s.n_agents.1],
            roi: s.roi,
            motion_mix: MotionMixSection::default(),
            seed: s.seed,
            count: 10,
        }
    }
}

impl SceneSection {
    pub fn to_core(&self) -> SceneConfig {
        SceneConfig {
            duration: self.duration,
            frame_hz: self.frame_hz,
            n_agents: (self.n_agents[0], self.n_agents[1]),
            roi: self.roi,
            motion_mix: MotionMix {
                constant_velocity: self.motion_mix.constant_velocity,
                constant_turn: self.motion_mix.constant_turn,
                stop_and_go: self.motion_mix.stop_and_go,
                lane_change: self.motion_mix.lane_change,
            },
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScoreModelSection {
    pub tp_mean: f64,
    pub tp_sigma: f64,
    pub fp_mean: f64,
    pub fp_sigma: f64,
}

impl Default for ScoreModelSection {
    fn default() -> Self {
        let s = ScoreModel::default();
        ScoreModelSection {
            tp_mean: s.tp_mean,
            tp_sigma: s.tp_sigma,
            fp_mean: s.fp_mean,
            fp_sigma: s.fp_sigma,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub profile_id: String,
    pub pos_sigma: f64,
    pub dim_sigma: f64,
    pub yaw_sigma: f64,
    pub miss_base: f64,
    pub miss_range_coeff: f64,
    pub fp_rate: f64,
    pub score_model: ScoreModelSection,
    pub detect_hz: f64,
    /// Association gate used when tracking this profile's detections;
    /// low-rate detectors need a wider gate because agents move farther
    /// between frames. Defaults to tracker.gate_center_distance.
    pub tracker_gate: Option<f64>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let d = DetectorProfile::default();
        DetectorSection {
            profile_id: d.profile_id,
            pos_sigma: d.pos_sigma,
            dim_sigma: d.dim_sigma,
            yaw_sigma: d.yaw_sigma,
            miss_base: d.miss_base,
            miss_range_coeff: d.miss_range_coeff,
            fp_rate: d.fp_rate,
            score_model: ScoreModelSection::default(),
            detect_hz: d.detect_hz,
            tracker_gate: None,
        }
    }
}

impl DetectorSection {
    pub fn to_core(&self) -> DetectorProfile {
        DetectorProfile {
            profile_id: self.profile_id.clone(),
            pos_sigma: self.pos_sigma,
            dim_sigma: self.dim_sigma,
            yaw_sigma: self.yaw_sigma,
            miss_base: self.miss_base,
            miss_range_coeff: self.miss_range_coeff,
            fp_rate: self.fp_rate,
            score_model: ScoreModel {
                tp_mean: self.score_model.tp_mean,
                tp_sigma: self.score_model.tp_sigma,
                fp_mean: self.score_model.fp_mean,
                fp_sigma: self.score_model.fp_sigma,
            },
            detect_hz: self.detect_hz,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerSection {
    pub nms_score_threshold: f64,
    pub nms_iou_threshold: f64,
    pub gate_center_distance: f64,
    pub min_hits: usize,
    pub max_age: usize,
    pub process_noise_q: [f64; 6],
    pub measurement_noise_r: [f64; 4],
    /// "center_distance" or "neg_iou".
    pub association_cost: String,
}

impl Default for TrackerSection {
    fn default() -> Self {
        let t = TrackerConfig::default();
        TrackerSection {
            nms_score_threshold: t.nms_score_threshold,
            nms_iou_threshold: t.nms_iou_threshold,
            gate_center_distance: t.gate_center_distance,
            min_hits: t.min_hits,
            max_age: t.max_age,
            process_noise_q: t.process_noise_q,
            measurement_noise_r: t.measurement_noise_r,
            association_cost: "center_distance".to_string(),
        }
    }
}

impl TrackerSection {
    pub fn to_core(&self) -> anyhow::Result<TrackerConfig> {
        let association_cost = match self.association_cost.as_str() {
            "center_distance" => AssociationCost::CenterDistance,
            "neg_iou" => AssociationCost::NegIou,
            other => bail!("unknown association_cost `{other}`"),
        };
        Ok(TrackerConfig {
            nms_score_threshold: self.nms_score_threshold,
            nms_iou_threshold: self.nms_iou_threshold,
            gate_center_distance: self.gate_center_distance,
            min_hits: self.min_hits,
            max_age: self.max_age,
            process_noise_q: self.process_noise_q,
            measurement_noise_r: self.measurement_noise_r,
            association_cost,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSection {
    pub past_len: usize,
    pub future_len: usize,
    pub stride: usize,
    pub allowed_classes: Vec<u16>,
}

impl Default for WindowSection {
    fn default() -> Self {
        let w = WindowConfig::default();
        WindowSection {
            past_len: w.past_len,
            future_len: w.future_len,
            stride: w.stride,
            allowed_classes: w.allowed_classes.into_iter().collect(),
        }
    }
}

impl WindowSection {
    pub fn to_core(&self) -> WindowConfig {
        WindowConfig {
            past_len: self.past_len,
            future_len: self.future_len,
            stride: self.stride,
            allowed_classes: BTreeSet::from_iter(self.allowed_classes.iter().cloned()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ForecasterSection {
    pub hidden: usize,
    pub modes: usize,
}

impl Default for ForecasterSection {
    fn default() -> Self {
        ForecasterSection {
            hidden: trajforge_core::forecaster::DEFAULT_HIDDEN,
            modes: trajforge_core::forecaster::DEFAULT_MODES,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_finetune_factor: f64,
    /// "sgd", "momentum" or "adam".
    pub optimizer: String,
    pub seed: u64,
    pub eval_every: usize,
    pub grad_clip: Option<f64>,
    pub lambda_conf: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: 20,
            batch_size: t.batch_size,
            lr: t.lr,
            lr_finetune_factor: t.lr_finetune_factor,
            optimizer: "adam".to_string(),
            seed: t.seed,
            eval_every: t.eval_every,
            grad_clip: t.grad_clip,
            lambda_conf: t.lambda_conf,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self, metrics: &MetricsSection) -> anyhow::Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "sgd" => OptimizerKind::Sgd,
            "momentum" => OptimizerKind::Momentum,
            "adam" => OptimizerKind::Adam,
            other => bail!("unknown optimizer `{other}`"),
        };
        Ok(TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            lr_finetune_factor: self.lr_finetune_factor,
            optimizer,
            seed: self.seed,
            eval_every: self.eval_every,
            grad_clip: self.grad_clip,
            lambda_conf: self.lambda_conf,
            metrics: metrics.to_core(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub k: usize,
    pub miss_threshold: f64,
    pub match_threshold: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let m = MetricsConfig::default();
        MetricsSection {
            k: m.k,
            miss_threshold: m.miss_threshold,
            match_threshold: m.match_threshold,
        }
    }
}

impl MetricsSection {
    pub fn to_core(&self) -> MetricsConfig {
        MetricsConfig {
            k: self.k,
            miss_threshold: self.miss_threshold,
            match_threshold: self.match_threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Labeled fractions swept by `experiment ppt`.
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Detector profiles mined for pseudo labels; the first is the default
    /// source for quality assessment and end-to-end evaluation.
    pub pseudo_sources: Vec<String>,
    pub labeled_scenes: usize,
    pub val_scenes: usize,
    pub pseudo_scenes: usize,
    /// Fixed sample budget of the diversity comparison.
    pub diversity_samples: usize,
    /// Epoch budget of pretraining runs; fine-tune and scratch runs use
    /// train.epochs. Defaults to train.epochs.
    pub pretrain_epochs: Option<usize>,
    /// Alternate scene regime for the generalization experiment.
    pub alt_scene: Option<SceneSection>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            fractions: vec![0.01, 0.1, 1.0],
            seeds: vec![0, 1, 2],
            pseudo_sources: vec!["moderate".to_string()],
            labeled_scenes: 200,
            val_scenes: 50,
            pseudo_scenes: 1000,
            diversity_samples: 8000,
            pretrain_epochs: None,
            alt_scene: None,
        }
    }
}

/// Full pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub scene: SceneSection,
    pub detector: Vec<DetectorSection>,
    pub tracker: TrackerSection,
    pub window: WindowSection,
    pub forecaster: ForecasterSection,
    pub train: TrainSection,
    pub metrics: MetricsSection,
    pub experiment: ExperimentSection,
}

impl PipelineConfig {
    pub fn profile(&self, id: &str) -> anyhow::Result<DetectorProfile> {
        self.detector
            .iter()
            .find(|d| d.profile_id == id)
            .map(|d| d.to_core())
            .ok_or_else(|| anyhow!("detector profile `{id}` not found in config"))
    }

    /// Tracker configuration for one profile's detections, honoring the
    /// profile's gate override.
    pub fn tracker_for(&self, profile_id: &str) -> anyhow::Result<TrackerConfig> {
        let mut tracker = self.tracker.to_core()?;
        if let Some(section) = self.detector.iter().find(|d| d.profile_id == profile_id) {
            if let Some(gate) = section.tracker_gate {
                tracker.gate_center_distance = gate;
            }
        }
        Ok(tracker)
    }

    /// Validate every section against the library invariants.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.scene
            .to_core()
            .validate()
            .map_err(|e| anyhow!("scene: {e}"))?;
        let mut ids = BTreeSet::new();
        for d in &self.detector {
            d.to_core()
                .validate()
                .map_err(|e| anyhow!("detector `{}`: {e}", d.profile_id))?;
            if !ids.insert(d.profile_id.clone()) {
                bail!("duplicate detector profile_id `{}`", d.profile_id);
            }
        }
        self.tracker
            .to_core()?
            .validate()
            .map_err(|e| anyhow!("tracker: {e}"))?;
        self.window
            .to_core()
            .validate()
            .map_err(|e| anyhow!("window: {e}"))?;
        self.train
            .to_core(&self.metrics)?
            .validate()
            .map_err(|e| anyhow!("train: {e}"))?;
        self.metrics
            .to_core()
            .validate()
            .map_err(|e| anyhow!("metrics: {e}"))?;
        if self.forecaster.hidden < 1 || self.forecaster.modes < 1 {
            bail!("forecaster: hidden and modes must be >= 1");
        }
        for f in &self.experiment.fractions {
            if !(*f > 0.0 && *f <= 1.0) {
                bail!("experiment: fraction {f} outside (0, 1]");
            }
        }
        if let Some(alt) = &self.experiment.alt_scene {
            alt.to_core()
                .validate()
                .map_err(|e| anyhow!("experiment.alt_scene: {e}"))?;
        }
        Ok(())
    }

    /// Canonical serialized form used for hashing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// One `--section.key value` override, addressed by config path with
/// hyphens standing in for underscores.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub raw_value: String,
}

/// Split CLI arguments into dotted-path config overrides and the rest.
/// Both `--a.b=v` and `--a.b v` forms are accepted.
pub fn partition_overrides(args: Vec<String>) -> anyhow::Result<(Vec<String>, Vec<Override>)> {
    let mut rest = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter().peekable();
    while let Some(arg) = iter.next() {
        let Some(name) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        if !name.contains('.') {
            rest.push(arg);
            continue;
        }
        let (path_str, value) = match name.split_once('=') {
            Some((p, v)) => (p.to_string(), v.to_string()),
            None => {
                let v = iter
                    .next()
                    .ok_or_else(|| anyhow!("missing value for override --{name}"))?;
                (name.to_string(), v)
            }
        };
        let path = path_str
            .split('.')
            .map(|s| s.replace('-', "_"))
            .collect::<Vec<_>>();
        overrides.push(Override {
            path,
            raw_value: value,
        });
    }
    Ok((rest, overrides))
}

fn parse_toml_value(raw: &str) -> toml::Value {
    // try the native TOML scalar/array grammar first, fall back to a string
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Value, path: &[String], value: toml::Value) -> anyhow::Result<()> {
    let mut cur = root;
    for (i, seg) in path.iter().enumerate() {
        let last = i + 1 == path.len();
        if let Ok(index) = seg.parse::<usize>() {
            let arr = cur
                .as_array_mut()
                .ok_or_else(|| anyhow!("config path segment `{seg}` indexes a non-array"))?;
            if index >= arr.len() {
                bail!("config path index {index} out of bounds");
            }
            if last {
                arr[index] = value;
                return Ok(());
            }
            cur = &mut arr[index];
        } else {
            let table = cur
                .as_table_mut()
                .ok_or_else(|| anyhow!("config path segment `{seg}` descends into a non-table"))?;
            if last {
                table.insert(seg.clone(), value);
                return Ok(());
            }
            cur = table
                .entry(seg.clone())
                .or_insert(toml::Value::Table(toml::Table::new()));
        }
    }
    Ok(())
}

/// Load a config file, apply overrides, then the seed environment
/// override, and validate.
pub fn load_config(path: Option<&Path>, overrides: &[Override]) -> anyhow::Result<PipelineConfig> {
    let mut root: toml::Value = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => toml::Value::Table(toml::Table::new()),
    };
    for ov in overrides {
        apply_override(&mut root, &ov.path, parse_toml_value(&ov.raw_value))
            .with_context(|| format!("applying override {}", ov.path.join(".")))?;
    }
    let mut cfg: PipelineConfig = root
        .try_into()
        .map_err(|e| anyhow!("invalid config: {e}"))?;
    if cfg.detector.is_empty() {
        cfg.detector.push(DetectorSection::default());
    }
    if let Ok(seed) = std::env::var(SEED_ENV_VAR) {
        let seed: u64 = seed
            .parse()
            .with_context(|| format!("{SEED_ENV_VAR} must be an integer"))?;
        cfg.scene.seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}
