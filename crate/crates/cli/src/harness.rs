//! In-memory benchmark pipeline shared by the experiment subcommands: scene
//! pools, pseudo-label mining, paired pretrain/fine-tune/scratch runs, and
//! end-to-end evaluation inputs. Everything derives child seeds from one
//! study seed, so a study is reproducible and seeds can run in parallel.

use std::collections::BTreeMap;

use anyhow::{anyhow, Context};
use rayon::prelude::*;

use trajforge_core::dataset::{
    fraction_samples, merge_sets, window_samples, windows_past_world, windows_world,
    ForecastSample, SplitSpec, SplitUnit, WindowConfig,
};
use trajforge_core::forecaster::ForecasterParams;
use trajforge_core::geometry::{Provenance, Trajectory};
use trajforge_core::metrics::{
    assess_pseudo_quality, map_f, E2EReport, E2ePrediction, E2eTarget, MetricsConfig,
    MetricsReport, QualityReport,
};
use trajforge_core::rng::{derive_seed, rng_from_seed};
use trajforge_core::sim::{detect, generate_scene, gt_frames, SceneConfig};
use trajforge_core::tracker::{track_sequence, TrackerConfig};
use trajforge_core::train::{train, EpochRecord, TrainConfig, TrainInit, TrainRun};

use crate::config::PipelineConfig;

const STREAM_LABELED: u64 = 0x1_0000;
const STREAM_VAL: u64 = 0x2_0000;
const STREAM_PSEUDO: u64 = 0x3_0000;
const STREAM_DETECT: u64 = 0x44;
const STREAM_TRAIN: u64 = 0x99;
const STREAM_FRACTION: u64 = 0x21;
const STREAM_SUBSET: u64 = 0x22;
const STREAM_ALT_VAL: u64 = 0x5_0000;

/// Generate a pool of scenes with per-scene derived seeds.
pub fn simulate_pool(
    scene: &SceneConfig,
    count: usize,
    prefix: &str,
    master_seed: u64,
    stream: u64,
) -> anyhow::Result<Vec<Vec<Trajectory>>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut cfg = scene.clone();
            cfg.seed = derive_seed(master_seed, stream + i as u64);
            let id = format!("{prefix}_{i:05}");
            generate_scene(&cfg, &id).map_err(|e| anyhow!("scene {id}: {e}"))
        })
        .collect()
}

/// Detect and track one scene pool under a profile. Returns pseudo
/// trajectories flattened over scenes.
pub fn mine_pseudo(
    scenes: &[Vec<Trajectory>],
    cfg: &PipelineConfig,
    profile_id: &str,
    master_seed: u64,
) -> anyhow::Result<Vec<Trajectory>> {
    let profile = cfg.profile(profile_id)?;
    let tracker: TrackerConfig = cfg.tracker_for(profile_id)?;
    let roi = cfg.scene.roi;
    let profile_idx = cfg
        .detector
        .iter()
        .position(|d| d.profile_id == profile_id)
        .unwrap_or(0) as u64;
    let detect_seed = derive_seed(derive_seed(master_seed, STREAM_DETECT), profile_idx);

    let per_scene: Vec<Vec<Trajectory>> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, gt)| {
            let frames = gt_frames(gt).map_err(|e| anyhow!("scene {i}: {e}"))?;
            let dets = detect(&frames, &profile, roi, derive_seed(detect_seed, i as u64))
                .map_err(|e| anyhow!("scene {i}: {e}"))?;
            track_sequence(&dets, &tracker, Provenance::Pseudo(profile_id.to_string()))
                .map_err(|e| anyhow!("scene {i}: {e}"))
        })
        .collect::<anyhow::Result<_>>()?;
    Ok(per_scene.into_iter().flatten().collect())
}

/// All per-seed data of one study: labeled/validation windows plus pseudo
/// sample sets per detector profile.
pub struct SeedBench {
    pub seed: u64,
    pub labeled_samples: Vec<ForecastSample>,
    pub val_samples: Vec<ForecastSample>,
    pub val_gt_trajs: Vec<Trajectory>,
    pub pseudo_samples: BTreeMap<String, Vec<ForecastSample>>,
    pub pseudo_val_trajs: BTreeMap<String, Vec<Trajectory>>,
    /// Validation windows of the alternate scene regime, when configured.
    pub alt_val_samples: Vec<ForecastSample>,
}

pub fn build_seed_bench(cfg: &PipelineConfig, seed: u64) -> anyhow::Result<SeedBench> {
    let scene = cfg.scene.to_core();
    let wcfg: WindowConfig = cfg.window.to_core();
    let exp = &cfg.experiment;

    let labeled_scenes = simulate_pool(&scene, exp.labeled_scenes, "train", seed, STREAM_LABELED)?;
    let val_scenes = simulate_pool(&scene, exp.val_scenes, "val", seed, STREAM_VAL)?;
    let pseudo_scenes = simulate_pool(&scene, exp.pseudo_scenes, "mine", seed, STREAM_PSEUDO)?;

    let labeled_flat: Vec<Trajectory> = labeled_scenes.iter().flatten().cloned().collect();
    let val_flat: Vec<Trajectory> = val_scenes.iter().flatten().cloned().collect();
    let labeled_samples = window_samples(&labeled_flat, &wcfg).context("windowing labeled set")?;
    let val_samples = window_samples(&val_flat, &wcfg).context("windowing validation set")?;

    let mut pseudo_samples = BTreeMap::new();
    let mut pseudo_val_trajs = BTreeMap::new();
    for source in &exp.pseudo_sources {
        let mined = mine_pseudo(&pseudo_scenes, cfg, source, seed)?;
        let samples = window_samples(&mined, &wcfg)
            .with_context(|| format!("windowing pseudo set `{source}`"))?;
        pseudo_samples.insert(source.clone(), samples);
        let mined_val = mine_pseudo(&val_scenes, cfg, source, seed)?;
        pseudo_val_trajs.insert(source.clone(), mined_val);
    }

    let alt_val_samples = match &exp.alt_scene {
        Some(alt) => {
            let alt_scenes =
                simulate_pool(&alt.to_core(), exp.val_scenes, "altval", seed, STREAM_ALT_VAL)?;
            let flat: Vec<Trajectory> = alt_scenes.iter().flatten().cloned().collect();
            window_samples(&flat, &wcfg).context("windowing alternate validation set")?
        }
        None => Vec::new(),
    };

    Ok(SeedBench {
        seed,
        labeled_samples,
        val_samples,
        val_gt_trajs: val_flat,
        pseudo_samples,
        pseudo_val_trajs,
        alt_val_samples,
    })
}

/// Training configuration for this study seed.
pub fn train_config(cfg: &PipelineConfig, seed: u64) -> anyhow::Result<TrainConfig> {
    let mut tc = cfg.train.to_core(&cfg.metrics)?;
    tc.seed = derive_seed(seed, STREAM_TRAIN);
    Ok(tc)
}

/// Pretraining variant of the config: larger epoch budget when configured.
fn pretrain_tc(cfg: &PipelineConfig, tc: &TrainConfig) -> TrainConfig {
    let mut ptc = tc.clone();
    if let Some(epochs) = cfg.experiment.pretrain_epochs {
        ptc.epochs = epochs;
    }
    ptc
}

fn final_val(run: &TrainRun) -> anyhow::Result<MetricsReport> {
    run.history
        .last()
        .and_then(|r| r.val)
        .ok_or_else(|| anyhow!("run recorded no validation metrics"))
}

fn val_curve(history: &[EpochRecord]) -> Vec<(usize, f64)> {
    history
        .iter()
        .filter_map(|r| r.val.map(|v| (r.epoch + 1, v.brier_fde)))
        .collect()
}

/// Uniform random subset of `n` samples, deterministic and in input order.
pub fn take_uniform(samples: &[ForecastSample], n: usize, seed: u64) -> Vec<ForecastSample> {
    use rand::seq::SliceRandom;
    if n >= samples.len() {
        return samples.to_vec();
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = rng_from_seed(seed);
    order.shuffle(&mut rng);
    let mut selected: Vec<usize> = order.into_iter().take(n).collect();
    selected.sort_unstable();
    selected.into_iter().map(|i| samples[i].clone()).collect()
}

/// Paired result at one labeled fraction.
#[derive(Debug, Clone)]
pub struct FractionResult {
    pub fraction: f64,
    pub ppt: MetricsReport,
    pub scratch: MetricsReport,
    pub ppt_curve: Vec<(usize, f64)>,
    pub scratch_curve: Vec<(usize, f64)>,
    pub ppt_params: ForecasterParams,
    pub scratch_params: ForecasterParams,
}

impl FractionResult {
    /// Relative change of PPT over scratch in percent; negative is better.
    pub fn rel_improvement(&self) -> [f64; 4] {
        let rel = |ppt: f64, base: f64| {
            if base.abs() < 1e-12 {
                0.0
            } else {
                (ppt - base) / base * 100.0
            }
        };
        [
            rel(self.ppt.brier_fde, self.scratch.brier_fde),
            rel(self.ppt.min_ade, self.scratch.min_ade),
            rel(self.ppt.min_fde, self.scratch.min_fde),
            rel(self.ppt.miss_rate, self.scratch.miss_rate),
        ]
    }
}

/// Pretrain once on the full default pseudo source.
pub fn pretrain_run(
    cfg: &PipelineConfig,
    bench: &SeedBench,
    tc: &TrainConfig,
) -> anyhow::Result<TrainRun> {
    let source = cfg
        .experiment
        .pseudo_sources
        .first()
        .ok_or_else(|| anyhow!("experiment.pseudo_sources is empty"))?;
    let pseudo = &bench.pseudo_samples[source];
    if pseudo.is_empty() {
        return Err(anyhow!("empty pre-training set"));
    }
    train(
        TrainInit::Pretrain {
            hidden: cfg.forecaster.hidden,
            modes: cfg.forecaster.modes,
        },
        pseudo,
        &bench.val_samples,
        &pretrain_tc(cfg, tc),
    )
    .map_err(|e| anyhow!("pretraining: {e}"))
}

/// Fine-tune from the pretrained checkpoint and train the scratch baseline
/// on the identical labeled fraction. Reusing the shared pretrain run is
/// equivalent to rerunning it per fraction because training is
/// deterministic in (config, data, seed).
pub fn fraction_result(
    cfg: &PipelineConfig,
    bench: &SeedBench,
    pretrain: &TrainRun,
    fraction: f64,
    tc: &TrainConfig,
) -> anyhow::Result<FractionResult> {
    let spec = SplitSpec {
        fraction,
        seed: derive_seed(tc.seed, STREAM_FRACTION),
        unit: SplitUnit::PerTrajectory,
    };
    let subset = fraction_samples(&bench.labeled_samples, &spec)
        .map_err(|e| anyhow!("fraction draw: {e}"))?;
    let ppt = train(
        TrainInit::Finetune(pretrain.final_params.clone()),
        &subset,
        &bench.val_samples,
        tc,
    )
    .map_err(|e| anyhow!("fine-tuning at fraction {fraction}: {e}"))?;
    let scratch = train(
        TrainInit::Scratch {
            hidden: cfg.forecaster.hidden,
            modes: cfg.forecaster.modes,
        },
        &subset,
        &bench.val_samples,
        tc,
    )
    .map_err(|e| anyhow!("scratch training at fraction {fraction}: {e}"))?;
    Ok(FractionResult {
        fraction,
        ppt: final_val(&ppt)?,
        scratch: final_val(&scratch)?,
        ppt_curve: val_curve(&ppt.history),
        scratch_curve: val_curve(&scratch.history),
        ppt_params: ppt.final_params,
        scratch_params: scratch.final_params,
    })
}

/// Final validation Brier-FDE of a pretrain-only run on a per-trajectory
/// fraction of the pseudo set.
pub fn quantity_brier(
    cfg: &PipelineConfig,
    bench: &SeedBench,
    pretrain_full: &TrainRun,
    pseudo_fraction: f64,
    tc: &TrainConfig,
) -> anyhow::Result<f64> {
    if (pseudo_fraction - 1.0).abs() < 1e-12 {
        return Ok(final_val(pretrain_full)?.brier_fde);
    }
    let source = &cfg.experiment.pseudo_sources[0];
    let spec = SplitSpec {
        fraction: pseudo_fraction,
        seed: derive_seed(tc.seed, STREAM_SUBSET),
        unit: SplitUnit::PerTrajectory,
    };
    let subset = fraction_samples(&bench.pseudo_samples[source], &spec)
        .map_err(|e| anyhow!("pseudo fraction draw: {e}"))?;
    let run = train(
        TrainInit::Pretrain {
            hidden: cfg.forecaster.hidden,
            modes: cfg.forecaster.modes,
        },
        &subset,
        &bench.val_samples,
        &pretrain_tc(cfg, tc),
    )
    .map_err(|e| anyhow!("pretrain at pseudo fraction {pseudo_fraction}: {e}"))?;
    Ok(final_val(&run)?.brier_fde)
}

/// Fixed-budget diversity comparison over the first two pseudo sources.
///
/// Three arms share one sample budget: each source alone and the
/// half-and-half mix. Committing to a single detector is a coin flip over
/// the sources, so the single-profile baseline is the mean of the two
/// single-source arms.
#[derive(Debug, Clone, Copy)]
pub struct DiversityArms {
    pub only_first: f64,
    pub only_second: f64,
    pub dual: f64,
}

impl DiversityArms {
    pub fn single_profile_mean(&self) -> f64 {
        0.5 * (self.only_first + self.only_second)
    }
}

pub fn diversity_arms(
    cfg: &PipelineConfig,
    bench: &SeedBench,
    tc: &TrainConfig,
) -> anyhow::Result<DiversityArms> {
    let sources = &cfg.experiment.pseudo_sources;
    if sources.len() < 2 {
        return Err(anyhow!(
            "diversity comparison needs at least two pseudo_sources"
        ));
    }
    let a = &bench.pseudo_samples[&sources[0]];
    let b = &bench.pseudo_samples[&sources[1]];
    let budget = cfg
        .experiment
        .diversity_samples
        .min(a.len())
        .min(b.len());
    let seed_a = derive_seed(tc.seed, 0x31);
    let seed_b = derive_seed(tc.seed, 0x32);

    let only_a = take_uniform(a, budget, seed_a);
    let only_b = take_uniform(b, budget, seed_b);
    let dual = merge_sets(&[
        take_uniform(a, budget / 2, seed_a),
        take_uniform(b, budget - budget / 2, seed_b),
    ])
    .map_err(|e| anyhow!("merging diversity sets: {e}"))?;

    let spec = TrainInit::Pretrain {
        hidden: cfg.forecaster.hidden,
        modes: cfg.forecaster.modes,
    };
    let ptc = pretrain_tc(cfg, tc);
    let run_arm = |data: &[ForecastSample], name: &str| -> anyhow::Result<f64> {
        let run = train(spec.clone(), data, &bench.val_samples, &ptc)
            .map_err(|e| anyhow!("{name} pretrain: {e}"))?;
        Ok(final_val(&run)?.brier_fde)
    };
    Ok(DiversityArms {
        only_first: run_arm(&only_a, "first-source")?,
        only_second: run_arm(&only_b, "second-source")?,
        dual: run_arm(&dual, "dual-source")?,
    })
}

/// Build end-to-end evaluation inputs: forecasts from tracked pasts
/// against ground-truth futures at the same anchors.
pub fn e2e_inputs(
    cfg: &PipelineConfig,
    tracked: &[Trajectory],
    val_gt: &[Trajectory],
    params: &ForecasterParams,
) -> anyhow::Result<(Vec<E2ePrediction>, Vec<E2eTarget>)> {
    let wcfg = cfg.window.to_core();

    let gt_windows =
        windows_world(val_gt, &wcfg).map_err(|e| anyhow!("ground-truth windows: {e}"))?;
    let max_anchor: f64 = gt_windows
        .iter()
        .map(|w| w.anchor_t)
        .fold(f64::NEG_INFINITY, f64::max);

    let targets: Vec<E2eTarget> = gt_windows
        .iter()
        .map(|w| E2eTarget {
            group: (w.scene_id.clone(), (w.anchor_t * 10.0).round() as i64),
            first_pos: *w.past.last().unwrap(),
            future: w.future.clone(),
        })
        .collect();

    let past_windows = windows_past_world(tracked, &wcfg)
        .map_err(|e| anyhow!("tracked past windows: {e}"))?;
    let mut preds = Vec::new();
    for w in &past_windows {
        if w.anchor_t > max_anchor + 1e-9 {
            continue;
        }
        let sample = trajforge_core::dataset::window_to_sample(w, 0);
        let out = trajforge_core::forecaster::forward(params, &sample)
            .map_err(|e| anyhow!("forecast: {e}"))?;
        let modes_world: Vec<Vec<[f64; 2]>> = out
            .modes
            .iter()
            .map(|mode| mode.iter().map(|&p| sample.to_world.to_world(p)).collect())
            .collect();
        preds.push(E2ePrediction {
            group: (w.scene_id.clone(), (w.anchor_t * 10.0).round() as i64),
            score: w.anchor_score.unwrap_or(1.0),
            first_pos: *w.past.last().unwrap(),
            modes: modes_world,
        });
    }
    Ok((preds, targets))
}

pub fn e2e_report(
    cfg: &PipelineConfig,
    tracked: &[Trajectory],
    val_gt: &[Trajectory],
    params: &ForecasterParams,
) -> anyhow::Result<E2EReport> {
    let (preds, targets) = e2e_inputs(cfg, tracked, val_gt, params)?;
    let mcfg: MetricsConfig = cfg.metrics.to_core();
    map_f(&preds, &targets, &mcfg).map_err(|e| anyhow!("end-to-end evaluation: {e}"))
}

/// Pseudo-label quality on the validation scenes for the default source.
pub fn quality_report(cfg: &PipelineConfig, bench: &SeedBench) -> anyhow::Result<QualityReport> {
    let source = &cfg.experiment.pseudo_sources[0];
    assess_pseudo_quality(
        &bench.pseudo_val_trajs[source],
        &bench.val_gt_trajs,
        &cfg.window.to_core(),
        &cfg.metrics.to_core(),
    )
    .map_err(|e| anyhow!("quality assessment: {e}"))
}

/// Everything one study seed contributes to the experiment reports.
pub struct SeedStudy {
    pub seed: u64,
    pub fractions: Vec<FractionResult>,
    /// (pseudo fraction, pretrain-only final Brier-FDE).
    pub quantity: Vec<(f64, f64)>,
    /// Pretrain-only Brier-FDE of the diversity arms.
    pub diversity: Option<DiversityArms>,
    /// Forecasting AP of (pretrain-only model, scratch model).
    pub e2e: Option<(E2EReport, E2EReport)>,
    pub quality: QualityReport,
    /// Epochs-to-plateau at fraction 1.0 for (fine-tuned, scratch).
    pub convergence: Option<(usize, usize)>,
}

/// Options controlling which study parts run.
#[derive(Debug, Clone, Copy)]
pub struct StudyParts {
    pub quantity: bool,
    pub diversity: bool,
    pub e2e: bool,
}

impl Default for StudyParts {
    fn default() -> Self {
        StudyParts {
            quantity: true,
            diversity: true,
            e2e: true,
        }
    }
}

pub fn run_seed_study(
    cfg: &PipelineConfig,
    seed: u64,
    parts: StudyParts,
) -> anyhow::Result<SeedStudy> {
    let bench = build_seed_bench(cfg, seed)?;
    let tc = train_config(cfg, seed)?;
    let pretrain = pretrain_run(cfg, &bench, &tc)?;

    let mut fractions = Vec::new();
    for &f in &cfg.experiment.fractions {
        fractions.push(fraction_result(cfg, &bench, &pretrain, f, &tc)?);
    }

    let quantity = if parts.quantity {
        let mut rows = Vec::new();
        for &pf in &[0.01, 0.1, 1.0] {
            rows.push((pf, quantity_brier(cfg, &bench, &pretrain, pf, &tc)?));
        }
        rows
    } else {
        Vec::new()
    };

    let diversity = if parts.diversity && cfg.experiment.pseudo_sources.len() >= 2 {
        Some(diversity_arms(cfg, &bench, &tc)?)
    } else {
        None
    };

    let full = fractions
        .iter()
        .find(|r| (r.fraction - 1.0).abs() < 1e-12);
    let source = &cfg.experiment.pseudo_sources[0];
    let e2e = if parts.e2e {
        match full {
            Some(full) => Some((
                e2e_report(
                    cfg,
                    &bench.pseudo_val_trajs[source],
                    &bench.val_gt_trajs,
                    &pretrain.final_params,
                )?,
                e2e_report(
                    cfg,
                    &bench.pseudo_val_trajs[source],
                    &bench.val_gt_trajs,
                    &full.scratch_params,
                )?,
            )),
            None => None,
        }
    } else {
        None
    };

    let convergence = match full {
        Some(full) => {
            let to_epoch = |curve: &[(usize, f64)]| -> Option<usize> {
                let (_, final_b) = *curve.last()?;
                curve
                    .iter()
                    .find(|(_, b)| *b <= final_b * 1.05)
                    .map(|&(e, _)| e)
            };
            match (to_epoch(&full.ppt_curve), to_epoch(&full.scratch_curve)) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => None,
            }
        }
        None => None,
    };

    let quality = quality_report(cfg, &bench)?;

    Ok(SeedStudy {
        seed,
        fractions,
        quantity,
        diversity,
        e2e,
        quality,
        convergence,
    })
}

/// Run the study for every seed in parallel, ordered by seed list.
pub fn run_all_seeds(
    cfg: &PipelineConfig,
    seeds: &[u64],
    parts: StudyParts,
) -> anyhow::Result<Vec<SeedStudy>> {
    seeds
        .par_iter()
        .map(|&s| run_seed_study(cfg, s, parts))
        .collect()
}
