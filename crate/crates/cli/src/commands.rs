//! Staged pipeline commands. Each command reads/writes the JSONL and
//! checkpoint formats, updates the run manifest next to its outputs, and
//! writes atomically.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rayon::prelude::*;

use trajforge_core::dataset::{sample_fraction, window_samples, SplitSpec, SplitUnit};
use trajforge_core::forecaster::forward;
use trajforge_core::geometry::{Provenance, Trajectory};
use trajforge_core::metrics::{assess_pseudo_quality, eval_sample, eval_set};
use trajforge_core::rng::derive_seed;
use trajforge_core::sim::{detect, generate_scene, gt_frames};
use trajforge_core::tracker::track_sequence;
use trajforge_core::train::{train, TrainInit, TrainRun};

use crate::config::PipelineConfig;
use crate::formats::{
    frames_by_scene, read_checkpoint, read_detections, read_samples, read_trajectories,
    trajs_by_scene, write_atomic, write_checkpoint, write_detections, write_json, write_samples,
    write_trajectories, CheckpointMeta, ReportJson,
};
use crate::harness::e2e_report;
use crate::manifest::{RunManifest, StageGuard};

fn out_dir_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn with_manifest(
    cfg: &PipelineConfig,
    out: &Path,
    stage_name: &str,
    inputs: &[&Path],
    run: impl FnOnce(&mut StageGuard) -> anyhow::Result<()>,
) -> anyhow::Result<()> {
    let dir = out_dir_of(out);
    std::fs::create_dir_all(&dir)?;
    let mut manifest = RunManifest::load_or_new(&dir, &cfg.canonical_json())?;
    let mut stage = StageGuard::new(stage_name);
    for input in inputs {
        stage.input(input)?;
    }
    run(&mut stage)?;
    stage.finish(&mut manifest);
    manifest.save(&dir)
}

/// Generate ground-truth scenes into a trajectory file.
pub fn cmd_simulate(
    cfg: &PipelineConfig,
    out: &Path,
    count: Option<usize>,
    offset: usize,
) -> anyhow::Result<()> {
    let scene = cfg.scene.to_core();
    let count = count.unwrap_or(cfg.scene.count);
    let trajs: Vec<Vec<Trajectory>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let idx = offset + i;
            let mut sc = scene.clone();
            sc.seed = derive_seed(scene.seed, idx as u64);
            generate_scene(&sc, &format!("scene_{idx:05}"))
                .map_err(|e| anyhow!("scene {idx}: {e}"))
        })
        .collect::<anyhow::Result<_>>()?;
    let flat: Vec<Trajectory> = trajs.into_iter().flatten().collect();
    with_manifest(cfg, out, "simulate", &[], |stage| {
        write_trajectories(out, &flat)?;
        stage.output(out)
    })
}

/// Run a detector profile over ground-truth trajectories.
pub fn cmd_detect(
    cfg: &PipelineConfig,
    gt_path: &Path,
    profile_id: &str,
    out: &Path,
) -> anyhow::Result<()> {
    let profile = cfg.profile(profile_id)?;
    let profile_idx = cfg
        .detector
        .iter()
        .position(|d| d.profile_id == profile_id)
        .unwrap_or(0) as u64;
    let by_scene = trajs_by_scene(read_trajectories(gt_path)?);
    let detect_seed = derive_seed(derive_seed(cfg.scene.seed, 0x44), profile_idx);
    let scenes: Vec<(usize, &Vec<Trajectory>)> = by_scene.values().enumerate().collect();
    let frames: Vec<Vec<trajforge_core::sim::DetectionFrame>> = scenes
        .par_iter()
        .map(|(i, trajs)| {
            let gt = gt_frames(trajs)?;
            detect(&gt, &profile, cfg.scene.roi, derive_seed(detect_seed, *i as u64))
        })
        .collect::<trajforge_core::Result<_>>()
        .map_err(|e| anyhow!("detection: {e}"))?;
    let flat: Vec<_> = frames.into_iter().flatten().collect();
    with_manifest(cfg, out, "detect", &[gt_path], |stage| {
        write_detections(out, &flat)?;
        stage.output(out)
    })
}

/// Associate detections into pseudo-labeled trajectories.
pub fn cmd_track(
    cfg: &PipelineConfig,
    detections_path: &Path,
    profile_id: &str,
    out: &Path,
) -> anyhow::Result<()> {
    let tracker = cfg.tracker_for(profile_id)?;
    let by_scene = frames_by_scene(read_detections(detections_path)?);
    if by_scene.is_empty() {
        eprintln!("warning: no detection frames in input; writing an empty trajectory file");
    }
    let scenes: Vec<&Vec<_>> = by_scene.values().collect();
    let tracked: Vec<Vec<Trajectory>> = scenes
        .par_iter()
        .map(|frames| {
            track_sequence(frames, &tracker, Provenance::Pseudo(profile_id.to_string()))
        })
        .collect::<trajforge_core::Result<_>>()
        .map_err(|e| anyhow!("tracking: {e}"))?;
    let flat: Vec<Trajectory> = tracked.into_iter().flatten().collect();
    with_manifest(cfg, out, "track", &[detections_path], |stage| {
        write_trajectories(out, &flat)?;
        stage.output(out)
    })
}

/// Window trajectory files into forecast samples, optionally drawing a
/// per-trajectory labeled fraction first.
pub fn cmd_build_dataset(
    cfg: &PipelineConfig,
    inputs: &[PathBuf],
    out: &Path,
    fraction: Option<f64>,
    fraction_seed: Option<u64>,
) -> anyhow::Result<()> {
    let mut trajs = Vec::new();
    for input in inputs {
        trajs.extend(read_trajectories(input)?);
    }
    if let Some(f) = fraction {
        let spec = SplitSpec {
            fraction: f,
            seed: fraction_seed.unwrap_or_else(|| derive_seed(cfg.train.seed, 0x21)),
            unit: SplitUnit::PerTrajectory,
        };
        trajs = sample_fraction(&trajs, &spec).map_err(|e| anyhow!("fraction draw: {e}"))?;
    }
    let samples = window_samples(&trajs, &cfg.window.to_core())
        .map_err(|e| anyhow!("windowing: {e}"))?;
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    with_manifest(cfg, out, "build-dataset", &input_refs, |stage| {
        write_samples(out, &samples)?;
        stage.output(out)
    })
}

fn history_csv(run: &TrainRun) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "epoch",
        "split",
        "loss",
        "minADE",
        "minFDE",
        "brier_fde",
        "miss_rate",
        "effective_lr",
    ])?;
    for rec in &run.history {
        w.write_record([
            rec.epoch.to_string(),
            "train".to_string(),
            format!("{}", rec.train_loss.total),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            format!("{}", rec.effective_lr),
        ])?;
        if let Some(val) = &rec.val {
            w.write_record([
                rec.epoch.to_string(),
                "val".to_string(),
                String::new(),
                format!("{}", val.min_ade),
                format!("{}", val.min_fde),
                format!("{}", val.brier_fde),
                format!("{}", val.miss_rate),
                format!("{}", rec.effective_lr),
            ])?;
        }
    }
    w.into_inner().context("flushing history csv")
}

pub enum TrainMode {
    Scratch,
    Pretrain,
    Finetune { init: PathBuf },
}

/// Train a forecaster on a sample file and write checkpoint + history.
pub fn cmd_train(
    cfg: &PipelineConfig,
    data_path: &Path,
    val_path: Option<&Path>,
    mode: TrainMode,
    out: &Path,
    history_path: Option<&Path>,
) -> anyhow::Result<()> {
    let data = read_samples(data_path)?;
    let val = match val_path {
        Some(p) => read_samples(p)?,
        None => Vec::new(),
    };
    let tc = cfg.train.to_core(&cfg.metrics)?;
    let (init, provenance) = match &mode {
        TrainMode::Scratch => (
            TrainInit::Scratch {
                hidden: cfg.forecaster.hidden,
                modes: cfg.forecaster.modes,
            },
            "scratch".to_string(),
        ),
        TrainMode::Pretrain => (
            TrainInit::Pretrain {
                hidden: cfg.forecaster.hidden,
                modes: cfg.forecaster.modes,
            },
            "pretrain".to_string(),
        ),
        TrainMode::Finetune { init } => {
            let (params, meta) = read_checkpoint(init)?;
            (
                TrainInit::Finetune(params),
                format!("finetune<-{}", meta.provenance),
            )
        }
    };
    let run = train(init, &data, &val, &tc).map_err(|e| anyhow!("training: {e}"))?;

    let mut inputs: Vec<&Path> = vec![data_path];
    if let Some(p) = val_path {
        inputs.push(p);
    }
    if let TrainMode::Finetune { init } = &mode {
        inputs.push(init.as_path());
    }
    with_manifest(cfg, out, "train", &inputs, |stage| {
        write_checkpoint(
            out,
            &run.final_params,
            &CheckpointMeta {
                seed: tc.seed,
                provenance,
            },
        )?;
        stage.output(out)?;
        if let Some(hp) = history_path {
            write_atomic(hp, &history_csv(&run)?)?;
            stage.output(hp)?;
        }
        Ok(())
    })
}

/// Evaluate a checkpoint on a sample file; writes a JSON report and
/// optionally a one-row CSV.
pub fn cmd_eval(
    cfg: &PipelineConfig,
    checkpoint: &Path,
    samples_path: &Path,
    out: &Path,
    out_csv: Option<&Path>,
) -> anyhow::Result<()> {
    let (params, _) = read_checkpoint(checkpoint)?;
    let samples = read_samples(samples_path)?;
    let mcfg = cfg.metrics.to_core();
    let eff = trajforge_core::metrics::MetricsConfig {
        k: mcfg.k.min(params.modes),
        ..mcfg
    };
    let evals = samples
        .iter()
        .map(|s| {
            let out = forward(&params, s)?;
            eval_sample(&out, &s.future, &eff)
        })
        .collect::<trajforge_core::Result<Vec<_>>>()
        .map_err(|e| anyhow!("evaluation: {e}"))?;
    let report = eval_set(&evals).map_err(|e| anyhow!("evaluation: {e}"))?;

    with_manifest(cfg, out, "eval", &[checkpoint, samples_path], |stage| {
        write_json(out, &ReportJson::from(&report))?;
        stage.output(out)?;
        if let Some(csv_path) = out_csv {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["n_samples", "min_ade", "min_fde", "brier_fde", "miss_rate"])?;
            w.write_record([
                report.n_samples.to_string(),
                format!("{}", report.min_ade),
                format!("{}", report.min_fde),
                format!("{}", report.brier_fde),
                format!("{}", report.miss_rate),
            ])?;
            write_atomic(csv_path, &w.into_inner().context("flushing csv")?)?;
            stage.output(csv_path)?;
        }
        Ok(())
    })
}

#[derive(serde::Serialize)]
struct QualityJson {
    n_gt_windows: usize,
    n_pseudo_windows: usize,
    n_matched: usize,
    match_rate: f64,
    metrics: Option<ReportJson>,
}

/// Score a pseudo-labeled trajectory file against ground truth.
pub fn cmd_assess_quality(
    cfg: &PipelineConfig,
    pseudo_path: &Path,
    gt_path: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    let pseudo = read_trajectories(pseudo_path)?;
    let gt = read_trajectories(gt_path)?;
    let report = assess_pseudo_quality(&pseudo, &gt, &cfg.window.to_core(), &cfg.metrics.to_core())
        .map_err(|e| anyhow!("quality assessment: {e}"))?;
    if report.n_matched == 0 {
        eprintln!("warning: no pseudo/ground-truth window pairs matched");
    }
    with_manifest(cfg, out, "assess-quality", &[pseudo_path, gt_path], |stage| {
        write_json(
            out,
            &QualityJson {
                n_gt_windows: report.n_gt_windows,
                n_pseudo_windows: report.n_pseudo_windows,
                n_matched: report.n_matched,
                match_rate: report.match_rate,
                metrics: report.metrics.as_ref().map(ReportJson::from),
            },
        )?;
        stage.output(out)
    })
}

#[derive(serde::Serialize)]
struct E2eJson {
    map_f: f64,
    n_true_positives: usize,
    n_false_predictions: usize,
    n_missed_gt: usize,
    tp_min_ade: Option<f64>,
    tp_min_fde: Option<f64>,
}

/// End-to-end evaluation: forecast from tracked pasts, match against
/// ground-truth futures, report forecasting AP.
pub fn cmd_eval_e2e(
    cfg: &PipelineConfig,
    checkpoint: &Path,
    tracked_path: &Path,
    gt_path: &Path,
    out: &Path,
) -> anyhow::Result<()> {
    let (params, _) = read_checkpoint(checkpoint)?;
    let tracked = read_trajectories(tracked_path)?;
    let gt = read_trajectories(gt_path)?;
    let report = e2e_report(cfg, &tracked, &gt, &params)?;
    with_manifest(
        cfg,
        out,
        "eval-e2e",
        &[checkpoint, tracked_path, gt_path],
        |stage| {
            write_json(
                out,
                &E2eJson {
                    map_f: report.map_f,
                    n_true_positives: report.n_true_positives,
                    n_false_predictions: report.n_false_predictions,
                    n_missed_gt: report.n_missed_gt,
                    tp_min_ade: report.tp_min_ade,
                    tp_min_fde: report.tp_min_fde,
                },
            )?;
            stage.output(out)
        },
    )
}
