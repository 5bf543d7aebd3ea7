//! Experiment subcommands: labeled-fraction sweeps with paired
//! pretrain/fine-tune vs scratch runs, pseudo-data quantity and diversity
//! comparisons, and cross-regime generalization. Results land as CSV files
//! (authoritative) plus static SVG charts.

use std::path::Path;

use anyhow::{anyhow, Context};
use rayon::prelude::*;

use trajforge_core::metrics::MetricsReport;
use trajforge_core::train::evaluate;

use crate::config::PipelineConfig;
use crate::formats::{write_atomic, write_checkpoint, CheckpointMeta};
use crate::harness::{
    build_seed_bench, diversity_arms, fraction_result, pretrain_run, quantity_brier, train_config,
    DiversityArms, FractionResult,
};
use crate::manifest::{RunManifest, StageGuard};
use crate::svg::{line_chart, Series};

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().context("flushing csv")?;
    write_atomic(path, &bytes)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

struct PptSeedResult {
    seed: u64,
    fractions: Vec<FractionResult>,
}

/// Labeled-fraction sweep: for each (fraction, seed) pair, fine-tune from
/// the pretrained model and train the scratch baseline, then report final
/// validation metrics, relative improvements and convergence curves.
pub fn run_ppt(cfg: &PipelineConfig, out_dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::load_or_new(out_dir, &cfg.canonical_json())?;
    let mut stage = StageGuard::new("experiment-ppt");

    let results: Vec<PptSeedResult> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| -> anyhow::Result<PptSeedResult> {
            let bench = build_seed_bench(cfg, seed)?;
            let tc = train_config(cfg, seed)?;
            let pretrain = pretrain_run(cfg, &bench, &tc)?;
            let mut fractions = Vec::new();
            for &f in &cfg.experiment.fractions {
                fractions.push(fraction_result(cfg, &bench, &pretrain, f, &tc)?);
            }
            Ok(PptSeedResult { seed, fractions })
        })
        .collect::<anyhow::Result<_>>()?;

    // result rows: one per (fraction, seed, method)
    let mut rows = Vec::new();
    let mut conv_rows = Vec::new();
    for sr in &results {
        for fr in &sr.fractions {
            let rel = fr.rel_improvement();
            let metric_row = |method: &str, m: &MetricsReport, rel: Option<[f64; 4]>| {
                let mut row = vec![
                    fmt(fr.fraction),
                    sr.seed.to_string(),
                    method.to_string(),
                    fmt(m.brier_fde),
                    fmt(m.min_ade),
                    fmt(m.min_fde),
                    fmt(m.miss_rate),
                ];
                match rel {
                    Some(r) => row.extend(r.iter().map(|v| fmt(*v))),
                    None => row.extend(std::iter::repeat(String::new()).take(4)),
                }
                row
            };
            rows.push(metric_row("scratch", &fr.scratch, None));
            rows.push(metric_row("ppt", &fr.ppt, Some(rel)));
            for &(epoch, brier) in &fr.scratch_curve {
                conv_rows.push(vec![
                    fmt(fr.fraction),
                    sr.seed.to_string(),
                    "scratch".to_string(),
                    epoch.to_string(),
                    fmt(brier),
                ]);
            }
            for &(epoch, brier) in &fr.ppt_curve {
                conv_rows.push(vec![
                    fmt(fr.fraction),
                    sr.seed.to_string(),
                    "ppt".to_string(),
                    epoch.to_string(),
                    fmt(brier),
                ]);
            }
        }
    }
    let results_csv = out_dir.join("results.csv");
    write_csv(
        &results_csv,
        &[
            "fraction",
            "seed",
            "method",
            "brier_fde",
            "min_ade",
            "min_fde",
            "miss_rate",
            "rel_brier_fde",
            "rel_min_ade",
            "rel_min_fde",
            "rel_miss_rate",
        ],
        &rows,
    )?;
    stage.output(&results_csv)?;

    let conv_csv = out_dir.join("convergence.csv");
    write_csv(
        &conv_csv,
        &["fraction", "seed", "method", "epoch", "val_brier_fde"],
        &conv_rows,
    )?;
    stage.output(&conv_csv)?;

    // seed-mean metric vs fraction per method
    let mut curve_rows = Vec::new();
    let mut series_scratch = Vec::new();
    let mut series_ppt = Vec::new();
    for (fi, &f) in cfg.experiment.fractions.iter().enumerate() {
        for method in ["scratch", "ppt"] {
            let pick = |fr: &FractionResult| -> MetricsReport {
                if method == "scratch" {
                    fr.scratch
                } else {
                    fr.ppt
                }
            };
            let brier = mean(results.iter().map(|sr| pick(&sr.fractions[fi]).brier_fde));
            let ade = mean(results.iter().map(|sr| pick(&sr.fractions[fi]).min_ade));
            let fde = mean(results.iter().map(|sr| pick(&sr.fractions[fi]).min_fde));
            let miss = mean(results.iter().map(|sr| pick(&sr.fractions[fi]).miss_rate));
            curve_rows.push(vec![
                fmt(f),
                method.to_string(),
                fmt(brier),
                fmt(ade),
                fmt(fde),
                fmt(miss),
            ]);
            if method == "scratch" {
                series_scratch.push((f, brier));
            } else {
                series_ppt.push((f, brier));
            }
        }
    }
    let curve_csv = out_dir.join("fraction_curve.csv");
    write_csv(
        &curve_csv,
        &["fraction", "method", "brier_fde", "min_ade", "min_fde", "miss_rate"],
        &curve_rows,
    )?;
    stage.output(&curve_csv)?;

    let curve_svg = out_dir.join("fraction_curve.svg");
    line_chart(
        &curve_svg,
        "Validation Brier-FDE vs labeled fraction",
        "labeled fraction",
        "Brier-FDE (m)",
        &[
            Series {
                name: "scratch".to_string(),
                points: series_scratch,
            },
            Series {
                name: "ppt".to_string(),
                points: series_ppt,
            },
        ],
        true,
    )?;
    stage.output(&curve_svg)?;

    // seed-mean convergence at the largest fraction
    if let Some(fi) = largest_fraction_index(&cfg.experiment.fractions) {
        let epochs = results[0].fractions[fi].scratch_curve.len();
        let mean_curve = |pick: &dyn Fn(&FractionResult) -> &Vec<(usize, f64)>| -> Vec<(f64, f64)> {
            (0..epochs)
                .map(|e| {
                    let x = pick(&results[0].fractions[fi])[e].0 as f64;
                    let y = mean(results.iter().map(|sr| pick(&sr.fractions[fi])[e].1));
                    (x, y)
                })
                .collect()
        };
        let conv_svg = out_dir.join("convergence.svg");
        line_chart(
            &conv_svg,
            "Validation Brier-FDE per epoch (largest fraction)",
            "epoch",
            "Brier-FDE (m)",
            &[
                Series {
                    name: "scratch".to_string(),
                    points: mean_curve(&|fr| &fr.scratch_curve),
                },
                Series {
                    name: "ppt".to_string(),
                    points: mean_curve(&|fr| &fr.ppt_curve),
                },
            ],
            false,
        )?;
        stage.output(&conv_svg)?;
    }

    // final checkpoints per (fraction, seed, method)
    for sr in &results {
        for fr in &sr.fractions {
            for (method, params) in [("ppt", &fr.ppt_params), ("scratch", &fr.scratch_params)] {
                let path = out_dir.join(format!(
                    "model_f{}_s{}_{method}.ckpt",
                    fr.fraction, sr.seed
                ));
                write_checkpoint(
                    &path,
                    params,
                    &CheckpointMeta {
                        seed: sr.seed,
                        provenance: if method == "ppt" {
                            "finetune<-pretrain".to_string()
                        } else {
                            "scratch".to_string()
                        },
                    },
                )?;
                stage.output(&path)?;
            }
        }
    }

    stage.finish(&mut manifest);
    manifest.save(out_dir)
}

fn largest_fraction_index(fractions: &[f64]) -> Option<usize> {
    fractions
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
        .map(|(i, _)| i)
}

/// Pretrain-only runs on 1%, 10% and 100% of the pseudo set.
pub fn run_quantity(cfg: &PipelineConfig, out_dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::load_or_new(out_dir, &cfg.canonical_json())?;
    let mut stage = StageGuard::new("experiment-quantity");
    let pseudo_fractions = [0.01, 0.1, 1.0];

    let results: Vec<(u64, Vec<(f64, f64)>)> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| -> anyhow::Result<(u64, Vec<(f64, f64)>)> {
            let bench = build_seed_bench(cfg, seed)?;
            let tc = train_config(cfg, seed)?;
            let pretrain = pretrain_run(cfg, &bench, &tc)?;
            let mut rows = Vec::new();
            for &pf in &pseudo_fractions {
                rows.push((pf, quantity_brier(cfg, &bench, &pretrain, pf, &tc)?));
            }
            Ok((seed, rows))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut rows = Vec::new();
    for (seed, per_fraction) in &results {
        for &(pf, brier) in per_fraction {
            rows.push(vec![fmt(pf), seed.to_string(), fmt(brier)]);
        }
    }
    let csv = out_dir.join("quantity.csv");
    write_csv(&csv, &["pseudo_fraction", "seed", "brier_fde"], &rows)?;
    stage.output(&csv)?;

    let mut curve = Vec::new();
    let mut curve_rows = Vec::new();
    for (i, &pf) in pseudo_fractions.iter().enumerate() {
        let m = mean(results.iter().map(|(_, rows)| rows[i].1));
        curve.push((pf, m));
        curve_rows.push(vec![fmt(pf), fmt(m)]);
    }
    let curve_csv = out_dir.join("quantity_curve.csv");
    write_csv(&curve_csv, &["pseudo_fraction", "mean_brier_fde"], &curve_rows)?;
    stage.output(&curve_csv)?;
    let svg = out_dir.join("quantity.svg");
    line_chart(
        &svg,
        "Pretrain-only Brier-FDE vs pseudo-data fraction",
        "pseudo fraction",
        "Brier-FDE (m)",
        &[Series {
            name: "pretrain-only".to_string(),
            points: curve,
        }],
        true,
    )?;
    stage.output(&svg)?;
    stage.finish(&mut manifest);
    manifest.save(out_dir)
}

/// Fixed-budget single- vs dual-source pretraining comparison.
pub fn run_diversity(cfg: &PipelineConfig, out_dir: &Path) -> anyhow::Result<()> {
    if cfg.experiment.pseudo_sources.len() < 2 {
        return Err(anyhow!(
            "experiment diversity needs two entries in experiment.pseudo_sources"
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::load_or_new(out_dir, &cfg.canonical_json())?;
    let mut stage = StageGuard::new("experiment-diversity");

    let results: Vec<(u64, DiversityArms)> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| -> anyhow::Result<(u64, DiversityArms)> {
            let bench = build_seed_bench(cfg, seed)?;
            let tc = train_config(cfg, seed)?;
            Ok((seed, diversity_arms(cfg, &bench, &tc)?))
        })
        .collect::<anyhow::Result<_>>()?;

    let first = &cfg.experiment.pseudo_sources[0];
    let second = &cfg.experiment.pseudo_sources[1];
    let mut rows = Vec::new();
    for (seed, arms) in &results {
        rows.push(vec![format!("single:{first}"), seed.to_string(), fmt(arms.only_first)]);
        rows.push(vec![format!("single:{second}"), seed.to_string(), fmt(arms.only_second)]);
        rows.push(vec!["dual".to_string(), seed.to_string(), fmt(arms.dual)]);
    }
    let csv = out_dir.join("diversity.csv");
    write_csv(&csv, &["arm", "seed", "brier_fde"], &rows)?;
    stage.output(&csv)?;

    let summary = out_dir.join("diversity_summary.csv");
    write_csv(
        &summary,
        &["arm", "mean_brier_fde"],
        &[
            vec![
                format!("single:{first}"),
                fmt(mean(results.iter().map(|(_, a)| a.only_first))),
            ],
            vec![
                format!("single:{second}"),
                fmt(mean(results.iter().map(|(_, a)| a.only_second))),
            ],
            vec![
                "single_mean".to_string(),
                fmt(mean(results.iter().map(|(_, a)| a.single_profile_mean()))),
            ],
            vec![
                "dual".to_string(),
                fmt(mean(results.iter().map(|(_, a)| a.dual))),
            ],
        ],
    )?;
    stage.output(&summary)?;
    stage.finish(&mut manifest);
    manifest.save(out_dir)
}

/// Cross-regime generalization: train on the primary regime, evaluate on
/// both the primary and the alternate validation sets.
pub fn run_generalization(cfg: &PipelineConfig, out_dir: &Path) -> anyhow::Result<()> {
    if cfg.experiment.alt_scene.is_none() {
        return Err(anyhow!(
            "experiment generalization needs an [experiment.alt_scene] section"
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest::load_or_new(out_dir, &cfg.canonical_json())?;
    let mut stage = StageGuard::new("experiment-generalization");
    let mcfg = cfg.metrics.to_core();

    let results: Vec<(u64, Vec<(String, String, MetricsReport)>)> = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| -> anyhow::Result<_> {
            let bench = build_seed_bench(cfg, seed)?;
            let tc = train_config(cfg, seed)?;
            let pretrain = pretrain_run(cfg, &bench, &tc)?;
            let full = fraction_result(cfg, &bench, &pretrain, 1.0, &tc)?;
            let mut rows = Vec::new();
            for (method, params) in [("scratch", &full.scratch_params), ("ppt", &full.ppt_params)] {
                let source = evaluate(params, &bench.val_samples, &mcfg)
                    .map_err(|e| anyhow!("source eval: {e}"))?;
                let target = evaluate(params, &bench.alt_val_samples, &mcfg)
                    .map_err(|e| anyhow!("target eval: {e}"))?;
                rows.push((method.to_string(), "source".to_string(), source));
                rows.push((method.to_string(), "target".to_string(), target));
            }
            Ok((seed, rows))
        })
        .collect::<anyhow::Result<_>>()?;

    let mut rows = Vec::new();
    for (seed, entries) in &results {
        for (method, domain, m) in entries {
            rows.push(vec![
                seed.to_string(),
                method.clone(),
                domain.clone(),
                fmt(m.brier_fde),
                fmt(m.min_ade),
                fmt(m.min_fde),
                fmt(m.miss_rate),
            ]);
        }
    }
    let csv = out_dir.join("generalization.csv");
    write_csv(
        &csv,
        &["seed", "method", "domain", "brier_fde", "min_ade", "min_fde", "miss_rate"],
        &rows,
    )?;
    stage.output(&csv)?;
    stage.finish(&mut manifest);
    manifest.save(out_dir)
}
