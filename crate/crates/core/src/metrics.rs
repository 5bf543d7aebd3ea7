//! Forecasting evaluation: per-sample displacement metrics, set
//! aggregation, pseudo-label quality assessment against ground truth, and
//! end-to-end forecasting average precision.

use std::collections::BTreeMap;

use crate::assignment::hungarian;
use crate::dataset::{windows_world, WindowConfig, WorldWindow};
use crate::error::{Error, Result};
use crate::forecaster::{argmin, ForecastOutput};
use crate::geometry::Trajectory;

/// Evaluation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    /// Modes evaluated (k in min-over-k).
    pub k: usize,
    /// Miss threshold x in meters.
    pub miss_threshold: f64,
    /// Matching gate for quality assessment and end-to-end AP, meters.
    pub match_threshold: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            k: 6,
            miss_threshold: 2.0,
            match_threshold: 2.0,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidConfig("k must be >= 1".to_string()));
        }
        if !(self.miss_threshold > 0.0 && self.match_threshold > 0.0) {
            return Err(Error::InvalidConfig(
                "metric thresholds must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

/// Metrics of one evaluated sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleEval {
    pub min_ade: f64,
    pub min_fde: f64,
    pub brier_fde: f64,
    pub miss: bool,
    /// Mode achieving the minimum FDE (ties to the lowest index).
    pub best_mode: usize,
}

/// Aggregated metrics over a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub brier_fde: f64,
    pub miss_rate: f64,
}

/// Quality of a pseudo-labeled trajectory set against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub n_gt_windows: usize,
    pub n_pseudo_windows: usize,
    pub n_matched: usize,
    /// Matched GT windows / total GT windows.
    pub match_rate: f64,
    /// Metrics over matched pairs; `None` when nothing matched.
    pub metrics: Option<MetricsReport>,
}

/// End-to-end forecasting AP summary.
#[derive(Debug, Clone, PartialEq)]
pub struct E2EReport {
    pub map_f: f64,
    pub n_true_positives: usize,
    pub n_false_predictions: usize,
    pub n_missed_gt: usize,
    /// Mean over true positives; `None` without any.
    pub tp_min_ade: Option<f64>,
    pub tp_min_fde: Option<f64>,
}

/// Evaluate one multi-modal prediction against a ground-truth future.
///
/// minADE/minFDE take the minimum over the first k modes; Brier-FDE adds
/// (1 - confidence of the minFDE mode)^2; a miss is minFDE above the
/// threshold.
pub fn eval_sample(
    output: &ForecastOutput,
    gt_future: &[[f64; 2]],
    cfg: &MetricsConfig,
) -> Result<SampleEval> {
    cfg.validate()?;
    if output.modes.len() < cfg.k {
        return Err(Error::InvalidInput(format!(
            "output has {} modes, need at least {}",
            output.modes.len(),
            cfg.k
        )));
    }
    let m = gt_future.len();
    if m == 0 {
        return Err(Error::InvalidInput("empty ground-truth future".to_string()));
    }
    let mut ades = Vec::with_capacity(cfg.k);
    let mut fdes = Vec::with_capacity(cfg.k);
    for mode in output.modes.iter().take(cfg.k) {
        if mode.len() != m {
            return Err(Error::InvalidInput(format!(
                "mode length {} does not match future length {m}",
                mode.len()
            )));
        }
        let sum: f64 = mode
            .iter()
            .zip(gt_future.iter())
            .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
            .sum();
        ades.push(sum / m as f64);
        let pe = mode[m - 1];
        let ge = gt_future[m - 1];
        fdes.push((pe[0] - ge[0]).hypot(pe[1] - ge[1]));
    }
    let min_ade = ades[argmin(&ades)];
    let best_mode = argmin(&fdes);
    let min_fde = fdes[best_mode];
    let delta = output.confidences[best_mode];
    Ok(SampleEval {
        min_ade,
        min_fde,
        brier_fde: min_fde + (1.0 - delta).powi(2),
        miss: min_fde > cfg.miss_threshold,
        best_mode,
    })
}

/// Arithmetic means of per-sample metrics.
pub fn eval_set(evals: &[SampleEval]) -> Result<MetricsReport> {
    if evals.is_empty() {
        return Err(Error::InvalidInput("empty evaluation set".to_string()));
    }
    let n = evals.len() as f64;
    Ok(MetricsReport {
        n_samples: evals.len(),
        min_ade: evals.iter().map(|e| e.min_ade).sum::<f64>() / n,
        min_fde: evals.iter().map(|e| e.min_fde).sum::<f64>() / n,
        brier_fde: evals.iter().map(|e| e.brier_fde).sum::<f64>() / n,
        miss_rate: evals.iter().filter(|e| e.miss).count() as f64 / n,
    })
}

/// Evaluate predictions paired with ground-truth futures as one set.
pub fn eval_pairs(
    pairs: &[(&ForecastOutput, &[[f64; 2]])],
    cfg: &MetricsConfig,
) -> Result<MetricsReport> {
    let evals: Vec<SampleEval> = pairs
        .iter()
        .map(|(o, gt)| eval_sample(o, gt, cfg))
        .collect::<Result<_>>()?;
    eval_set(&evals)
}

const GATED: f64 = 1e6;

fn mean_past_distance(a: &WorldWindow, b: &WorldWindow) -> f64 {
    let n = a.past.len().min(b.past.len());
    let sum: f64 = a
        .past
        .iter()
        .rev()
        .take(n)
        .zip(b.past.iter().rev().take(n))
        .map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1]))
        .sum();
    sum / n as f64
}

/// Assess pseudo-label quality: window both sets on the shared grid, match
/// pseudo to ground-truth windows per (scene, anchor) by mean past distance
/// under the gate, then score each matched pseudo future as a single-mode,
/// full-confidence prediction of the ground-truth future.
pub fn assess_pseudo_quality(
    pseudo: &[Trajectory],
    gt: &[Trajectory],
    wcfg: &WindowConfig,
    mcfg: &MetricsConfig,
) -> Result<QualityReport> {
    mcfg.validate()?;
    let pseudo_windows = windows_world(pseudo, wcfg)?;
    let gt_windows = windows_world(gt, wcfg)?;

    let mut groups: BTreeMap<(String, i64), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, w) in pseudo_windows.iter().enumerate() {
        let key = (w.scene_id.clone(), (w.anchor_t * 10.0).round() as i64);
        groups.entry(key).or_default().0.push(i);
    }
    for (i, w) in gt_windows.iter().enumerate() {
        let key = (w.scene_id.clone(), (w.anchor_t * 10.0).round() as i64);
        groups.entry(key).or_default().1.push(i);
    }

    let mut evals = Vec::new();
    for (_, (ps, gs)) in groups.iter() {
        if ps.is_empty() || gs.is_empty() {
            continue;
        }
        let cost: Vec<Vec<f64>> = ps
            .iter()
            .map(|&pi| {
                gs.iter()
                    .map(|&gi| {
                        let d = mean_past_distance(&pseudo_windows[pi], &gt_windows[gi]);
                        if d > mcfg.match_threshold {
                            GATED
                        } else {
                            d
                        }
                    })
                    .collect()
            })
            .collect();
        for (pi, gi) in hungarian(&cost)? {
            if cost[pi][gi] >= GATED {
                continue;
            }
            let pw = &pseudo_windows[ps[pi]];
            let gw = &gt_windows[gs[gi]];
            let single = ForecastOutput {
                modes: vec![pw.future.clone()],
                confidences: vec![1.0],
            };
            let cfg1 = MetricsConfig {
                k: 1,
                ..mcfg.clone()
            };
            evals.push(eval_sample(&single, &gw.future, &cfg1)?);
        }
    }

    let n_matched = evals.len();
    let n_gt = gt_windows.len();
    Ok(QualityReport {
        n_gt_windows: n_gt,
        n_pseudo_windows: pseudo_windows.len(),
        n_matched,
        match_rate: if n_gt > 0 {
            n_matched as f64 / n_gt as f64
        } else {
            0.0
        },
        metrics: if n_matched > 0 {
            Some(eval_set(&evals)?)
        } else {
            None
        },
    })
}

/// One scored end-to-end prediction. `group` scopes matching (predictions
/// only compete for ground truth in the same scene and anchor frame).
#[derive(Debug, Clone)]
pub struct E2ePrediction {
    pub group: (String, i64),
    /// First-frame detection score.
    pub score: f64,
    /// First-frame (anchor) world position.
    pub first_pos: [f64; 2],
    /// K mode futures in world coordinates.
    pub modes: Vec<Vec<[f64; 2]>>,
}

/// Ground-truth agent window for end-to-end evaluation.
#[derive(Debug, Clone)]
pub struct E2eTarget {
    pub group: (String, i64),
    pub first_pos: [f64; 2],
    pub future: Vec<[f64; 2]>,
}

fn min_fde_world(modes: &[Vec<[f64; 2]>], future: &[[f64; 2]], k: usize) -> f64 {
    let m = future.len();
    modes
        .iter()
        .take(k)
        .map(|mode| {
            let p = mode[m - 1];
            let g = future[m - 1];
            (p[0] - g[0]).hypot(p[1] - g[1])
        })
        .fold(f64::INFINITY, f64::min)
}

fn min_ade_world(modes: &[Vec<[f64; 2]>], future: &[[f64; 2]], k: usize) -> f64 {
    let m = future.len() as f64;
    modes
        .iter()
        .take(k)
        .map(|mode| {
            mode.iter()
                .zip(future.iter())
                .map(|(p, g)| (p[0] - g[0]).hypot(p[1] - g[1]))
                .sum::<f64>()
                / m
        })
        .fold(f64::INFINITY, f64::min)
}

/// Forecasting average precision over score-ranked predictions.
///
/// Predictions greedily claim the nearest unmatched ground truth in their
/// group within the match gate; a claimed prediction is a true positive iff
/// its minFDE clears the miss threshold, otherwise (or unmatched) a false
/// positive. AP integrates the all-point interpolated precision-recall
/// curve with recall measured against all ground truth.
pub fn map_f(preds: &[E2ePrediction], gts: &[E2eTarget], cfg: &MetricsConfig) -> Result<E2EReport> {
    cfg.validate()?;
    if gts.is_empty() {
        return Err(Error::InvalidInput(
            "end-to-end evaluation needs ground truth".to_string(),
        ));
    }

    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap());

    let mut gt_taken = vec![false; gts.len()];
    let mut is_tp: Vec<bool> = Vec::with_capacity(preds.len());
    let mut tp_ade = Vec::new();
    let mut tp_fde = Vec::new();
    for &pi in &order {
        let p = &preds[pi];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if gt_taken[gi] || g.group != p.group {
                continue;
            }
            let d = (g.first_pos[0] - p.first_pos[0]).hypot(g.first_pos[1] - p.first_pos[1]);
            if d <= cfg.match_threshold && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((gi, d));
            }
        }
        match best {
            Some((gi, _)) => {
                gt_taken[gi] = true;
                let fde = min_fde_world(&p.modes, &gts[gi].future, cfg.k.min(p.modes.len()));
                let tp = fde <= cfg.miss_threshold;
                if tp {
                    tp_fde.push(fde);
                    tp_ade.push(min_ade_world(
                        &p.modes,
                        &gts[gi].future,
                        cfg.k.min(p.modes.len()),
                    ));
                }
                is_tp.push(tp);
            }
            None => is_tp.push(false),
        }
    }

    let n_gt = gts.len() as f64;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(is_tp.len()); // (recall, precision)
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &hit in &is_tp {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((tp as f64 / n_gt, tp as f64 / (tp + fp) as f64));
    }

    // all-point interpolation: precision envelope from the right
    let mut ap = 0.0;
    if !points.is_empty() {
        let mut env = points.clone();
        for i in (0..env.len() - 1).rev() {
            env[i].1 = env[i].1.max(env[i + 1].1);
        }
        let mut prev_recall = 0.0;
        for &(r, p) in &env {
            if r > prev_recall {
                ap += (r - prev_recall) * p;
                prev_recall = r;
            }
        }
    }

    let n_tp = tp_fde.len();
    Ok(E2EReport {
        map_f: ap,
        n_true_positives: n_tp,
        n_false_predictions: is_tp.iter().filter(|&&h| !h).count(),
        n_missed_gt: gt_taken.iter().filter(|&&t| !t).count(),
        tp_min_ade: if n_tp > 0 {
            Some(tp_ade.iter().sum::<f64>() / n_tp as f64)
        } else {
            None
        },
        tp_min_fde: if n_tp > 0 {
            Some(tp_fde.iter().sum::<f64>() / n_tp as f64)
        } else {
            None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ClassId, Provenance, TrajState};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn straight_future(m: usize, vx: f64, vy: f64) -> Vec<[f64; 2]> {
        (1..=m)
            .map(|i| [vx * i as f64 * 0.1, vy * i as f64 * 0.1])
            .collect()
    }

    fn output_with(modes: Vec<Vec<[f64; 2]>>, confidences: Vec<f64>) -> ForecastOutput {
        ForecastOutput { modes, confidences }
    }

    fn pad_modes(first: Vec<[f64; 2]>, m: usize, k: usize) -> Vec<Vec<[f64; 2]>> {
        let mut modes = vec![first];
        for j in 1..k {
            modes.push(
                (1..=m)
                    .map(|i| [100.0 + j as f64 * 10.0, i as f64])
                    .collect(),
            );
        }
        modes
    }

    #[test]
    fn perfect_prediction_scores_zero() {
        let fut = straight_future(60, 2.0, 0.0);
        let mut conf = vec![0.0; 6];
        conf[0] = 1.0;
        let out = output_with(pad_modes(fut.clone(), 60, 6), conf);
        let e = eval_sample(&out, &fut, &MetricsConfig::default()).unwrap();
        assert_eq!(e.min_ade, 0.0);
        assert_eq!(e.min_fde, 0.0);
        assert_eq!(e.brier_fde, 0.0);
        assert!(!e.miss);
    }

    #[test]
    fn brier_adds_confidence_penalty_and_miss_triggers() {
        let fut = straight_future(10, 0.0, 0.0);
        let mut shifted = fut.clone();
        let m = shifted.len();
        shifted[m - 1] = [5.0, 0.0];
        let mut conf = vec![0.1; 6];
        conf[0] = 0.5;
        let out = output_with(pad_modes(shifted, 10, 6), conf);
        let e = eval_sample(&out, &fut, &MetricsConfig::default()).unwrap();
        assert_abs_diff_eq!(e.min_fde, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.brier_fde, 5.25, epsilon = 1e-12);
        assert!(e.miss);
    }

    #[test]
    fn mode_length_mismatch_is_rejected() {
        let fut = straight_future(10, 1.0, 0.0);
        let out = output_with(pad_modes(straight_future(8, 1.0, 0.0), 8, 6), vec![1.0 / 6.0; 6]);
        assert!(eval_sample(&out, &fut, &MetricsConfig::default()).is_err());
    }

    #[test]
    fn set_aggregation_means_and_miss_rate() {
        let make = |fde: f64| SampleEval {
            min_ade: fde / 2.0,
            min_fde: fde,
            brier_fde: fde + 0.25,
            miss: fde > 2.0,
            best_mode: 0,
        };
        let evals = vec![make(1.0), make(2.5), make(3.0)];
        let rep = eval_set(&evals).unwrap();
        assert_abs_diff_eq!(rep.miss_rate, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rep.min_fde, (1.0 + 2.5 + 3.0) / 3.0, epsilon = 1e-12);

        let single = eval_set(&evals[..1]).unwrap();
        assert_eq!(single.min_fde, 1.0);

        let doubled: Vec<SampleEval> = evals.iter().chain(evals.iter()).cloned().collect();
        let rep2 = eval_set(&doubled).unwrap();
        assert_abs_diff_eq!(rep2.brier_fde, rep.brier_fde, epsilon = 1e-12);
        assert!(eval_set(&[]).is_err());
    }

    #[test]
    fn eval_matches_naive_recomputation() {
        let mut rng = crate::rng::rng_from_seed(17);
        let cfg = MetricsConfig::default();
        for _ in 0..200 {
            let m = 12;
            let fut: Vec<[f64; 2]> = (0..m)
                .map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)])
                .collect();
            let modes: Vec<Vec<[f64; 2]>> = (0..6)
                .map(|_| {
                    (0..m)
                        .map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)])
                        .collect()
                })
                .collect();
            let mut conf: Vec<f64> = (0..6).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = conf.iter().sum();
            for c in conf.iter_mut() {
                *c /= sum;
            }
            let out = output_with(modes.clone(), conf.clone());
            let e = eval_sample(&out, &fut, &cfg).unwrap();

            // naive recomputation over all modes
            let mut best_ade = f64::INFINITY;
            let mut best_fde = f64::INFINITY;
            let mut best_idx = 0;
            for (k, mode) in modes.iter().enumerate() {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += ((mode[i][0] - fut[i][0]).powi(2) + (mode[i][1] - fut[i][1]).powi(2))
                        .sqrt();
                }
                let ade = acc / m as f64;
                let fde = ((mode[m - 1][0] - fut[m - 1][0]).powi(2)
                    + (mode[m - 1][1] - fut[m - 1][1]).powi(2))
                .sqrt();
                if ade < best_ade {
                    best_ade = ade;
                }
                if fde < best_fde {
                    best_fde = fde;
                    best_idx = k;
                }
            }
            assert!((e.min_ade - best_ade).abs() <= 1e-12);
            assert!((e.min_fde - best_fde).abs() <= 1e-12);
            assert!((e.brier_fde - (best_fde + (1.0 - conf[best_idx]).powi(2))).abs() <= 1e-12);
            assert_eq!(e.miss, best_fde > 2.0);
        }
    }

    fn grid_traj(scene: &str, id: u64, offset: [f64; 2], n: usize, pseudo: bool) -> Trajectory {
        let states = (0..n)
            .map(|i| {
                let t = i as f64 * 0.1;
                TrajState {
                    t,
                    cx: 2.0 * t + offset[0],
                    cy: offset[1],
                    cz: 0.8,
                    yaw: 0.0,
                    length: 4.5,
                    width: 1.9,
                    height: 1.6,
                    score: if pseudo { Some(0.9) } else { None },
                }
            })
            .collect();
        Trajectory {
            scene_id: scene.to_string(),
            track_id: id,
            class_id: ClassId::VEHICLE,
            states,
            provenance: if pseudo {
                Provenance::Pseudo("p".to_string())
            } else {
                Provenance::GroundTruth
            },
        }
    }

    #[test]
    fn quality_self_match_is_exact() {
        let gt = vec![grid_traj("s", 0, [0.0, 0.0], 101, false)];
        let pseudo = vec![grid_traj("s", 0, [0.0, 0.0], 101, true)];
        let rep = assess_pseudo_quality(
            &pseudo,
            &gt,
            &WindowConfig::default(),
            &MetricsConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.match_rate, 1.0);
        let m = rep.metrics.unwrap();
        assert_eq!(m.min_ade, 0.0);
        assert_eq!(m.min_fde, 0.0);
        assert_eq!(m.miss_rate, 0.0);
    }

    #[test]
    fn quality_gate_excludes_large_shifts() {
        let gt = vec![grid_traj("s", 0, [0.0, 0.0], 101, false)];
        let pseudo = vec![grid_traj("s", 0, [0.0, 3.0], 101, true)];
        let rep = assess_pseudo_quality(
            &pseudo,
            &gt,
            &WindowConfig::default(),
            &MetricsConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.n_matched, 0);
        assert!(rep.metrics.is_none());
    }

    #[test]
    fn quality_constant_offset_reports_that_offset() {
        let gt = vec![grid_traj("s", 0, [0.0, 0.0], 101, false)];
        let pseudo = vec![grid_traj("s", 0, [0.0, 0.5], 101, true)];
        let rep = assess_pseudo_quality(
            &pseudo,
            &gt,
            &WindowConfig::default(),
            &MetricsConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.match_rate, 1.0);
        let m = rep.metrics.unwrap();
        assert_abs_diff_eq!(m.min_ade, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(m.min_fde, 0.5, epsilon = 1e-9);
        assert_eq!(m.miss_rate, 0.0);
    }

    fn e2e_pred(score: f64, pos: [f64; 2], endpoint: [f64; 2]) -> E2ePrediction {
        E2ePrediction {
            group: ("s".to_string(), 0),
            score,
            first_pos: pos,
            modes: vec![vec![endpoint; 10]; 6],
        }
    }

    fn e2e_gt(pos: [f64; 2], endpoint: [f64; 2]) -> E2eTarget {
        E2eTarget {
            group: ("s".to_string(), 0),
            first_pos: pos,
            future: vec![endpoint; 10],
        }
    }

    #[test]
    fn perfect_predictions_reach_full_ap() {
        let gts = vec![e2e_gt([0.0, 0.0], [5.0, 0.0]), e2e_gt([20.0, 0.0], [25.0, 0.0])];
        let preds = vec![
            e2e_pred(0.4, [0.0, 0.0], [5.0, 0.0]),
            e2e_pred(0.9, [20.0, 0.0], [25.0, 0.0]),
        ];
        let rep = map_f(&preds, &gts, &MetricsConfig::default()).unwrap();
        assert_abs_diff_eq!(rep.map_f, 1.0, epsilon = 1e-12);
        assert_eq!(rep.n_true_positives, 2);
        assert_eq!(rep.n_missed_gt, 0);
    }

    #[test]
    fn far_predictions_score_zero() {
        let gts = vec![e2e_gt([0.0, 0.0], [5.0, 0.0])];
        let preds = vec![e2e_pred(0.9, [50.0, 50.0], [55.0, 50.0])];
        let rep = map_f(&preds, &gts, &MetricsConfig::default()).unwrap();
        assert_eq!(rep.map_f, 0.0);
        assert_eq!(rep.n_missed_gt, 1);
    }

    #[test]
    fn mixed_ranking_integrates_to_five_sixths() {
        // ranked TP, FP, TP over two ground truths
        let gts = vec![e2e_gt([0.0, 0.0], [5.0, 0.0]), e2e_gt([20.0, 0.0], [25.0, 0.0])];
        let preds = vec![
            e2e_pred(0.9, [0.0, 0.0], [5.0, 0.0]),
            e2e_pred(0.8, [40.0, 40.0], [45.0, 40.0]),
            e2e_pred(0.7, [20.0, 0.0], [25.0, 0.0]),
        ];
        let rep = map_f(&preds, &gts, &MetricsConfig::default()).unwrap();
        assert_abs_diff_eq!(rep.map_f, 5.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_ground_truth_is_an_error() {
        let preds = vec![e2e_pred(0.9, [0.0, 0.0], [5.0, 0.0])];
        assert!(map_f(&preds, &[], &MetricsConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn brier_gap_is_bounded(fde in 0.0..10.0f64, conf in 0.0..=1.0f64) {
            let m = 5;
            let fut: Vec<[f64;2]> = vec![[0.0, 0.0]; m];
            let mut end = fut.clone();
            end[m - 1] = [fde, 0.0];
            let mut confs = vec![(1.0 - conf) / 5.0; 6];
            confs[0] = conf;
            let out = output_with(pad_modes(end, m, 6), confs);
            let e = eval_sample(&out, &fut, &MetricsConfig::default()).unwrap();
            prop_assert!(e.brier_fde >= e.min_fde - 1e-12);
            prop_assert!(e.brier_fde - e.min_fde <= 1.0 + 1e-12);
        }

        #[test]
        fn miss_rate_is_monotone_in_threshold(x1 in 0.5..2.0f64, extra in 0.1..3.0f64) {
            let m = 5;
            let fut: Vec<[f64;2]> = vec![[0.0, 0.0]; m];
            let fdes = [0.4, 1.1, 1.9, 2.6, 4.0];
            let eval_at = |x: f64| {
                let cfg = MetricsConfig { miss_threshold: x, ..MetricsConfig::default() };
                let evals: Vec<SampleEval> = fdes.iter().map(|&f| {
                    let mut end = fut.clone();
                    end[m - 1] = [f, 0.0];
                    let out = output_with(pad_modes(end, m, 6), vec![1.0/6.0; 6]);
                    eval_sample(&out, &fut, &cfg).unwrap()
                }).collect();
                eval_set(&evals).unwrap().miss_rate
            };
            prop_assert!(eval_at(x1 + extra) <= eval_at(x1));
        }

        #[test]
        fn ap_is_invariant_under_monotone_score_rescaling(scale in 0.1..5.0f64, shift in 0.0..2.0f64) {
            let gts = vec![e2e_gt([0.0, 0.0], [5.0, 0.0]), e2e_gt([20.0, 0.0], [25.0, 0.0])];
            let preds = vec![
                e2e_pred(0.9, [0.0, 0.0], [5.0, 0.0]),
                e2e_pred(0.8, [40.0, 40.0], [45.0, 40.0]),
                e2e_pred(0.7, [20.0, 0.0], [25.0, 0.0]),
            ];
            let rescaled: Vec<E2ePrediction> = preds.iter().map(|p| {
                let mut p = p.clone();
                p.score = p.score * scale + shift;
                p
            }).collect();
            let a = map_f(&preds, &gts, &MetricsConfig::default()).unwrap();
            let b = map_f(&rescaled, &gts, &MetricsConfig::default()).unwrap();
            prop_assert!((a.map_f - b.map_f).abs() <= 1e-12);
        }
    }
}
