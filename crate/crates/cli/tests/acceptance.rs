//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line. Criteria 5-10 share a single 10-seed benchmark study defined by
//! configs/benchmark.toml.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;

use trajforge_cli::config::{load_config, PipelineConfig};
use trajforge_cli::harness::{run_all_seeds, SeedStudy, StudyParts};
use trajforge_core::dataset::{ForecastSample, Pose2};
use trajforge_core::forecaster::{loss_and_grad, ForecasterParams};
use trajforge_core::geometry::{Provenance, Trajectory};
use trajforge_core::forecaster::ForecastOutput;
use trajforge_core::metrics::{eval_sample, MetricsConfig};
use trajforge_core::rng::{derive_seed, rng_from_seed};
use trajforge_core::sim::{
    detect, generate_scene, gt_frames, DetectorProfile, MotionMix, SceneConfig, ScoreModel,
};
use trajforge_core::tracker::{track_sequence, TrackerConfig};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "[acceptance] {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion} failed: {detail}");
}

fn benchmark_config() -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.toml");
    std::env::remove_var("TRAJFORGE_SEED");
    load_config(Some(&path), &[]).expect("benchmark config loads")
}

static STUDIES: OnceLock<(Vec<SeedStudy>, f64)> = OnceLock::new();

fn studies() -> &'static (Vec<SeedStudy>, f64) {
    STUDIES.get_or_init(|| {
        let cfg = benchmark_config();
        let started = Instant::now();
        let studies = run_all_seeds(&cfg, &cfg.experiment.seeds, StudyParts::default())
            .expect("benchmark study runs");
        (studies, started.elapsed().as_secs_f64())
    })
}

// ---------------------------------------------------------------------------
// Criterion 1: per-sample metrics match a naive recomputation.

#[test]
fn criterion_01_metric_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = rng_from_seed(2024);
    let cfg = MetricsConfig::default();
    let m = 12;
    let mut max_err = 0.0f64;
    let mut miss_agree = true;
    for _ in 0..10_000 {
        let fut: Vec<[f64; 2]> = (0..m)
            .map(|_| [rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0)])
            .collect();
        let modes: Vec<Vec<[f64; 2]>> = (0..6)
            .map(|_| {
                (0..m)
                    .map(|_| [rng.gen_range(-15.0..15.0), rng.gen_range(-15.0..15.0)])
                    .collect()
            })
            .collect();
        let mut conf: Vec<f64> = (0..6).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = conf.iter().sum();
        for c in conf.iter_mut() {
            *c /= total;
        }
        let out = ForecastOutput {
            modes: modes.clone(),
            confidences: conf.clone(),
        };
        let e = eval_sample(&out, &fut, &cfg).unwrap();

        // naive oracle
        let mut best_ade = f64::INFINITY;
        let mut best_fde = f64::INFINITY;
        let mut best_idx = 0usize;
        for (k, mode) in modes.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..m {
                acc += ((mode[i][0] - fut[i][0]).powi(2) + (mode[i][1] - fut[i][1]).powi(2)).sqrt();
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
        let brier = best_fde + (1.0 - conf[best_idx]).powi(2);
        max_err = max_err
            .max((e.min_ade - best_ade).abs())
            .max((e.min_fde - best_fde).abs())
            .max((e.brier_fde - brier).abs());
        miss_agree &= e.miss == (best_fde > cfg.miss_threshold);
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "C1 metric oracle equivalence",
        max_err <= 1e-12 && miss_agree && elapsed < 5.0,
        &format!("max |err| {max_err:.2e} over 10^4 instances, miss agreement {miss_agree}, {elapsed:.2}s"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: assignment equals exhaustive enumeration.

fn brute_force_min(cost: &[Vec<f64>]) -> f64 {
    fn rec(cost: &[Vec<f64>], row: usize, used: &mut [bool], k: usize) -> f64 {
        let n = cost.len();
        let m = cost[0].len();
        let remaining = k;
        if remaining == 0 {
            return 0.0;
        }
        if n - row < remaining {
            return f64::INFINITY;
        }
        let mut best = if n - row > remaining {
            rec(cost, row + 1, used, remaining) // leave this row unmatched
        } else {
            f64::INFINITY
        };
        for c in 0..m {
            if !used[c] {
                used[c] = true;
                let v = cost[row][c] + rec(cost, row + 1, used, remaining - 1);
                used[c] = false;
                if v < best {
                    best = v;
                }
            }
        }
        best
    }
    let k = cost.len().min(cost[0].len());
    let mut used = vec![false; cost[0].len()];
    rec(cost, 0, &mut used, k)
}

#[test]
fn criterion_02_assignment_oracle() {
    let started = Instant::now();
    let mut rng = rng_from_seed(77);
    let mut checked = 0usize;
    let sizes: Vec<(usize, usize)> = (1..=7)
        .map(|n| (n, n))
        .chain([(2, 5), (3, 7), (6, 4), (7, 2)])
        .collect();
    for &(n, m) in &sizes {
        for _ in 0..500 {
            let cost: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.gen_range(0..1000) as f64).collect())
                .collect();
            let pairs = trajforge_core::hungarian(&cost).unwrap();
            assert_eq!(pairs.len(), n.min(m));
            let total: f64 = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
            let best = brute_force_min(&cost);
            assert_eq!(total, best, "size {n}x{m}: {total} vs {best}");
            checked += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    report(
        "C2 assignment oracle",
        elapsed < 10.0,
        &format!("{checked} matrices up to 7x7 exact, {elapsed:.2}s"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: tracker recovers noiseless detections exactly.

fn noiseless_profile(detect_hz: f64) -> DetectorProfile {
    DetectorProfile {
        profile_id: "exact".to_string(),
        pos_sigma: 0.0,
        dim_sigma: 0.0,
        yaw_sigma: 0.0,
        miss_base: 0.0,
        miss_range_coeff: 0.0,
        fp_rate: 0.0,
        score_model: ScoreModel {
            tp_mean: 0.9,
            tp_sigma: 0.0,
            fp_mean: 0.0,
            fp_sigma: 0.0,
        },
        detect_hz,
    }
}

fn exact_tracker(gate: f64) -> TrackerConfig {
    TrackerConfig {
        measurement_noise_r: [1e-12, 1e-12, 1e-12, 1e-12],
        gate_center_distance: gate,
        ..TrackerConfig::default()
    }
}

/// Max position error of recovered tracks against their nearest GT agent;
/// errors are summed per (track, agent) pair so an identity switch shows
/// up as a large error.
fn recovery_error(gt: &[Trajectory], recovered: &[Trajectory]) -> (usize, f64) {
    let mut max_err = 0.0f64;
    for tr in recovered {
        // nearest gt agent at the track's first state
        let s0 = &tr.states[0];
        let gt_tr = gt
            .iter()
            .min_by(|a, b| {
                let da = (a.states[0].cx - s0.cx).hypot(a.states[0].cy - s0.cy);
                let db = (b.states[0].cx - s0.cx).hypot(b.states[0].cy - s0.cy);
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        for s in &tr.states {
            let idx = (s.t * 10.0).round() as usize;
            let g = &gt_tr.states[idx];
            max_err = max_err.max((s.cx - g.cx).hypot(s.cy - g.cy));
        }
    }
    (recovered.len(), max_err)
}

#[test]
fn criterion_03_tracker_perfect_recovery() {
    // mixed-motion scenes, full-rate noiseless detections
    let mut max_err = 0.0f64;
    let mut cardinality_ok = true;
    for i in 0..20u64 {
        let cfg = SceneConfig {
            duration: 10.0,
            n_agents: (3, 5),
            seed: derive_seed(31_415, i),
            ..SceneConfig::default()
        };
        let gt = generate_scene(&cfg, &format!("exact_{i}")).unwrap();
        let frames = gt_frames(&gt).unwrap();
        let dets = detect(&frames, &noiseless_profile(10.0), cfg.roi, 1).unwrap();
        let out = track_sequence(&dets, &exact_tracker(2.0), Provenance::Pseudo("exact".into()))
            .unwrap();
        cardinality_ok &= out.len() == gt.len();
        let (_, err) = recovery_error(&gt, &out);
        max_err = max_err.max(err);
    }

    // 2 Hz noiseless detections of constant-velocity agents, upsampled
    let mut max_err_2hz = 0.0f64;
    let mut cardinality_2hz = true;
    for i in 0..10u64 {
        let cfg = SceneConfig {
            duration: 10.0,
            n_agents: (3, 5),
            motion_mix: MotionMix {
                constant_velocity: 1.0,
                constant_turn: 0.0,
                stop_and_go: 0.0,
                lane_change: 0.0,
            },
            seed: derive_seed(27_182, i),
            ..SceneConfig::default()
        };
        let gt = generate_scene(&cfg, &format!("cv2hz_{i}")).unwrap();
        let frames = gt_frames(&gt).unwrap();
        let dets = detect(&frames, &noiseless_profile(2.0), cfg.roi, 1).unwrap();
        let out = track_sequence(&dets, &exact_tracker(8.0), Provenance::Pseudo("exact".into()))
            .unwrap();
        cardinality_2hz &= out.len() == gt.len();
        for tr in &out {
            assert!((tr.uniform_interval(1e-9).unwrap() - 0.1).abs() <= 1e-9);
        }
        let (_, err) = recovery_error(&gt, &out);
        max_err_2hz = max_err_2hz.max(err);
    }

    report(
        "C3 tracker perfect recovery",
        cardinality_ok && max_err <= 1e-6 && cardinality_2hz && max_err_2hz <= 1e-6,
        &format!(
            "20 scenes one-to-one (cardinality {cardinality_ok}), max err {max_err:.2e} m; \
             2 Hz CV: cardinality {cardinality_2hz}, max err {max_err_2hz:.2e} m"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: analytic gradient vs central finite differences.

fn random_sample(seed: u64, l: usize, m: usize) -> ForecastSample {
    let mut rng = rng_from_seed(seed);
    let past = (0..=l)
        .map(|i| {
            let t = (i as f64 - l as f64) * 0.1;
            [
                3.0 * t + rng.gen_range(-0.1..0.1),
                -1.0 * t + rng.gen_range(-0.1..0.1),
            ]
        })
        .collect();
    let future = (1..=m)
        .map(|i| {
            [
                3.0 * i as f64 * 0.1 + rng.gen_range(-0.5..0.5),
                -1.0 * i as f64 * 0.1 + rng.gen_range(-0.5..0.5),
            ]
        })
        .collect();
    ForecastSample {
        sample_id: 0,
        scene_id: "g".into(),
        track_id: 0,
        anchor_t: 2.0,
        past,
        future,
        to_world: Pose2 {
            origin: [0.0, 0.0],
            cos_h: 1.0,
            sin_h: 0.0,
        },
        provenance: Provenance::GroundTruth,
    }
}

#[test]
fn criterion_04_gradient_correctness() {
    let (l, m) = (10, 12);
    let anchors = vec![
        [5.0, 0.0],
        [20.0, 0.0],
        [5.0, 5.0],
        [5.0, -5.0],
        [10.0, 2.0],
        [15.0, -3.0],
    ];
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for draw in 0..100u64 {
        let mut params = ForecasterParams::init(16, 6, l, m, anchors.clone(), draw).unwrap();
        let mut prng = rng_from_seed(derive_seed(draw, 1));
        for v in params
            .w2
            .iter_mut()
            .chain(params.b2.iter_mut())
            .chain(params.b1.iter_mut())
        {
            *v = prng.gen_range(-0.1..0.1);
        }
        let sample = random_sample(derive_seed(draw, 2), l, m);
        let batch = [&sample];
        let (_, grad) = loss_and_grad(&params, &batch, 1.0).unwrap();
        let flat = params.to_flat();
        for i in 0..flat.len() {
            let mut probe = flat.clone();
            probe[i] += eps;
            let mut plus = params.clone();
            plus.apply_flat(&probe).unwrap();
            probe[i] -= 2.0 * eps;
            let mut minus = params.clone();
            minus.apply_flat(&probe).unwrap();
            let lp = loss_and_grad(&plus, &batch, 1.0).unwrap().0.total;
            let lm = loss_and_grad(&minus, &batch, 1.0).unwrap().0.total;
            let numeric = (lp - lm) / (2.0 * eps);
            let denom = grad[i].abs() + numeric.abs();
            if denom > 1e-7 {
                worst = worst.max((grad[i] - numeric).abs() / denom);
            }
        }
    }
    report(
        "C4 gradient correctness",
        worst <= 1e-4,
        &format!("max relative error {worst:.2e} over 100 draws, all coordinates"),
    );
}

// ---------------------------------------------------------------------------
// Criteria 5-10: shared 10-seed benchmark study.

#[test]
fn criterion_05_ppt_trend() {
    let (studies, elapsed) = studies();
    let n = studies.len();
    let improved_1pct = studies
        .iter()
        .filter(|s| s.fractions[0].rel_improvement()[0] <= -10.0)
        .count();
    let steeper_at_1pct = studies
        .iter()
        .filter(|s| s.fractions[0].rel_improvement()[0] < s.fractions[1].rel_improvement()[0])
        .count();
    let rels: Vec<String> = studies
        .iter()
        .map(|s| {
            format!(
                "{:.0}%/{:.0}%",
                s.fractions[0].rel_improvement()[0],
                s.fractions[1].rel_improvement()[0]
            )
        })
        .collect();
    report(
        "C5 PPT trend",
        improved_1pct >= 9 && steeper_at_1pct >= 8 && *elapsed <= 900.0,
        &format!(
            ">=10% better at 1% labeled in {improved_1pct}/{n} seeds; larger relative gain at 1% \
             than at 100% in {steeper_at_1pct}/{n}; study wall time {elapsed:.0}s <= 900s \
             (rel brier 1%/100%: {})",
            rels.join(", ")
        ),
    );
}

#[test]
fn criterion_06_quantity_ablation() {
    let (studies, _) = studies();
    let mean_at = |idx: usize| -> f64 {
        studies.iter().map(|s| s.quantity[idx].1).sum::<f64>() / studies.len() as f64
    };
    let (m1, m10, m100) = (mean_at(0), mean_at(1), mean_at(2));
    report(
        "C6 quantity ablation",
        m1 >= m10 && m10 >= m100,
        &format!("mean Brier-FDE {m1:.3} (1%) >= {m10:.3} (10%) >= {m100:.3} (100%)"),
    );
}

#[test]
fn criterion_07_diversity_ablation() {
    let (studies, _) = studies();
    let n = studies.len() as f64;
    let dual: f64 = studies
        .iter()
        .map(|s| s.diversity.expect("diversity arms").dual)
        .sum::<f64>()
        / n;
    let single: f64 = studies
        .iter()
        .map(|s| s.diversity.unwrap().single_profile_mean())
        .sum::<f64>()
        / n;
    let only_first: f64 = studies
        .iter()
        .map(|s| s.diversity.unwrap().only_first)
        .sum::<f64>()
        / n;
    let only_second: f64 = studies
        .iter()
        .map(|s| s.diversity.unwrap().only_second)
        .sum::<f64>()
        / n;
    report(
        "C7 diversity ablation",
        dual <= single,
        &format!(
            "fixed-budget mean Brier-FDE: dual {dual:.3} <= single-profile {single:.3} \
             (sources alone: {only_first:.3} / {only_second:.3})"
        ),
    );
}

#[test]
fn criterion_08_convergence_speed() {
    let (studies, _) = studies();
    let n = studies.len();
    let fast = studies
        .iter()
        .filter(|s| {
            let (ppt, scratch) = s.convergence.expect("convergence epochs");
            (ppt as f64) <= 0.2 * (scratch as f64) + 1e-9
        })
        .count();
    let pairs: Vec<String> = studies
        .iter()
        .map(|s| {
            let (p, sc) = s.convergence.unwrap();
            format!("{p}/{sc}")
        })
        .collect();
    report(
        "C8 convergence speed",
        fast >= 8,
        &format!(
            "fine-tune reached its plateau within 20% of scratch's epochs in {fast}/{n} seeds \
             (epochs ppt/scratch: {})",
            pairs.join(", ")
        ),
    );
}

#[test]
fn criterion_09_pseudo_quality() {
    let (studies, _) = studies();
    let mut ok = true;
    let mut details = Vec::new();
    for s in studies {
        let q = &s.quality;
        let ade = q.metrics.as_ref().map(|m| m.min_ade).unwrap_or(f64::NAN);
        ok &= ade < 0.5 && q.match_rate > 0.9;
        details.push(format!("{:.2}/{:.3}", q.match_rate, ade));
    }
    report(
        "C9 pseudo-label quality",
        ok,
        &format!(
            "every seed: match rate > 0.9 and matched minADE < 0.5 m (rate/minADE: {})",
            details.join(", ")
        ),
    );
}

#[test]
fn criterion_10_map_f_sanity() {
    let (studies, _) = studies();
    let n = studies.len();
    let wins = studies
        .iter()
        .filter(|s| {
            let (ppt, scratch) = s.e2e.as_ref().expect("e2e reports");
            ppt.map_f > scratch.map_f
        })
        .count();
    let pairs: Vec<String> = studies
        .iter()
        .map(|s| {
            let (p, sc) = s.e2e.as_ref().unwrap();
            format!("{:.3}>{:.3}", p.map_f, sc.map_f)
        })
        .collect();
    report(
        "C10 end-to-end forecasting AP",
        wins >= 7,
        &format!("pretrained beats scratch on tracked pasts in {wins}/{n} seeds ({})", pairs.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// Criterion 11: byte-identical pipeline outputs across reruns.

fn run_cli(args: &[&str]) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_trajforge"))
        .args(args)
        .env_remove("TRAJFORGE_SEED")
        .output()
        .expect("spawn trajforge")
}

fn run_cli_ok(args: &[&str]) {
    let out = run_cli(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

fn staged_pipeline(cfg: &str, dir: &Path) {
    let p = |name: &str| dir.join(name).display().to_string();
    run_cli_ok(&["simulate", "--config", cfg, "--out", &p("gt.jsonl"), "--count", "8"]);
    run_cli_ok(&[
        "detect", "--config", cfg, "--gt", &p("gt.jsonl"), "--profile", "moderate", "--out",
        &p("detections.jsonl"),
    ]);
    run_cli_ok(&[
        "track", "--config", cfg, "--detections", &p("detections.jsonl"), "--profile-id",
        "moderate", "--out", &p("pseudo.jsonl"),
    ]);
    run_cli_ok(&[
        "build-dataset", "--config", cfg, "--input", &p("pseudo.jsonl"), "--out",
        &p("samples.jsonl"),
    ]);
    run_cli_ok(&[
        "build-dataset", "--config", cfg, "--input", &p("gt.jsonl"), "--out", &p("val.jsonl"),
    ]);
    run_cli_ok(&[
        "train", "--config", cfg, "--data", &p("samples.jsonl"), "--val", &p("val.jsonl"),
        "--mode", "pretrain", "--out", &p("model.ckpt"), "--history", &p("history.csv"),
    ]);
    run_cli_ok(&[
        "eval", "--config", cfg, "--checkpoint", &p("model.ckpt"), "--samples", &p("val.jsonl"),
        "--out", &p("eval.json"), "--out-csv", &p("eval.csv"),
    ]);
    run_cli_ok(&[
        "assess-quality", "--config", cfg, "--pseudo", &p("pseudo.jsonl"), "--gt", &p("gt.jsonl"),
        "--out", &p("quality.json"),
    ]);
    run_cli_ok(&[
        "eval-e2e", "--config", cfg, "--checkpoint", &p("model.ckpt"), "--tracked",
        &p("pseudo.jsonl"), "--gt", &p("gt.jsonl"), "--out", &p("e2e.json"),
    ]);
}

#[test]
fn criterion_11_determinism() {
    let cfg_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.toml");
    let cfg = cfg_path.display().to_string();
    let work = tempfile::tempdir().unwrap();
    let dir_a = work.path().join("a");
    let dir_b = work.path().join("b");
    std::fs::create_dir_all(&dir_a).unwrap();
    std::fs::create_dir_all(&dir_b).unwrap();

    staged_pipeline(&cfg, &dir_a);
    staged_pipeline(&cfg, &dir_b);
    run_cli_ok(&["experiment", "ppt", "--config", &cfg, "--out-dir", &dir_a.join("exp").display().to_string()]);
    run_cli_ok(&["experiment", "ppt", "--config", &cfg, "--out-dir", &dir_b.join("exp").display().to_string()]);

    let mut compared = 0usize;
    let mut mismatches = Vec::new();
    let walk = |sub: &Path| {
        let mut stack = vec![sub.to_path_buf()];
        let mut files = Vec::new();
        while let Some(d) = stack.pop() {
            for entry in std::fs::read_dir(&d).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.push(path);
                }
            }
        }
        files
    };
    for file_a in walk(&dir_a) {
        let rel = file_a.strip_prefix(&dir_a).unwrap();
        if rel.file_name().map(|n| n == "manifest.json").unwrap_or(false) {
            continue; // carries wall-clock timings
        }
        let file_b = dir_b.join(rel);
        let a = std::fs::read(&file_a).unwrap();
        let b = std::fs::read(&file_b).unwrap_or_default();
        if a != b {
            mismatches.push(rel.display().to_string());
        }
        compared += 1;
    }
    report(
        "C11 determinism",
        compared > 10 && mismatches.is_empty(),
        &format!(
            "{compared} pipeline+experiment outputs byte-identical across reruns{}",
            if mismatches.is_empty() {
                String::new()
            } else {
                format!("; mismatched: {}", mismatches.join(", "))
            }
        ),
    );
}
