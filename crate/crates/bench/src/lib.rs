//! Shared input generators for the pipeline benchmarks.

use rand::Rng;

use trajforge_core::dataset::{window_samples, ForecastSample, WindowConfig};
use trajforge_core::geometry::Trajectory;
use trajforge_core::rng::rng_from_seed;
use trajforge_core::sim::{detect, generate_scene, gt_frames, DetectionFrame, DetectorProfile, SceneConfig};

pub fn random_cost(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| (0..m).map(|_| rng.gen_range(0.0..100.0)).collect())
        .collect()
}

pub fn bench_scene(seed: u64) -> Vec<Trajectory> {
    let cfg = SceneConfig {
        duration: 10.0,
        n_agents: (6, 6),
        seed,
        ..SceneConfig::default()
    };
    generate_scene(&cfg, "bench").unwrap()
}

pub fn bench_detections(seed: u64) -> Vec<DetectionFrame> {
    let gt = bench_scene(seed);
    let frames = gt_frames(&gt).unwrap();
    detect(&frames, &DetectorProfile::default(), 60.0, seed).unwrap()
}

pub fn bench_samples(seed: u64) -> Vec<ForecastSample> {
    let gt = bench_scene(seed);
    window_samples(&gt, &WindowConfig::default()).unwrap()
}
