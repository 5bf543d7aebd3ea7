//! Forecast-sample extraction: sliding windows over 10 Hz trajectories,
//! agent-centric normalization, set merging and per-trajectory labeled
//! fractions.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::geometry::{Provenance, Trajectory};
use crate::rng::rng_from_seed;

const GRID_DT: f64 = 0.1;
const GRID_TOL: f64 = 1e-6;
/// Below this mean speed over the trailing 0.5 s the state's yaw field is
/// used as the frame heading instead of the final displacement direction.
const SLOW_SPEED: f64 = 0.1;

/// Sliding-window parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowConfig {
    /// Past frames L (the window carries L+1 past positions).
    pub past_len: usize,
    /// Future frames M.
    pub future_len: usize,
    /// Anchor stride in frames.
    pub stride: usize,
    /// Classes eligible for windowing.
    pub allowed_classes: BTreeSet<u16>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        let mut allowed = BTreeSet::new();
        allowed.insert(0);
        WindowConfig {
            past_len: 20,
            future_len: 60,
            stride: 5,
            allowed_classes: allowed,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.past_len < 1 || self.future_len < 1 || self.stride < 1 {
            return Err(Error::InvalidConfig(
                "past_len, future_len and stride must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Rigid transform from the agent-centric frame back to world coordinates.
/// The rotation is stored as a unit vector so applying it is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2 {
    pub origin: [f64; 2],
    pub cos_h: f64,
    pub sin_h: f64,
}

impl Pose2 {
    pub fn heading(&self) -> f64 {
        self.sin_h.atan2(self.cos_h)
    }

    pub fn from_heading(origin: [f64; 2], heading: f64) -> Pose2 {
        Pose2 {
            origin,
            cos_h: heading.cos(),
            sin_h: heading.sin(),
        }
    }

    /// Agent-centric point -> world.
    pub fn to_world(&self, p: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.cos_h * p[0] - self.sin_h * p[1],
            self.origin[1] + self.sin_h * p[0] + self.cos_h * p[1],
        ]
    }

    /// World point -> agent-centric.
    pub fn to_local(&self, p: [f64; 2]) -> [f64; 2] {
        let dx = p[0] - self.origin[0];
        let dy = p[1] - self.origin[1];
        [
            dx * self.cos_h + dy * self.sin_h,
            -dx * self.sin_h + dy * self.cos_h,
        ]
    }
}

/// One agent-centric training/evaluation unit: L+1 past positions ending at
/// the origin, M future positions, and the transform back to world.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSample {
    pub sample_id: u64,
    pub scene_id: String,
    pub track_id: u64,
    pub anchor_t: f64,
    pub past: Vec<[f64; 2]>,
    pub future: Vec<[f64; 2]>,
    pub to_world: Pose2,
    pub provenance: Provenance,
}

impl ForecastSample {
    pub fn past_len(&self) -> usize {
        self.past.len() - 1
    }

    pub fn future_len(&self) -> usize {
        self.future.len()
    }
}

/// A window in world coordinates, before agent-centric normalization.
#[derive(Debug, Clone)]
pub struct WorldWindow {
    pub scene_id: String,
    pub track_id: u64,
    pub anchor_t: f64,
    /// L+1 world positions up to and including the anchor.
    pub past: Vec<[f64; 2]>,
    /// M world positions after the anchor; empty for past-only windows.
    pub future: Vec<[f64; 2]>,
    /// Yaw of the anchor state.
    pub anchor_yaw: f64,
    /// Detection score at the anchor state, when present.
    pub anchor_score: Option<f64>,
    pub provenance: Provenance,
}

fn check_grid(traj: &Trajectory) -> Result<()> {
    traj.validate()?;
    match traj.uniform_interval(GRID_TOL) {
        Some(dt) if (dt - GRID_DT).abs() <= GRID_TOL => Ok(()),
        _ => Err(Error::InvalidInput(format!(
            "trajectory {}/{} is not on the uniform 10 Hz grid",
            traj.scene_id, traj.track_id
        ))),
    }
}

fn windows_of(
    traj: &Trajectory,
    cfg: &WindowConfig,
    require_future: bool,
) -> Result<Vec<WorldWindow>> {
    check_grid(traj)?;
    let l = cfg.past_len;
    let m = if require_future { cfg.future_len } else { 0 };
    let n = traj.states.len();
    let mut out = Vec::new();
    if n < l + m + 1 {
        return Ok(out);
    }
    // anchors sit on the global stride grid, so windows from trajectories
    // with different start times share anchor timesteps
    let phase = (traj.states[0].t / GRID_DT).round() as i64;
    let mut anchor = l;
    while (phase + anchor as i64).rem_euclid(cfg.stride as i64) != 0 && anchor + m <= n - 1 {
        anchor += 1;
    }
    while anchor + m <= n - 1 {
        let past = traj.states[anchor - l..=anchor]
            .iter()
            .map(|s| [s.cx, s.cy])
            .collect();
        let future = traj.states[anchor + 1..=anchor + m]
            .iter()
            .map(|s| [s.cx, s.cy])
            .collect();
        out.push(WorldWindow {
            scene_id: traj.scene_id.clone(),
            track_id: traj.track_id,
            anchor_t: traj.states[anchor].t,
            past,
            future,
            anchor_yaw: traj.states[anchor].yaw,
            anchor_score: traj.states[anchor].score,
            provenance: traj.provenance.clone(),
        });
        anchor += cfg.stride;
    }
    Ok(out)
}

/// World-frame windows (past and future) for every eligible trajectory.
pub fn windows_world(trajs: &[Trajectory], cfg: &WindowConfig) -> Result<Vec<WorldWindow>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for traj in trajs {
        if !cfg.allowed_classes.contains(&traj.class_id.0) {
            continue;
        }
        out.extend(windows_of(traj, cfg, true)?);
    }
    sort_windows(&mut out);
    Ok(out)
}

/// Past-only world windows; anchors run to the end of the trajectory.
/// Used when forecasting from tracked histories with no future required.
pub fn windows_past_world(trajs: &[Trajectory], cfg: &WindowConfig) -> Result<Vec<WorldWindow>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for traj in trajs {
        if !cfg.allowed_classes.contains(&traj.class_id.0) {
            continue;
        }
        out.extend(windows_of(traj, cfg, false)?);
    }
    sort_windows(&mut out);
    Ok(out)
}

fn sort_windows(ws: &mut [WorldWindow]) {
    ws.sort_by(|a, b| {
        a.scene_id
            .cmp(&b.scene_id)
            .then(a.track_id.cmp(&b.track_id))
            .then(a.anchor_t.partial_cmp(&b.anchor_t).unwrap())
    });
}

/// Heading unit vector of a window: the final past displacement when the
/// agent moved at least `SLOW_SPEED` over the trailing 0.5 s, otherwise the
/// anchor state's yaw.
fn window_heading(w: &WorldWindow) -> [f64; 2] {
    let n = w.past.len();
    let back = (n - 1).min(5);
    let anchor = w.past[n - 1];
    let earlier = w.past[n - 1 - back];
    let dist = (anchor[0] - earlier[0]).hypot(anchor[1] - earlier[1]);
    let speed = dist / (back as f64 * GRID_DT);
    let dx = anchor[0] - w.past[n - 2][0];
    let dy = anchor[1] - w.past[n - 2][1];
    let norm = dx.hypot(dy);
    if speed >= SLOW_SPEED && norm > 0.0 {
        [dx / norm, dy / norm]
    } else {
        [w.anchor_yaw.cos(), w.anchor_yaw.sin()]
    }
}

/// Convert a world window into an agent-centric sample. The anchor maps to
/// the origin exactly and the heading maps to +x.
pub fn window_to_sample(w: &WorldWindow, sample_id: u64) -> ForecastSample {
    let n = w.past.len();
    let origin = w.past[n - 1];
    let [ux, uy] = window_heading(w);
    let pose = Pose2 {
        origin,
        cos_h: ux,
        sin_h: uy,
    };
    let past = w.past.iter().map(|&p| pose.to_local(p)).collect();
    let future = w.future.iter().map(|&p| pose.to_local(p)).collect();
    ForecastSample {
        sample_id,
        scene_id: w.scene_id.clone(),
        track_id: w.track_id,
        anchor_t: w.anchor_t,
        past,
        future,
        to_world: pose,
        provenance: w.provenance.clone(),
    }
}

/// Extract agent-centric forecast samples from 10 Hz trajectories.
/// Output is ordered by (scene_id, track_id, anchor_t) with sequential ids.
pub fn window_samples(trajs: &[Trajectory], cfg: &WindowConfig) -> Result<Vec<ForecastSample>> {
    let windows = windows_world(trajs, cfg)?;
    Ok(windows
        .iter()
        .enumerate()
        .map(|(i, w)| window_to_sample(w, i as u64))
        .collect())
}

/// Concatenate sample sets, re-assigning globally unique sample ids.
/// No deduplication. Window shapes must agree.
pub fn merge_sets(sets: &[Vec<ForecastSample>]) -> Result<Vec<ForecastSample>> {
    let mut out: Vec<ForecastSample> = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for set in sets {
        for s in set {
            let this = (s.past_len(), s.future_len());
            match shape {
                None => shape = Some(this),
                Some(expect) if expect != this => {
                    return Err(Error::InvalidInput(format!(
                        "window shape mismatch in merge: {expect:?} vs {this:?}"
                    )));
                }
                _ => {}
            }
            let mut s = s.clone();
            s.sample_id = out.len() as u64;
            out.push(s);
        }
    }
    Ok(out)
}

/// Which whole units are drawn and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitUnit {
    PerTrajectory,
}

/// Deterministic labeled-fraction draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Fraction in (0, 1].
    pub fraction: f64,
    pub seed: u64,
    pub unit: SplitUnit,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidConfig("fraction outside (0, 1]".to_string()));
        }
        Ok(())
    }
}

/// First ceil(fraction * n) positions of a seeded permutation of 0..n.
/// Prefixes nest: a smaller fraction at the same seed selects a subset of
/// a larger one.
fn selected_indices(n: usize, fraction: f64, seed: u64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    order.shuffle(&mut rng);
    let k = ((fraction * n as f64).ceil() as usize).min(n);
    let mut keep = vec![false; n];
    for &i in order.iter().take(k) {
        keep[i] = true;
    }
    keep
}

/// Uniform random subset of whole trajectories, in canonical input order.
pub fn sample_fraction(trajs: &[Trajectory], spec: &SplitSpec) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    let keep = selected_indices(trajs.len(), spec.fraction, spec.seed);
    Ok(trajs
        .iter()
        .zip(keep.iter())
        .filter(|(_, &k)| k)
        .map(|(t, _)| t.clone())
        .collect())
}

/// Per-trajectory fraction applied to an already-windowed sample set: the
/// draw is over distinct (scene_id, track_id) keys, so all windows of a
/// selected trajectory stay together.
pub fn fraction_samples(samples: &[ForecastSample], spec: &SplitSpec) -> Result<Vec<ForecastSample>> {
    spec.validate()?;
    let mut keys: Vec<(String, u64)> = samples
        .iter()
        .map(|s| (s.scene_id.clone(), s.track_id))
        .collect();
    keys.sort();
    keys.dedup();
    let keep = selected_indices(keys.len(), spec.fraction, spec.seed);
    let selected: BTreeSet<&(String, u64)> = keys
        .iter()
        .zip(keep.iter())
        .filter(|(_, &k)| k)
        .map(|(key, _)| key)
        .collect();
    Ok(samples
        .iter()
        .filter(|s| selected.contains(&(s.scene_id.clone(), s.track_id)))
        .cloned()
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ClassId, TrajState};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn traj(n: usize, vx: f64, vy: f64, scene: &str, id: u64) -> Trajectory {
        let states = (0..n)
            .map(|i| {
                let t = i as f64 * 0.1;
                TrajState {
                    t,
                    cx: vx * t,
                    cy: vy * t,
                    cz: 0.8,
                    yaw: vy.atan2(vx),
                    length: 4.5,
                    width: 1.9,
                    height: 1.6,
                    score: None,
                }
            })
            .collect();
        Trajectory {
            scene_id: scene.to_string(),
            track_id: id,
            class_id: ClassId::VEHICLE,
            states,
            provenance: Provenance::GroundTruth,
        }
    }

    #[test]
    fn window_counts_at_the_length_boundary() {
        let cfg = WindowConfig::default();
        let exactly = window_samples(&[traj(81, 1.0, 0.0, "s", 0)], &cfg).unwrap();
        assert_eq!(exactly.len(), 1);
        let short = window_samples(&[traj(80, 1.0, 0.0, "s", 0)], &cfg).unwrap();
        assert_eq!(short.len(), 0);
    }

    #[test]
    fn eastbound_agent_is_already_canonical() {
        let cfg = WindowConfig::default();
        let samples = window_samples(&[traj(81, 1.0, 0.0, "s", 0)], &cfg).unwrap();
        let s = &samples[0];
        assert_eq!(s.past[20], [0.0, 0.0]);
        for w in s.past.windows(2) {
            assert_abs_diff_eq!(w[1][0] - w[0][0], 0.1, epsilon = 1e-12);
            assert_abs_diff_eq!(w[1][1] - w[0][1], 0.0, epsilon = 1e-12);
        }
        for w in s.future.windows(2) {
            assert_abs_diff_eq!(w[1][0] - w[0][0], 0.1, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.to_world.cos_h, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.to_world.sin_h, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn non_uniform_grid_is_rejected() {
        let mut tr = traj(81, 1.0, 0.0, "s", 0);
        tr.states[40].t += 0.03;
        assert!(window_samples(&[tr], &WindowConfig::default()).is_err());
    }

    #[test]
    fn disallowed_classes_are_skipped() {
        let mut tr = traj(81, 1.0, 0.0, "s", 0);
        tr.class_id = ClassId(7);
        let out = window_samples(&[tr], &WindowConfig::default()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn merge_concatenates_and_reassigns_ids() {
        let cfg = WindowConfig::default();
        let a = window_samples(&[traj(101, 1.0, 0.0, "a", 0)], &cfg).unwrap();
        let b = window_samples(&[traj(91, 0.0, 2.0, "b", 0)], &cfg).unwrap();
        let (na, nb) = (a.len(), b.len());
        let merged = merge_sets(&[a.clone(), b]).unwrap();
        assert_eq!(merged.len(), na + nb);
        let ids: Vec<u64> = merged.iter().map(|s| s.sample_id).collect();
        assert_eq!(ids, (0..merged.len() as u64).collect::<Vec<_>>());

        let single = merge_sets(&[a.clone()]).unwrap();
        assert_eq!(single.len(), na);
        let with_empty = merge_sets(&[Vec::new(), a.clone()]).unwrap();
        assert_eq!(with_empty.len(), na);
    }

    #[test]
    fn merge_rejects_mismatched_windows() {
        let cfg = WindowConfig::default();
        let a = window_samples(&[traj(101, 1.0, 0.0, "a", 0)], &cfg).unwrap();
        let mut short_cfg = cfg.clone();
        short_cfg.future_len = 30;
        let b = window_samples(&[traj(101, 1.0, 0.0, "b", 0)], &short_cfg).unwrap();
        assert!(merge_sets(&[a, b]).is_err());
    }

    #[test]
    fn fraction_one_returns_canonical_order() {
        let trajs: Vec<Trajectory> = (0..5).map(|i| traj(81, 1.0, 0.0, "s", i)).collect();
        let spec = SplitSpec {
            fraction: 1.0,
            seed: 3,
            unit: SplitUnit::PerTrajectory,
        };
        let out = sample_fraction(&trajs, &spec).unwrap();
        assert_eq!(out, trajs);
    }

    #[test]
    fn fraction_counts_and_determinism() {
        let trajs: Vec<Trajectory> = (0..700).map(|i| traj(2, 1.0, 0.0, "s", i)).collect();
        let spec = SplitSpec {
            fraction: 0.1,
            seed: 9,
            unit: SplitUnit::PerTrajectory,
        };
        let a = sample_fraction(&trajs, &spec).unwrap();
        assert_eq!(a.len(), 70);
        let b = sample_fraction(&trajs, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn window_count_formula_holds() {
        let cfg = WindowConfig::default();
        for len in [81usize, 86, 90, 101, 140] {
            let samples = window_samples(&[traj(len, 1.0, 0.0, "s", 0)], &cfg).unwrap();
            let expected = (len - (cfg.past_len + cfg.future_len + 1)) / cfg.stride + 1;
            assert_eq!(samples.len(), expected, "len {len}");
        }
    }

    proptest! {
        #[test]
        fn to_world_round_trips(vx in -8.0..8.0f64, vy in -8.0..8.0f64, x0 in -30.0..30.0f64) {
            let mut tr = traj(81, vx.max(0.2), vy, "s", 0);
            for s in tr.states.iter_mut() {
                s.cx += x0;
            }
            let cfg = WindowConfig::default();
            let samples = window_samples(&[tr.clone()], &cfg).unwrap();
            for s in &samples {
                let anchor_idx = (s.anchor_t * 10.0).round() as usize;
                for (i, p) in s.past.iter().enumerate() {
                    let world = s.to_world.to_world(*p);
                    let src = &tr.states[anchor_idx - cfg.past_len + i];
                    prop_assert!((world[0] - src.cx).abs() <= 1e-9);
                    prop_assert!((world[1] - src.cy).abs() <= 1e-9);
                }
                prop_assert_eq!(s.past[cfg.past_len], [0.0, 0.0]);
            }
        }

        #[test]
        fn moving_agents_have_final_displacement_along_x(
            vx in 0.5..8.0f64, vy in -8.0..8.0f64
        ) {
            let samples =
                window_samples(&[traj(81, vx, vy, "s", 0)], &WindowConfig::default()).unwrap();
            for s in &samples {
                let l = s.past.len() - 1;
                let dx = s.past[l][0] - s.past[l - 1][0];
                let dy = s.past[l][1] - s.past[l - 1][1];
                prop_assert!(dx > 0.0);
                prop_assert!(dy.abs() <= 1e-9);
            }
        }

        #[test]
        fn fractions_nest_at_equal_seed(seed in 0u64..32, f1 in 0.05..0.5f64, f2 in 0.5..1.0f64) {
            let trajs: Vec<Trajectory> = (0..40).map(|i| traj(2, 1.0, 0.0, "s", i)).collect();
            let small = sample_fraction(&trajs, &SplitSpec { fraction: f1, seed, unit: SplitUnit::PerTrajectory }).unwrap();
            let large = sample_fraction(&trajs, &SplitSpec { fraction: f2, seed, unit: SplitUnit::PerTrajectory }).unwrap();
            let large_ids: BTreeSet<u64> = large.iter().map(|t| t.track_id).collect();
            for tr in &small {
                prop_assert!(large_ids.contains(&tr.track_id));
            }
        }
    }
}
