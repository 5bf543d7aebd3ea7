//! Synthetic perception data: multi-agent ground-truth scenes and
//! simulated per-frame detections under configurable error regimes.
//!
//! Everything is a pure function of (config, seed). Multi-scene callers
//! derive one seed per scene with [`crate::rng::derive_seed`], so scenes can
//! be produced in parallel without changing the output.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Box3D, ClassId, Provenance, TrajState, Trajectory, PI, TAU};
use crate::rng::{derive_seed, rng_from_seed};

/// Probability weights over the four motion patterns.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionMix {
    pub constant_velocity: f64,
    pub constant_turn: f64,
    pub stop_and_go: f64,
    pub lane_change: f64,
}

impl Default for MotionMix {
    fn default() -> Self {
        MotionMix {
            constant_velocity: 0.4,
            constant_turn: 0.2,
            stop_and_go: 0.2,
            lane_change: 0.2,
        }
    }
}

impl MotionMix {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.constant_velocity,
            self.constant_turn,
            self.stop_and_go,
            self.lane_change,
        ];
        if w.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidConfig(
                "motion_mix weights must be non-negative".to_string(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "motion_mix weights must sum to 1 (got {sum})"
            )));
        }
        Ok(())
    }
}

/// Scene generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    /// Seconds.
    pub duration: f64,
    pub frame_hz: f64,
    /// Inclusive agent-count range.
    pub n_agents: (usize, usize),
    /// Square half-extent in meters; agents stay within [-roi, roi]^2.
    pub roi: f64,
    pub motion_mix: MotionMix,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            duration: 20.0,
            frame_hz: 10.0,
            n_agents: (4, 8),
            roi: 60.0,
            motion_mix: MotionMix::default(),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.motion_mix.validate()?;
        if self.n_agents.0 > self.n_agents.1 {
            return Err(Error::InvalidConfig("empty n_agents range".to_string()));
        }
        if !(self.duration > 0.0 && self.frame_hz > 0.0) {
            return Err(Error::InvalidConfig(
                "duration and frame_hz must be positive".to_string(),
            ));
        }
        let frames = self.duration * self.frame_hz;
        if (frames - frames.round()).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "duration * frame_hz must be integral".to_string(),
            ));
        }
        if !(self.roi > 0.0) {
            return Err(Error::InvalidConfig("roi must be positive".to_string()));
        }
        Ok(())
    }

    pub fn n_frames(&self) -> usize {
        (self.duration * self.frame_hz).round() as usize + 1
    }
}

/// Detection score distribution for true and false positives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    pub tp_mean: f64,
    pub tp_sigma: f64,
    pub fp_mean: f64,
    pub fp_sigma: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        ScoreModel {
            tp_mean: 0.8,
            tp_sigma: 0.1,
            fp_mean: 0.35,
            fp_sigma: 0.1,
        }
    }
}

/// Error regime of one simulated detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorProfile {
    pub profile_id: String,
    /// Std-dev of Gaussian center noise, meters.
    pub pos_sigma: f64,
    pub dim_sigma: f64,
    pub yaw_sigma: f64,
    /// Base per-frame miss probability.
    pub miss_base: f64,
    /// Additional miss probability per meter of distance from the origin.
    pub miss_range_coeff: f64,
    /// Expected false positives per frame.
    pub fp_rate: f64,
    pub score_model: ScoreModel,
    /// Detection frequency; 2 or 10 Hz.
    pub detect_hz: f64,
}

impl DetectorProfile {
    pub fn validate(&self) -> Result<()> {
        if self.pos_sigma < 0.0 || self.dim_sigma < 0.0 || self.yaw_sigma < 0.0 {
            return Err(Error::InvalidConfig("sigmas must be >= 0".to_string()));
        }
        if !(0.0..=1.0).contains(&self.miss_base) {
            return Err(Error::InvalidConfig("miss_base outside [0, 1]".to_string()));
        }
        if self.miss_range_coeff < 0.0 || self.fp_rate < 0.0 {
            return Err(Error::InvalidConfig(
                "miss_range_coeff and fp_rate must be >= 0".to_string(),
            ));
        }
        if self.detect_hz != 2.0 && self.detect_hz != 10.0 {
            return Err(Error::InvalidConfig(
                "detect_hz must be 2 or 10".to_string(),
            ));
        }
        Ok(())
    }
}

impl Default for DetectorProfile {
    fn default() -> Self {
        DetectorProfile {
            profile_id: "moderate".to_string(),
            pos_sigma: 0.2,
            dim_sigma: 0.1,
            yaw_sigma: 0.05,
            miss_base: 0.05,
            miss_range_coeff: 0.0005,
            fp_rate: 0.3,
            score_model: ScoreModel::default(),
            detect_hz: 10.0,
        }
    }
}

/// All detected boxes of one scene at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionFrame {
    pub scene_id: String,
    pub t: f64,
    pub boxes: Vec<Box3D>,
}

#[derive(Debug, Clone, Copy)]
struct Dims {
    l: f64,
    w: f64,
    h: f64,
}

/// Closed-form motion plan; `eval(t)` returns (position, velocity).
enum MotionPlan {
    ConstantVelocity {
        p0: [f64; 2],
        v: [f64; 2],
    },
    ConstantTurn {
        center: [f64; 2],
        radius: f64,
        theta0: f64,
        omega: f64,
    },
    StopAndGo {
        p0: [f64; 2],
        dir: [f64; 2],
        v1: f64,
        v2: f64,
        t1: f64,
        t2: f64,
        ramp: f64,
    },
    LaneChange {
        p0: [f64; 2],
        dir: [f64; 2],
        normal: [f64; 2],
        speed: f64,
        offset: f64,
        t0: f64,
        tau: f64,
    },
}

/// Integral of the C1 cosine ramp from speed `a` to `b` over [0, ramp],
/// evaluated at local time `s`.
fn ramp_distance(a: f64, b: f64, ramp: f64, s: f64) -> f64 {
    let s = s.clamp(0.0, ramp);
    let mid = 0.5 * (a + b);
    let amp = 0.5 * (a - b);
    mid * s + amp * (ramp / PI) * (PI * s / ramp).sin()
}

fn ramp_speed(a: f64, b: f64, ramp: f64, s: f64) -> f64 {
    let s = s.clamp(0.0, ramp);
    let mid = 0.5 * (a + b);
    let amp = 0.5 * (a - b);
    mid + amp * (PI * s / ramp).cos()
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn smoothstep_deriv(x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    6.0 * x * (1.0 - x)
}

impl MotionPlan {
    fn eval(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        match *self {
            MotionPlan::ConstantVelocity { p0, v } => {
                ([p0[0] + v[0] * t, p0[1] + v[1] * t], v)
            }
            MotionPlan::ConstantTurn {
                center,
                radius,
                theta0,
                omega,
            } => {
                let th = theta0 + omega * t;
                let pos = [center[0] + radius * th.cos(), center[1] + radius * th.sin()];
                let vel = [-radius * omega * th.sin(), radius * omega * th.cos()];
                (pos, vel)
            }
            MotionPlan::StopAndGo {
                p0,
                dir,
                v1,
                v2,
                t1,
                t2,
                ramp,
            } => {
                // cruise v1, ramp to rest, dwell, ramp to v2
                let (dist, speed) = if t < t1 {
                    (v1 * t, v1)
                } else if t < t1 + ramp {
                    (v1 * t1 + ramp_distance(v1, 0.0, ramp, t - t1), ramp_speed(v1, 0.0, ramp, t - t1))
                } else if t < t2 {
                    (v1 * t1 + ramp_distance(v1, 0.0, ramp, ramp), 0.0)
                } else if t < t2 + ramp {
                    (
                        v1 * t1
                            + ramp_distance(v1, 0.0, ramp, ramp)
                            + ramp_distance(0.0, v2, ramp, t - t2),
                        ramp_speed(0.0, v2, ramp, t - t2),
                    )
                } else {
                    (
                        v1 * t1
                            + ramp_distance(v1, 0.0, ramp, ramp)
                            + ramp_distance(0.0, v2, ramp, ramp)
                            + v2 * (t - t2 - ramp),
                        v2,
                    )
                };
                (
                    [p0[0] + dir[0] * dist, p0[1] + dir[1] * dist],
                    [dir[0] * speed, dir[1] * speed],
                )
            }
            MotionPlan::LaneChange {
                p0,
                dir,
                normal,
                speed,
                offset,
                t0,
                tau,
            } => {
                let x = (t - t0) / tau;
                let lat = offset * smoothstep(x);
                let lat_v = offset * smoothstep_deriv(x) / tau;
                let along = speed * t;
                (
                    [
                        p0[0] + dir[0] * along + normal[0] * lat,
                        p0[1] + dir[1] * along + normal[1] * lat,
                    ],
                    [
                        dir[0] * speed + normal[0] * lat_v,
                        dir[1] * speed + normal[1] * lat_v,
                    ],
                )
            }
        }
    }
}

fn sample_plan(rng: &mut impl Rng, mix: &MotionMix, roi: f64, duration: f64) -> MotionPlan {
    let pick: f64 = rng.gen();
    let inner = roi * 0.7;
    let p0 = [rng.gen_range(-inner..inner), rng.gen_range(-inner..inner)];
    let heading = rng.gen_range(-PI..PI);
    let dir = [heading.cos(), heading.sin()];
    if pick < mix.constant_velocity {
        let speed = rng.gen_range(1.0..10.0);
        MotionPlan::ConstantVelocity {
            p0,
            v: [dir[0] * speed, dir[1] * speed],
        }
    } else if pick < mix.constant_velocity + mix.constant_turn {
        let omega: f64 = rng.gen_range(0.08..0.35) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let speed = rng.gen_range(1.5..8.0);
        let radius = speed / omega.abs();
        let theta0 = rng.gen_range(-PI..PI);
        let max_c = (roi - radius - 2.0).max(0.0);
        let center = [rng.gen_range(-1.0..1.0) * max_c, rng.gen_range(-1.0..1.0) * max_c];
        MotionPlan::ConstantTurn {
            center,
            radius,
            theta0,
            omega,
        }
    } else if pick < mix.constant_velocity + mix.constant_turn + mix.stop_and_go {
        let v1 = rng.gen_range(2.0..8.0);
        let v2 = rng.gen_range(2.0..8.0);
        let ramp = rng.gen_range(1.0..2.0);
        let t1 = rng.gen_range(0.15..0.35) * duration;
        let dwell = rng.gen_range(0.1..0.25) * duration;
        let t2 = t1 + ramp + dwell;
        MotionPlan::StopAndGo {
            p0,
            dir,
            v1,
            v2,
            t1,
            t2,
            ramp,
        }
    } else {
        let speed = rng.gen_range(2.0..9.0);
        let offset = rng.gen_range(2.5..3.5) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let tau = rng.gen_range(2.0..4.0);
        let t0 = rng.gen_range(0.15..0.5) * duration;
        let normal = [-dir[1], dir[0]];
        MotionPlan::LaneChange {
            p0,
            dir,
            normal,
            speed,
            offset,
            t0,
            tau,
        }
    }
}

fn plan_stays_inside(plan: &MotionPlan, cfg: &SceneConfig) -> bool {
    let n = cfg.n_frames();
    for i in 0..n {
        let t = i as f64 / cfg.frame_hz;
        let (pos, _) = plan.eval(t);
        if pos[0].abs() > cfg.roi || pos[1].abs() > cfg.roi {
            return false;
        }
    }
    true
}

/// Generate the ground-truth trajectories of one scene. Deterministic in
/// (cfg.seed); each agent draws from its own derived stream so the agent
/// count does not perturb later agents.
pub fn generate_scene(cfg: &SceneConfig, scene_id: &str) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let mut top = rng_from_seed(derive_seed(cfg.seed, 0));
    let n_agents = if cfg.n_agents.0 == cfg.n_agents.1 {
        cfg.n_agents.0
    } else {
        top.gen_range(cfg.n_agents.0..=cfg.n_agents.1)
    };

    let n_frames = cfg.n_frames();
    let mut out = Vec::with_capacity(n_agents);
    for agent in 0..n_agents {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, 1 + agent as u64));
        let dims = Dims {
            l: rng.gen_range(4.2..5.2),
            w: rng.gen_range(1.8..2.1),
            h: rng.gen_range(1.4..1.7),
        };
        let mut plan = sample_plan(&mut rng, &cfg.motion_mix, cfg.roi, cfg.duration);
        let mut tries = 0;
        while !plan_stays_inside(&plan, cfg) && tries < 32 {
            plan = sample_plan(&mut rng, &cfg.motion_mix, cfg.roi, cfg.duration);
            tries += 1;
        }
        if !plan_stays_inside(&plan, cfg) {
            // crawl toward the origin; always contained
            let (p0, _) = plan.eval(0.0);
            let norm = (p0[0].powi(2) + p0[1].powi(2)).sqrt().max(1.0);
            plan = MotionPlan::ConstantVelocity {
                p0: [p0[0] * 0.5, p0[1] * 0.5],
                v: [-p0[0] / norm * 0.4, -p0[1] / norm * 0.4],
            };
        }

        let mut states = Vec::with_capacity(n_frames);
        let mut last_yaw = 0.0f64;
        for i in 0..n_frames {
            let t = i as f64 / cfg.frame_hz;
            let (pos, vel) = plan.eval(t);
            let speed = (vel[0].powi(2) + vel[1].powi(2)).sqrt();
            let yaw = if speed > 1e-6 {
                vel[1].atan2(vel[0])
            } else {
                last_yaw
            };
            last_yaw = yaw;
            states.push(TrajState {
                t,
                cx: pos[0],
                cy: pos[1],
                cz: dims.h * 0.5,
                yaw: wrap_angle(yaw),
                length: dims.l,
                width: dims.w,
                height: dims.h,
                score: None,
            });
        }
        // backfill the heading of an initially stationary agent
        if let Some(first_moving) = states.iter().position(|s| s.yaw != 0.0) {
            let yaw = states[first_moving].yaw;
            for s in states.iter_mut().take(first_moving) {
                if s.yaw == 0.0 {
                    s.yaw = yaw;
                }
            }
        }
        out.push(Trajectory {
            scene_id: scene_id.to_string(),
            track_id: agent as u64,
            class_id: ClassId::VEHICLE,
            states,
            provenance: Provenance::GroundTruth,
        });
    }
    Ok(out)
}

/// Per-frame ground-truth boxes of a scene (score 1.0).
pub fn gt_frames(trajs: &[Trajectory]) -> Result<Vec<DetectionFrame>> {
    if trajs.is_empty() {
        return Ok(Vec::new());
    }
    let scene_id = trajs[0].scene_id.clone();
    let n = trajs[0].states.len();
    for tr in trajs {
        if tr.scene_id != scene_id {
            return Err(Error::InvalidInput(
                "gt_frames expects a single scene".to_string(),
            ));
        }
        if tr.states.len() != n {
            return Err(Error::InvalidInput(
                "gt_frames expects equal-length trajectories".to_string(),
            ));
        }
    }
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let t = trajs[0].states[i].t;
        let boxes = trajs
            .iter()
            .map(|tr| {
                let s = &tr.states[i];
                Box3D::new(
                    s.cx, s.cy, s.cz, s.length, s.width, s.height, s.yaw, 1.0, tr.class_id, s.t,
                )
            })
            .collect();
        frames.push(DetectionFrame {
            scene_id: scene_id.clone(),
            t,
            boxes,
        });
    }
    Ok(frames)
}

/// Simulate a detector over ground-truth frames: boxes are dropped with a
/// range-dependent probability, survivors perturbed with Gaussian noise,
/// and Poisson-distributed false positives added uniformly over the ROI.
/// Deterministic given (frames, profile, seed).
pub fn detect(
    frames: &[DetectionFrame],
    profile: &DetectorProfile,
    roi: f64,
    seed: u64,
) -> Result<Vec<DetectionFrame>> {
    profile.validate()?;
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let frame_dt = if frames.len() >= 2 {
        frames[1].t - frames[0].t
    } else {
        0.1
    };
    let frame_hz = 1.0 / frame_dt;
    if profile.detect_hz > frame_hz + 1e-9 {
        return Err(Error::InvalidInput(format!(
            "detect_hz {} exceeds frame rate {frame_hz}",
            profile.detect_hz
        )));
    }
    let stride = (frame_hz / profile.detect_hz).round() as usize;

    let pos_noise = Normal::new(0.0, profile.pos_sigma)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let dim_noise = Normal::new(0.0, profile.dim_sigma)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let yaw_noise = Normal::new(0.0, profile.yaw_sigma)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let tp_score = Normal::new(profile.score_model.tp_mean, profile.score_model.tp_sigma)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let fp_score = Normal::new(profile.score_model.fp_mean, profile.score_model.fp_sigma)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut out = Vec::new();
    for (k, frame) in frames.iter().step_by(stride).enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, k as u64));
        let mut boxes = Vec::new();
        for b in &frame.boxes {
            let dist = (b.cx.powi(2) + b.cy.powi(2)).sqrt();
            let p_miss = (profile.miss_base + profile.miss_range_coeff * dist).min(1.0);
            if rng.gen::<f64>() < p_miss {
                continue;
            }
            let score = tp_score.sample(&mut rng).clamp(0.0, 1.0);
            boxes.push(Box3D::new(
                b.cx + pos_noise.sample(&mut rng),
                b.cy + pos_noise.sample(&mut rng),
                b.cz + pos_noise.sample(&mut rng),
                (b.length + dim_noise.sample(&mut rng)).max(0.1),
                (b.width + dim_noise.sample(&mut rng)).max(0.1),
                (b.height + dim_noise.sample(&mut rng)).max(0.1),
                b.yaw + yaw_noise.sample(&mut rng),
                score,
                b.class_id,
                frame.t,
            ));
        }
        let n_fp = if profile.fp_rate > 0.0 {
            Poisson::new(profile.fp_rate)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..n_fp {
            let score = fp_score.sample(&mut rng).clamp(0.0, 1.0);
            boxes.push(Box3D::new(
                rng.gen_range(-roi..roi),
                rng.gen_range(-roi..roi),
                0.8,
                rng.gen_range(3.5..5.5),
                rng.gen_range(1.6..2.1),
                rng.gen_range(1.4..1.8),
                rng.gen_range(-PI..PI).max(-PI + 1e-12),
                score,
                ClassId::VEHICLE,
                frame.t,
            ));
        }
        out.push(DetectionFrame {
            scene_id: frame.scene_id.clone(),
            t: frame.t,
            boxes,
        });
    }
    let _ = TAU;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cv_cfg(seed: u64) -> SceneConfig {
        SceneConfig {
            duration: 20.0,
            frame_hz: 10.0,
            n_agents: (3, 6),
            roi: 60.0,
            motion_mix: MotionMix {
                constant_velocity: 1.0,
                constant_turn: 0.0,
                stop_and_go: 0.0,
                lane_change: 0.0,
            },
            seed,
        }
    }

    fn noiseless_profile() -> DetectorProfile {
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
            detect_hz: 10.0,
        }
    }

    #[test]
    fn scene_generation_is_deterministic() {
        let cfg = SceneConfig::default();
        let a = generate_scene(&cfg, "s0").unwrap();
        let b = generate_scene(&cfg, "s0").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pure_cv_mix_has_zero_second_differences() {
        let trajs = generate_scene(&cv_cfg(1), "s0").unwrap();
        assert!(!trajs.is_empty());
        for tr in &trajs {
            for w in tr.states.windows(3) {
                let ddx = w[2].cx - 2.0 * w[1].cx + w[0].cx;
                let ddy = w[2].cy - 2.0 * w[1].cy + w[0].cy;
                assert!(ddx.abs() <= 1e-9 && ddy.abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn twenty_seconds_at_ten_hz_gives_201_states() {
        let trajs = generate_scene(&SceneConfig::default(), "s0").unwrap();
        for tr in &trajs {
            assert_eq!(tr.states.len(), 201);
        }
    }

    #[test]
    fn agents_stay_inside_roi_and_yaw_follows_velocity() {
        for seed in 0..8 {
            let mut cfg = SceneConfig::default();
            cfg.seed = seed;
            let trajs = generate_scene(&cfg, "s0").unwrap();
            for tr in &trajs {
                for w in tr.states.windows(2) {
                    assert!(w[0].cx.abs() <= cfg.roi && w[0].cy.abs() <= cfg.roi);
                    let dx = w[1].cx - w[0].cx;
                    let dy = w[1].cy - w[0].cy;
                    let step = (dx * dx + dy * dy).sqrt();
                    if step > 0.05 {
                        let chord = dy.atan2(dx);
                        let diff = wrap_angle(chord - w[0].yaw).abs();
                        assert!(diff < 0.3, "yaw misaligned with motion: {diff}");
                    }
                }
            }
        }
    }

    #[test]
    fn noiseless_detection_is_identity_on_geometry() {
        let cfg = cv_cfg(3);
        let trajs = generate_scene(&cfg, "s0").unwrap();
        let frames = gt_frames(&trajs).unwrap();
        let dets = detect(&frames, &noiseless_profile(), cfg.roi, 9).unwrap();
        assert_eq!(dets.len(), frames.len());
        for (d, f) in dets.iter().zip(frames.iter()) {
            assert_eq!(d.boxes.len(), f.boxes.len());
            for (db, fb) in d.boxes.iter().zip(f.boxes.iter()) {
                assert_eq!(db.cx, fb.cx);
                assert_eq!(db.cy, fb.cy);
                assert_eq!(db.yaw, fb.yaw);
                assert_eq!(db.score, 0.9);
            }
        }
    }

    #[test]
    fn certain_miss_leaves_only_false_positives() {
        let cfg = cv_cfg(4);
        let trajs = generate_scene(&cfg, "s0").unwrap();
        let frames = gt_frames(&trajs).unwrap();
        let mut profile = noiseless_profile();
        profile.miss_base = 1.0;
        profile.fp_rate = 0.5;
        let dets = detect(&frames, &profile, cfg.roi, 9).unwrap();
        let n_boxes: usize = dets.iter().map(|d| d.boxes.len()).sum();
        // every remaining box must be a false positive with fp score 0
        assert!(n_boxes > 0);
        for d in &dets {
            for b in &d.boxes {
                assert_eq!(b.score, 0.0);
            }
        }
    }

    #[test]
    fn position_noise_matches_configured_sigma() {
        let mut cfg = cv_cfg(5);
        cfg.n_agents = (6, 6);
        let mut profile = noiseless_profile();
        profile.pos_sigma = 0.3;

        let mut errors = Vec::new();
        let mut scene = 0u64;
        while errors.len() < 10_000 {
            cfg.seed = 100 + scene;
            let trajs = generate_scene(&cfg, "s").unwrap();
            let frames = gt_frames(&trajs).unwrap();
            let dets = detect(&frames, &profile, cfg.roi, derive_seed(7, scene)).unwrap();
            for (d, f) in dets.iter().zip(frames.iter()) {
                for (db, fb) in d.boxes.iter().zip(f.boxes.iter()) {
                    errors.push(db.cx - fb.cx);
                }
            }
            scene += 1;
        }
        errors.truncate(10_000);
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errors.len() - 1) as f64;
        let std = var.sqrt();
        assert!((0.29..=0.31).contains(&std), "sample std {std}");
    }

    #[test]
    fn false_positive_count_tracks_poisson_rate() {
        let cfg = cv_cfg(6);
        let trajs = generate_scene(&cfg, "s0").unwrap();
        let frames = gt_frames(&trajs).unwrap();
        let mut profile = noiseless_profile();
        profile.miss_base = 1.0;
        profile.fp_rate = 2.0;
        let mut total = 0usize;
        let mut n_frames = 0usize;
        for s in 0..20u64 {
            let dets = detect(&frames, &profile, cfg.roi, s).unwrap();
            total += dets.iter().map(|d| d.boxes.len()).sum::<usize>();
            n_frames += dets.len();
        }
        let lambda = n_frames as f64 * profile.fp_rate;
        assert!((total as f64 - lambda).abs() <= 5.0 * lambda.sqrt());
    }

    #[test]
    fn two_hz_profile_subsamples_frames() {
        let cfg = cv_cfg(8);
        let trajs = generate_scene(&cfg, "s0").unwrap();
        let frames = gt_frames(&trajs).unwrap();
        let mut profile = noiseless_profile();
        profile.detect_hz = 2.0;
        let dets = detect(&frames, &profile, cfg.roi, 1).unwrap();
        assert_eq!(dets.len(), 41); // 20 s at 2 Hz inclusive
        assert!((dets[1].t - dets[0].t - 0.5).abs() < 1e-9);
    }

    #[test]
    fn empty_agent_range_is_rejected() {
        let mut cfg = SceneConfig::default();
        cfg.n_agents = (5, 3);
        assert!(generate_scene(&cfg, "s0").is_err());
    }
}
