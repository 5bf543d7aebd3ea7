//! Non-learning tracking-by-detection: score-threshold NMS, constant-
//! velocity Kalman propagation, gated Hungarian association and a
//! hits/age track lifecycle. Converts detection frames into pseudo-labeled
//! trajectories on a uniform 10 Hz grid.

use nalgebra::{SMatrix, SVector};

use crate::assignment::hungarian;
use crate::error::{Error, Result};
use crate::geometry::{
    bev_iou, center_distance, resample_linear, wrap_angle, Box3D, ClassId, Provenance, TrajState,
    Trajectory,
};
use crate::sim::DetectionFrame;

const OUTPUT_HZ: f64 = 10.0;

/// Dims smoothing factor: new = alpha * measured + (1 - alpha) * old.
const DIM_EMA_ALPHA: f64 = 0.5;

/// Initial covariance of a freshly spawned track. Velocity is unknown, so
/// its variance is large; the first update then trusts the measurement.
const INIT_POS_VAR: f64 = 1.0;
const INIT_YAW_VAR: f64 = 0.5;
const INIT_VEL_VAR: f64 = 100.0;

/// Association cost between a predicted track and a detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssociationCost {
    NegIou,
    CenterDistance,
}

/// Tracker parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub nms_score_threshold: f64,
    pub nms_iou_threshold: f64,
    /// Track/detection pairs farther apart than this are never associated.
    pub gate_center_distance: f64,
    /// Minimum updates before a track is exported.
    pub min_hits: usize,
    /// Frames a track may coast without an update before termination.
    pub max_age: usize,
    /// Process noise variances per second: [cx, cy, cz, yaw, vx, vy].
    pub process_noise_q: [f64; 6],
    /// Measurement noise variances: [cx, cy, cz, yaw].
    pub measurement_noise_r: [f64; 4],
    pub association_cost: AssociationCost,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            nms_score_threshold: 0.2,
            nms_iou_threshold: 0.5,
            gate_center_distance: 2.0,
            min_hits: 3,
            max_age: 2,
            process_noise_q: [0.05, 0.05, 0.01, 0.05, 1.0, 1.0],
            measurement_noise_r: [0.04, 0.04, 0.04, 0.02],
            association_cost: AssociationCost::CenterDistance,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.nms_score_threshold)
            || !(0.0..=1.0).contains(&self.nms_iou_threshold)
        {
            return Err(Error::InvalidConfig(
                "nms thresholds must lie in [0, 1]".to_string(),
            ));
        }
        if self.min_hits < 1 {
            return Err(Error::InvalidConfig("min_hits must be >= 1".to_string()));
        }
        if !(self.gate_center_distance > 0.0) {
            return Err(Error::InvalidConfig(
                "gate_center_distance must be positive".to_string(),
            ));
        }
        if self.process_noise_q.iter().any(|&q| q < 0.0)
            || self.measurement_noise_r.iter().any(|&r| r < 0.0)
        {
            return Err(Error::InvalidConfig(
                "noise variances must be >= 0".to_string(),
            ));
        }
        Ok(())
    }
}

type State = SVector<f64, 6>;
type Cov = SMatrix<f64, 6, 6>;

/// One live track: constant-velocity dynamic state [cx, cy, cz, yaw, vx, vy]
/// with box dimensions smoothed separately.
#[derive(Debug, Clone)]
pub struct KalmanTrack {
    pub track_id: u64,
    pub class_id: ClassId,
    pub state_mean: State,
    pub state_cov: Cov,
    /// Smoothed (length, width, height).
    pub dims: [f64; 3],
    pub hits: usize,
    pub age_since_update: usize,
    pub history: Vec<TrajState>,
    pub last_score: f64,
}

impl KalmanTrack {
    /// Spawn a track from a detection; the birth state is the measurement.
    pub fn from_detection(track_id: u64, det: &Box3D) -> KalmanTrack {
        let state_mean = State::from_column_slice(&[det.cx, det.cy, det.cz, det.yaw, 0.0, 0.0]);
        let state_cov = Cov::from_diagonal(&SVector::<f64, 6>::from_column_slice(&[
            INIT_POS_VAR,
            INIT_POS_VAR,
            INIT_POS_VAR,
            INIT_YAW_VAR,
            INIT_VEL_VAR,
            INIT_VEL_VAR,
        ]));
        KalmanTrack {
            track_id,
            class_id: det.class_id,
            state_mean,
            state_cov,
            dims: [det.length, det.width, det.height],
            hits: 1,
            age_since_update: 0,
            history: vec![TrajState {
                t: det.t,
                cx: det.cx,
                cy: det.cy,
                cz: det.cz,
                yaw: det.yaw,
                length: det.length,
                width: det.width,
                height: det.height,
                score: Some(det.score),
            }],
            last_score: det.score,
        }
    }

    pub fn predicted_center(&self) -> [f64; 2] {
        [self.state_mean[0], self.state_mean[1]]
    }

    /// Box at the current mean, used for IoU-based association.
    pub fn predicted_box(&self, t: f64) -> Box3D {
        Box3D::new(
            self.state_mean[0],
            self.state_mean[1],
            self.state_mean[2],
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.state_mean[3],
            self.last_score,
            self.class_id,
            t,
        )
    }
}

impl crate::geometry::GroundCenter for KalmanTrack {
    fn ground_center(&self) -> [f64; 2] {
        self.predicted_center()
    }
}

/// Score-threshold NMS: boxes below the score threshold are dropped, the
/// rest are kept greedily in descending score order, suppressing same-class
/// boxes whose BEV IoU with a kept box exceeds the IoU threshold.
pub fn nms(frame: &DetectionFrame, cfg: &TrackerConfig) -> DetectionFrame {
    let mut boxes: Vec<Box3D> = frame
        .boxes
        .iter()
        .filter(|b| b.score >= cfg.nms_score_threshold)
        .cloned()
        .collect();
    // full-content ordering keeps the result independent of input order
    boxes.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.cx.partial_cmp(&b.cx).unwrap())
            .then(a.cy.partial_cmp(&b.cy).unwrap())
            .then(a.yaw.partial_cmp(&b.yaw).unwrap())
            .then(a.length.partial_cmp(&b.length).unwrap())
    });
    let mut kept: Vec<Box3D> = Vec::with_capacity(boxes.len());
    for b in boxes {
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == b.class_id && bev_iou(k, &b) > cfg.nms_iou_threshold);
        if !suppressed {
            kept.push(b);
        }
    }
    DetectionFrame {
        scene_id: frame.scene_id.clone(),
        t: frame.t,
        boxes: kept,
    }
}

/// Constant-velocity prediction over `dt` seconds. cz and yaw follow a
/// random walk; covariance grows by Q * dt.
pub fn kalman_predict(track: &KalmanTrack, dt: f64, cfg: &TrackerConfig) -> KalmanTrack {
    let mut f = Cov::identity();
    f[(0, 4)] = dt;
    f[(1, 5)] = dt;
    let q = Cov::from_diagonal(&SVector::<f64, 6>::from_column_slice(&cfg.process_noise_q)) * dt;
    let mut out = track.clone();
    out.state_mean = f * track.state_mean;
    out.state_cov = f * track.state_cov * f.transpose() + q;
    out.age_since_update = track.age_since_update + 1;
    out
}

/// Linear Kalman update on (cx, cy, cz, yaw); the yaw innovation is wrapped
/// to (-pi, pi]. Dimensions move by EMA, hits increment, and the posterior
/// mean is appended to the history.
pub fn kalman_update(track: &KalmanTrack, det: &Box3D, cfg: &TrackerConfig) -> KalmanTrack {
    let mut h = SMatrix::<f64, 4, 6>::zeros();
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    h[(2, 2)] = 1.0;
    h[(3, 3)] = 1.0;
    let r = SMatrix::<f64, 4, 4>::from_diagonal(&SVector::<f64, 4>::from_column_slice(
        &cfg.measurement_noise_r,
    ));

    let z = SVector::<f64, 4>::from_column_slice(&[det.cx, det.cy, det.cz, det.yaw]);
    let mut innovation = z - h * track.state_mean;
    innovation[3] = wrap_angle(innovation[3]);

    let s = h * track.state_cov * h.transpose() + r;
    let s_inv = s.try_inverse().expect("innovation covariance invertible");
    let k = track.state_cov * h.transpose() * s_inv;

    let mut mean = track.state_mean + k * innovation;
    mean[3] = wrap_angle(mean[3]);
    // Joseph form keeps the covariance symmetric
    let ikh = Cov::identity() - k * h;
    let cov = ikh * track.state_cov * ikh.transpose() + k * r * k.transpose();

    let dims = [
        DIM_EMA_ALPHA * det.length + (1.0 - DIM_EMA_ALPHA) * track.dims[0],
        DIM_EMA_ALPHA * det.width + (1.0 - DIM_EMA_ALPHA) * track.dims[1],
        DIM_EMA_ALPHA * det.height + (1.0 - DIM_EMA_ALPHA) * track.dims[2],
    ];

    let mut out = track.clone();
    out.state_mean = mean;
    out.state_cov = cov;
    out.dims = dims;
    out.hits = track.hits + 1;
    out.age_since_update = 0;
    out.last_score = det.score;
    out.history.push(TrajState {
        t: det.t,
        cx: mean[0],
        cy: mean[1],
        cz: mean[2],
        yaw: mean[3],
        length: dims[0],
        width: dims[1],
        height: dims[2],
        score: Some(det.score),
    });
    out
}

const GATED: f64 = 1e6;

/// Run the full tracker over the ordered detection frames of one scene.
///
/// Per frame: NMS, predict all live tracks, associate gated (track,
/// detection) pairs of matching class via minimum-cost assignment, update
/// matches, spawn tracks from unmatched detections and retire tracks older
/// than `max_age`. Tracks with at least `min_hits` updates are exported,
/// resampled onto the 10 Hz grid (which also fills coasted gaps).
pub fn track_sequence(
    frames: &[DetectionFrame],
    cfg: &TrackerConfig,
    provenance: Provenance,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    for w in frames.windows(2) {
        if w[1].t <= w[0].t {
            return Err(Error::InvalidInput(
                "detection frames must be sorted by strictly increasing t".to_string(),
            ));
        }
        if w[1].scene_id != w[0].scene_id {
            return Err(Error::InvalidInput(
                "track_sequence expects a single scene".to_string(),
            ));
        }
    }

    let scene_id = frames.first().map(|f| f.scene_id.clone()).unwrap_or_default();
    let mut live: Vec<KalmanTrack> = Vec::new();
    let mut retired: Vec<KalmanTrack> = Vec::new();
    let mut next_id = 0u64;
    let mut prev_t: Option<f64> = None;

    for frame in frames {
        let kept = nms(frame, cfg);

        if let Some(pt) = prev_t {
            let dt = frame.t - pt;
            live = live.iter().map(|tr| kalman_predict(tr, dt, cfg)).collect();
        }
        prev_t = Some(frame.t);

        let n = live.len();
        let m = kept.boxes.len();
        let mut matched_track = vec![false; n];
        let mut matched_det = vec![false; m];
        if n > 0 && m > 0 {
            let cost: Vec<Vec<f64>> = live
                .iter()
                .map(|tr| {
                    kept.boxes
                        .iter()
                        .map(|det| {
                            if det.class_id != tr.class_id {
                                return GATED;
                            }
                            let dist = center_distance(tr, det);
                            if dist > cfg.gate_center_distance {
                                return GATED;
                            }
                            match cfg.association_cost {
                                AssociationCost::CenterDistance => dist,
                                AssociationCost::NegIou => -bev_iou(&tr.predicted_box(frame.t), det),
                            }
                        })
                        .collect()
                })
                .collect();
            for (ti, di) in hungarian(&cost)? {
                if cost[ti][di] >= GATED {
                    continue;
                }
                live[ti] = kalman_update(&live[ti], &kept.boxes[di], cfg);
                matched_track[ti] = true;
                matched_det[di] = true;
            }
        }

        for (di, det) in kept.boxes.iter().enumerate() {
            if !matched_det[di] {
                live.push(KalmanTrack::from_detection(next_id, det));
                next_id += 1;
            }
        }

        let (alive, dead): (Vec<_>, Vec<_>) = live
            .into_iter()
            .partition(|tr| tr.age_since_update <= cfg.max_age);
        live = alive;
        retired.extend(dead);
        let _ = matched_track;
    }
    retired.extend(live);
    retired.sort_by_key(|tr| tr.track_id);

    let mut out = Vec::new();
    for tr in retired {
        if tr.hits < cfg.min_hits || tr.history.len() < 2 {
            continue;
        }
        let traj = Trajectory {
            scene_id: scene_id.clone(),
            track_id: tr.track_id,
            class_id: tr.class_id,
            states: tr.history,
            provenance: provenance.clone(),
        };
        out.push(resample_linear(&traj, OUTPUT_HZ)?);
    }
    Ok(out)
}
