//! Geometric and trajectory primitives shared by every pipeline stage.
//!
//! Boxes are axis triples plus a ground-plane yaw; all distances and
//! overlaps are computed in bird's-eye view (the x/y plane). z is carried
//! through but never enters any metric.

use crate::error::{Error, Result};

pub const TAU: f64 = std::f64::consts::TAU;
pub const PI: f64 = std::f64::consts::PI;

/// Wrap an angle to (-pi, pi]. The boundary -pi maps to +pi.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w <= -PI {
        PI
    } else {
        w
    }
}

/// Interpolate between two angles along the shortest arc.
/// A tie at exactly pi resolves toward the positive direction.
pub fn lerp_angle(a: f64, b: f64, frac: f64) -> f64 {
    let d = wrap_angle(b - a);
    wrap_angle(a + frac * d)
}

fn lerp(a: f64, b: f64, frac: f64) -> f64 {
    a + (b - a) * frac
}

/// Vehicle class identifier. The simulator emits `ClassId::VEHICLE` by
/// default; the id space is open for multi-class detection sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u16);

impl ClassId {
    pub const VEHICLE: ClassId = ClassId(0);
}

/// Origin of a trajectory: human-grade ground truth or the output of a
/// detector/tracker pair identified by its profile id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Provenance {
    GroundTruth,
    Pseudo(String),
}

impl Provenance {
    pub fn label(&self) -> String {
        match self {
            Provenance::GroundTruth => "ground_truth".to_string(),
            Provenance::Pseudo(id) => format!("pseudo:{id}"),
        }
    }

    pub fn parse(s: &str) -> Result<Provenance> {
        if s == "ground_truth" {
            Ok(Provenance::GroundTruth)
        } else if let Some(id) = s.strip_prefix("pseudo:") {
            Ok(Provenance::Pseudo(id.to_string()))
        } else {
            Err(Error::InvalidInput(format!("unknown provenance `{s}`")))
        }
    }
}

/// Oriented 3D bounding box with a detection score.
#[derive(Debug, Clone, PartialEq)]
pub struct Box3D {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    /// Radians in (-pi, pi].
    pub yaw: f64,
    /// Unitless in [0, 1].
    pub score: f64,
    pub class_id: ClassId,
    /// Frame timestamp in seconds.
    pub t: f64,
}

impl Box3D {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        cx: f64,
        cy: f64,
        cz: f64,
        length: f64,
        width: f64,
        height: f64,
        yaw: f64,
        score: f64,
        class_id: ClassId,
        t: f64,
    ) -> Box3D {
        Box3D {
            cx,
            cy,
            cz,
            length,
            width,
            height,
            yaw: wrap_angle(yaw),
            score,
            class_id,
            t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidInput(
                "box dimensions must be positive".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidInput("box score outside [0, 1]".to_string()));
        }
        if !(self.yaw > -PI && self.yaw <= PI) {
            return Err(Error::InvalidInput("box yaw outside (-pi, pi]".to_string()));
        }
        Ok(())
    }

    /// Corners of the ground-plane footprint, counter-clockwise.
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let hl = self.length * 0.5;
        let hw = self.width * 0.5;
        let rot = |x: f64, y: f64| [self.cx + c * x - s * y, self.cy + s * x + c * y];
        [rot(hl, hw), rot(-hl, hw), rot(-hl, -hw), rot(hl, -hw)]
    }
}

/// One timestamped pose in a trajectory. `score` is present on
/// detector-derived states and absent on ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajState {
    pub t: f64,
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub yaw: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub score: Option<f64>,
}

/// Temporally ordered state sequence of one object.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scene_id: String,
    pub track_id: u64,
    pub class_id: ClassId,
    pub states: Vec<TrajState>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn validate(&self) -> Result<()> {
        if self.states.len() < 2 {
            return Err(Error::TooShortTrajectory);
        }
        for w in self.states.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidInput(
                    "trajectory timestamps must be strictly increasing".to_string(),
                ));
            }
        }
        Ok(())
    }

    /// Sampling interval if the trajectory is uniformly spaced within `tol`.
    pub fn uniform_interval(&self, tol: f64) -> Option<f64> {
        if self.states.len() < 2 {
            return None;
        }
        let span = self.states.last().unwrap().t - self.states[0].t;
        let dt = span / (self.states.len() - 1) as f64;
        for (i, w) in self.states.windows(2).enumerate() {
            let _ = i;
            if ((w[1].t - w[0].t) - dt).abs() > tol {
                return None;
            }
        }
        Some(dt)
    }
}

/// Anything with a ground-plane center.
pub trait GroundCenter {
    fn ground_center(&self) -> [f64; 2];
}

impl GroundCenter for Box3D {
    fn ground_center(&self) -> [f64; 2] {
        [self.cx, self.cy]
    }
}

impl GroundCenter for TrajState {
    fn ground_center(&self) -> [f64; 2] {
        [self.cx, self.cy]
    }
}

/// Euclidean distance between ground-plane centers.
pub fn center_distance<A: GroundCenter, B: GroundCenter>(a: &A, b: &B) -> f64 {
    let [ax, ay] = a.ground_center();
    let [bx, by] = b.ground_center();
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let [x1, y1] = poly[i];
        let [x2, y2] = poly[(i + 1) % poly.len()];
        twice += x1 * y2 - x2 * y1;
    }
    twice.abs() * 0.5
}

/// Clip a convex polygon by the half-plane left of the directed edge a->b.
fn clip_edge(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let sc = side(cur);
        let sn = side(next);
        if sc >= 0.0 {
            out.push(cur);
        }
        if (sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0) {
            let t = sc / (sc - sn);
            out.push([
                cur[0] + t * (next[0] - cur[0]),
                cur[1] + t * (next[1] - cur[1]),
            ]);
        }
    }
    out
}

fn convex_intersection_area(p: &[[f64; 2]; 4], q: &[[f64; 2]; 4]) -> f64 {
    let mut poly: Vec<[f64; 2]> = p.to_vec();
    for i in 0..4 {
        if poly.is_empty() {
            return 0.0;
        }
        poly = clip_edge(&poly, q[i], q[(i + 1) % 4]);
    }
    polygon_area(&poly)
}

/// Intersection-over-union of two yaw-oriented rectangles in the ground
/// plane. Symmetric; 1 iff the footprints coincide.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    let fa = a.footprint();
    let fb = b.footprint();
    let inter = convex_intersection_area(&fa, &fb);
    let area_a = polygon_area(&fa);
    let area_b = polygon_area(&fb);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Resample a trajectory to a uniform grid at `target_hz`, spanning the
/// original time range. Positions and dimensions interpolate linearly, yaw
/// along the shortest arc, scores linearly when both endpoints carry one.
/// The original endpoints are preserved exactly; input already on the
/// target grid is returned unchanged.
pub fn resample_linear(traj: &Trajectory, target_hz: f64) -> Result<Trajectory> {
    if traj.states.len() < 2 {
        return Err(Error::TooShortTrajectory);
    }
    if !(target_hz > 0.0) {
        return Err(Error::InvalidConfig("target_hz must be positive".to_string()));
    }
    traj.validate()?;

    let first_t = traj.states[0].t;
    let last_t = traj.states.last().unwrap().t;
    let span = last_t - first_t;
    let step = 1.0 / target_hz;

    if let Some(dt) = traj.uniform_interval(1e-9) {
        if (dt - step).abs() <= 1e-9 {
            return Ok(traj.clone());
        }
    }

    let n = ((span * target_hz).round() as usize).max(1);
    let dt = span / n as f64;
    let mut states = Vec::with_capacity(n + 1);
    let mut src = 0usize;
    for i in 0..=n {
        if i == 0 {
            states.push(traj.states[0].clone());
            continue;
        }
        if i == n {
            states.push(traj.states.last().unwrap().clone());
            continue;
        }
        let t = first_t + i as f64 * dt;
        while src + 2 < traj.states.len() && traj.states[src + 1].t <= t {
            src += 1;
        }
        let a = &traj.states[src];
        let b = &traj.states[src + 1];
        let frac = (t - a.t) / (b.t - a.t);
        states.push(TrajState {
            t,
            cx: lerp(a.cx, b.cx, frac),
            cy: lerp(a.cy, b.cy, frac),
            cz: lerp(a.cz, b.cz, frac),
            yaw: lerp_angle(a.yaw, b.yaw, frac),
            length: lerp(a.length, b.length, frac),
            width: lerp(a.width, b.width, frac),
            height: lerp(a.height, b.height, frac),
            score: match (a.score, b.score) {
                (Some(sa), Some(sb)) => Some(lerp(sa, sb, frac)),
                _ => None,
            },
        });
    }

    Ok(Trajectory {
        scene_id: traj.scene_id.clone(),
        track_id: traj.track_id,
        class_id: traj.class_id,
        states,
        provenance: traj.provenance.clone(),
    })
}
