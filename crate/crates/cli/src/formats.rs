//! Persistent file formats.
//!
//! JSONL files carry one object per line with floats in shortest
//! round-trip decimal form. The checkpoint is a binary container: an
//! 8-byte magic, a little-endian u32 header length, a UTF-8 JSON header,
//! then the flat parameter array as little-endian f64.
//!
//! All writes go through a temp file in the target directory plus an
//! atomic rename, so an aborted run never leaves a partial output.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use trajforge_core::dataset::{ForecastSample, Pose2};
use trajforge_core::forecaster::ForecasterParams;
use trajforge_core::geometry::{Box3D, ClassId, Provenance, TrajState, Trajectory};
use trajforge_core::sim::DetectionFrame;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TFGCKPT1";

/// Write bytes atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let dir = dir.unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file near {}", path.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| anyhow!("renaming temp file to {}: {e}", path.display()))?;
    Ok(())
}

/// SHA-256 hex digest of a file.
pub fn file_digest(path: &Path) -> anyhow::Result<String> {
    let mut hasher = Sha256::new();
    let mut file = std::fs::File::open(path)
        .with_context(|| format!("opening {} for digest", path.display()))?;
    let mut buf = [0u8; 65536];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub fn string_digest(s: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(s.as_bytes());
    format!("{:x}", hasher.finalize())
}

fn parse_error(path: &Path, line_no: usize, err: impl std::fmt::Display) -> anyhow::Error {
    anyhow!("{}:{line_no}: {err}", path.display())
}

// ---------------------------------------------------------------------------
// detections.jsonl

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireBox {
    cx: f64,
    cy: f64,
    cz: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
    score: f64,
    class: u16,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireDetectionFrame {
    scene_id: String,
    t: f64,
    boxes: Vec<WireBox>,
}

pub fn write_detections(path: &Path, frames: &[DetectionFrame]) -> anyhow::Result<()> {
    let mut out = String::new();
    for f in frames {
        let wire = WireDetectionFrame {
            scene_id: f.scene_id.clone(),
            t: f.t,
            boxes: f
                .boxes
                .iter()
                .map(|b| WireBox {
                    cx: b.cx,
                    cy: b.cy,
                    cz: b.cz,
                    l: b.length,
                    w: b.width,
                    h: b.height,
                    yaw: b.yaw,
                    score: b.score,
                    class: b.class_id.0,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&wire)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_detections(path: &Path) -> anyhow::Result<Vec<DetectionFrame>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut frames = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireDetectionFrame =
            serde_json::from_str(&line).map_err(|e| parse_error(path, i + 1, e))?;
        let boxes = wire
            .boxes
            .into_iter()
            .map(|b| {
                let bx = Box3D {
                    cx: b.cx,
                    cy: b.cy,
                    cz: b.cz,
                    length: b.l,
                    width: b.w,
                    height: b.h,
                    yaw: b.yaw,
                    score: b.score,
                    class_id: ClassId(b.class),
                    t: wire.t,
                };
                bx.validate()
                    .map(|_| bx)
                    .map_err(|e| parse_error(path, i + 1, format!("box: {e}")))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        frames.push(DetectionFrame {
            scene_id: wire.scene_id,
            t: wire.t,
            boxes,
        });
    }
    Ok(frames)
}

// ---------------------------------------------------------------------------
// trajectories.jsonl

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireState {
    t: f64,
    cx: f64,
    cy: f64,
    cz: f64,
    l: f64,
    w: f64,
    h: f64,
    yaw: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireTrajectory {
    scene_id: String,
    track_id: u64,
    class: u16,
    provenance: String,
    states: Vec<WireState>,
}

pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> anyhow::Result<()> {
    let mut out = String::new();
    for tr in trajs {
        let wire = WireTrajectory {
            scene_id: tr.scene_id.clone(),
            track_id: tr.track_id,
            class: tr.class_id.0,
            provenance: tr.provenance.label(),
            states: tr
                .states
                .iter()
                .map(|s| WireState {
                    t: s.t,
                    cx: s.cx,
                    cy: s.cy,
                    cz: s.cz,
                    l: s.length,
                    w: s.width,
                    h: s.height,
                    yaw: s.yaw,
                    score: s.score,
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&wire)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_trajectories(path: &Path) -> anyhow::Result<Vec<Trajectory>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut trajs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireTrajectory =
            serde_json::from_str(&line).map_err(|e| parse_error(path, i + 1, e))?;
        let traj = Trajectory {
            scene_id: wire.scene_id,
            track_id: wire.track_id,
            class_id: ClassId(wire.class),
            provenance: Provenance::parse(&wire.provenance)
                .map_err(|e| parse_error(path, i + 1, e))?,
            states: wire
                .states
                .into_iter()
                .map(|s| TrajState {
                    t: s.t,
                    cx: s.cx,
                    cy: s.cy,
                    cz: s.cz,
                    yaw: s.yaw,
                    length: s.l,
                    width: s.w,
                    height: s.h,
                    score: s.score,
                })
                .collect(),
        };
        traj.validate()
            .map_err(|e| parse_error(path, i + 1, e))?;
        trajs.push(traj);
    }
    Ok(trajs)
}

// ---------------------------------------------------------------------------
// samples.jsonl

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireSample {
    sample_id: u64,
    scene_id: String,
    track_id: u64,
    anchor_t: f64,
    past: Vec<[f64; 2]>,
    future: Vec<[f64; 2]>,
    origin: [f64; 2],
    heading: f64,
    provenance: String,
}

pub fn write_samples(path: &Path, samples: &[ForecastSample]) -> anyhow::Result<()> {
    let mut out = String::new();
    for s in samples {
        let wire = WireSample {
            sample_id: s.sample_id,
            scene_id: s.scene_id.clone(),
            track_id: s.track_id,
            anchor_t: s.anchor_t,
            past: s.past.clone(),
            future: s.future.clone(),
            origin: s.to_world.origin,
            heading: s.to_world.heading(),
            provenance: s.provenance.label(),
        };
        out.push_str(&serde_json::to_string(&wire)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_samples(path: &Path) -> anyhow::Result<Vec<ForecastSample>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireSample =
            serde_json::from_str(&line).map_err(|e| parse_error(path, i + 1, e))?;
        if wire.past.is_empty() {
            return Err(parse_error(path, i + 1, "sample with empty past"));
        }
        samples.push(ForecastSample {
            sample_id: wire.sample_id,
            scene_id: wire.scene_id,
            track_id: wire.track_id,
            anchor_t: wire.anchor_t,
            past: wire.past,
            future: wire.future,
            to_world: Pose2::from_heading(wire.origin, wire.heading),
            provenance: Provenance::parse(&wire.provenance)
                .map_err(|e| parse_error(path, i + 1, e))?,
        });
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// checkpoint

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    version: u32,
    h: usize,
    k: usize,
    l: usize,
    m: usize,
    anchors: Vec<[f64; 2]>,
    seed: u64,
    provenance: String,
}

/// Model save metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    pub seed: u64,
    /// Training lineage, e.g. "pretrain" or "finetune<-pretrain".
    pub provenance: String,
}

pub fn write_checkpoint(
    path: &Path,
    params: &ForecasterParams,
    meta: &CheckpointMeta,
) -> anyhow::Result<()> {
    let header = CheckpointHeader {
        version: 1,
        h: params.hidden,
        k: params.modes,
        l: params.past_len,
        m: params.future_len,
        anchors: params.anchors.clone(),
        seed: meta.seed,
        provenance: meta.provenance.clone(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(12 + header_json.len() + params.n_params() * 8);
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for v in params.to_flat() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_checkpoint(path: &Path) -> anyhow::Result<(ForecasterParams, CheckpointMeta)> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading checkpoint {}", path.display()))?;
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        bail!("{}: not a checkpoint (bad magic)", path.display());
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        bail!("{}: truncated checkpoint header", path.display());
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[12..12 + header_len])
        .with_context(|| format!("{}: checkpoint header", path.display()))?;
    if header.version != 1 {
        bail!("{}: unsupported checkpoint version {}", path.display(), header.version);
    }
    let mut params = ForecasterParams::init(
        header.h,
        header.k,
        header.l,
        header.m,
        header.anchors.clone(),
        0,
    )
    .map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let body = &bytes[12 + header_len..];
    let expect = params.n_params() * 8;
    if body.len() != expect {
        bail!(
            "{}: parameter payload is {} bytes, expected {expect}",
            path.display(),
            body.len()
        );
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params
        .apply_flat(&flat)
        .map_err(|e| anyhow!("{}: {e}", path.display()))?;
    params.validate().map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok((
        params,
        CheckpointMeta {
            seed: header.seed,
            provenance: header.provenance,
        },
    ))
}

// ---------------------------------------------------------------------------
// reports

/// Flat JSON view of a metrics report.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReportJson {
    pub n_samples: usize,
    pub min_ade: f64,
    pub min_fde: f64,
    pub brier_fde: f64,
    pub miss_rate: f64,
}

impl From<&trajforge_core::metrics::MetricsReport> for ReportJson {
    fn from(r: &trajforge_core::metrics::MetricsReport) -> Self {
        ReportJson {
            n_samples: r.n_samples,
            min_ade: r.min_ade,
            min_fde: r.min_fde,
            brier_fde: r.brier_fde,
            miss_rate: r.miss_rate,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Group detection frames by scene, ordered by (scene_id, t).
pub fn frames_by_scene(frames: Vec<DetectionFrame>) -> BTreeMap<String, Vec<DetectionFrame>> {
    let mut by_scene: BTreeMap<String, Vec<DetectionFrame>> = BTreeMap::new();
    for f in frames {
        by_scene.entry(f.scene_id.clone()).or_default().push(f);
    }
    for frames in by_scene.values_mut() {
        frames.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    }
    by_scene
}

/// Group trajectories by scene, preserving input order within a scene.
pub fn trajs_by_scene(trajs: Vec<Trajectory>) -> BTreeMap<String, Vec<Trajectory>> {
    let mut by_scene: BTreeMap<String, Vec<Trajectory>> = BTreeMap::new();
    for t in trajs {
        by_scene.entry(t.scene_id.clone()).or_default().push(t);
    }
    by_scene
}

#[cfg(test)]
mod tests {
    use super::*;
    use trajforge_core::sim::{generate_scene, gt_frames, SceneConfig};

    #[test]
    fn detections_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let trajs = generate_scene(&SceneConfig::default(), "s0").unwrap();
        let frames = gt_frames(&trajs).unwrap();
        write_detections(&path, &frames).unwrap();
        let back = read_detections(&path).unwrap();
        assert_eq!(frames, back);
        // and the serialized bytes are stable
        let d1 = file_digest(&path).unwrap();
        write_detections(&path, &back).unwrap();
        assert_eq!(d1, file_digest(&path).unwrap());
    }

    #[test]
    fn trajectories_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let trajs = generate_scene(&SceneConfig::default(), "s0").unwrap();
        write_trajectories(&path, &trajs).unwrap();
        let back = read_trajectories(&path).unwrap();
        assert_eq!(trajs, back);
    }

    #[test]
    fn samples_round_trip_within_tolerance() {
        use trajforge_core::dataset::{window_samples, WindowConfig};
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let mut cfg = SceneConfig::default();
        cfg.seed = 5;
        let trajs = generate_scene(&cfg, "s0").unwrap();
        let samples = window_samples(&trajs, &WindowConfig::default()).unwrap();
        assert!(!samples.is_empty());
        write_samples(&path, &samples).unwrap();
        let back = read_samples(&path).unwrap();
        assert_eq!(samples.len(), back.len());
        for (a, b) in samples.iter().zip(back.iter()) {
            assert_eq!(a.past, b.past);
            assert_eq!(a.future, b.future);
            assert_eq!(a.to_world.origin, b.to_world.origin);
            // rotation reconstructed from the serialized heading angle
            assert!((a.to_world.cos_h - b.to_world.cos_h).abs() < 1e-12);
            assert!((a.to_world.sin_h - b.to_world.sin_h).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trips_bit_exactly() {
        use trajforge_core::forecaster::ForecasterParams;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let anchors = vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0], [2.0, 2.0], [3.0, -3.0]];
        let params = ForecasterParams::init(8, 6, 4, 5, anchors, 7).unwrap();
        let meta = CheckpointMeta {
            seed: 7,
            provenance: "pretrain".to_string(),
        };
        write_checkpoint(&path, &params, &meta).unwrap();
        let (back, meta2) = read_checkpoint(&path).unwrap();
        assert_eq!(params, back);
        assert_eq!(meta, meta2);
    }

    #[test]
    fn malformed_lines_report_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"scene_id\": \"s\", \"t\": 0.0, \"boxes\": []}\nnot json\n").unwrap();
        let err = read_detections(&path).unwrap_err();
        assert!(format!("{err}").contains(":2:"), "{err}");
    }

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, b"hello").unwrap();
        let entries: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(entries.len(), 1);
        assert_eq!(std::fs::read(&path).unwrap(), b"hello");
    }
}
