//! A small multi-modal trajectory forecaster.
//!
//! One tanh hidden layer maps an ego-history feature vector to K mode
//! trajectories plus K confidence logits. Each mode rides on a linear ramp
//! toward its endpoint anchor, so zero-initialized output weights start
//! every mode exactly on its anchor. Training uses a winner-take-all loss:
//! the mode with the lowest average displacement error receives the
//! regression gradient, and a cross-entropy term pushes confidence onto the
//! winner.

use std::collections::BTreeSet;

use rand::Rng;

use crate::dataset::ForecastSample;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Sampling interval of the 10 Hz grid, seconds.
const DT: f64 = 0.1;

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_MODES: usize = 6;
pub const DEFAULT_LAMBDA_CONF: f64 = 1.0;

/// Fallback anchor layout when endpoints are too degenerate to cluster:
/// rings of radii 5 m, 20 m, ... at three forward headings.
const FALLBACK_RADII: [f64; 4] = [5.0, 20.0, 35.0, 50.0];
const FALLBACK_HEADINGS: [f64; 3] = [-std::f64::consts::FRAC_PI_4, 0.0, std::f64::consts::FRAC_PI_4];

/// Flat parameters of the forecaster plus its anchor set.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterParams {
    /// Hidden width.
    pub hidden: usize,
    /// Mode count K.
    pub modes: usize,
    /// Past frames L.
    pub past_len: usize,
    /// Future frames M.
    pub future_len: usize,
    /// hidden x (2L+3), row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// (K * (2M+1)) x hidden, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// K agent-centric endpoint anchors.
    pub anchors: Vec<[f64; 2]>,
}

impl ForecasterParams {
    pub fn input_dim(&self) -> usize {
        2 * self.past_len + 3
    }

    pub fn output_dim(&self) -> usize {
        self.modes * (2 * self.future_len + 1)
    }

    pub fn n_params(&self) -> usize {
        self.hidden * self.input_dim() + self.hidden + self.output_dim() * self.hidden + self.output_dim()
    }

    /// Zero output head (modes start on their anchors), small random W1.
    pub fn init(
        hidden: usize,
        modes: usize,
        past_len: usize,
        future_len: usize,
        anchors: Vec<[f64; 2]>,
        seed: u64,
    ) -> Result<ForecasterParams> {
        if anchors.len() != modes {
            return Err(Error::InvalidConfig(format!(
                "expected {modes} anchors, got {}",
                anchors.len()
            )));
        }
        let input = 2 * past_len + 3;
        let output = modes * (2 * future_len + 1);
        let mut rng = rng_from_seed(derive_seed(seed, 0x11));
        let scale = 1.0 / (input as f64).sqrt();
        let w1 = (0..hidden * input)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        Ok(ForecasterParams {
            hidden,
            modes,
            past_len,
            future_len,
            w1,
            b1: vec![0.0; hidden],
            w2: vec![0.0; output * hidden],
            b2: vec![0.0; output],
            anchors,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.w1.len() != self.hidden * self.input_dim()
            || self.b1.len() != self.hidden
            || self.w2.len() != self.output_dim() * self.hidden
            || self.b2.len() != self.output_dim()
            || self.anchors.len() != self.modes
        {
            return Err(Error::InvalidConfig("parameter shape mismatch".to_string()));
        }
        let finite = self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .all(|v| v.is_finite())
            && self.anchors.iter().all(|a| a[0].is_finite() && a[1].is_finite());
        if !finite {
            return Err(Error::NonFinite("forecaster parameters".to_string()));
        }
        for i in 0..self.anchors.len() {
            for j in i + 1..self.anchors.len() {
                if self.anchors[i] == self.anchors[j] {
                    return Err(Error::InvalidConfig(
                        "anchors must be pairwise distinct".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Trainable parameters flattened as [w1 | b1 | w2 | b2].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        flat.extend_from_slice(&self.w1);
        flat.extend_from_slice(&self.b1);
        flat.extend_from_slice(&self.w2);
        flat.extend_from_slice(&self.b2);
        flat
    }

    pub fn apply_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::InvalidConfig("flat length mismatch".to_string()));
        }
        let (a, rest) = flat.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2.copy_from_slice(d);
        Ok(())
    }
}

/// K candidate futures with normalized confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutput {
    /// K trajectories of M agent-centric positions.
    pub modes: Vec<Vec<[f64; 2]>>,
    /// Nonnegative, sums to 1.
    pub confidences: Vec<f64>,
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Mean winning-mode average displacement error, meters.
    pub ade_term: f64,
    /// Mean cross-entropy on the winning mode, nats.
    pub conf_term: f64,
    pub total: f64,
}

/// History features: L displacement pairs, current speed, and the unit
/// mean-heading over the last three displacements.
pub fn featurize(sample: &ForecastSample) -> Vec<f64> {
    let mut x = Vec::with_capacity(2 * sample.past_len() + 3);
    featurize_into(sample, &mut x);
    x
}

fn featurize_into(sample: &ForecastSample, x: &mut Vec<f64>) {
    let l = sample.past_len();
    x.reserve(2 * l + 3);
    for w in sample.past.windows(2) {
        x.push(w[1][0] - w[0][0]);
        x.push(w[1][1] - w[0][1]);
    }
    let last = [x[2 * l - 2], x[2 * l - 1]];
    let speed = last[0].hypot(last[1]) / DT;
    x.push(speed);
    let take = l.min(3);
    let mut hx = 0.0;
    let mut hy = 0.0;
    for i in (l - take)..l {
        hx += x[2 * i];
        hy += x[2 * i + 1];
    }
    let norm = hx.hypot(hy);
    if norm > 0.0 {
        x.push(hx / norm);
        x.push(hy / norm);
    } else {
        x.push(1.0);
        x.push(0.0);
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Reusable forward-pass buffers; training reuses one across a batch.
#[derive(Default)]
struct ForwardParts {
    x: Vec<f64>,
    h: Vec<f64>,
    raw: Vec<f64>,
}

fn forward_into(
    params: &ForecasterParams,
    sample: &ForecastSample,
    parts: &mut ForwardParts,
) -> Result<()> {
    if sample.past_len() != params.past_len {
        return Err(Error::InvalidInput(format!(
            "sample past length {} does not match model {}",
            sample.past_len(),
            params.past_len
        )));
    }
    parts.x.clear();
    featurize_into(sample, &mut parts.x);
    let input = params.input_dim();
    let hidden = params.hidden;
    parts.h.clear();
    parts.h.resize(hidden, 0.0);
    for (row, out) in parts.h.iter_mut().enumerate() {
        let w = &params.w1[row * input..(row + 1) * input];
        let pre: f64 = w.iter().zip(&parts.x).map(|(a, b)| a * b).sum::<f64>() + params.b1[row];
        *out = pre.tanh();
    }
    let output = params.output_dim();
    parts.raw.clear();
    parts.raw.resize(output, 0.0);
    for (row, out) in parts.raw.iter_mut().enumerate() {
        let w = &params.w2[row * hidden..(row + 1) * hidden];
        *out = w.iter().zip(&parts.h).map(|(a, b)| a * b).sum::<f64>() + params.b2[row];
    }
    if parts.raw.iter().any(|v| !v.is_finite()) || parts.h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forecaster forward pass".to_string()));
    }
    Ok(())
}

fn output_from_raw(params: &ForecasterParams, raw: &[f64]) -> ForecastOutput {
    let m = params.future_len;
    let block = 2 * m + 1;
    let mut modes = Vec::with_capacity(params.modes);
    let mut logits = Vec::with_capacity(params.modes);
    for k in 0..params.modes {
        let base = k * block;
        let anchor = params.anchors[k];
        let mut path = Vec::with_capacity(m);
        for step in 0..m {
            let ramp = (step + 1) as f64 / m as f64;
            path.push([
                anchor[0] * ramp + raw[base + 2 * step],
                anchor[1] * ramp + raw[base + 2 * step + 1],
            ]);
        }
        modes.push(path);
        logits.push(raw[base + 2 * m]);
    }
    ForecastOutput {
        modes,
        confidences: softmax(&logits),
    }
}

/// Predict K anchor-seeded futures with confidences for one sample.
pub fn forward(params: &ForecasterParams, sample: &ForecastSample) -> Result<ForecastOutput> {
    let mut parts = ForwardParts::default();
    forward_into(params, sample, &mut parts)?;
    Ok(output_from_raw(params, &parts.raw))
}

/// Mean per-step L2 error of one mode against the target future.
pub fn mode_ade(mode: &[[f64; 2]], future: &[[f64; 2]]) -> f64 {
    let m = future.len();
    let sum: f64 = mode
        .iter()
        .zip(future.iter())
        .map(|(p, f)| (p[0] - f[0]).hypot(p[1] - f[1]))
        .sum();
    sum / m as f64
}

/// Index of the minimum with ties resolved to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Winner-take-all loss and its exact gradient over a batch.
///
/// Per sample the winning mode is the ADE argmin (constant under
/// differentiation); the loss is its ADE plus `lambda_conf` times the
/// cross-entropy of the winner's confidence. The gradient is ordered as
/// [w1 | b1 | w2 | b2].
pub fn loss_and_grad(
    params: &ForecasterParams,
    batch: &[&ForecastSample],
    lambda_conf: f64,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let input = params.input_dim();
    let hidden = params.hidden;
    let output = params.output_dim();
    let m = params.future_len;
    let block = 2 * m + 1;

    let w1_off = 0;
    let b1_off = w1_off + hidden * input;
    let w2_off = b1_off + hidden;
    let b2_off = w2_off + output * hidden;
    let mut grad = vec![0.0f64; params.n_params()];

    let inv_n = 1.0 / batch.len() as f64;
    let mut ade_sum = 0.0;
    let mut conf_sum = 0.0;

    // buffers reused across the batch; the inner loops are the training
    // hot path
    let mut parts = ForwardParts::default();
    let mut d_raw = vec![0.0f64; output];
    let mut d_h = vec![0.0f64; hidden];
    let mut ades = vec![0.0f64; params.modes];
    let mut logits = vec![0.0f64; params.modes];
    let mut confidences = vec![0.0f64; params.modes];

    for sample in batch {
        if sample.future_len() != m {
            return Err(Error::InvalidInput(
                "sample future length does not match model".to_string(),
            ));
        }
        forward_into(params, sample, &mut parts)?;

        // per-mode ADE and logits straight from the raw head
        for k in 0..params.modes {
            let base = k * block;
            let anchor = params.anchors[k];
            let mut acc = 0.0;
            for (step, f) in sample.future.iter().enumerate() {
                let ramp = (step + 1) as f64 / m as f64;
                let dx = anchor[0] * ramp + parts.raw[base + 2 * step] - f[0];
                let dy = anchor[1] * ramp + parts.raw[base + 2 * step + 1] - f[1];
                acc += dx.hypot(dy);
            }
            ades[k] = acc / m as f64;
            logits[k] = parts.raw[base + 2 * m];
        }
        let winner = argmin(&ades);
        let max_logit = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum_exp = 0.0;
        for (c, &l) in confidences.iter_mut().zip(logits.iter()) {
            *c = (l - max_logit).exp();
            sum_exp += *c;
        }
        for c in confidences.iter_mut() {
            *c /= sum_exp;
        }
        ade_sum += ades[winner];
        conf_sum += -confidences[winner].ln();

        for v in d_raw.iter_mut() {
            *v = 0.0;
        }
        let base = winner * block;
        for (step, f) in sample.future.iter().enumerate() {
            let ramp = (step + 1) as f64 / m as f64;
            let anchor = params.anchors[winner];
            let dx = anchor[0] * ramp + parts.raw[base + 2 * step] - f[0];
            let dy = anchor[1] * ramp + parts.raw[base + 2 * step + 1] - f[1];
            let dist = dx.hypot(dy);
            if dist > 0.0 {
                let scale = inv_n / (m as f64 * dist);
                d_raw[base + 2 * step] = dx * scale;
                d_raw[base + 2 * step + 1] = dy * scale;
            }
        }
        for k in 0..params.modes {
            let indicator = if k == winner { 1.0 } else { 0.0 };
            d_raw[k * block + 2 * m] = lambda_conf * inv_n * (confidences[k] - indicator);
        }

        // backprop through w2 into the hidden layer; d_raw is sparse in the
        // regression rows, so only touched rows contribute
        for v in d_h.iter_mut() {
            *v = 0.0;
        }
        let visit_row = |row: usize, g: f64, grad: &mut [f64], d_h: &mut [f64]| {
            if g == 0.0 {
                return;
            }
            let w = &params.w2[row * hidden..(row + 1) * hidden];
            let grow = &mut grad[w2_off + row * hidden..w2_off + (row + 1) * hidden];
            for i in 0..hidden {
                grow[i] += g * parts.h[i];
                d_h[i] += g * w[i];
            }
            grad[b2_off + row] += g;
        };
        for step in 0..2 * m {
            visit_row(base + step, d_raw[base + step], &mut grad, &mut d_h);
        }
        for k in 0..params.modes {
            let row = k * block + 2 * m;
            visit_row(row, d_raw[row], &mut grad, &mut d_h);
        }

        for i in 0..hidden {
            let d_pre = d_h[i] * (1.0 - parts.h[i] * parts.h[i]);
            if d_pre == 0.0 {
                continue;
            }
            let grow = &mut grad[w1_off + i * input..w1_off + (i + 1) * input];
            for (g, &xv) in grow.iter_mut().zip(parts.x.iter()) {
                *g += d_pre * xv;
            }
            grad[b1_off + i] += d_pre;
        }
    }

    let ade_term = ade_sum * inv_n;
    let conf_term = conf_sum * inv_n;
    let breakdown = LossBreakdown {
        ade_term,
        conf_term,
        total: ade_term + lambda_conf * conf_term,
    };
    Ok((breakdown, grad))
}

fn fallback_grid(k: usize) -> Vec<[f64; 2]> {
    let mut grid = Vec::new();
    for &r in &FALLBACK_RADII {
        for &h in &FALLBACK_HEADINGS {
            grid.push([r * h.cos(), r * h.sin()]);
        }
    }
    grid.truncate(k);
    grid
}

/// K-means (k-means++ init, 50 iterations, fixed seed) over sample
/// endpoints. Falls back to a radial grid when fewer than K distinct
/// endpoints exist.
pub fn fit_anchors(samples: &[&ForecastSample], k: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    if samples.is_empty() {
        return Err(Error::InvalidInput(
            "cannot fit anchors on an empty sample set".to_string(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one anchor".to_string()));
    }
    let points: Vec<[f64; 2]> = samples
        .iter()
        .map(|s| *s.future.last().expect("future must be non-empty"))
        .collect();

    let distinct: BTreeSet<(u64, u64)> = points
        .iter()
        .map(|p| (p[0].to_bits(), p[1].to_bits()))
        .collect();
    if distinct.len() < k {
        return Ok(fallback_grid(k));
    }

    let mut rng = rng_from_seed(seed);
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);

    // k-means++ seeding
    let mut centers: Vec<[f64; 2]> = Vec::with_capacity(k);
    centers.push(points[rng.gen_range(0..points.len())]);
    let mut dist2: Vec<f64> = points.iter().map(|&p| d2(p, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist2.iter().sum();
        let next = if total <= 0.0 {
            // all mass on existing centers; take the first unused distinct point
            points
                .iter()
                .position(|&p| centers.iter().all(|&c| c != p))
                .unwrap_or(0)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &w) in dist2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        };
        let c = points[next];
        centers.push(c);
        for (i, &p) in points.iter().enumerate() {
            dist2[i] = dist2[i].min(d2(p, c));
        }
    }

    let mut assign = vec![0usize; points.len()];
    for _ in 0..50 {
        for (i, &p) in points.iter().enumerate() {
            let dists: Vec<f64> = centers.iter().map(|&c| d2(p, c)).collect();
            assign[i] = argmin(&dists);
        }
        for (ci, center) in centers.iter_mut().enumerate() {
            let mut sum = [0.0f64; 2];
            let mut count = 0usize;
            for (i, &p) in points.iter().enumerate() {
                if assign[i] == ci {
                    sum[0] += p[0];
                    sum[1] += p[1];
                    count += 1;
                }
            }
            if count > 0 {
                *center = [sum[0] / count as f64, sum[1] / count as f64];
            }
        }
    }
    Ok(centers)
}
