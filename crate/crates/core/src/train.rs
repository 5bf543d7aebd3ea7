//! Mini-batch gradient-descent training and the pretrain/fine-tune
//! protocol. Runs are bitwise deterministic given (config, data order,
//! seed): shuffles draw from per-epoch derived seeds and gradients
//! accumulate in fixed order.

use rand::seq::SliceRandom;

use crate::dataset::{fraction_samples, ForecastSample, SplitSpec, SplitUnit};
use crate::error::{Error, Result};
use crate::forecaster::{
    fit_anchors, forward, loss_and_grad, ForecasterParams, LossBreakdown, DEFAULT_LAMBDA_CONF,
};
use crate::metrics::{eval_sample, eval_set, MetricsConfig, MetricsReport};
use crate::rng::{derive_seed, rng_from_seed};

/// Gradient-descent variant. Hyperparameters beyond the learning rate are
/// fixed: momentum 0.9; Adam (0.9, 0.999, 1e-8).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Fine-tuning multiplies the learning rate by this factor once.
    pub lr_finetune_factor: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Validation metrics every this many epochs (the final epoch always
    /// evaluates).
    pub eval_every: usize,
    /// Optional global gradient-norm clip.
    pub grad_clip: Option<f64>,
    /// Weight of the confidence cross-entropy term.
    pub lambda_conf: f64,
    pub metrics: MetricsConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            lr: 1e-3,
            lr_finetune_factor: 0.1,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            eval_every: 1,
            grad_clip: None,
            lambda_conf: DEFAULT_LAMBDA_CONF,
            metrics: MetricsConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) && self.lr != 0.0 {
            return Err(Error::InvalidConfig("lr must be >= 0".to_string()));
        }
        if self.lr < 0.0 {
            return Err(Error::InvalidConfig("lr must be >= 0".to_string()));
        }
        if self.batch_size < 1 || self.epochs < 1 || self.eval_every < 1 {
            return Err(Error::InvalidConfig(
                "epochs, batch_size and eval_every must be >= 1".to_string(),
            ));
        }
        self.metrics.validate()
    }
}

/// How a run starts: fresh parameters (anchors fit on the training data)
/// or a checkpoint to fine-tune from (anchors frozen, lr reduced).
#[derive(Debug, Clone)]
pub enum TrainInit {
    Scratch { hidden: usize, modes: usize },
    Pretrain { hidden: usize, modes: usize },
    Finetune(ForecasterParams),
}

/// Run label recorded in the output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Scratch,
    Pretrain,
    Finetune,
}

impl TrainMode {
    pub fn label(&self) -> &'static str {
        match self {
            TrainMode::Scratch => "scratch",
            TrainMode::Pretrain => "pretrain",
            TrainMode::Finetune => "finetune",
        }
    }
}

/// One epoch of the training history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: LossBreakdown,
    pub val: Option<MetricsReport>,
    pub effective_lr: f64,
}

/// A finished training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub mode: TrainMode,
    pub history: Vec<EpochRecord>,
    pub final_params: ForecasterParams,
}

struct Optimizer {
    kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    fn new(kind: OptimizerKind, n: usize) -> Optimizer {
        Optimizer {
            kind,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Momentum => {
                const BETA: f64 = 0.9;
                for ((p, g), m) in params.iter_mut().zip(grad).zip(self.m.iter_mut()) {
                    *m = BETA * *m + *g;
                    *p -= lr * *m;
                }
            }
            OptimizerKind::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let bc1 = 1.0 - B1.powi(self.t as i32);
                let bc2 = 1.0 - B2.powi(self.t as i32);
                for (i, (p, g)) in params.iter_mut().zip(grad).enumerate() {
                    self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
                    self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
                    let mhat = self.m[i] / bc1;
                    let vhat = self.v[i] / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + EPS);
                }
            }
        }
    }
}

/// Scale the gradient down to the clip norm when it exceeds it.
pub fn clip_gradient(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= scale;
        }
        max_norm
    } else {
        norm
    }
}

/// Evaluate a model over a sample set in the agent-centric frame.
pub fn evaluate(
    params: &ForecasterParams,
    samples: &[ForecastSample],
    cfg: &MetricsConfig,
) -> Result<MetricsReport> {
    let k = cfg.k.min(params.modes);
    let eff = MetricsConfig { k, ..cfg.clone() };
    let evals = samples
        .iter()
        .map(|s| {
            let out = forward(params, s)?;
            eval_sample(&out, &s.future, &eff)
        })
        .collect::<Result<Vec<_>>>()?;
    eval_set(&evals)
}

fn window_shape(data: &[ForecastSample]) -> Result<(usize, usize)> {
    let shape = (data[0].past_len(), data[0].future_len());
    for s in data {
        if (s.past_len(), s.future_len()) != shape {
            return Err(Error::InvalidInput(
                "training samples disagree on window shape".to_string(),
            ));
        }
    }
    Ok(shape)
}

/// Train a forecaster with mini-batch gradient descent.
///
/// Fresh runs fit anchors on their own data; fine-tune runs reuse the
/// checkpoint's anchors and apply the learning-rate reduction exactly once.
pub fn train(
    init: TrainInit,
    data: &[ForecastSample],
    val: &[ForecastSample],
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let (l, m) = window_shape(data)?;

    let (mode, mut params, effective_lr) = match init {
        TrainInit::Scratch { hidden, modes } | TrainInit::Pretrain { hidden, modes } => {
            let mode = if matches!(init, TrainInit::Scratch { .. }) {
                TrainMode::Scratch
            } else {
                TrainMode::Pretrain
            };
            let refs: Vec<&ForecastSample> = data.iter().collect();
            let anchors = fit_anchors(&refs, modes, derive_seed(cfg.seed, 0x07))?;
            let params = ForecasterParams::init(hidden, modes, l, m, anchors, cfg.seed)?;
            (mode, params, cfg.lr)
        }
        TrainInit::Finetune(params) => {
            if params.past_len != l || params.future_len != m {
                return Err(Error::CheckpointMismatch(format!(
                    "checkpoint window ({}, {}) vs data ({l}, {m})",
                    params.past_len, params.future_len
                )));
            }
            params.validate()?;
            (TrainMode::Finetune, params, cfg.lr * cfg.lr_finetune_factor)
        }
    };

    let mut flat = params.to_flat();
    let mut opt = Optimizer::new(cfg.optimizer, flat.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut indices: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, 0x1000 + epoch as u64));
        indices.shuffle(&mut rng);

        let mut loss_sum = LossBreakdown {
            ade_term: 0.0,
            conf_term: 0.0,
            total: 0.0,
        };
        for chunk in indices.chunks(cfg.batch_size) {
            let batch: Vec<&ForecastSample> = chunk.iter().map(|&i| &data[i]).collect();
            let (loss, mut grad) = loss_and_grad(&params, &batch, cfg.lambda_conf)?;
            if let Some(limit) = cfg.grad_clip {
                clip_gradient(&mut grad, limit);
            }
            if effective_lr > 0.0 {
                opt.step(&mut flat, &grad, effective_lr);
                params.apply_flat(&flat)?;
            }
            let w = chunk.len() as f64;
            loss_sum.ade_term += loss.ade_term * w;
            loss_sum.conf_term += loss.conf_term * w;
            loss_sum.total += loss.total * w;
        }
        let n = data.len() as f64;
        let train_loss = LossBreakdown {
            ade_term: loss_sum.ade_term / n,
            conf_term: loss_sum.conf_term / n,
            total: loss_sum.total / n,
        };

        let due = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs;
        let val_report = if due && !val.is_empty() {
            Some(evaluate(&params, val, &cfg.metrics)?)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val: val_report,
            effective_lr,
        });
    }

    Ok(TrainRun {
        mode,
        history,
        final_params: params,
    })
}

/// Result of the paired pretrain/fine-tune and from-scratch runs.
#[derive(Debug, Clone)]
pub struct PptOutcome {
    pub pretrain: TrainRun,
    /// Fine-tuned from the pretrained checkpoint on the labeled fraction.
    pub ppt: TrainRun,
    /// Trained from scratch on the identical labeled fraction.
    pub scratch: TrainRun,
}

/// Pretrain on pseudo-labeled samples, fine-tune on a per-trajectory
/// fraction of the labeled samples, and train the from-scratch baseline on
/// the same fraction. Both end-state models are validated on `val`.
pub fn ppt_protocol(
    pseudo: &[ForecastSample],
    labeled: &[ForecastSample],
    val: &[ForecastSample],
    fraction: f64,
    hidden: usize,
    modes: usize,
    cfg: &TrainConfig,
) -> Result<PptOutcome> {
    if pseudo.is_empty() {
        return Err(Error::EmptyPretrainSet);
    }
    let spec = SplitSpec {
        fraction,
        seed: derive_seed(cfg.seed, 0x21),
        unit: SplitUnit::PerTrajectory,
    };
    let fraction_set = fraction_samples(labeled, &spec)?;

    let pretrain = train(TrainInit::Pretrain { hidden, modes }, pseudo, val, cfg)?;
    let ppt = train(
        TrainInit::Finetune(pretrain.final_params.clone()),
        &fraction_set,
        val,
        cfg,
    )?;
    let scratch = train(TrainInit::Scratch { hidden, modes }, &fraction_set, val, cfg)?;
    Ok(PptOutcome {
        pretrain,
        ppt,
        scratch,
    })
}
