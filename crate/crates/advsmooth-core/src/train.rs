//! Adversarial training harness on a synthetic two-class task.
//!
//! The task: inputs `x ~ N(0, I_d)` labeled `y = sign(x_1)`, attacked inside
//! a norm ball at train and evaluation time. Three optimizer paths share the
//! same data stream, attack budget and learning-rate schedule:
//!
//! * `sgd` - momentum SGD on the minibatch adversarial loss;
//! * `ensgd` - first-order entropy descent (Langevin inner loop, outer step
//!   along `gamma (theta - theta_bar)`);
//! * `ensgd2` - the same with the per-coordinate second-order preconditioner.
//!
//! Each path can additionally apply an adversarial weight perturbation
//! before the gradient is taken. Every stochastic choice (data, model init,
//! batch order, attack starts, Langevin noise) is derived from the single
//! experiment seed, so runs are bitwise reproducible.
//!
//! Evaluation always restarts attacks from the clean input, which makes the
//! achieved loss at least the clean loss; robust accuracy therefore never
//! exceeds clean accuracy, and a correct robust prediction implies a correct
//! clean one.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{pgd_attack, NormBall, NormKind, PgdConfig};
use crate::entropy::{
    awp_perturbation, ensgd_step, mix_seed, sgd_step, sgld_estimate, AwpConfig, EnsgdConfig,
    EnsgdOrder, MinibatchSampler,
};
use crate::error::{Error, Result};
use crate::model::{
    make_model, BinaryLabel, InputPoint, LabeledDataset, LabeledExample, Model, ModelSpec,
    ParamVector,
};

/// Version stamp for serialized configs, metrics and checkpoints.
pub const SCHEMA_VERSION: u32 = 1;

/// Synthetic data settings: one seeded stream yields the train split and
/// then the test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n_per_split: usize,
    pub input_dim: usize,
    pub seed: u64,
}

/// Attack budget used during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub norm: NormKind,
    pub epsilon: f64,
    pub pgd_steps: usize,
    /// Steps for the per-epoch robust evaluation (scoring is done with a
    /// stronger attack than training). Defaults to `2 * pgd_steps`.
    #[serde(default)]
    pub eval_pgd_steps: Option<usize>,
    /// Defaults to `epsilon / 4` when absent.
    #[serde(default)]
    pub pgd_step_size: Option<f64>,
    pub random_init: bool,
}

impl AttackConfig {
    pub fn ball(&self) -> Result<NormBall> {
        NormBall::new(self.norm, self.epsilon)
    }

    fn step_size(&self) -> f64 {
        match self.pgd_step_size {
            Some(s) => s,
            None => (self.epsilon / 4.0).max(f64::MIN_POSITIVE),
        }
    }

    pub fn pgd(&self, seed: u64) -> Result<PgdConfig> {
        PgdConfig::new(self.pgd_steps, self.step_size(), self.random_init, seed)
    }

    /// Evaluation attack: more steps, always a clean (deterministic) start.
    pub fn eval_pgd(&self, seed: u64) -> Result<PgdConfig> {
        let steps = self.eval_pgd_steps.unwrap_or(2 * self.pgd_steps);
        PgdConfig::new(steps, self.step_size(), false, seed)
    }
}

/// Which optimizer drives the outer loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Ensgd,
    Ensgd2,
}

/// Optimizer settings. `lr`, `momentum` and `weight_decay` drive the `sgd`
/// path; the `ensgd` section drives the entropy-descent paths, whose update
/// order is forced by [`OptimizerKind`] (the `order` field inside `ensgd` is
/// ignored here).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default)]
    pub ensgd: EnsgdConfig,
}

fn default_lr() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}

/// Full experiment description; serializable so runs can be replayed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelSpec,
    pub data: DataConfig,
    pub attack: AttackConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub awp: Option<AwpConfig>,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default = "default_milestones")]
    pub lr_milestones: Vec<usize>,
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
    pub seed: u64,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_milestones() -> Vec<usize> {
    vec![30, 40]
}
fn default_decay() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidParameter {
                name: "schema_version",
                reason: format!(
                    "expected {SCHEMA_VERSION}, got {}",
                    self.schema_version
                ),
            });
        }
        self.model.validate()?;
        if self.model.input_dim != self.data.input_dim {
            return Err(Error::DimensionMismatch {
                context: "experiment model vs data",
                expected: self.model.input_dim,
                actual: self.data.input_dim,
            });
        }
        if self.data.n_per_split == 0 {
            return Err(Error::InvalidParameter {
                name: "data.n_per_split",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.attack.epsilon.is_finite() && self.attack.epsilon >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "attack.epsilon",
                reason: format!("must be finite and >= 0, got {}", self.attack.epsilon),
            });
        }
        if self.attack.pgd_steps == 0 {
            return Err(Error::InvalidParameter {
                name: "attack.pgd_steps",
                reason: "must be >= 1".into(),
            });
        }
        if self.attack.eval_pgd_steps == Some(0) {
            return Err(Error::InvalidParameter {
                name: "attack.eval_pgd_steps",
                reason: "must be >= 1 when given".into(),
            });
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter {
                name: "epochs",
                reason: "must be >= 1".into(),
            });
        }
        if self.batch_size == 0 || self.batch_size > self.data.n_per_split {
            return Err(Error::InvalidParameter {
                name: "batch_size",
                reason: format!(
                    "must lie in 1..={}, got {}",
                    self.data.n_per_split, self.batch_size
                ),
            });
        }
        if !self.lr_milestones.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter {
                name: "lr_milestones",
                reason: "must be strictly increasing".into(),
            });
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "lr_decay",
                reason: format!("must lie in (0, 1], got {}", self.lr_decay),
            });
        }
        match self.optimizer.kind {
            OptimizerKind::Sgd => {
                if !(self.optimizer.lr.is_finite() && self.optimizer.lr > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "optimizer.lr",
                        reason: format!("must be positive, got {}", self.optimizer.lr),
                    });
                }
                if !(0.0..1.0).contains(&self.optimizer.momentum) {
                    return Err(Error::InvalidParameter {
                        name: "optimizer.momentum",
                        reason: format!("must lie in [0, 1), got {}", self.optimizer.momentum),
                    });
                }
                if !(self.optimizer.weight_decay.is_finite()
                    && self.optimizer.weight_decay >= 0.0)
                {
                    return Err(Error::InvalidParameter {
                        name: "optimizer.weight_decay",
                        reason: format!("must be >= 0, got {}", self.optimizer.weight_decay),
                    });
                }
            }
            OptimizerKind::Ensgd | OptimizerKind::Ensgd2 => {
                self.optimizer.ensgd.validate()?;
            }
        }
        if let Some(awp) = &self.awp {
            awp.validate()?;
        }
        Ok(())
    }

    /// Learning-rate multiplier in effect at a 1-based epoch.
    pub fn lr_multiplier(&self, epoch: usize) -> f64 {
        let hits = self.lr_milestones.iter().filter(|&&m| epoch >= m).count();
        self.lr_decay.powi(hits as i32)
    }

    /// A small, fast configuration exercising the full pipeline: linear
    /// model in two dimensions, 100 + 100 examples, 50 epochs of batch-20
    /// training against a 5-step linf attack of radius 0.1.
    pub fn desk(kind: OptimizerKind, with_awp: bool) -> ExperimentConfig {
        let suffix = if with_awp { "awp" } else { "noawp" };
        let kind_name = match kind {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Ensgd => "ensgd",
            OptimizerKind::Ensgd2 => "ensgd2",
        };
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            name: format!("{kind_name}_{suffix}"),
            model: ModelSpec::linear(2),
            data: DataConfig {
                n_per_split: 200,
                input_dim: 2,
                seed: 20240,
            },
            attack: AttackConfig {
                norm: NormKind::LInf,
                epsilon: 0.1,
                pgd_steps: 10,
                eval_pgd_steps: Some(20),
                pgd_step_size: None,
                random_init: true,
            },
            optimizer: OptimizerConfig {
                kind,
                lr: 0.1,
                momentum: 0.9,
                weight_decay: 5e-4,
                ensgd: EnsgdConfig {
                    gamma: 0.03,
                    eta: 1.0,
                    eta_prime: 0.2,
                    eps_langevin: 1e-4,
                    langevin_iters: 5,
                    alpha: 0.75,
                    variance_floor: 1e-3,
                    order: EnsgdOrder::First,
                },
            },
            awp: with_awp.then_some(AwpConfig {
                gamma_a: 0.01,
                inner_steps: 1,
            }),
            epochs: 50,
            batch_size: 20,
            lr_milestones: vec![30, 40],
            lr_decay: 0.1,
            seed: 1234,
        }
    }
}

/// Hex SHA-256 of the canonical JSON serialization of a config.
pub fn config_sha256(config: &ExperimentConfig) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Draw `n` labeled examples from a standard normal stream.
fn synthetic_examples(n: usize, input_dim: usize, rng: &mut ChaCha8Rng) -> Vec<LabeledExample> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = DVector::from_fn(input_dim, |_, _| StandardNormal.sample(rng));
        // The label is the sign of the first coordinate; a coordinate of
        // exactly zero is a measure-zero event we simply redraw.
        if x[0] == 0.0 {
            continue;
        }
        let y = if x[0] > 0.0 {
            BinaryLabel::Pos
        } else {
            BinaryLabel::Neg
        };
        out.push(LabeledExample {
            x: InputPoint::from_dvector(x).expect("normal draws are finite"),
            y,
        });
    }
    out
}

/// Train and test splits of `n` examples each, drawn from one seeded stream
/// of `x ~ N(0, I_d)` with `y = sign(x_1)`.
pub fn make_synthetic_dataset(
    n: usize,
    input_dim: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if input_dim == 0 {
        return Err(Error::InvalidParameter {
            name: "input_dim",
            reason: "must be >= 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = LabeledDataset::new(synthetic_examples(n, input_dim, &mut rng))?;
    let test = LabeledDataset::new(synthetic_examples(n, input_dim, &mut rng))?;
    Ok((train, test))
}

/// Clean and attacked performance of fixed parameters on a dataset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RobustEval {
    pub clean_loss: f64,
    pub robust_loss: f64,
    pub clean_acc: f64,
    pub robust_acc: f64,
}

/// Evaluate mean loss and accuracy, clean and under attack.
///
/// Attacks restart from the clean input (no random start), so the attacked
/// loss of each example is at least its clean loss; a prediction counts as
/// correct only when `y * output > 0`.
pub fn evaluate_robust_accuracy(
    model: &Model,
    theta: &ParamVector,
    data: &LabeledDataset,
    ball: &NormBall,
    pgd: &PgdConfig,
    seed: u64,
) -> Result<RobustEval> {
    if data.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "evaluate_robust_accuracy dataset",
            expected: model.input_dim(),
            actual: data.input_dim(),
        });
    }
    let mut eval_cfg = *pgd;
    eval_cfg.random_init = false;
    let n = data.len() as f64;
    let mut clean_loss = 0.0;
    let mut robust_loss = 0.0;
    let mut clean_hits = 0usize;
    let mut robust_hits = 0usize;
    for (i, ex) in data.examples().iter().enumerate() {
        let y = ex.y.value();
        let z = model.raw_output_raw(theta, ex.x.as_dvector());
        clean_loss += crate::model::logistic_loss(y, z);
        if y * z > 0.0 {
            clean_hits += 1;
        }
        let mut cfg = eval_cfg;
        cfg.seed = mix_seed(&[seed, 0xE7A1, i as u64]);
        let attack = pgd_attack(model, theta, &ex.x, ex.y, ball, &cfg)?;
        robust_loss += attack.achieved_loss;
        let z_adv = model.raw_output_raw(theta, &attack.x_prime);
        if y * z_adv > 0.0 {
            robust_hits += 1;
        }
    }
    Ok(RobustEval {
        clean_loss: clean_loss / n,
        robust_loss: robust_loss / n,
        clean_acc: clean_hits as f64 / n,
        robust_acc: robust_hits as f64 / n,
    })
}

/// One row of per-epoch training telemetry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_clean_loss: f64,
    pub train_robust_loss: f64,
    pub test_clean_acc: f64,
    pub test_robust_acc: f64,
    pub wall_time_ms: f64,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub final_theta: ParamVector,
    /// Parameters at the epoch with the highest test robust accuracy
    /// (earliest such epoch on ties).
    pub best_theta: ParamVector,
    pub best_epoch: usize,
    pub best_test_robust_acc: f64,
    pub metrics: Vec<EpochMetrics>,
    pub config_sha256: String,
}

/// The deterministic pieces a run is built from.
pub struct ExperimentSetup {
    pub model: Model,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Build the model and data exactly as [`adversarial_train`] will.
pub fn experiment_setup(config: &ExperimentConfig) -> Result<ExperimentSetup> {
    config.validate()?;
    let model = make_model(config.model.clone(), mix_seed(&[config.seed, 0x0DE1]))?;
    let (train, test) =
        make_synthetic_dataset(config.data.n_per_split, config.data.input_dim, config.data.seed)?;
    Ok(ExperimentSetup { model, train, test })
}

fn diverged(err: Error, epoch: usize, batch: usize, theta: &ParamVector) -> Error {
    match err {
        Error::NonFinite(_) => Error::TrainingDiverged {
            epoch,
            batch,
            last_theta: theta.to_vec(),
        },
        other => other,
    }
}

/// Run the configured experiment, invoking `on_epoch` after each epoch.
pub fn adversarial_train(
    config: &ExperimentConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainResult> {
    let ExperimentSetup { model, train, test } = experiment_setup(config)?;
    let ball = config.attack.ball()?;
    let train_pgd = config.attack.pgd(0)?;
    let eval_pgd = config.attack.eval_pgd(0)?;
    let batches_per_epoch = train.len().div_ceil(config.batch_size);
    let mut sampler = MinibatchSampler::new(
        train.len(),
        config.batch_size,
        mix_seed(&[config.seed, 0x5A3B]),
    )?;

    let mut theta = model.init_params().clone();
    let mut momentum_buf = DVector::zeros(model.param_dim());
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut best_epoch = 0usize;
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_theta = theta.clone();

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let mult = config.lr_multiplier(epoch);
        for batch_idx in 0..batches_per_epoch {
            // Closure so any non-finite loss inside attacks or gradients is
            // reported as divergence at this (epoch, batch).
            let step_result: Result<ParamVector> = (|| match config.optimizer.kind {
                OptimizerKind::Sgd => {
                    let indices = sampler.next_batch();
                    let eval_theta = match &config.awp {
                        Some(awp) => {
                            let batch_refs: Vec<(&InputPoint, f64)> = indices
                                .iter()
                                .map(|&i| (&train.get(i).x, train.get(i).y.value()))
                                .collect();
                            let v = awp_perturbation(
                                &model,
                                &theta,
                                &batch_refs,
                                &ball,
                                &train_pgd,
                                awp,
                                mix_seed(&[config.seed, 0x0A39, epoch as u64, batch_idx as u64]),
                            )?;
                            ParamVector::from_dvector(theta.as_dvector() + v)?
                        }
                        None => theta.clone(),
                    };
                    let mut grad = DVector::zeros(model.param_dim());
                    for &i in &indices {
                        let ex = train.get(i);
                        let mut cfg = train_pgd;
                        cfg.seed = mix_seed(&[
                            config.seed,
                            0xA77A,
                            epoch as u64,
                            batch_idx as u64,
                            i as u64,
                        ]);
                        let attack = pgd_attack(&model, &theta, &ex.x, ex.y, &ball, &cfg)?;
                        grad += model
                            .loss_and_grads_raw(&eval_theta, &attack.x_prime, ex.y.value())
                            .grad_theta;
                    }
                    grad /= indices.len() as f64;
                    let (next, buf) = sgd_step(
                        &theta,
                        &grad,
                        &momentum_buf,
                        config.optimizer.lr * mult,
                        config.optimizer.momentum,
                        config.optimizer.weight_decay,
                    )?;
                    momentum_buf = buf;
                    Ok(next)
                }
                OptimizerKind::Ensgd | OptimizerKind::Ensgd2 => {
                    let mut cfg = config.optimizer.ensgd;
                    cfg.eta *= mult;
                    cfg.order = match config.optimizer.kind {
                        OptimizerKind::Ensgd => EnsgdOrder::First,
                        _ => EnsgdOrder::Second,
                    };
                    let state = sgld_estimate(
                        &model,
                        &theta,
                        &train,
                        &mut sampler,
                        &ball,
                        &train_pgd,
                        &cfg,
                        config.awp.as_ref(),
                        mix_seed(&[config.seed, 0xE5D0, epoch as u64, batch_idx as u64]),
                    )?;
                    ensgd_step(&theta, &state, &cfg)
                }
            })();
            theta = step_result.map_err(|e| diverged(e, epoch, batch_idx, &theta))?;
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged {
                    epoch,
                    batch: batch_idx,
                    last_theta: theta.to_vec(),
                });
            }
        }

        let train_eval = evaluate_robust_accuracy(
            &model,
            &theta,
            &train,
            &ball,
            &eval_pgd,
            mix_seed(&[config.seed, 0x3E57, epoch as u64]),
        )
        .map_err(|e| diverged(e, epoch, batches_per_epoch, &theta))?;
        let test_eval = evaluate_robust_accuracy(
            &model,
            &theta,
            &test,
            &ball,
            &eval_pgd,
            mix_seed(&[config.seed, 0x7E57, epoch as u64]),
        )
        .map_err(|e| diverged(e, epoch, batches_per_epoch, &theta))?;

        let row = EpochMetrics {
            epoch,
            lr: match config.optimizer.kind {
                OptimizerKind::Sgd => config.optimizer.lr * mult,
                _ => config.optimizer.ensgd.eta * mult,
            },
            train_clean_loss: train_eval.clean_loss,
            train_robust_loss: train_eval.robust_loss,
            test_clean_acc: test_eval.clean_acc,
            test_robust_acc: test_eval.robust_acc,
            wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        if test_eval.robust_acc > best_acc {
            best_acc = test_eval.robust_acc;
            best_epoch = epoch;
            best_theta = theta.clone();
        }
        on_epoch(&row);
        metrics.push(row);
    }

    Ok(TrainResult {
        final_theta: theta,
        best_theta,
        best_epoch,
        best_test_robust_acc: best_acc,
        metrics,
        config_sha256: config_sha256(config)?,
    })
}

/// Serialized checkpoint: parameters plus enough context to validate reuse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointData {
    pub schema_version: u32,
    pub config_sha256: String,
    pub epoch: usize,
    pub test_robust_acc: f64,
    pub theta: Vec<f64>,
}

/// Write per-epoch metrics as one JSON object per line.
pub fn write_metrics_jsonl(path: &Path, rows: &[EpochMetrics]) -> Result<()> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn save_checkpoint(path: &Path, data: &CheckpointData) -> Result<()> {
    let mut file =
        fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::to_writer_pretty(&mut file, data)?;
    file.write_all(b"\n")
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let data: CheckpointData = serde_json::from_slice(&bytes)?;
    if data.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidParameter {
            name: "checkpoint.schema_version",
            reason: format!("expected {SCHEMA_VERSION}, got {}", data.schema_version),
        });
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(kind: OptimizerKind, with_awp: bool) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::desk(kind, with_awp);
        cfg.data.n_per_split = 24;
        cfg.batch_size = 8;
        cfg.epochs = 3;
        cfg.attack.pgd_steps = 3;
        cfg.optimizer.ensgd.langevin_iters = 3;
        cfg
    }

    #[test]
    fn synthetic_labels_are_the_sign_of_the_first_coordinate() {
        let (train, test) = make_synthetic_dataset(50, 3, 7).unwrap();
        assert_eq!(train.len(), 50);
        assert_eq!(test.len(), 50);
        assert_eq!(train.input_dim(), 3);
        for ex in train.examples().iter().chain(test.examples()) {
            assert_eq!(ex.y.value(), ex.x[0].signum());
        }
        // Same seed reproduces; the two splits differ.
        let (train2, _) = make_synthetic_dataset(50, 3, 7).unwrap();
        assert_eq!(train.get(0).x.to_vec(), train2.get(0).x.to_vec());
        assert_ne!(train.get(0).x.to_vec(), test.get(0).x.to_vec());
    }

    #[test]
    fn lr_schedule_decays_at_each_milestone() {
        let cfg = ExperimentConfig::desk(OptimizerKind::Sgd, false);
        assert_eq!(cfg.lr_multiplier(1), 1.0);
        assert_eq!(cfg.lr_multiplier(29), 1.0);
        assert!((cfg.lr_multiplier(30) - 0.1).abs() < 1e-15);
        assert!((cfg.lr_multiplier(39) - 0.1).abs() < 1e-15);
        assert!((cfg.lr_multiplier(40) - 0.01).abs() < 1e-15);
        assert!((cfg.lr_multiplier(50) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn robust_metrics_never_beat_clean_metrics() {
        let (_, test) = make_synthetic_dataset(60, 2, 3).unwrap();
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let theta = ParamVector::new(vec![10.0, 0.0]).unwrap();
        let ball = NormBall::linf(0.1).unwrap();
        let pgd = PgdConfig::new(5, 0.025, false, 0).unwrap();
        let eval = evaluate_robust_accuracy(&model, &theta, &test, &ball, &pgd, 9).unwrap();
        // theta = (10, 0) classifies by sign(x_1): clean accuracy is perfect.
        assert_eq!(eval.clean_acc, 1.0);
        assert!(eval.robust_acc <= eval.clean_acc);
        assert!(eval.robust_loss >= eval.clean_loss);
        // Points with |x_1| < 0.1 are flipped by the attack, so robust
        // accuracy drops below 1 on a typical normal sample of 60.
        assert!(eval.robust_acc < 1.0);
    }

    #[test]
    fn training_runs_and_is_deterministic_for_every_optimizer() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Ensgd, OptimizerKind::Ensgd2] {
            for with_awp in [false, true] {
                let cfg = quick_config(kind, with_awp);
                let r1 = adversarial_train(&cfg, |_| {}).unwrap();
                let r2 = adversarial_train(&cfg, |_| {}).unwrap();
                assert_eq!(
                    r1.final_theta.to_vec(),
                    r2.final_theta.to_vec(),
                    "{kind:?} awp={with_awp} not deterministic"
                );
                assert_eq!(r1.metrics.len(), cfg.epochs);
                for row in &r1.metrics {
                    assert!(row.test_robust_acc <= row.test_clean_acc + 1e-12);
                    assert!(row.train_robust_loss.is_finite());
                }
            }
        }
    }

    #[test]
    fn sgd_improves_the_robust_training_loss_quickly() {
        let mut cfg = quick_config(OptimizerKind::Sgd, false);
        cfg.epochs = 10;
        let result = adversarial_train(&cfg, |_| {}).unwrap();
        let first = result.metrics.first().unwrap().train_robust_loss;
        let last = result.metrics.last().unwrap().train_robust_loss;
        assert!(last < first, "robust loss {first} -> {last}");
        // Best-checkpoint tracking points at a real epoch.
        assert!(result.best_epoch >= 1 && result.best_epoch <= cfg.epochs);
        let best_row = &result.metrics[result.best_epoch - 1];
        assert_eq!(best_row.test_robust_acc, result.best_test_robust_acc);
    }

    #[test]
    fn divergent_parameters_surface_as_a_training_error() {
        let mut cfg = quick_config(OptimizerKind::Sgd, false);
        cfg.model = ModelSpec::mlp(2, vec![4], crate::model::Activation::Swish);
        cfg.data.input_dim = 2;
        cfg.optimizer.lr = 1e200;
        cfg.optimizer.weight_decay = 0.0;
        cfg.epochs = 5;
        match adversarial_train(&cfg, |_| {}) {
            Err(Error::TrainingDiverged { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let mut cfg = ExperimentConfig::desk(OptimizerKind::Sgd, false);
        cfg.schema_version = 99;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk(OptimizerKind::Sgd, false);
        cfg.batch_size = cfg.data.n_per_split + 1;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk(OptimizerKind::Sgd, false);
        cfg.attack.eval_pgd_steps = Some(0);
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk(OptimizerKind::Sgd, false);
        cfg.lr_milestones = vec![40, 30];
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk(OptimizerKind::Sgd, false);
        cfg.attack.epsilon = -0.5;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::desk(OptimizerKind::Ensgd, false);
        cfg.optimizer.ensgd.gamma = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::desk(OptimizerKind::Sgd, false);
        let b = ExperimentConfig::desk(OptimizerKind::Sgd, false);
        assert_eq!(config_sha256(&a).unwrap(), config_sha256(&b).unwrap());
        let mut c = a.clone();
        c.seed += 1;
        assert_ne!(config_sha256(&a).unwrap(), config_sha256(&c).unwrap());
        assert_eq!(config_sha256(&a).unwrap().len(), 64);
    }

    #[test]
    fn metrics_and_checkpoints_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            EpochMetrics {
                epoch: 1,
                lr: 0.1,
                train_clean_loss: 0.5,
                train_robust_loss: 0.6,
                test_clean_acc: 0.9,
                test_robust_acc: 0.8,
                wall_time_ms: 12.5,
            },
            EpochMetrics {
                epoch: 2,
                lr: 0.1,
                train_clean_loss: 0.4,
                train_robust_loss: 0.5,
                test_clean_acc: 0.95,
                test_robust_acc: 0.85,
                wall_time_ms: 11.0,
            },
        ];
        let metrics_path = dir.path().join("metrics.jsonl");
        write_metrics_jsonl(&metrics_path, &rows).unwrap();
        let text = std::fs::read_to_string(&metrics_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let parsed: EpochMetrics = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(parsed.epoch, 2);
        assert_eq!(parsed.test_robust_acc, 0.85);

        let ckpt = CheckpointData {
            schema_version: SCHEMA_VERSION,
            config_sha256: "ab".repeat(32),
            epoch: 2,
            test_robust_acc: 0.85,
            theta: vec![0.25, -1.5],
        };
        let ckpt_path = dir.path().join("checkpoint.json");
        save_checkpoint(&ckpt_path, &ckpt).unwrap();
        let loaded = load_checkpoint(&ckpt_path).unwrap();
        assert_eq!(loaded.theta, ckpt.theta);
        assert_eq!(loaded.config_sha256, ckpt.config_sha256);

        let mut stale = ckpt.clone();
        stale.schema_version = 0;
        save_checkpoint(&ckpt_path, &stale).unwrap();
        assert!(load_checkpoint(&ckpt_path).is_err());
    }
}
