//! Small binary classifiers with analytic derivatives.
//!
//! Three model families share one interface:
//!
//! * `LinearLogistic`: raw output `z = theta . x`, parameter dim = input dim.
//! * `SwishLogistic`: raw output `z = swish(theta . x)` with
//!   `swish(u) = u * sigmoid(u)`, parameter dim = input dim.
//! * `Mlp`: a dense multi-layer perceptron with swish or relu hidden
//!   activations and a scalar linear output.
//!
//! All models are trained with the binary logistic loss
//! `loss(x, y, theta) = log(1 + exp(-y * z))`, evaluated in the numerically
//! stable form `log1p(exp(-|t|)) + max(-t, 0)` for `t = y * z`, which stays
//! finite for |z| up to and beyond 1e3.
//!
//! Derivatives:
//!
//! * `loss_and_grads` returns analytic gradients in both `theta` and `x`
//!   (manual backprop for the MLP).
//! * `hess_x` is the input-space Hessian: analytic rank-one forms for the
//!   linear and swish models, central finite differences of `grad_x` for the
//!   MLP (step configurable, default 1e-5).
//! * `cross_hess` is the mixed second derivative, row `i`, column `j` holding
//!   `d2 loss / dx_i dtheta_j`.
//!
//! Models are immutable after construction; parameters are owned by the
//! caller and passed explicitly, so one model value can serve many parameter
//! vectors concurrently.

use std::ops::{Deref, Range};
use std::sync::LazyLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic sigmoid, computed without overflow for any finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` in the stable form `max(x, 0) + log1p(exp(-|x|))`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary logistic loss `log(1 + exp(-y * z))` for a raw output `z`.
pub fn logistic_loss(y: f64, z: f64) -> f64 {
    softplus(-y * z)
}

/// `swish(u) = u * sigmoid(u)`.
pub fn swish(u: f64) -> f64 {
    u * sigmoid(u)
}

/// First derivative of swish: `sigmoid(u) * (1 + u * (1 - sigmoid(u)))`.
pub fn swish_prime(u: f64) -> f64 {
    let s = sigmoid(u);
    s * (1.0 + u * (1.0 - s))
}

/// Second derivative of swish: `sigmoid(u)(1 - sigmoid(u))(2 + u(1 - 2 sigmoid(u)))`.
pub fn swish_second(u: f64) -> f64 {
    let s = sigmoid(u);
    s * (1.0 - s) * (2.0 + u * (1.0 - 2.0 * s))
}

/// The unique stationary point of swish, i.e. the root of `swish'`.
///
/// Swish has a single global minimum at a negative argument; bisection on
/// the bracket [-2, -1] (where `swish'` changes sign) pins it to full f64
/// precision. The value is approximately -1.27846.
pub fn swish_stationary_point() -> f64 {
    static ROOT: LazyLock<f64> = LazyLock::new(|| {
        let (mut lo, mut hi) = (-2.0_f64, -1.0_f64);
        debug_assert!(swish_prime(lo) < 0.0 && swish_prime(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if swish_prime(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    });
    *ROOT
}

fn check_finite_slice(values: &[f64], context: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

/// A parameter vector; entries are validated finite at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(DVector<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite_slice(&values, "ParamVector")?;
        Ok(ParamVector(DVector::from_vec(values)))
    }

    pub fn from_dvector(values: DVector<f64>) -> Result<Self> {
        check_finite_slice(values.as_slice(), "ParamVector")?;
        Ok(ParamVector(values))
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }
}

impl Deref for ParamVector {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// An input point; entries are validated finite at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct InputPoint(DVector<f64>);

impl InputPoint {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite_slice(&values, "InputPoint")?;
        Ok(InputPoint(DVector::from_vec(values)))
    }

    pub fn from_dvector(values: DVector<f64>) -> Result<Self> {
        check_finite_slice(values.as_slice(), "InputPoint")?;
        Ok(InputPoint(values))
    }

    pub fn as_dvector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }
}

impl Deref for InputPoint {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Binary class label, +1 or -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryLabel {
    #[serde(rename = "1")]
    Pos,
    #[serde(rename = "-1")]
    Neg,
}

impl BinaryLabel {
    /// The label as the value used in the loss, +1.0 or -1.0.
    pub fn value(self) -> f64 {
        match self {
            BinaryLabel::Pos => 1.0,
            BinaryLabel::Neg => -1.0,
        }
    }

    /// Label from the sign of a nonzero real; zero is rejected.
    pub fn from_sign(v: f64) -> Result<Self> {
        if v > 0.0 {
            Ok(BinaryLabel::Pos)
        } else if v < 0.0 {
            Ok(BinaryLabel::Neg)
        } else {
            Err(Error::InvalidParameter {
                name: "label",
                reason: "sign of exactly zero is undefined".into(),
            })
        }
    }
}

/// One labeled example.
#[derive(Debug, Clone)]
pub struct LabeledExample {
    pub x: InputPoint,
    pub y: BinaryLabel,
}

/// A dataset of labeled examples with a single consistent input dimension.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    examples: Vec<LabeledExample>,
    input_dim: usize,
}

impl LabeledDataset {
    pub fn new(examples: Vec<LabeledExample>) -> Result<Self> {
        let input_dim = match examples.first() {
            Some(e) => e.x.len(),
            None => {
                return Err(Error::InvalidParameter {
                    name: "dataset",
                    reason: "must contain at least one example".into(),
                })
            }
        };
        for e in &examples {
            if e.x.len() != input_dim {
                return Err(Error::DimensionMismatch {
                    context: "LabeledDataset",
                    expected: input_dim,
                    actual: e.x.len(),
                });
            }
        }
        Ok(LabeledDataset {
            examples,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn get(&self, i: usize) -> &LabeledExample {
        &self.examples[i]
    }
}

/// Hidden-layer activation for the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
    Relu,
}

impl Activation {
    fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Swish => swish(u),
            Activation::Relu => u.max(0.0),
        }
    }

    /// Derivative; the relu subgradient at exactly zero is taken as 0.
    fn derivative(self, u: f64) -> f64 {
        match self {
            Activation::Swish => swish_prime(u),
            Activation::Relu => {
                if u > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Which model family to build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    LinearLogistic,
    SwishLogistic,
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
    },
}

/// Immutable model description: family plus input dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::LinearLogistic,
            input_dim,
        }
    }

    pub fn swish(input_dim: usize) -> Self {
        ModelSpec {
            kind: ModelKind::SwishLogistic,
            input_dim,
        }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, activation: Activation) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp { hidden, activation },
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidModelSpec("input_dim must be >= 1".into()));
        }
        if let ModelKind::Mlp { hidden, .. } = &self.kind {
            if hidden.iter().any(|&w| w == 0) {
                return Err(Error::InvalidModelSpec(
                    "hidden layer widths must be >= 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// What a contiguous block of the flattened parameter vector represents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BlockKind {
    /// Weight matrix of shape (out, in), stored row-major.
    Weight { out: usize, input: usize },
    /// Bias vector of length out.
    Bias { out: usize },
}

/// A named slice of the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub layer: usize,
    pub kind: BlockKind,
    pub range: Range<usize>,
}

/// A constructed model: spec, layer shapes, deterministic initial parameters.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    /// Layer widths including input and output, e.g. [2, 16, 16, 1] for an MLP.
    widths: Vec<usize>,
    blocks: Vec<ParamBlock>,
    param_dim: usize,
    init_params: ParamVector,
    fd_step: f64,
}

/// Build a model with deterministically seeded initial parameters.
///
/// Initial entries are drawn uniformly from [-0.5, 0.5] and scaled by
/// 1/sqrt(fan_in) of their layer; the same seed always yields the same
/// parameters.
pub fn make_model(spec: ModelSpec, seed: u64) -> Result<Model> {
    Model::new(spec, seed)
}

impl Model {
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Model> {
        spec.validate()?;
        let widths: Vec<usize> = match &spec.kind {
            ModelKind::LinearLogistic | ModelKind::SwishLogistic => {
                vec![spec.input_dim, 1]
            }
            ModelKind::Mlp { hidden, .. } => {
                let mut w = Vec::with_capacity(hidden.len() + 2);
                w.push(spec.input_dim);
                w.extend_from_slice(hidden);
                w.push(1);
                w
            }
        };

        let mut blocks = Vec::new();
        let mut offset = 0usize;
        match spec.kind {
            ModelKind::LinearLogistic | ModelKind::SwishLogistic => {
                // Single weight vector, no bias.
                blocks.push(ParamBlock {
                    layer: 0,
                    kind: BlockKind::Weight {
                        out: 1,
                        input: spec.input_dim,
                    },
                    range: 0..spec.input_dim,
                });
                offset = spec.input_dim;
            }
            ModelKind::Mlp { .. } => {
                for l in 0..widths.len() - 1 {
                    let (fan_in, fan_out) = (widths[l], widths[l + 1]);
                    blocks.push(ParamBlock {
                        layer: l,
                        kind: BlockKind::Weight {
                            out: fan_out,
                            input: fan_in,
                        },
                        range: offset..offset + fan_in * fan_out,
                    });
                    offset += fan_in * fan_out;
                    blocks.push(ParamBlock {
                        layer: l,
                        kind: BlockKind::Bias { out: fan_out },
                        range: offset..offset + fan_out,
                    });
                    offset += fan_out;
                }
            }
        }
        let param_dim = offset;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = vec![0.0_f64; param_dim];
        for block in &blocks {
            let fan_in = match block.kind {
                BlockKind::Weight { input, .. } => input,
                // Biases inherit the scale of their layer's weights.
                BlockKind::Bias { .. } => widths[block.layer],
            };
            let scale = 1.0 / (fan_in as f64).sqrt();
            for v in &mut init[block.range.clone()] {
                *v = rng.random_range(-0.5..0.5) * scale;
            }
        }

        Ok(Model {
            spec,
            widths,
            blocks,
            param_dim,
            init_params: ParamVector::new(init)?,
            fd_step: 1e-5,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    /// Deterministic seeded initial parameters from construction.
    pub fn init_params(&self) -> &ParamVector {
        &self.init_params
    }

    /// Step used by finite-difference Hessians (MLP only).
    pub fn fd_step(&self) -> f64 {
        self.fd_step
    }

    /// Override the finite-difference step (must be positive and finite).
    pub fn with_fd_step(mut self, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "fd_step",
                reason: format!("must be positive and finite, got {step}"),
            });
        }
        self.fd_step = step;
        Ok(self)
    }

    /// Per-layer parameter blocks (one weight and one bias block per layer).
    pub fn param_blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    /// Block ranges used for per-layer weight perturbations: each weight
    /// matrix and each bias vector is one block.
    pub fn awp_blocks(&self) -> Vec<Range<usize>> {
        self.blocks.iter().map(|b| b.range.clone()).collect()
    }

    /// Finer partition for filter-normalized directions: one block per
    /// weight-matrix row (a neuron's incoming weights) and per bias vector.
    pub fn filter_blocks(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            match b.kind {
                BlockKind::Weight { out: rows, input } => {
                    for r in 0..rows {
                        let start = b.range.start + r * input;
                        out.push(start..start + input);
                    }
                }
                BlockKind::Bias { .. } => out.push(b.range.clone()),
            }
        }
        out
    }

    fn check_dims(&self, theta: &DVector<f64>, x: &DVector<f64>) -> Result<()> {
        if theta.len() != self.param_dim {
            return Err(Error::DimensionMismatch {
                context: "theta",
                expected: self.param_dim,
                actual: theta.len(),
            });
        }
        if x.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                context: "x",
                expected: self.spec.input_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Raw output z whose sign is the predicted class.
    pub fn raw_output(&self, theta: &ParamVector, x: &InputPoint) -> Result<f64> {
        self.check_dims(theta, x)?;
        Ok(self.raw_output_raw(theta, x))
    }

    pub(crate) fn raw_output_raw(&self, theta: &DVector<f64>, x: &DVector<f64>) -> f64 {
        match &self.spec.kind {
            ModelKind::LinearLogistic => theta.dot(x),
            ModelKind::SwishLogistic => swish(theta.dot(x)),
            ModelKind::Mlp { activation, .. } => {
                let (pre, _) = self.mlp_forward(theta, x, *activation);
                pre.last().expect("mlp has at least one layer")[0]
            }
        }
    }

    /// Loss at (x, y, theta).
    pub fn loss(&self, theta: &ParamVector, x: &InputPoint, y: BinaryLabel) -> Result<f64> {
        self.check_dims(theta, x)?;
        Ok(self.loss_raw(theta, x, y.value()))
    }

    pub(crate) fn loss_raw(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> f64 {
        logistic_loss(y, self.raw_output_raw(theta, x))
    }

    /// Loss together with analytic gradients in theta and in x.
    pub fn loss_and_grads(
        &self,
        theta: &ParamVector,
        x: &InputPoint,
        y: BinaryLabel,
    ) -> Result<LossGrads> {
        self.check_dims(theta, x)?;
        Ok(self.loss_and_grads_raw(theta, x, y.value()))
    }

    pub(crate) fn loss_and_grads_raw(
        &self,
        theta: &DVector<f64>,
        x: &DVector<f64>,
        y: f64,
    ) -> LossGrads {
        match &self.spec.kind {
            ModelKind::LinearLogistic => {
                let t = y * theta.dot(x);
                let loss = softplus(-t);
                // d loss / dz = -y * sigmoid(-t)
                let dz = -y * sigmoid(-t);
                LossGrads {
                    loss,
                    grad_theta: x * dz,
                    grad_x: theta * dz,
                }
            }
            ModelKind::SwishLogistic => {
                let u = theta.dot(x);
                let z = swish(u);
                let loss = logistic_loss(y, z);
                let du = -y * sigmoid(-y * z) * swish_prime(u);
                LossGrads {
                    loss,
                    grad_theta: x * du,
                    grad_x: theta * du,
                }
            }
            ModelKind::Mlp { activation, .. } => self.mlp_loss_and_grads(theta, x, y, *activation),
        }
    }

    pub(crate) fn grad_x_raw(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DVector<f64> {
        self.loss_and_grads_raw(theta, x, y).grad_x
    }

    /// Input-space Hessian of the loss at (x, y, theta).
    ///
    /// Analytic for the linear and swish models; central finite differences
    /// of the analytic `grad_x` for the MLP.
    pub fn hess_x(&self, theta: &ParamVector, x: &InputPoint, y: BinaryLabel) -> Result<DMatrix<f64>> {
        self.check_dims(theta, x)?;
        Ok(self.hess_x_raw(theta, x, y.value()))
    }

    pub(crate) fn hess_x_raw(&self, theta: &DVector<f64>, x: &DVector<f64>, y: f64) -> DMatrix<f64> {
        match &self.spec.kind {
            ModelKind::LinearLogistic => {
                let s = sigmoid(-y * theta.dot(x));
                let coeff = s * (1.0 - s);
                let mut h = DMatrix::zeros(x.len(), x.len());
                h.ger(coeff, theta, theta, 0.0);
                h
            }
            ModelKind::SwishLogistic => {
                let u = theta.dot(x);
                let coeff = self.swish_chain_second(u, y);
                let mut h = DMatrix::zeros(x.len(), x.len());
                h.ger(coeff, theta, theta, 0.0);
                h
            }
            ModelKind::Mlp { .. } => {
                let d = x.len();
                let h = self.fd_step;
                let mut hess = DMatrix::zeros(d, d);
                for j in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let gp = self.grad_x_raw(theta, &xp, y);
                    let gm = self.grad_x_raw(theta, &xm, y);
                    let col = (gp - gm) / (2.0 * h);
                    hess.set_column(j, &col);
                }
                hess
            }
        }
    }

    /// Second derivative of `loss` seen as a scalar function of u = theta . x
    /// for the swish model.
    fn swish_chain_second(&self, u: f64, y: f64) -> f64 {
        let z = swish(u);
        let s = sigmoid(-y * z);
        let wp = swish_prime(u);
        let wpp = swish_second(u);
        s * (1.0 - s) * wp * wp - y * s * wpp
    }

    /// First derivative of `loss` as a scalar function of u = theta . x for
    /// the swish model.
    fn swish_chain_first(&self, u: f64, y: f64) -> f64 {
        let z = swish(u);
        -y * sigmoid(-y * z) * swish_prime(u)
    }

    /// Mixed second derivative: entry (i, j) = d2 loss / dx_i dtheta_j.
    ///
    /// Analytic for the linear and swish models; for the MLP, row i is the
    /// central finite difference of `grad_theta` along x_i.
    pub fn cross_hess(
        &self,
        theta: &ParamVector,
        x: &InputPoint,
        y: BinaryLabel,
    ) -> Result<DMatrix<f64>> {
        self.check_dims(theta, x)?;
        Ok(self.cross_hess_raw(theta, x, y.value()))
    }

    pub(crate) fn cross_hess_raw(
        &self,
        theta: &DVector<f64>,
        x: &DVector<f64>,
        y: f64,
    ) -> DMatrix<f64> {
        let d = x.len();
        let m = self.param_dim;
        match &self.spec.kind {
            ModelKind::LinearLogistic => {
                let s = sigmoid(-y * theta.dot(x));
                let mut c = DMatrix::zeros(d, m);
                // -y s I + s(1-s) theta x^T
                c.ger(s * (1.0 - s), theta, x, 0.0);
                for i in 0..d {
                    c[(i, i)] += -y * s;
                }
                c
            }
            ModelKind::SwishLogistic => {
                let u = theta.dot(x);
                let g2 = self.swish_chain_second(u, y);
                let g1 = self.swish_chain_first(u, y);
                let mut c = DMatrix::zeros(d, m);
                c.ger(g2, theta, x, 0.0);
                for i in 0..d {
                    c[(i, i)] += g1;
                }
                c
            }
            ModelKind::Mlp { .. } => {
                let h = self.fd_step;
                let mut c = DMatrix::zeros(d, m);
                for i in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let gp = self.loss_and_grads_raw(theta, &xp, y).grad_theta;
                    let gm = self.loss_and_grads_raw(theta, &xm, y).grad_theta;
                    let row = (gp - gm) / (2.0 * h);
                    for j in 0..m {
                        c[(i, j)] = row[j];
                    }
                }
                c
            }
        }
    }

    /// Forward pass of the MLP: pre-activations and activations per layer.
    /// `acts[0]` is the input; `pre[l]` is `W_l acts[l] + b_l`.
    fn mlp_forward(
        &self,
        theta: &DVector<f64>,
        x: &DVector<f64>,
        activation: Activation,
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let n_layers = self.widths.len() - 1;
        let mut pre = Vec::with_capacity(n_layers);
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.clone());
        for l in 0..n_layers {
            let (w, b) = self.layer_params(theta, l);
            let mut u = &w * acts.last().expect("non-empty activations");
            u += &b;
            let is_output = l == n_layers - 1;
            let a = if is_output {
                u.clone()
            } else {
                u.map(|v| activation.apply(v))
            };
            pre.push(u);
            acts.push(a);
        }
        (pre, acts)
    }

    /// Views of layer l's weight matrix and bias vector inside theta.
    fn layer_params(&self, theta: &DVector<f64>, layer: usize) -> (DMatrix<f64>, DVector<f64>) {
        let wb = &self.blocks[2 * layer];
        let bb = &self.blocks[2 * layer + 1];
        let (out, input) = match wb.kind {
            BlockKind::Weight { out, input } => (out, input),
            BlockKind::Bias { .. } => unreachable!("weight blocks sit at even indices"),
        };
        let w = DMatrix::from_row_slice(out, input, &theta.as_slice()[wb.range.clone()]);
        let b = DVector::from_column_slice(&theta.as_slice()[bb.range.clone()]);
        (w, b)
    }

    fn mlp_loss_and_grads(
        &self,
        theta: &DVector<f64>,
        x: &DVector<f64>,
        y: f64,
        activation: Activation,
    ) -> LossGrads {
        let n_layers = self.widths.len() - 1;
        let (pre, acts) = self.mlp_forward(theta, x, activation);
        let z = pre[n_layers - 1][0];
        let loss = logistic_loss(y, z);
        let dz = -y * sigmoid(-y * z);

        let mut grad_theta = DVector::zeros(self.param_dim);
        // delta = d loss / d pre[l], starting from the scalar output layer.
        let mut delta = DVector::from_element(1, dz);
        for l in (0..n_layers).rev() {
            let (w, _) = self.layer_params(theta, l);
            // Gradients for W_l (row-major) and b_l.
            let wb = &self.blocks[2 * l];
            let bb = &self.blocks[2 * l + 1];
            let a_prev = &acts[l];
            let (out, input) = (w.nrows(), w.ncols());
            {
                let gw = grad_theta.as_mut_slice();
                for r in 0..out {
                    for c in 0..input {
                        gw[wb.range.start + r * input + c] = delta[r] * a_prev[c];
                    }
                }
                for r in 0..out {
                    gw[bb.range.start + r] = delta[r];
                }
            }
            // Propagate to the previous layer's activations.
            let mut da_prev = w.transpose() * &delta;
            if l > 0 {
                for (v, u) in da_prev.iter_mut().zip(pre[l - 1].iter()) {
                    *v *= activation.derivative(*u);
                }
            }
            delta = da_prev;
        }

        LossGrads {
            loss,
            grad_theta,
            grad_x: delta,
        }
    }
}

/// Loss value with gradients in both argument groups.
#[derive(Debug, Clone)]
pub struct LossGrads {
    pub loss: f64,
    pub grad_theta: DVector<f64>,
    pub grad_x: DVector<f64>,
}
