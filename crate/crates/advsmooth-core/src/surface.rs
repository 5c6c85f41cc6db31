//! Loss surfaces over 2-D parameter slices: rectangular grid sampling of
//! clean, worst-case (closed-form or PGD) and smoothed objectives, kink
//! detection, filter-normalized 1-D slices, and CSV/JSON export.
//!
//! Every node of a [`GridSpec`] evaluates the dataset-average loss at
//! `theta = (t1, t2)`. Worst-case variants either use the dual-norm closed
//! form (linear model only) or re-run PGD at every node with one seed per
//! surface, so attack-hopping artifacts stay visible instead of being
//! averaged away by per-node reseeding.
//!
//! Kink detection works on second differences of the values along each
//! axis at two scales. Writing `d_k = |v(c+k) - 2 v(c) + v(c-k)| / (k h)`,
//! a genuine gradient jump gives `d_1 ~ d_2` (both capture the slope
//! change), while a smooth profile gives `d_1 ~ d_2 / 2` (both are
//! curvature-dominated). A node is flagged when `d_1` exceeds five times
//! the axis median, is at least `0.8 d_2`, and clears an absolute floor.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::attack::{dual_norm_adv_loss, dual_norm_adv_loss_grad, pgd_attack, NormBall, NormKind, PgdConfig};
use crate::entropy::{local_entropy_exact, mix_seed, QuadratureSpec};
use crate::error::{Error, Result};
use crate::model::{LabeledDataset, Model, ModelKind, ParamVector};

/// Second-difference ratio above which a jump counts as scale-invariant
/// (a kink) rather than curvature (which halves when the stencil doubles).
const KINK_SCALE_RATIO: f64 = 0.8;
/// Multiple of the axis-median jump a flagged node must exceed.
const KINK_MEDIAN_FACTOR: f64 = 5.0;
/// Absolute jump floor below which nothing is flagged.
const KINK_ABS_FLOOR: f64 = 1e-8;

fn default_true() -> bool {
    true
}

fn default_pgd_steps() -> usize {
    20
}

/// One grid axis: `points` equally spaced values on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        let axis = AxisSpec { lo, hi, points };
        axis.validate()?;
        Ok(axis)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidParameter {
                name: "axis",
                reason: format!("needs finite lo < hi, got [{}, {}]", self.lo, self.hi),
            });
        }
        if self.points < 2 {
            return Err(Error::InvalidParameter {
                name: "axis.points",
                reason: format!("must be >= 2, got {}", self.points),
            });
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| self.lo + (self.hi - self.lo) * (i as f64) / ((n - 1) as f64))
            .collect()
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / ((self.points - 1) as f64)
    }
}

/// Which objective a surface displays at each parameter node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum LossVariant {
    /// Dataset-average loss with no perturbation.
    Clean,
    /// Closed-form worst case over the L2 ball (linear model only).
    AdvL2 { epsilon: f64 },
    /// Closed-form worst case over the Linf ball (linear model only).
    AdvLinf { epsilon: f64 },
    /// PGD-estimated worst case over the L2 ball.
    AdvL2Pgd {
        epsilon: f64,
        #[serde(default = "default_pgd_steps")]
        steps: usize,
        /// Defaults to epsilon / 4.
        #[serde(default)]
        step_size: Option<f64>,
    },
    /// PGD-estimated worst case over the Linf ball.
    AdvLinfPgd {
        epsilon: f64,
        #[serde(default = "default_pgd_steps")]
        steps: usize,
        #[serde(default)]
        step_size: Option<f64>,
    },
    /// Smoothed objective of a non-smoothed base variant.
    Entropy {
        gamma: f64,
        #[serde(default)]
        quad: QuadratureSpec,
        base: Box<LossVariant>,
    },
}

impl LossVariant {
    /// The closed-form worst cases only exist for the linear model.
    pub fn requires_linear(&self) -> bool {
        match self {
            LossVariant::AdvL2 { .. } | LossVariant::AdvLinf { .. } => true,
            LossVariant::Entropy { base, .. } => base.requires_linear(),
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_eps = |epsilon: f64| -> Result<()> {
            if !(epsilon.is_finite() && epsilon >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "variant.epsilon",
                    reason: format!("must be finite and >= 0, got {epsilon}"),
                });
            }
            Ok(())
        };
        match self {
            LossVariant::Clean => Ok(()),
            LossVariant::AdvL2 { epsilon } | LossVariant::AdvLinf { epsilon } => {
                check_eps(*epsilon)
            }
            LossVariant::AdvL2Pgd { epsilon, steps, .. }
            | LossVariant::AdvLinfPgd { epsilon, steps, .. } => {
                check_eps(*epsilon)?;
                if *steps == 0 {
                    return Err(Error::InvalidParameter {
                        name: "variant.steps",
                        reason: "must be >= 1".into(),
                    });
                }
                Ok(())
            }
            LossVariant::Entropy { gamma, quad, base } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "variant.gamma",
                        reason: format!("must be positive, got {gamma}"),
                    });
                }
                quad.validate()?;
                match base.as_ref() {
                    LossVariant::Entropy { .. } => Err(Error::Unsupported(
                        "entropy surface of an entropy base is not supported".into(),
                    )),
                    LossVariant::AdvL2Pgd { .. } | LossVariant::AdvLinfPgd { .. } => {
                        Err(Error::Unsupported(
                            "entropy surface needs a closed-form base (clean, adv_l2, adv_linf)"
                                .into(),
                        ))
                    }
                    other => other.validate(),
                }
            }
        }
    }
}

/// A 2-D parameter grid together with the objective to evaluate on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axis1: AxisSpec,
    pub axis2: AxisSpec,
    pub variant: LossVariant,
    /// Also record ||grad_theta|| per node.
    #[serde(default = "default_true")]
    pub grad_norms: bool,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        self.axis1.validate()?;
        self.axis2.validate()?;
        self.variant.validate()
    }
}

/// A grid node whose finite-difference gradient jumps along `axis`
/// (0 = first parameter, 1 = second).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscontinuityFlag {
    pub axis: u8,
    pub i1: usize,
    pub i2: usize,
}

/// Sampled loss surface: row-major values (`axis1` outer, `axis2` inner),
/// optional gradient norms, and detected gradient-jump nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub spec: GridSpec,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub values: Vec<f64>,
    pub grad_norms: Option<Vec<f64>>,
    pub discontinuities: Vec<DiscontinuityFlag>,
    pub seed: u64,
}

impl SurfaceGrid {
    pub fn n1(&self) -> usize {
        self.axis1.len()
    }

    pub fn n2(&self) -> usize {
        self.axis2.len()
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n2() + i2
    }

    pub fn value(&self, i1: usize, i2: usize) -> f64 {
        self.values[self.index(i1, i2)]
    }

    /// Flags on a given axis, as (i1, i2) pairs.
    pub fn flags_on_axis(&self, axis: u8) -> Vec<(usize, usize)> {
        self.discontinuities
            .iter()
            .filter(|f| f.axis == axis)
            .map(|f| (f.i1, f.i2))
            .collect()
    }
}

/// Mean loss and (optionally) mean parameter gradient of a variant over the
/// dataset at a fixed parameter vector.
fn variant_node(
    model: &Model,
    data: &LabeledDataset,
    variant: &LossVariant,
    theta: &DVector<f64>,
    want_grad: bool,
    surface_seed: u64,
) -> Result<(f64, Option<DVector<f64>>)> {
    let n = data.len() as f64;
    let mut value = 0.0;
    let mut grad: DVector<f64> = DVector::zeros(theta.len());
    for ex in data.examples() {
        let y = ex.y;
        match variant {
            LossVariant::Clean => {
                if want_grad {
                    let lg = model.loss_and_grads_raw(theta, ex.x.as_dvector(), y.value());
                    value += lg.loss;
                    grad += lg.grad_theta;
                } else {
                    value += model.loss_raw(theta, ex.x.as_dvector(), y.value());
                }
            }
            LossVariant::AdvL2 { epsilon } | LossVariant::AdvLinf { epsilon } => {
                let p = if matches!(variant, LossVariant::AdvL2 { .. }) {
                    NormKind::L2
                } else {
                    NormKind::LInf
                };
                value += dual_norm_adv_loss(theta, ex.x.as_dvector(), y, *epsilon, p)?;
                if want_grad {
                    grad += dual_norm_adv_loss_grad(theta, ex.x.as_dvector(), y, *epsilon, p)?;
                }
            }
            LossVariant::AdvL2Pgd {
                epsilon,
                steps,
                step_size,
            }
            | LossVariant::AdvLinfPgd {
                epsilon,
                steps,
                step_size,
            } => {
                let p = if matches!(variant, LossVariant::AdvL2Pgd { .. }) {
                    NormKind::L2
                } else {
                    NormKind::LInf
                };
                let ball = NormBall::new(p, *epsilon)?;
                let step = step_size.unwrap_or((*epsilon / 4.0).max(f64::MIN_POSITIVE));
                let cfg = PgdConfig::new(*steps, step, false, surface_seed)?;
                let tp = ParamVector::from_dvector(theta.clone())?;
                let attack = pgd_attack(model, &tp, &ex.x, y, &ball, &cfg)?;
                value += attack.achieved_loss;
                if want_grad {
                    grad += model
                        .loss_and_grads_raw(theta, &attack.x_prime, y.value())
                        .grad_theta;
                }
            }
            LossVariant::Entropy { .. } => {
                unreachable!("entropy nodes are evaluated through the quadrature path")
            }
        }
    }
    value /= n;
    if !value.is_finite() {
        return Err(Error::NonFinite("surface value"));
    }
    Ok((value, want_grad.then(|| grad / n)))
}

/// Evaluate a surface over the grid: the dataset-average objective of
/// `spec.variant` at every node. Closed-form worst-case variants require
/// the linear model; PGD variants re-solve the attack at every node with
/// the single `seed` fixed for the whole surface.
pub fn sample_surface(
    model: &Model,
    data: &LabeledDataset,
    spec: &GridSpec,
    seed: u64,
) -> Result<SurfaceGrid> {
    spec.validate()?;
    if model.param_dim() != 2 {
        return Err(Error::DimensionMismatch {
            context: "surface parameter slice",
            expected: 2,
            actual: model.param_dim(),
        });
    }
    if data.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "surface dataset",
            expected: model.input_dim(),
            actual: data.input_dim(),
        });
    }
    if spec.variant.requires_linear() && !matches!(model.spec().kind, ModelKind::LinearLogistic) {
        return Err(Error::Unsupported(
            "closed-form worst-case surfaces require the linear model".into(),
        ));
    }

    let axis1 = spec.axis1.values();
    let axis2 = spec.axis2.values();
    let mut values = Vec::with_capacity(axis1.len() * axis2.len());
    let mut grads = spec
        .grad_norms
        .then(|| Vec::with_capacity(axis1.len() * axis2.len()));

    match &spec.variant {
        LossVariant::Entropy { gamma, quad, base } => {
            let lossfn = |t: &DVector<f64>| -> f64 {
                // The base is validated closed-form, so per-node evaluation
                // cannot fail for finite t.
                variant_node(model, data, base, t, false, seed)
                    .map(|(v, _)| v)
                    .unwrap_or(f64::NAN)
            };
            for &t1 in &axis1 {
                for &t2 in &axis2 {
                    let theta = DVector::from_row_slice(&[t1, t2]);
                    let le = local_entropy_exact(&lossfn, &theta, *gamma, quad)?;
                    if !le.value.is_finite() {
                        return Err(Error::NonFinite("surface value"));
                    }
                    values.push(le.value);
                    if let Some(g) = grads.as_mut() {
                        g.push(le.gradient.norm());
                    }
                }
            }
        }
        other => {
            for &t1 in &axis1 {
                for &t2 in &axis2 {
                    let theta = DVector::from_row_slice(&[t1, t2]);
                    let (v, g) = variant_node(model, data, other, &theta, spec.grad_norms, seed)?;
                    values.push(v);
                    if let Some(gs) = grads.as_mut() {
                        gs.push(g.expect("grad requested").norm());
                    }
                }
            }
        }
    }

    let discontinuities = detect_discontinuities(&values, &spec.axis1, &spec.axis2);
    Ok(SurfaceGrid {
        spec: spec.clone(),
        axis1,
        axis2,
        values,
        grad_norms: grads,
        discontinuities,
        seed,
    })
}

/// Dataset-average objective of a raw (non-smoothed) variant at one
/// parameter point: the scalar the grids are built from, exposed so callers
/// can probe it pointwise or hand it to [`local_entropy_exact`] themselves.
/// PGD variants use the fixed `seed` exactly as [`sample_surface`] does.
pub fn dataset_objective(
    model: &Model,
    data: &LabeledDataset,
    variant: &LossVariant,
    theta: &DVector<f64>,
    seed: u64,
) -> Result<f64> {
    if matches!(variant, LossVariant::Entropy { .. }) {
        return Err(Error::Unsupported(
            "dataset_objective evaluates raw variants; smooth them with local_entropy_exact"
                .into(),
        ));
    }
    variant.validate()?;
    if data.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset objective inputs",
            expected: model.input_dim(),
            actual: data.input_dim(),
        });
    }
    if theta.len() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset objective theta",
            expected: model.param_dim(),
            actual: theta.len(),
        });
    }
    if variant.requires_linear() && !matches!(model.spec().kind, ModelKind::LinearLogistic) {
        return Err(Error::Unsupported(
            "closed-form worst-case objectives require the linear model".into(),
        ));
    }
    variant_node(model, data, variant, theta, false, seed).map(|(v, _)| v)
}

/// Smoothed surface of an arbitrary loss function over the grid: the value,
/// gradient norm and kink flags of the smoothed objective at each node.
/// `spec.variant` is echoed into the output as a description of `lossfn`.
pub fn sample_entropy_surface(
    lossfn: &dyn Fn(&DVector<f64>) -> f64,
    spec: &GridSpec,
    gamma: f64,
    quad: &QuadratureSpec,
) -> Result<SurfaceGrid> {
    spec.axis1.validate()?;
    spec.axis2.validate()?;
    let axis1 = spec.axis1.values();
    let axis2 = spec.axis2.values();
    let mut values = Vec::with_capacity(axis1.len() * axis2.len());
    let mut grads = spec
        .grad_norms
        .then(|| Vec::with_capacity(axis1.len() * axis2.len()));
    for &t1 in &axis1 {
        for &t2 in &axis2 {
            let theta = DVector::from_row_slice(&[t1, t2]);
            let le = local_entropy_exact(lossfn, &theta, gamma, quad)?;
            if !le.value.is_finite() {
                return Err(Error::NonFinite("surface value"));
            }
            values.push(le.value);
            if let Some(g) = grads.as_mut() {
                g.push(le.gradient.norm());
            }
        }
    }
    let discontinuities = detect_discontinuities(&values, &spec.axis1, &spec.axis2);
    Ok(SurfaceGrid {
        spec: spec.clone(),
        axis1,
        axis2,
        values,
        grad_norms: grads,
        discontinuities,
        seed: 0,
    })
}

/// Two-scale kink detector on the value grid (see module docs): per axis, a
/// node is flagged when its unit-spacing second difference exceeds
/// five times the axis median, an absolute floor, and 0.8 times the
/// double-spacing second difference.
fn detect_discontinuities(
    values: &[f64],
    axis1: &AxisSpec,
    axis2: &AxisSpec,
) -> Vec<DiscontinuityFlag> {
    let n1 = axis1.points;
    let n2 = axis2.points;
    let at = |i1: usize, i2: usize| values[i1 * n2 + i2];
    let mut flags = Vec::new();
    for axis in 0..2u8 {
        let (len, lines, h) = if axis == 0 {
            (n1, n2, axis1.spacing())
        } else {
            (n2, n1, axis2.spacing())
        };
        if len < 5 {
            continue;
        }
        let value = |c: usize, line: usize| if axis == 0 { at(c, line) } else { at(line, c) };
        // d1 per interior node, pooled over the whole axis for the median.
        let mut d1 = vec![0.0f64; len * lines];
        let mut pooled = Vec::with_capacity((len - 2) * lines);
        for line in 0..lines {
            for c in 1..len - 1 {
                let j = (value(c + 1, line) - 2.0 * value(c, line) + value(c - 1, line)).abs() / h;
                d1[c * lines + line] = j;
                pooled.push(j);
            }
        }
        pooled.sort_by(|a, b| a.partial_cmp(b).expect("finite jumps"));
        let median = pooled[pooled.len() / 2];
        for line in 0..lines {
            for c in 2..len - 2 {
                let j1 = d1[c * lines + line];
                if j1 <= KINK_ABS_FLOOR || j1 <= KINK_MEDIAN_FACTOR * median {
                    continue;
                }
                let j2 = (value(c + 2, line) - 2.0 * value(c, line) + value(c - 2, line)).abs()
                    / (2.0 * h);
                if j1 >= KINK_SCALE_RATIO * j2 {
                    let (i1, i2) = if axis == 0 { (c, line) } else { (line, c) };
                    flags.push(DiscontinuityFlag { axis, i1, i2 });
                }
            }
        }
    }
    flags.sort_by_key(|f| (f.axis, f.i1, f.i2));
    flags
}

/// One filter-normalized 1-D slice: the attacked dataset loss along
/// `theta_star + alpha * d`, where `d` is Gaussian, rescaled block-wise to
/// `||d_block|| = ||theta_block||`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceCurve {
    pub direction_index: usize,
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
}

/// The conventional 21 offsets -1, -0.9, ..., 1.
pub fn default_alphas() -> Vec<f64> {
    (-10..=10).map(|k| f64::from(k) / 10.0).collect()
}

/// Worst-case loss curves along `n_directions` filter-normalized random
/// directions from `theta_star`.
///
/// Zero-norm parameter blocks contribute a zero direction block. Distinct
/// directions derive from `seed` deterministically; the PGD seed is fixed
/// per curve.
#[allow(clippy::too_many_arguments)]
pub fn filter_normalized_slice(
    model: &Model,
    data: &LabeledDataset,
    theta_star: &ParamVector,
    ball: &NormBall,
    pgd: &PgdConfig,
    n_directions: usize,
    alphas: &[f64],
    seed: u64,
) -> Result<Vec<SliceCurve>> {
    if theta_star.len() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            context: "filter_normalized_slice theta_star",
            expected: model.param_dim(),
            actual: theta_star.len(),
        });
    }
    if n_directions == 0 {
        return Err(Error::InvalidParameter {
            name: "n_directions",
            reason: "must be >= 1".into(),
        });
    }
    if alphas.is_empty() {
        return Err(Error::InvalidParameter {
            name: "alphas",
            reason: "must be non-empty".into(),
        });
    }
    for &a in alphas {
        if !(a.is_finite() && (-1.0..=1.0).contains(&a)) {
            return Err(Error::InvalidParameter {
                name: "alphas",
                reason: format!("entries must lie in [-1, 1], got {a}"),
            });
        }
    }
    let blocks = model.filter_blocks();
    let mut curves = Vec::with_capacity(n_directions);
    for dir_idx in 0..n_directions {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, dir_idx as u64, 0xF17E]));
        let mut direction: DVector<f64> = DVector::zeros(theta_star.len());
        for range in &blocks {
            let mut block = DVector::from_fn(range.len(), |_, _| {
                StandardNormal.sample(&mut rng)
            });
            let theta_norm = theta_star.as_dvector().rows(range.start, range.len()).norm();
            let block_norm = block.norm();
            if theta_norm == 0.0 || block_norm == 0.0 {
                block.fill(0.0);
            } else {
                block *= theta_norm / block_norm;
            }
            direction.rows_mut(range.start, range.len()).copy_from(&block);
        }
        let mut values = Vec::with_capacity(alphas.len());
        for &alpha in alphas {
            let theta = ParamVector::from_dvector(theta_star.as_dvector() + &direction * alpha)?;
            let mut sum = 0.0;
            for ex in data.examples() {
                let attack = pgd_attack(model, &theta, &ex.x, ex.y, ball, pgd)?;
                sum += attack.achieved_loss;
            }
            values.push(sum / data.len() as f64);
        }
        curves.push(SliceCurve {
            direction_index: dir_idx,
            alphas: alphas.to_vec(),
            values,
        });
    }
    Ok(curves)
}

/// Export formats for [`export_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFormat {
    Csv,
    Json,
}

/// Write a surface to disk.
///
/// CSV: header `theta1,theta2,value[,grad_norm]`, one row per node in
/// row-major order, 17 significant digits (exact f64 round trip). JSON: the
/// full [`SurfaceGrid`] including the spec echo and kink flags.
pub fn export_grid(grid: &SurfaceGrid, path: &Path, format: GridFormat) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    match format {
        GridFormat::Csv => {
            let mut out = String::new();
            let has_grad = grid.grad_norms.is_some();
            out.push_str(if has_grad {
                "theta1,theta2,value,grad_norm\n"
            } else {
                "theta1,theta2,value\n"
            });
            for i1 in 0..grid.n1() {
                for i2 in 0..grid.n2() {
                    let idx = grid.index(i1, i2);
                    write!(
                        out,
                        "{:.16e},{:.16e},{:.16e}",
                        grid.axis1[i1], grid.axis2[i2], grid.values[idx]
                    )
                    .expect("write to string");
                    if let Some(g) = &grid.grad_norms {
                        write!(out, ",{:.16e}", g[idx]).expect("write to string");
                    }
                    out.push('\n');
                }
            }
            std::fs::write(path, out).map_err(io_err)
        }
        GridFormat::Json => {
            let json = serde_json::to_string_pretty(grid)?;
            std::fs::write(path, json).map_err(io_err)
        }
    }
}

/// Read back a JSON grid written by [`export_grid`].
pub fn import_grid_json(path: &Path) -> Result<SurfaceGrid> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, BinaryLabel, LabeledExample, InputPoint, ModelSpec};

    fn one_point_dataset(x: Vec<f64>, y: BinaryLabel) -> LabeledDataset {
        LabeledDataset::new(vec![LabeledExample {
            x: InputPoint::new(x).unwrap(),
            y,
        }])
        .unwrap()
    }

    fn grid_5(variant: LossVariant) -> GridSpec {
        GridSpec {
            axis1: AxisSpec::new(-2.0, 2.0, 5).unwrap(),
            axis2: AxisSpec::new(-2.0, 2.0, 5).unwrap(),
            variant,
            grad_norms: true,
        }
    }

    #[test]
    fn clean_surface_hits_the_log_two_node() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let data = one_point_dataset(vec![-1.0, 1.0], BinaryLabel::Pos);
        let grid = sample_surface(&model, &data, &grid_5(LossVariant::Clean), 0).unwrap();
        // theta = (1, 1) is node (3, 3); theta.x = 0 there.
        assert_eq!(grid.value(3, 3), 2.0f64.ln());
        assert_eq!(grid.values.len(), 25);
        assert!(grid.values.iter().all(|v| v.is_finite()));
        assert!(grid.discontinuities.is_empty());
    }

    #[test]
    fn linf_surface_matches_the_dual_norm_value() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let data = one_point_dataset(vec![-1.0, 1.0], BinaryLabel::Pos);
        let grid = sample_surface(
            &model,
            &data,
            &grid_5(LossVariant::AdvLinf { epsilon: 0.6 }),
            0,
        )
        .unwrap();
        // At theta = (1, 1): softplus(0 + 0.6 * 2) = log(1 + e^1.2).
        assert!((grid.value(3, 3) - (1.0 + (1.2f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn pointwise_objective_agrees_with_the_grid_and_rejects_misuse() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let data = one_point_dataset(vec![-1.0, 1.0], BinaryLabel::Pos);
        let theta = DVector::from_row_slice(&[1.0, 1.0]);
        let clean = dataset_objective(&model, &data, &LossVariant::Clean, &theta, 0).unwrap();
        assert_eq!(clean, 2.0f64.ln());
        let linf = dataset_objective(
            &model,
            &data,
            &LossVariant::AdvLinf { epsilon: 0.6 },
            &theta,
            0,
        )
        .unwrap();
        assert!((linf - (1.0 + (1.2f64).exp()).ln()).abs() < 1e-15);

        let entropy = LossVariant::Entropy {
            gamma: 0.5,
            quad: QuadratureSpec::default(),
            base: Box::new(LossVariant::Clean),
        };
        assert!(matches!(
            dataset_objective(&model, &data, &entropy, &theta, 0),
            Err(Error::Unsupported(_))
        ));
        let swish = make_model(
            ModelSpec {
                kind: ModelKind::SwishLogistic,
                input_dim: 2,
            },
            0,
        )
        .unwrap();
        assert!(matches!(
            dataset_objective(
                &swish,
                &data,
                &LossVariant::AdvL2 { epsilon: 0.6 },
                &theta,
                0
            ),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn surface_is_symmetric_under_negating_theta_and_label() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let x = vec![0.7, -0.4];
        let pos = one_point_dataset(x.clone(), BinaryLabel::Pos);
        let neg = one_point_dataset(x, BinaryLabel::Neg);
        let spec = grid_5(LossVariant::AdvL2 { epsilon: 0.6 });
        let gp = sample_surface(&model, &pos, &spec, 0).unwrap();
        let gn = sample_surface(&model, &neg, &spec, 0).unwrap();
        for i1 in 0..5 {
            for i2 in 0..5 {
                assert_eq!(gp.value(i1, i2), gn.value(4 - i1, 4 - i2));
            }
        }
    }

    #[test]
    fn pgd_surface_brackets_the_closed_form_on_the_linear_model() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let data = one_point_dataset(vec![-1.0, 1.0], BinaryLabel::Pos);
        for (closed, pgd) in [
            (
                LossVariant::AdvL2 { epsilon: 0.6 },
                LossVariant::AdvL2Pgd {
                    epsilon: 0.6,
                    steps: 20,
                    step_size: None,
                },
            ),
            (
                LossVariant::AdvLinf { epsilon: 0.6 },
                LossVariant::AdvLinfPgd {
                    epsilon: 0.6,
                    steps: 20,
                    step_size: None,
                },
            ),
        ] {
            let gc = sample_surface(&model, &data, &grid_5(closed), 7).unwrap();
            let gm = sample_surface(&model, &data, &grid_5(pgd), 7).unwrap();
            for (c, m) in gc.values.iter().zip(&gm.values) {
                assert!(*m <= c + 1e-9, "pgd {m} exceeds closed form {c}");
                assert!(*m >= c - 1e-6, "pgd {m} fell below closed form {c}");
            }
        }
    }

    #[test]
    fn closed_form_surfaces_reject_nonlinear_models() {
        let model = make_model(ModelSpec::swish(2), 0).unwrap();
        let data = one_point_dataset(vec![-1.0, 1.0], BinaryLabel::Pos);
        let err = sample_surface(
            &model,
            &data,
            &grid_5(LossVariant::AdvL2 { epsilon: 0.6 }),
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)));
        // PGD variants work on the swish model.
        let ok = sample_surface(
            &model,
            &data,
            &grid_5(LossVariant::AdvL2Pgd {
                epsilon: 0.6,
                steps: 10,
                step_size: None,
            }),
            0,
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn zero_loss_entropy_surface_is_constant() {
        let spec = GridSpec {
            axis1: AxisSpec::new(-1.0, 1.0, 4).unwrap(),
            axis2: AxisSpec::new(-1.0, 1.0, 4).unwrap(),
            variant: LossVariant::Clean,
            grad_norms: true,
        };
        let lossfn = |_: &DVector<f64>| 0.0;
        let quad = QuadratureSpec::default();
        let grid = sample_entropy_surface(&lossfn, &spec, 0.5, &quad).unwrap();
        // Constant up to quadrature error: the integration box translates
        // with the node, but its panel edges re-pin at coordinate zeros, so
        // the approximation is not bitwise translation-invariant.
        let first = grid.values[0];
        for v in &grid.values {
            assert!((v - first).abs() < 1e-10, "{v} vs {first}");
        }
        for g in grid.grad_norms.as_ref().unwrap() {
            assert!(*g < 1e-8);
        }
    }

    #[test]
    fn kink_flags_sit_exactly_on_the_nonsmooth_sets() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let data = one_point_dataset(vec![-1.0, 1.0], BinaryLabel::Pos);
        let mk = |variant| GridSpec {
            axis1: AxisSpec::new(-2.0, 2.0, 41).unwrap(),
            axis2: AxisSpec::new(-2.0, 2.0, 41).unwrap(),
            variant,
            grad_norms: true,
        };
        // L2 worst case: kink only at theta = 0 (node 20, 20), both axes.
        let g2 = sample_surface(&model, &data, &mk(LossVariant::AdvL2 { epsilon: 0.6 }), 0)
            .unwrap();
        assert_eq!(
            g2.discontinuities,
            vec![
                DiscontinuityFlag {
                    axis: 0,
                    i1: 20,
                    i2: 20
                },
                DiscontinuityFlag {
                    axis: 1,
                    i1: 20,
                    i2: 20
                },
            ]
        );
        // Linf worst case: kinks exactly on the coordinate axes.
        let gi = sample_surface(
            &model,
            &data,
            &mk(LossVariant::AdvLinf { epsilon: 0.6 }),
            0,
        )
        .unwrap();
        let ax0 = gi.flags_on_axis(0);
        let ax1 = gi.flags_on_axis(1);
        assert_eq!(ax0, (0..41).map(|j| (20, j)).collect::<Vec<_>>());
        assert_eq!(ax1, (0..41).map(|i| (i, 20)).collect::<Vec<_>>());
        // Clean surface: no flags anywhere.
        let gc = sample_surface(&model, &data, &mk(LossVariant::Clean), 0).unwrap();
        assert!(gc.discontinuities.is_empty());
    }

    #[test]
    fn entropy_surface_smooths_away_the_l2_kink() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let data = one_point_dataset(vec![-1.0, 1.0], BinaryLabel::Pos);
        let spec = GridSpec {
            axis1: AxisSpec::new(-1.0, 1.0, 9).unwrap(),
            axis2: AxisSpec::new(-1.0, 1.0, 9).unwrap(),
            variant: LossVariant::Entropy {
                gamma: 0.5,
                quad: QuadratureSpec {
                    half_width: 6.0,
                    points_per_axis: 32,
                },
                base: Box::new(LossVariant::AdvL2 { epsilon: 0.6 }),
            },
            grad_norms: true,
        };
        let smooth = sample_surface(&model, &data, &spec, 0).unwrap();
        assert!(
            smooth.discontinuities.is_empty(),
            "unexpected flags: {:?}",
            smooth.discontinuities
        );
        // The raw counterpart on the same grid does have the kink.
        let raw_spec = GridSpec {
            variant: LossVariant::AdvL2 { epsilon: 0.6 },
            ..spec
        };
        let raw = sample_surface(&model, &data, &raw_spec, 0).unwrap();
        assert!(!raw.discontinuities.is_empty());
    }

    #[test]
    fn slices_are_deterministic_and_anchored_at_the_center() {
        let model = make_model(ModelSpec::mlp(2, vec![4], crate::model::Activation::Relu), 3)
            .unwrap();
        let (data, _) = crate::train::make_synthetic_dataset(6, 2, 1).unwrap();
        let theta_star = model.init_params().clone();
        let ball = NormBall::linf(0.1).unwrap();
        let pgd = PgdConfig::new(5, 0.025, false, 0).unwrap();
        let alphas = default_alphas();
        assert_eq!(alphas.len(), 21);
        let curves = filter_normalized_slice(
            &model,
            &data,
            &theta_star,
            &ball,
            &pgd,
            2,
            &alphas,
            42,
        )
        .unwrap();
        assert_eq!(curves.len(), 2);
        for curve in &curves {
            assert_eq!(curve.values.len(), 21);
        }
        // alpha = 0 is the tenth entry: the unperturbed attacked loss.
        let mut direct = 0.0;
        for ex in data.examples() {
            direct +=
                pgd_attack(&model, &theta_star, &ex.x, ex.y, &ball, &pgd)
                    .unwrap()
                    .achieved_loss;
        }
        direct /= data.len() as f64;
        assert_eq!(curves[0].values[10], direct);
        // Different directions differ; same seed reproduces exactly.
        assert_ne!(curves[0].values, curves[1].values);
        let again = filter_normalized_slice(
            &model,
            &data,
            &theta_star,
            &ball,
            &pgd,
            2,
            &alphas,
            42,
        )
        .unwrap();
        assert_eq!(curves, again);
        // Out-of-range alpha is rejected.
        assert!(filter_normalized_slice(
            &model,
            &data,
            &theta_star,
            &ball,
            &pgd,
            1,
            &[1.5],
            0
        )
        .is_err());
    }

    #[test]
    fn csv_export_writes_header_plus_one_row_per_node() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let data = one_point_dataset(vec![-1.0, 1.0], BinaryLabel::Pos);
        let spec = GridSpec {
            axis1: AxisSpec::new(0.0, 1.0, 2).unwrap(),
            axis2: AxisSpec::new(0.0, 1.0, 2).unwrap(),
            variant: LossVariant::Clean,
            grad_norms: true,
        };
        let grid = sample_surface(&model, &data, &spec, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.csv");
        export_grid(&grid, &path, GridFormat::Csv).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "theta1,theta2,value,grad_norm");
        // Parse back: row-major order, 17 significant digits round-trip.
        for (k, line) in lines[1..].iter().enumerate() {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            let (i1, i2) = (k / 2, k % 2);
            assert!((cols[0] - grid.axis1[i1]).abs() < 1e-15);
            assert!((cols[1] - grid.axis2[i2]).abs() < 1e-15);
            assert!((cols[2] - grid.value(i1, i2)).abs() < 1e-15);
        }
    }

    #[test]
    fn json_export_round_trips_bitwise() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let data = one_point_dataset(vec![0.3, -0.8], BinaryLabel::Neg);
        let grid = sample_surface(
            &model,
            &data,
            &grid_5(LossVariant::AdvLinf { epsilon: 0.6 }),
            0,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.json");
        export_grid(&grid, &path, GridFormat::Json).unwrap();
        let back = import_grid_json(&path).unwrap();
        assert_eq!(back, grid);
        for (a, b) in grid.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn grid_validation_rejects_bad_axes_and_variants() {
        assert!(AxisSpec::new(1.0, 1.0, 5).is_err());
        assert!(AxisSpec::new(0.0, 1.0, 1).is_err());
        let nested = LossVariant::Entropy {
            gamma: 0.5,
            quad: QuadratureSpec::default(),
            base: Box::new(LossVariant::Entropy {
                gamma: 0.5,
                quad: QuadratureSpec::default(),
                base: Box::new(LossVariant::Clean),
            }),
        };
        assert!(nested.validate().is_err());
        let pgd_base = LossVariant::Entropy {
            gamma: 0.5,
            quad: QuadratureSpec::default(),
            base: Box::new(LossVariant::AdvL2Pgd {
                epsilon: 0.6,
                steps: 20,
                step_size: None,
            }),
        };
        assert!(pgd_base.validate().is_err());
        assert!(LossVariant::AdvL2 { epsilon: -1.0 }.validate().is_err());
    }
}
