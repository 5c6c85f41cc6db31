//! Numerical probes of loss smoothness and of the attack map's regularity.
//!
//! The probes answer three kinds of question about a worst-case loss
//! `theta -> max_{||delta|| <= eps} loss(theta, x + delta)`:
//!
//! 1. *How steep is a function, empirically?* [`lipschitz_ratio_estimate`]
//!    samples separated pairs from a box region and reports the supremum of
//!    difference quotients; [`estimate_assumption1_constants`] specializes
//!    this to the clean loss gradient, producing the constants
//!    (`c_theta`, `c_theta_theta`, `c_theta_x`) that bound its size and its
//!    Lipschitz moduli in parameters and inputs.
//! 2. *What does the maximizer look like?* [`argmax_oracle`] grid-searches
//!    the ball and polishes with [`refine_attack`] (projected ascent with a
//!    Newton step along the gradient); [`interior_optimum_check`] and
//!    [`bordered_hessian_check`] classify a candidate as an interior
//!    stationary point or a boundary KKT point.
//! 3. *How does the maximizer move with the parameters?*
//!    [`implicit_jacobian`] differentiates the optimality conditions: in the
//!    interior it solves `hess_x * D = -cross_hess` through a rank-revealing
//!    SVD, augmenting a singular-but-consistent system (a flat maximizer
//!    set) with the differentiated minimum-norm selection so the result is
//!    the derivative of the map [`argmax_oracle`] actually computes; on an
//!    L2 boundary it solves the bordered KKT system.
//!    [`attack_map_jacobian_fd`] is a branch-tracking oracle: central
//!    differences of the refined maximizer, warm-started from the base
//!    maximizer — it matches the implicit Jacobian wherever the maximizer
//!    is locally unique.
//!
//! [`hessian_spectral_norm`] (power iteration on finite-difference
//! Hessian-vector products) and [`epsilon_sharpness`] probe curvature
//! without ever forming a full Hessian in high dimension.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{
    dual_norm_adv_loss, pgd_attack, AttackResult, NormBall, NormKind, PgdConfig,
};
use crate::entropy::mix_seed;
use crate::error::{Error, Result};
use crate::model::{BinaryLabel, InputPoint, LabeledDataset, Model, ModelKind, ParamVector};

/// Relative cutoff under which a singular value counts as zero.
const RANK_TOL_REL: f64 = 1e-10;
/// Relative residual above which a singular linear system is inconsistent.
const CONSISTENCY_TOL: f64 = 1e-6;

/// Membership restriction on top of a box region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionPredicate {
    /// The whole box.
    #[default]
    None,
    /// `||theta||_2 >= theta_min` (excludes a ball around the origin).
    NormAtLeast { theta_min: f64 },
    /// A fixed orthant: per-coordinate sign in {-1, +1} that every sample
    /// must match strictly.
    FixedOrthant { signs: Vec<i8> },
}

impl RegionPredicate {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            RegionPredicate::None => Ok(()),
            RegionPredicate::NormAtLeast { theta_min } => {
                if !(theta_min.is_finite() && *theta_min > 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "predicate.theta_min",
                        reason: format!("must be positive, got {theta_min}"),
                    });
                }
                Ok(())
            }
            RegionPredicate::FixedOrthant { signs } => {
                if signs.len() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "predicate.signs",
                        expected: dim,
                        actual: signs.len(),
                    });
                }
                if signs.iter().any(|s| *s != 1 && *s != -1) {
                    return Err(Error::InvalidParameter {
                        name: "predicate.signs",
                        reason: "entries must be +1 or -1".into(),
                    });
                }
                Ok(())
            }
        }
    }

    pub fn admits(&self, p: &DVector<f64>) -> bool {
        match self {
            RegionPredicate::None => true,
            RegionPredicate::NormAtLeast { theta_min } => p.norm() >= *theta_min,
            RegionPredicate::FixedOrthant { signs } => p
                .iter()
                .zip(signs)
                .all(|(v, s)| if *s > 0 { *v > 0.0 } else { *v < 0.0 }),
        }
    }
}

/// Axis-aligned box, optionally restricted by a [`RegionPredicate`], from
/// which probe points are drawn by rejection sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lo: Vec<f64>,
    hi: Vec<f64>,
    #[serde(default)]
    predicate: RegionPredicate,
}

impl Region {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidParameter {
                name: "region",
                reason: format!(
                    "bounds must be non-empty and of equal length, got {} and {}",
                    lo.len(),
                    hi.len()
                ),
            });
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(Error::InvalidParameter {
                    name: "region",
                    reason: format!("needs finite lo <= hi, got [{l}, {h}]"),
                });
            }
        }
        Ok(Region {
            lo,
            hi,
            predicate: RegionPredicate::None,
        })
    }

    /// Cube `[-half, half]^dim`.
    pub fn centered_cube(dim: usize, half: f64) -> Result<Self> {
        Self::new_box(vec![-half; dim], vec![half; dim])
    }

    pub fn with_predicate(mut self, predicate: RegionPredicate) -> Result<Self> {
        predicate.validate(self.dim())?;
        self.predicate = predicate;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn predicate(&self) -> &RegionPredicate {
        &self.predicate
    }

    pub fn admits(&self, p: &DVector<f64>) -> bool {
        self.predicate.admits(p)
    }

    fn sample_box(&self, rng: &mut impl Rng) -> DVector<f64> {
        DVector::from_fn(self.lo.len(), |i, _| {
            if self.lo[i] == self.hi[i] {
                self.lo[i]
            } else {
                rng.random_range(self.lo[i]..=self.hi[i])
            }
        })
    }

    /// Rejection-sample an admissible point, counting draws against a
    /// budget shared by the caller.
    fn sample_admissible(
        &self,
        rng: &mut ChaCha8Rng,
        attempts: &mut usize,
        budget: usize,
    ) -> Result<DVector<f64>> {
        loop {
            if *attempts >= budget {
                return Err(Error::EmptyRegion {
                    attempts: *attempts,
                });
            }
            *attempts += 1;
            let p = self.sample_box(rng);
            if self.admits(&p) {
                return Ok(p);
            }
        }
    }
}

/// Supremum of sampled difference quotients, with the attaining pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub sup_ratio: f64,
    pub argmax_a: Vec<f64>,
    pub argmax_b: Vec<f64>,
    pub pair_count: usize,
    pub min_separation: f64,
}

/// Estimate the Lipschitz constant of a vector-valued map by the largest
/// ratio `||f(u) - f(v)|| / ||u - v||` over sampled admissible pairs with
/// `||u - v|| >= min_separation`.
///
/// Returns [`Error::EmptyRegion`] when the region predicate (or the
/// separation requirement) rejects so many draws that the sampling budget
/// is exhausted.
pub fn lipschitz_ratio_estimate(
    f: &mut dyn FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    region: &Region,
    n_pairs: usize,
    min_separation: f64,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if n_pairs == 0 {
        return Err(Error::InvalidParameter {
            name: "n_pairs",
            reason: "must be >= 1".into(),
        });
    }
    if !(min_separation.is_finite() && min_separation >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "min_separation",
            reason: format!("must be finite and >= 0, got {min_separation}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 200 * n_pairs + 200;
    let mut attempts = 0usize;
    let mut best = LipschitzEstimate {
        sup_ratio: 0.0,
        argmax_a: vec![],
        argmax_b: vec![],
        pair_count: 0,
        min_separation,
    };
    for _ in 0..n_pairs {
        let u = region.sample_admissible(&mut rng, &mut attempts, budget)?;
        let v = loop {
            let v = region.sample_admissible(&mut rng, &mut attempts, budget)?;
            if (&v - &u).norm() >= min_separation {
                break v;
            }
        };
        let dist = (&u - &v).norm();
        if dist == 0.0 {
            continue;
        }
        let ratio = (f(&u)? - f(&v)?).norm() / dist;
        best.pair_count += 1;
        if ratio > best.sup_ratio {
            best.sup_ratio = ratio;
            best.argmax_a = u.as_slice().to_vec();
            best.argmax_b = v.as_slice().to_vec();
        }
    }
    Ok(best)
}

/// Scalar-valued convenience wrapper around [`lipschitz_ratio_estimate`].
pub fn lipschitz_ratio_estimate_scalar(
    f: &mut dyn FnMut(&DVector<f64>) -> Result<f64>,
    region: &Region,
    n_pairs: usize,
    min_separation: f64,
    seed: u64,
) -> Result<LipschitzEstimate> {
    let mut wrapped = |p: &DVector<f64>| f(p).map(|v| DVector::from_element(1, v));
    lipschitz_ratio_estimate(&mut wrapped, region, n_pairs, min_separation, seed)
}

/// Empirical Lipschitz moduli of the clean loss: the loss itself in the
/// parameters, and the parameter gradient in parameters and in inputs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    /// sup |loss(t1, x) - loss(t2, x)| / ||t1 - t2||.
    pub c_theta: f64,
    /// sup ||grad_theta loss(t1, x) - grad_theta loss(t2, x)|| / ||t1 - t2||.
    pub c_theta_theta: f64,
    /// sup ||grad_theta loss(t, x1) - grad_theta loss(t, x2)|| / ||x1 - x2||.
    pub c_theta_x: f64,
}

/// Serializable record of a smoothness-constant probe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub constants: SmoothnessConstants,
    pub theta_region: Region,
    pub x_box_epsilon: f64,
    pub n_samples: usize,
    pub min_separation: f64,
    pub seed: u64,
    pub examples_used: usize,
}

/// Sample the constants over parameter pairs from `theta_region` and inputs
/// drawn from boxes of radius `x_box_epsilon` around dataset examples.
#[allow(clippy::too_many_arguments)]
pub fn estimate_assumption1_constants(
    model: &Model,
    data: &LabeledDataset,
    theta_region: &Region,
    x_box_epsilon: f64,
    n_samples: usize,
    min_separation: f64,
    seed: u64,
) -> Result<SmoothnessReport> {
    if theta_region.dim() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            context: "theta_region",
            expected: model.param_dim(),
            actual: theta_region.dim(),
        });
    }
    if data.input_dim() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "smoothness probe dataset",
            expected: model.input_dim(),
            actual: data.input_dim(),
        });
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            reason: "must be >= 1".into(),
        });
    }
    if !(x_box_epsilon.is_finite() && x_box_epsilon >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "x_box_epsilon",
            reason: format!("must be finite and >= 0, got {x_box_epsilon}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = 200 * n_samples + 200;
    let mut attempts = 0usize;
    let d = model.input_dim();
    let x_sep = x_box_epsilon * 1e-3;
    let mut constants = SmoothnessConstants {
        c_theta: 0.0,
        c_theta_theta: 0.0,
        c_theta_x: 0.0,
    };
    for k in 0..n_samples {
        let t1 = theta_region.sample_admissible(&mut rng, &mut attempts, budget)?;
        let t2 = loop {
            let t = theta_region.sample_admissible(&mut rng, &mut attempts, budget)?;
            if (&t - &t1).norm() >= min_separation {
                break t;
            }
        };
        let ex = data.get(k % data.len());
        let y = ex.y.value();
        let jitter = |rng: &mut ChaCha8Rng| -> DVector<f64> {
            if x_box_epsilon == 0.0 {
                ex.x.as_dvector().clone()
            } else {
                ex.x.as_dvector()
                    + DVector::from_fn(d, |_, _| rng.random_range(-x_box_epsilon..=x_box_epsilon))
            }
        };
        let x1 = jitter(&mut rng);
        let lg11 = model.loss_and_grads_raw(&t1, &x1, y);
        let lg21 = model.loss_and_grads_raw(&t2, &x1, y);
        let (g11, g21) = (lg11.grad_theta, lg21.grad_theta);
        let t_dist = (&t1 - &t2).norm();
        if t_dist > 0.0 {
            constants.c_theta = constants
                .c_theta
                .max((lg11.loss - lg21.loss).abs() / t_dist);
            constants.c_theta_theta = constants
                .c_theta_theta
                .max((&g11 - &g21).norm() / t_dist);
        }
        if x_box_epsilon > 0.0 {
            let x2 = loop {
                let x = jitter(&mut rng);
                if (&x - &x1).norm() >= x_sep {
                    break x;
                }
                attempts += 1;
                if attempts >= budget {
                    return Err(Error::EmptyRegion { attempts });
                }
            };
            let g12 = model.loss_and_grads_raw(&t1, &x2, y).grad_theta;
            constants.c_theta_x = constants
                .c_theta_x
                .max((&g11 - &g12).norm() / (&x1 - &x2).norm());
        }
    }
    Ok(SmoothnessReport {
        constants,
        theta_region: theta_region.clone(),
        x_box_epsilon,
        n_samples,
        min_separation,
        seed,
        examples_used: data.len().min(n_samples),
    })
}

/// Result of a matrix-free spectral-norm estimate.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralNormEstimate {
    pub sigma1: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest absolute Hessian eigenvalue of a function known only through its
/// gradient, by power iteration on central-difference Hessian-vector
/// products `(grad(p + h v) - grad(p - h v)) / 2h`.
pub fn hessian_spectral_norm(
    grad_fn: &mut dyn FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    at: &DVector<f64>,
    fd_step: f64,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<SpectralNormEstimate> {
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(Error::InvalidParameter {
            name: "fd_step",
            reason: format!("must be positive, got {fd_step}"),
        });
    }
    if max_iters == 0 {
        return Err(Error::InvalidParameter {
            name: "max_iters",
            reason: "must be >= 1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = at.len();
    let mut v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0));
    let n0 = v.norm();
    if n0 == 0.0 {
        v[0] = 1.0;
    } else {
        v /= n0;
    }
    let mut lambda_prev = f64::INFINITY;
    let mut lambda = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iters {
        iterations += 1;
        let gp = grad_fn(&(at + &v * fd_step))?;
        let gm = grad_fn(&(at - &v * fd_step))?;
        let hv = (gp - gm) / (2.0 * fd_step);
        lambda = v.dot(&hv);
        let hv_norm = hv.norm();
        if hv_norm <= f64::MIN_POSITIVE {
            // The Hessian annihilates this direction; spectral norm ~ 0.
            lambda = 0.0;
            converged = true;
            break;
        }
        if (lambda - lambda_prev).abs() <= tol * lambda.abs().max(1.0) {
            converged = true;
            break;
        }
        lambda_prev = lambda;
        v = hv / hv_norm;
    }
    Ok(SpectralNormEstimate {
        sigma1: lambda.abs(),
        iterations,
        converged,
    })
}

/// [`hessian_spectral_norm`] for a function known only through its values:
/// the gradient is formed by central differences with step `grad_fd_step`
/// before the Hessian-vector power iteration runs on top of it.
#[allow(clippy::too_many_arguments)]
pub fn hessian_spectral_norm_from_values(
    value_fn: &mut dyn FnMut(&DVector<f64>) -> Result<f64>,
    at: &DVector<f64>,
    grad_fd_step: f64,
    hvp_fd_step: f64,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<SpectralNormEstimate> {
    if !(grad_fd_step.is_finite() && grad_fd_step > 0.0) {
        return Err(Error::InvalidParameter {
            name: "grad_fd_step",
            reason: format!("must be positive, got {grad_fd_step}"),
        });
    }
    let mut grad = |p: &DVector<f64>| -> Result<DVector<f64>> {
        let mut g = DVector::<f64>::zeros(p.len());
        for j in 0..p.len() {
            let mut pp = p.clone();
            pp[j] += grad_fd_step;
            let fp = value_fn(&pp)?;
            pp[j] = p[j] - grad_fd_step;
            let fm = value_fn(&pp)?;
            g[j] = (fp - fm) / (2.0 * grad_fd_step);
        }
        Ok(g)
    };
    hessian_spectral_norm(&mut grad, at, hvp_fd_step, max_iters, tol, seed)
}

/// Ascent direction (unnormalized), KKT residual and curvature correction
/// for the active regime at `delta`: interior (full gradient), L2 sphere
/// with outward gradient (tangential gradient, spherical curvature shift),
/// or Linf faces (full gradient; the residual ignores outward face pushes).
fn ascent_regime(
    ball: &NormBall,
    delta: &DVector<f64>,
    g: &DVector<f64>,
) -> (f64, DVector<f64>, f64) {
    let eps = ball.epsilon;
    let band = 1e-12 * eps.max(1.0);
    let dn = ball.p.norm(delta);
    if eps > 0.0 && dn >= eps - band {
        match ball.p {
            NormKind::L2 => {
                let nh = delta / dn;
                let gn = g.dot(&nh);
                if gn >= 0.0 {
                    let tangential = g - &nh * gn;
                    let residual = tangential.norm();
                    return (residual, tangential, -gn / dn);
                }
            }
            NormKind::LInf => {
                let mut r = 0.0f64;
                for i in 0..delta.len() {
                    if delta[i].abs() >= eps - band {
                        // Outward means the gradient pushes further onto the
                        // face; only an inward component is residual.
                        r += (-g[i] * delta[i].signum()).max(0.0).powi(2);
                    } else {
                        r += g[i] * g[i];
                    }
                }
                return (r.sqrt(), g.clone(), 0.0);
            }
        }
    }
    (g.norm(), g.clone(), 0.0)
}

/// High-precision local polish of an attack: projected steepest ascent with
/// backtracking, taking a Newton-sized step when the directional curvature
/// is negative (along the gradient in the interior; tangentially, with the
/// spherical curvature correction, on the L2 boundary).
///
/// Stops when the regime's KKT residual falls below `tol`. Close to the
/// maximizer loss differences sink below float resolution, so backtracking
/// also accepts a step that halves the residual without losing more than a
/// relative 1e-12 of loss.
///
/// Ascending from a warm start near a maximizer keeps the iterate on that
/// maximizer's local branch, which is what the finite-difference Jacobian
/// oracle requires.
#[allow(clippy::too_many_arguments)]
pub fn refine_attack(
    model: &Model,
    theta: &ParamVector,
    x: &InputPoint,
    y: BinaryLabel,
    ball: &NormBall,
    delta0: &DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<AttackResult> {
    if delta0.len() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "refine_attack delta0",
            expected: x.len(),
            actual: delta0.len(),
        });
    }
    let yv = y.value();
    let eps = ball.epsilon;
    let mut delta = ball.project(delta0);
    let mut loss = model.loss_raw(theta, &(x.as_dvector() + &delta), yv);
    if !loss.is_finite() {
        return Err(Error::NonFinite("refine_attack loss"));
    }
    let mut step = (eps * 0.25).max(tol);
    let mut iterations = 0usize;
    for _ in 0..max_iters {
        iterations += 1;
        let xc = x.as_dvector() + &delta;
        let g = model.grad_x_raw(theta, &xc, yv);
        let (residual, dir, curvature_shift) = ascent_regime(ball, &delta, &g);
        if residual <= tol {
            break;
        }
        let dir_norm = dir.norm();
        if dir_norm <= f64::MIN_POSITIVE {
            break;
        }
        let ghat = &dir / dir_norm;
        let kappa = (ghat.transpose() * model.hess_x_raw(theta, &xc, yv) * &ghat)[(0, 0)]
            + curvature_shift;
        let mut s = if kappa < -f64::MIN_POSITIVE {
            (dir_norm / kappa.abs()).min(eps.max(1.0))
        } else {
            step
        };
        let mut improved = false;
        while s > 1e-17 {
            let cand = ball.project(&(&delta + &ghat * s));
            let cand_x = x.as_dvector() + &cand;
            let cand_loss = model.loss_raw(theta, &cand_x, yv);
            if !cand_loss.is_finite() {
                return Err(Error::NonFinite("refine_attack loss"));
            }
            let accept = cand_loss > loss || {
                let cand_g = model.grad_x_raw(theta, &cand_x, yv);
                let (cand_residual, _, _) = ascent_regime(ball, &cand, &cand_g);
                cand_residual < 0.5 * residual
                    && cand_loss >= loss - 1e-12 * loss.abs().max(1.0)
            };
            if accept {
                delta = cand;
                loss = cand_loss;
                step = (s * 1.5).min(eps.max(1.0));
                improved = true;
                break;
            }
            s *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let dn = ball.p.norm(&delta);
    Ok(AttackResult {
        x_prime: x.as_dvector() + &delta,
        achieved_loss: loss,
        on_boundary: (dn - eps).abs() <= 1e-9 * eps.max(1.0),
        degenerate: false,
        iterations,
        delta,
    })
}

/// Global maximizer search over the ball for inputs of dimension at most 3:
/// a full grid scan followed by local refinement of the best grid point, the
/// clean point, and seeded random restarts. Ties keep the earliest candidate.
#[allow(clippy::too_many_arguments)]
pub fn argmax_oracle(
    model: &Model,
    theta: &ParamVector,
    x: &InputPoint,
    y: BinaryLabel,
    ball: &NormBall,
    resolution: usize,
    restarts: usize,
    seed: u64,
) -> Result<AttackResult> {
    let d = x.len();
    if d > 3 {
        return Err(Error::UnsupportedDimension { dim: d, max: 3 });
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter {
            name: "resolution",
            reason: format!("must be >= 2, got {resolution}"),
        });
    }
    let yv = y.value();
    let eps = ball.epsilon;
    if eps == 0.0 {
        let loss = model.loss_raw(theta, x.as_dvector(), yv);
        return Ok(AttackResult {
            delta: DVector::zeros(d),
            x_prime: x.as_dvector().clone(),
            achieved_loss: loss,
            on_boundary: true,
            degenerate: false,
            iterations: 0,
        });
    }

    // Grid scan.
    let mut best_grid = DVector::zeros(d);
    let mut best_grid_loss = f64::NEG_INFINITY;
    let mut idx = vec![0usize; d];
    let coord = |k: usize| -eps + 2.0 * eps * (k as f64) / ((resolution - 1) as f64);
    'grid: loop {
        let delta = DVector::from_fn(d, |i, _| coord(idx[i]));
        if ball.p.norm(&delta) <= eps * (1.0 + 1e-12) {
            let loss = model.loss_raw(theta, &(x.as_dvector() + &delta), yv);
            if loss > best_grid_loss {
                best_grid_loss = loss;
                best_grid = delta;
            }
        }
        let mut i = 0;
        loop {
            idx[i] += 1;
            if idx[i] < resolution {
                break;
            }
            idx[i] = 0;
            i += 1;
            if i == d {
                break 'grid;
            }
        }
    }

    // Refinement starts: clean point first, then the grid winner, then
    // random draws. Losses tied within float resolution resolve to the
    // smallest perturbation; on flat maximizer sets every refined candidate
    // is first slid to the minimum-norm point of its set, so the winner is
    // a deterministic function of the instance (the selection
    // `implicit_jacobian` differentiates) instead of whichever landing
    // last-bit noise favors.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![DVector::zeros(d), best_grid];
    for _ in 0..restarts {
        starts.push(ball.sample(&mut rng, d));
    }
    let mut best: Option<AttackResult> = None;
    for start in &starts {
        let landed = refine_attack(model, theta, x, y, ball, start, 300, 1e-12)?;
        let refined = slide_to_min_norm(model, theta, x, y, ball, landed);
        let better = best.as_ref().is_none_or(|b| {
            let tie = 1e-12 * b.achieved_loss.abs().max(1.0);
            refined.achieved_loss > b.achieved_loss + tie
                || (refined.achieved_loss > b.achieved_loss - tie
                    && refined.delta.norm() < b.delta.norm() - 1e-12)
        });
        if better {
            best = Some(refined);
        }
    }
    Ok(best.expect("at least one start"))
}

/// Slides an interior-stationary landing along the input Hessian's null
/// directions to the minimum-norm point of its flat maximizer set.
///
/// A refinement that stops on a flat set can stop anywhere along it; the
/// oracle's documented tie rule (equal losses resolve to the smallest
/// attack) needs the exact minimum-norm point for the winner to be a
/// reproducible, differentiable function of the instance. Returns the
/// landing unchanged when it is not stationary, the Hessian has no null
/// direction, or sliding would change the loss (the set was not flat after
/// all).
fn slide_to_min_norm(
    model: &Model,
    theta: &ParamVector,
    x: &InputPoint,
    y: BinaryLabel,
    ball: &NormBall,
    landing: AttackResult,
) -> AttackResult {
    let yv = y.value();
    let scale = landing.achieved_loss.abs().max(1.0);
    if model.grad_x_raw(theta, &landing.x_prime, yv).norm() > 1e-7 {
        return landing;
    }
    let hess = model.hess_x_raw(theta, &landing.x_prime, yv);
    let sym = (&hess + hess.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lam_max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if lam_max <= f64::MIN_POSITIVE {
        return landing;
    }
    let mut delta = landing.delta.clone();
    let mut loss = landing.achieved_loss;
    let mut changed = false;
    for _pass in 0..2 {
        for i in 0..eig.eigenvalues.len() {
            if eig.eigenvalues[i].abs() > 1e-7 * lam_max {
                continue;
            }
            let dir = eig.eigenvectors.column(i).into_owned();
            let mut t = -delta.dot(&dir);
            while t.abs() > 1e-14 {
                let cand = ball.project(&(&delta + &dir * t));
                let cand_x = x.as_dvector() + &cand;
                let cand_loss = model.loss_raw(theta, &cand_x, yv);
                if cand_loss >= loss - 1e-12 * scale
                    && model.grad_x_raw(theta, &cand_x, yv).norm() <= 1e-7
                    && cand.norm() < delta.norm() - f64::MIN_POSITIVE
                {
                    delta = cand;
                    loss = cand_loss;
                    changed = true;
                    break;
                }
                t *= 0.5;
            }
        }
    }
    if !changed {
        return landing;
    }
    let dn = ball.p.norm(&delta);
    AttackResult {
        x_prime: x.as_dvector() + &delta,
        achieved_loss: loss,
        on_boundary: (dn - ball.epsilon).abs() <= 1e-9 * ball.epsilon.max(1.0),
        degenerate: landing.degenerate,
        iterations: landing.iterations,
        delta,
    }
}

/// Classification of a candidate interior maximizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InteriorCheck {
    /// ||grad_x loss|| <= tol_grad.
    pub is_stationary: bool,
    pub grad_norm: f64,
    /// Largest eigenvalue of the input Hessian (<= tol_eig for a maximizer).
    pub max_eig: f64,
    /// Strong-concavity constant `-max_eig` when the Hessian is strictly
    /// negative definite; `None` when the top eigenvalue is within tolerance
    /// of zero (a flat direction: the maximizer is not locally unique).
    pub curvature_c: Option<f64>,
    /// The perturbation is strictly inside the ball.
    pub strictly_interior: bool,
}

/// Check stationarity, curvature and interiority of `x_prime` as a
/// maximizer of the loss over the ball centered at `x`.
#[allow(clippy::too_many_arguments)]
pub fn interior_optimum_check(
    model: &Model,
    theta: &ParamVector,
    x: &InputPoint,
    x_prime: &DVector<f64>,
    y: BinaryLabel,
    ball: &NormBall,
    tol_grad: f64,
    tol_eig: f64,
) -> Result<InteriorCheck> {
    if x_prime.len() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "interior_optimum_check x_prime",
            expected: x.len(),
            actual: x_prime.len(),
        });
    }
    let yv = y.value();
    let grad_norm = model.grad_x_raw(theta, x_prime, yv).norm();
    let hess = model.hess_x_raw(theta, x_prime, yv);
    let max_eig = hess
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let delta = x_prime - x.as_dvector();
    let strictly_interior = ball.p.norm(&delta) < ball.epsilon * (1.0 - 1e-9);
    Ok(InteriorCheck {
        is_stationary: grad_norm <= tol_grad,
        grad_norm,
        max_eig,
        curvature_c: (max_eig < -tol_eig).then_some(-max_eig),
        strictly_interior,
    })
}

/// Diagnostics of a boundary KKT point of the L2-constrained maximization.
#[derive(Debug, Clone)]
pub struct BorderedHessianCheck {
    /// KKT multiplier: the least-squares coefficient of the gradient on the
    /// outward normal (>= 0 at a maximizer).
    pub mu: f64,
    /// Norm of the gradient component orthogonal to the normal (~0 at KKT).
    pub stationarity_residual: f64,
    /// Determinant of `matrix`; positive iff the constrained second-order
    /// condition holds for inputs of dimension 2.
    pub determinant: f64,
    /// Smallest singular value of `matrix`; ~0 signals that the implicit
    /// KKT system is ill-posed at this point.
    pub min_singular_value: f64,
    /// Bordered matrix `[[0, n^T], [n, B]]` with
    /// `B = hess_x - (mu/r)(I - n n^T)` and `n` the unit outward normal.
    pub matrix: DMatrix<f64>,
}

/// Build and evaluate the bordered Hessian of the boundary KKT system at
/// `x_prime`. Fails with [`Error::UndefinedNormal`] when `x_prime == x`.
pub fn bordered_hessian_check(
    model: &Model,
    theta: &ParamVector,
    x: &InputPoint,
    x_prime: &DVector<f64>,
    y: BinaryLabel,
) -> Result<BorderedHessianCheck> {
    if x_prime.len() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "bordered_hessian_check x_prime",
            expected: x.len(),
            actual: x_prime.len(),
        });
    }
    let d = x.len();
    let radial = x_prime - x.as_dvector();
    let r = radial.norm();
    if r == 0.0 {
        return Err(Error::UndefinedNormal);
    }
    let normal = &radial / r;
    let yv = y.value();
    let grad = model.grad_x_raw(theta, x_prime, yv);
    let mu = grad.dot(&normal);
    let residual = (&grad - &normal * mu).norm();
    let hess = model.hess_x_raw(theta, x_prime, yv);
    let mut b = hess;
    for i in 0..d {
        for j in 0..d {
            let proj = if i == j { 1.0 } else { 0.0 } - normal[i] * normal[j];
            b[(i, j)] -= mu / r * proj;
        }
    }
    let mut matrix = DMatrix::zeros(d + 1, d + 1);
    for i in 0..d {
        matrix[(0, i + 1)] = normal[i];
        matrix[(i + 1, 0)] = normal[i];
        for j in 0..d {
            matrix[(i + 1, j + 1)] = b[(i, j)];
        }
    }
    let det = matrix.determinant();
    let min_singular_value = matrix
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &v| a.min(v));
    Ok(BorderedHessianCheck {
        mu,
        stationarity_residual: residual,
        determinant: det,
        min_singular_value,
        matrix,
    })
}

/// Which optimality condition the implicit Jacobian differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianCase {
    /// Interior stationary point: `grad_x loss(theta, x') = 0`.
    Interior,
    /// KKT point on the boundary of an L2 ball.
    BoundaryL2,
}

/// Sensitivity `D = d x' / d theta` of a maximizer to the parameters.
#[derive(Debug, Clone)]
pub struct ImplicitJacobian {
    /// Input-dim x param-dim matrix.
    pub jacobian: DMatrix<f64>,
    pub spectral_norm: f64,
}

fn matrix_spectral_norm(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().fold(0.0f64, |a, &v| a.max(v))
}

/// Projector onto the span of the `null_dim` eigendirections of smallest
/// magnitude of a symmetric matrix. Basis-free, so it is a smooth function
/// of the matrix wherever the spectral gap around the slow subspace stays
/// open, which makes its finite differences meaningful.
fn null_projector(sym: &DMatrix<f64>, null_dim: usize) -> DMatrix<f64> {
    let d = sym.nrows();
    let eig = sym.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .abs()
            .total_cmp(&eig.eigenvalues[b].abs())
    });
    let mut pi = DMatrix::<f64>::zeros(d, d);
    for &i in order.iter().take(null_dim) {
        let v = eig.eigenvectors.column(i);
        pi += &v * v.transpose();
    }
    pi
}

/// Differentiate the optimality conditions at a maximizer `x_prime`.
///
/// Interior case: differentiates the stationarity system
/// `hess_x * D = -cross_hess` with a rank-revealing SVD. When the Hessian
/// is nonsingular this is the classic implicit derivative. When it is
/// singular but consistent, the maximizers form a flat manifold and the
/// attack map is only a function via the library's selection rule (the
/// minimum-norm point of the set, as returned by [`argmax_oracle`]); the
/// stationarity rows are then augmented with the differentiated selection
/// condition `Pi(x', theta) (x' - x) = 0`, where `Pi` projects onto the
/// Hessian's null space and its derivatives come from central differences
/// of the Hessian. The selection is assumed unconstrained at `x_prime`
/// (strictly interior, per the precondition). A rank-0 Hessian or an
/// inconsistent system yields [`Error::SingularSystem`].
///
/// Boundary L2 case: solves the bordered KKT system
/// `[[B, -n], [n^T, 0]] [dx; dmu] = [-cross_hess_j; 0]` per parameter
/// column, failing with [`Error::SingularSystem`] when the bordered matrix
/// is numerically singular.
pub fn implicit_jacobian(
    model: &Model,
    theta: &ParamVector,
    x: &InputPoint,
    x_prime: &DVector<f64>,
    y: BinaryLabel,
    case: JacobianCase,
) -> Result<ImplicitJacobian> {
    if x_prime.len() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "implicit_jacobian x_prime",
            expected: x.len(),
            actual: x_prime.len(),
        });
    }
    let yv = y.value();
    let d = x.len();
    let m = model.param_dim();
    let cross = model.cross_hess_raw(theta, x_prime, yv);
    let jacobian = match case {
        JacobianCase::Interior => {
            let hess = model.hess_x_raw(theta, x_prime, yv);
            let sym = (&hess + hess.transpose()) * 0.5;
            let eig_vals = sym.clone().symmetric_eigen().eigenvalues;
            let lam_max = eig_vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            if lam_max <= f64::MIN_POSITIVE {
                return Err(Error::SingularSystem {
                    context: "implicit_jacobian interior",
                    detail: "input Hessian is numerically zero".into(),
                });
            }
            let null_dim = eig_vals
                .iter()
                .filter(|v| v.abs() <= lam_max * RANK_TOL_REL)
                .count();
            if null_dim == 0 {
                let svd = hess.clone().svd(true, true);
                let rhs = -&cross;
                let solution =
                    svd.solve(&rhs, lam_max * RANK_TOL_REL)
                        .map_err(|e| Error::SingularSystem {
                            context: "implicit_jacobian interior",
                            detail: e.to_string(),
                        })?;
                let residual = (&hess * &solution + &cross).norm();
                let scale = cross.norm().max(f64::MIN_POSITIVE);
                if residual > CONSISTENCY_TOL * scale {
                    return Err(Error::SingularSystem {
                        context: "implicit_jacobian interior",
                        detail: format!(
                            "stationarity system inconsistent: relative residual {:.3e}",
                            residual / scale
                        ),
                    });
                }
                solution
            } else {
                // Flat maximizer set: augment with the differentiated
                // minimum-norm selection. Writing delta = x' - x and Pi for
                // the null projector, d/dtheta_j of Pi delta = 0 gives
                // (Pi + G) D_j = -(dPi/dtheta_j) delta with
                // G[:,k] = (dPi/dx_k) delta.
                let delta = x_prime - x.as_dvector();
                let hp = 1e-5;
                let pi0 = null_projector(&sym, null_dim);
                let proj_at = |t: &DVector<f64>, xp: &DVector<f64>| -> Result<DMatrix<f64>> {
                    let t = ParamVector::from_dvector(t.clone())?;
                    let h = model.hess_x_raw(&t, xp, yv);
                    Ok(null_projector(&((&h + h.transpose()) * 0.5), null_dim))
                };
                let mut theta_block = DMatrix::<f64>::zeros(d, m);
                for j in 0..m {
                    let mut tp = theta.as_dvector().clone();
                    let mut tm = theta.as_dvector().clone();
                    tp[j] += hp;
                    tm[j] -= hp;
                    let dpi = (proj_at(&tp, x_prime)? - proj_at(&tm, x_prime)?) / (2.0 * hp);
                    theta_block.set_column(j, &(dpi * &delta));
                }
                let mut g_mat = DMatrix::<f64>::zeros(d, d);
                for k in 0..d {
                    let mut xp = x_prime.clone();
                    let mut xm = x_prime.clone();
                    xp[k] += hp;
                    xm[k] -= hp;
                    let dpi = (proj_at(theta.as_dvector(), &xp)?
                        - proj_at(theta.as_dvector(), &xm)?)
                        / (2.0 * hp);
                    g_mat.set_column(k, &(dpi * &delta));
                }
                // Stacked consistent system, stationarity rows normalized to
                // the selection rows' unit scale.
                let mut a = DMatrix::<f64>::zeros(2 * d, d);
                let mut b = DMatrix::<f64>::zeros(2 * d, m);
                a.view_mut((0, 0), (d, d)).copy_from(&(&sym / lam_max));
                a.view_mut((d, 0), (d, d)).copy_from(&(&pi0 + &g_mat));
                b.view_mut((0, 0), (d, m)).copy_from(&(-&cross / lam_max));
                b.view_mut((d, 0), (d, m)).copy_from(&(-&theta_block));
                let svd = a.clone().svd(true, true);
                let smax = svd.singular_values.iter().fold(0.0f64, |acc, &v| acc.max(v));
                let solution =
                    svd.solve(&b, smax * RANK_TOL_REL)
                        .map_err(|e| Error::SingularSystem {
                            context: "implicit_jacobian interior",
                            detail: e.to_string(),
                        })?;
                let residual = (&a * &solution - &b).norm();
                let scale = b.norm().max(f64::MIN_POSITIVE);
                if residual > CONSISTENCY_TOL * scale {
                    return Err(Error::SingularSystem {
                        context: "implicit_jacobian interior",
                        detail: format!(
                            "stationarity and selection system inconsistent: relative \
                             residual {:.3e}",
                            residual / scale
                        ),
                    });
                }
                solution
            }
        }
        JacobianCase::BoundaryL2 => {
            let check = bordered_hessian_check(model, theta, x, x_prime, y)?;
            let radial = x_prime - x.as_dvector();
            let normal = &radial / radial.norm();
            // [[B, -n], [n^T, 0]] in solve orientation.
            let mut kkt = DMatrix::zeros(d + 1, d + 1);
            for i in 0..d {
                for j in 0..d {
                    kkt[(i, j)] = check.matrix[(i + 1, j + 1)];
                }
                kkt[(i, d)] = -normal[i];
                kkt[(d, i)] = normal[i];
            }
            let lu = kkt.clone().lu();
            let det = lu.determinant();
            let scale = kkt.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1.0);
            if det.abs() <= 1e-12 * scale.powi(d as i32 + 1) {
                return Err(Error::SingularSystem {
                    context: "implicit_jacobian boundary_l2",
                    detail: format!("bordered KKT matrix is singular (det {det:.3e})"),
                });
            }
            let mut jac = DMatrix::zeros(d, m);
            for j in 0..m {
                let mut rhs = DVector::zeros(d + 1);
                for i in 0..d {
                    rhs[i] = -cross[(i, j)];
                }
                let sol = lu.solve(&rhs).ok_or_else(|| Error::SingularSystem {
                    context: "implicit_jacobian boundary_l2",
                    detail: "LU solve failed".into(),
                })?;
                for i in 0..d {
                    jac[(i, j)] = sol[i];
                }
            }
            jac
        }
    };
    let spectral_norm = matrix_spectral_norm(&jacobian);
    Ok(ImplicitJacobian {
        jacobian,
        spectral_norm,
    })
}

/// Finite-difference Jacobian of the attack map `theta -> x'(theta)`,
/// warm-started from a maximizer `x_prime0` computed at `theta`: each
/// perturbed problem is re-solved by [`refine_attack`] starting from the
/// base maximizer, so the derivative tracks the same local branch.
#[allow(clippy::too_many_arguments)]
pub fn attack_map_jacobian_fd(
    model: &Model,
    theta: &ParamVector,
    x: &InputPoint,
    y: BinaryLabel,
    ball: &NormBall,
    x_prime0: &DVector<f64>,
    h: f64,
    max_iters: usize,
    tol: f64,
) -> Result<DMatrix<f64>> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidParameter {
            name: "h",
            reason: format!("must be positive, got {h}"),
        });
    }
    let d = x.len();
    let m = theta.len();
    let delta0 = x_prime0 - x.as_dvector();
    let mut jac = DMatrix::zeros(d, m);
    for j in 0..m {
        let solve_at = |sign: f64| -> Result<DVector<f64>> {
            let mut t = theta.as_dvector().clone();
            t[j] += sign * h;
            let t = ParamVector::from_dvector(t)?;
            let refined = refine_attack(model, &t, x, y, ball, &delta0, max_iters, tol)?;
            Ok(refined.x_prime)
        };
        let xp = solve_at(1.0)?;
        let xm = solve_at(-1.0)?;
        let col = (xp - xm) / (2.0 * h);
        for i in 0..d {
            jac[(i, j)] = col[i];
        }
    }
    Ok(jac)
}

/// Relative loss increase under the worst parameter perturbation in an L2
/// ball of radius `epsilon_s`, and its curvature-only quadratic prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SharpnessEstimate {
    /// `(max_{||v|| <= eps} L(theta + v) - L(theta)) / (1 + L(theta))`.
    pub exact: f64,
    /// `max(lambda_max, 0) * eps^2 / (2 (1 + L(theta)))`.
    pub quadratic_approx: f64,
    pub base_loss: f64,
    /// Largest Hessian eigenvalue at `theta` (finite differences).
    pub lambda_max: f64,
    pub argmax_direction: Vec<f64>,
}

/// Estimate sharpness by direction search: the top finite-difference Hessian
/// eigendirection, all signed coordinate axes, and seeded random directions,
/// each maximized over the radius by golden-section search.
pub fn epsilon_sharpness(
    lossfn: &mut dyn FnMut(&DVector<f64>) -> Result<f64>,
    theta: &DVector<f64>,
    epsilon_s: f64,
    restarts: usize,
    seed: u64,
) -> Result<SharpnessEstimate> {
    if !(epsilon_s.is_finite() && epsilon_s > 0.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon_s",
            reason: format!("must be positive, got {epsilon_s}"),
        });
    }
    let d = theta.len();
    let base_loss = lossfn(theta)?;
    if !base_loss.is_finite() {
        return Err(Error::NonFinite("epsilon_sharpness base loss"));
    }

    // Finite-difference Hessian for the quadratic reference.
    let h = 1e-4 * epsilon_s.max(1.0);
    let mut hess = DMatrix::zeros(d, d);
    let mut point = theta.clone();
    let mut eval = |p: &mut DVector<f64>, i: usize, j: usize, si: f64, sj: f64| -> Result<f64> {
        p[i] += si * h;
        p[j] += sj * h;
        let v = lossfn(p)?;
        p[i] -= si * h;
        p[j] -= sj * h;
        Ok(v)
    };
    for i in 0..d {
        for j in 0..=i {
            let value = if i == j {
                let fp = eval(&mut point, i, i, 1.0, 0.0)?;
                let fm = eval(&mut point, i, i, -1.0, 0.0)?;
                (fp - 2.0 * base_loss + fm) / (h * h)
            } else {
                let fpp = eval(&mut point, i, j, 1.0, 1.0)?;
                let fpm = eval(&mut point, i, j, 1.0, -1.0)?;
                let fmp = eval(&mut point, i, j, -1.0, 1.0)?;
                let fmm = eval(&mut point, i, j, -1.0, -1.0)?;
                (fpp - fpm - fmp + fmm) / (4.0 * h * h)
            };
            hess[(i, j)] = value;
            hess[(j, i)] = value;
        }
    }
    let eig = nalgebra::SymmetricEigen::new(hess);
    let (top_idx, lambda_max) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
            if v > acc.1 {
                (i, v)
            } else {
                acc
            }
        });
    let top_dir = eig.eigenvectors.column(top_idx).into_owned();

    // Directional search over the ball.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut directions: Vec<DVector<f64>> = vec![top_dir.clone(), -&top_dir];
    for i in 0..d {
        let mut e = DVector::zeros(d);
        e[i] = 1.0;
        directions.push(e.clone());
        directions.push(-e);
    }
    for _ in 0..restarts {
        let mut v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..=1.0f64));
        let n = v.norm();
        if n == 0.0 {
            v[0] = 1.0;
        } else {
            v /= n;
        }
        directions.push(v);
    }

    let mut best = base_loss;
    let mut best_dir = DVector::zeros(d);
    let golden_ratio = 0.5 * (5.0f64.sqrt() - 1.0);
    for dir in &directions {
        let at = |t: f64, lossfn: &mut dyn FnMut(&DVector<f64>) -> Result<f64>| {
            lossfn(&(theta + dir * t))
        };
        // Golden-section maximization of t -> L(theta + t dir) on [0, eps].
        let (mut a, mut b) = (0.0, epsilon_s);
        let mut t1 = b - golden_ratio * (b - a);
        let mut t2 = a + golden_ratio * (b - a);
        let mut f1 = at(t1, lossfn)?;
        let mut f2 = at(t2, lossfn)?;
        for _ in 0..40 {
            if f1 < f2 {
                a = t1;
                t1 = t2;
                f1 = f2;
                t2 = a + golden_ratio * (b - a);
                f2 = at(t2, lossfn)?;
            } else {
                b = t2;
                t2 = t1;
                f2 = f1;
                t1 = b - golden_ratio * (b - a);
                f1 = at(t1, lossfn)?;
            }
        }
        for candidate in [f1, f2, at(epsilon_s, lossfn)?] {
            if candidate > best {
                best = candidate;
                best_dir = dir.clone();
            }
        }
    }

    let denom = 1.0 + base_loss;
    Ok(SharpnessEstimate {
        exact: (best - base_loss) / denom,
        quadratic_approx: lambda_max.max(0.0) * epsilon_s * epsilon_s / (2.0 * denom),
        base_loss,
        lambda_max,
        argmax_direction: best_dir.as_slice().to_vec(),
    })
}

/// Aggregate record of one probe run: the sampled loss moduli over a
/// parameter region, plus curvature diagnostics of the worst-case dataset
/// objective at a reference parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Sampled moduli of the clean loss over `constants.theta_region`.
    pub constants: SmoothnessReport,
    /// Strong-concavity constant of the attack at `reference_theta` on the
    /// first dataset example; present only when that attack is a strictly
    /// interior stationary point with a negative-definite input Hessian.
    pub curvature_c: Option<f64>,
    /// Spectral norm of the worst-case objective's parameter Hessian at
    /// `reference_theta`.
    pub sigma1: SpectralNormEstimate,
    /// Sharpness of the worst-case objective around `reference_theta`.
    pub sharpness: SharpnessEstimate,
    pub reference_theta: Vec<f64>,
    pub sharpness_radius: f64,
    pub ball: NormBall,
    pub seed: u64,
}

/// Run the full probe battery for one model/dataset configuration.
///
/// The worst-case objective is the dataset mean of the attacked per-example
/// loss: the closed form for the linear model, PGD (with `pgd`'s fixed seed,
/// so the objective is a deterministic function of the parameters) for the
/// rest. All component probes derive their seeds from `seed`.
#[allow(clippy::too_many_arguments)]
pub fn probe_report(
    model: &Model,
    data: &LabeledDataset,
    theta_region: &Region,
    ball: &NormBall,
    pgd: &PgdConfig,
    reference_theta: &ParamVector,
    n_samples: usize,
    min_separation: f64,
    sharpness_radius: f64,
    seed: u64,
) -> Result<ProbeReport> {
    if reference_theta.len() != model.param_dim() {
        return Err(Error::DimensionMismatch {
            context: "probe_report reference_theta",
            expected: model.param_dim(),
            actual: reference_theta.len(),
        });
    }
    let constants = estimate_assumption1_constants(
        model,
        data,
        theta_region,
        ball.epsilon,
        n_samples,
        min_separation,
        seed,
    )?;

    let linear = matches!(model.spec().kind, ModelKind::LinearLogistic);
    let mut objective = |p: &DVector<f64>| -> Result<f64> {
        let theta = ParamVector::from_dvector(p.clone())?;
        let mut total = 0.0;
        for ex in data.examples() {
            total += if linear {
                dual_norm_adv_loss(p, ex.x.as_dvector(), ex.y, ball.epsilon, ball.p)?
            } else {
                pgd_attack(model, &theta, &ex.x, ex.y, ball, pgd)?.achieved_loss
            };
        }
        Ok(total / data.len() as f64)
    };
    let sigma1 = hessian_spectral_norm_from_values(
        &mut objective,
        reference_theta.as_dvector(),
        1e-5,
        1e-5,
        100,
        1e-8,
        mix_seed(&[seed, 1]),
    )?;
    let sharpness = epsilon_sharpness(
        &mut objective,
        reference_theta.as_dvector(),
        sharpness_radius,
        4,
        mix_seed(&[seed, 2]),
    )?;

    // Curvature of the reference attack: meaningful only at a strictly
    // interior stationary maximizer.
    let first = data.get(0);
    let attack = pgd_attack(model, reference_theta, &first.x, first.y, ball, pgd)?;
    let refined = refine_attack(
        model,
        reference_theta,
        &first.x,
        first.y,
        ball,
        &attack.delta,
        200,
        1e-10,
    )?;
    let interior = interior_optimum_check(
        model,
        reference_theta,
        &first.x,
        &refined.x_prime,
        first.y,
        ball,
        1e-6,
        1e-8,
    )?;
    let curvature_c = if interior.strictly_interior && interior.is_stationary {
        interior.curvature_c
    } else {
        None
    };

    let report = ProbeReport {
        constants,
        curvature_c,
        sigma1,
        sharpness,
        reference_theta: reference_theta.to_vec(),
        sharpness_radius,
        ball: *ball,
        seed,
    };
    let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
    let ok = finite_nonneg(report.constants.constants.c_theta)
        && finite_nonneg(report.constants.constants.c_theta_theta)
        && finite_nonneg(report.constants.constants.c_theta_x)
        && finite_nonneg(report.sigma1.sigma1)
        && finite_nonneg(report.sharpness.exact)
        && report.curvature_c.is_none_or(finite_nonneg);
    if !ok {
        return Err(Error::NonFinite("probe report"));
    }
    Ok(report)
}
