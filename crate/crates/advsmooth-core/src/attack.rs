//! Threat models and attacks.
//!
//! An attack perturbs an input x to x' = x + delta with delta constrained to
//! a norm ball of radius epsilon. For the linear logistic model the worst
//! case has closed forms:
//!
//! * p = 2:   delta = -y * epsilon * theta / ||theta||_2
//! * p = inf: delta = -y * epsilon * sign(theta), with sign(0) = 0
//!
//! and in both cases the worst-case loss equals the dual-norm expression
//! `log(1 + exp(-y theta.x + epsilon ||theta||_q))` with q the dual exponent
//! (q = 2 for p = 2, q = 1 for p = inf). The closed forms, the dual identity
//! and projected gradient descent are each validated against brute-force
//! grid maximization in the tests.
//!
//! [`pgd_attack`] implements the iterative attack for any model: steepest
//! ascent in the given norm (sign steps for p = inf, normalized-gradient
//! steps for p = 2) followed by projection, tracking the best iterate seen so
//! the reported loss is never below the starting point's.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sigmoid, softplus, BinaryLabel, InputPoint, Model, ParamVector};

/// Which norm constrains the perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    LInf,
}

impl NormKind {
    /// The norm itself.
    pub fn norm(self, v: &DVector<f64>) -> f64 {
        match self {
            NormKind::L2 => v.norm(),
            NormKind::LInf => v.amax(),
        }
    }

    /// The dual norm (q = 2 for p = 2, q = 1 for p = inf).
    pub fn dual_norm(self, v: &DVector<f64>) -> f64 {
        match self {
            NormKind::L2 => v.norm(),
            NormKind::LInf => v.iter().map(|t| t.abs()).sum(),
        }
    }
}

/// A perturbation budget: `{ delta : ||delta||_p <= epsilon }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBall {
    pub p: NormKind,
    pub epsilon: f64,
}

impl NormBall {
    pub fn new(p: NormKind, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must be finite and >= 0, got {epsilon}"),
            });
        }
        Ok(NormBall { p, epsilon })
    }

    pub fn l2(epsilon: f64) -> Result<Self> {
        Self::new(NormKind::L2, epsilon)
    }

    pub fn linf(epsilon: f64) -> Result<Self> {
        Self::new(NormKind::LInf, epsilon)
    }

    pub fn contains(&self, delta: &DVector<f64>, slack: f64) -> bool {
        self.p.norm(delta) <= self.epsilon * (1.0 + slack) + slack
    }

    /// Euclidean projection onto the ball (per-coordinate clamp for p = inf,
    /// radial rescaling for p = 2). Idempotent; the identity inside the ball.
    pub fn project(&self, delta: &DVector<f64>) -> DVector<f64> {
        match self.p {
            NormKind::LInf => delta.map(|v| v.clamp(-self.epsilon, self.epsilon)),
            NormKind::L2 => {
                let n = delta.norm();
                if n <= self.epsilon {
                    delta.clone()
                } else {
                    delta * (self.epsilon / n)
                }
            }
        }
    }

    /// Seeded uniform draw from the ball (rejection sampling for p = 2).
    pub fn sample(&self, rng: &mut impl Rng, dim: usize) -> DVector<f64> {
        if self.epsilon == 0.0 {
            return DVector::zeros(dim);
        }
        loop {
            let v = DVector::from_fn(dim, |_, _| rng.random_range(-self.epsilon..=self.epsilon));
            match self.p {
                NormKind::LInf => return v,
                NormKind::L2 => {
                    if v.norm() <= self.epsilon {
                        return v;
                    }
                }
            }
        }
    }
}

/// Projection onto a norm ball as a free function.
pub fn project(delta: &DVector<f64>, ball: &NormBall) -> DVector<f64> {
    ball.project(delta)
}

/// Result of an attack: the perturbation, the attacked point, the loss it
/// achieves, and bookkeeping flags.
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub delta: DVector<f64>,
    pub x_prime: DVector<f64>,
    pub achieved_loss: f64,
    /// ||delta||_p is within 1e-9 of epsilon.
    pub on_boundary: bool,
    /// The optimizer had a direction ambiguity (zero theta for p = 2, a zero
    /// coordinate of theta for p = inf).
    pub degenerate: bool,
    /// Number of iterations performed (0 for closed forms).
    pub iterations: usize,
}

const BOUNDARY_TOL: f64 = 1e-9;

fn boundary_flag(norm: f64, epsilon: f64) -> bool {
    (norm - epsilon).abs() <= BOUNDARY_TOL
}

fn check_same_dim(theta: &DVector<f64>, x: &DVector<f64>) -> Result<()> {
    if theta.len() != x.len() {
        return Err(Error::DimensionMismatch {
            context: "attack (theta vs x)",
            expected: theta.len(),
            actual: x.len(),
        });
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: format!("must be finite and >= 0, got {epsilon}"),
        });
    }
    Ok(())
}

/// Worst-case perturbation of the linear logistic loss in an L2 ball:
/// `delta = -y epsilon theta / ||theta||_2`. A zero theta leaves the input
/// unchanged and is flagged degenerate.
pub fn exact_l2_attack(
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: BinaryLabel,
    epsilon: f64,
) -> Result<AttackResult> {
    check_same_dim(theta, x)?;
    check_epsilon(epsilon)?;
    let norm = theta.norm();
    let (delta, degenerate) = if norm == 0.0 {
        (DVector::zeros(theta.len()), true)
    } else {
        (theta * (-y.value() * epsilon / norm), false)
    };
    let x_prime = x + &delta;
    Ok(AttackResult {
        achieved_loss: softplus(-y.value() * theta.dot(&x_prime)),
        on_boundary: boundary_flag(delta.norm(), epsilon),
        degenerate,
        iterations: 0,
        delta,
        x_prime,
    })
}

/// Worst-case perturbation of the linear logistic loss in an Linf ball:
/// `delta = -y epsilon sign(theta)` coordinate-wise, with sign(0) = 0. Any
/// exactly-zero coordinate of theta makes the maximizer non-unique and the
/// result is flagged degenerate.
pub fn exact_linf_attack(
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: BinaryLabel,
    epsilon: f64,
) -> Result<AttackResult> {
    check_same_dim(theta, x)?;
    check_epsilon(epsilon)?;
    let degenerate = theta.iter().any(|&t| t == 0.0);
    let delta = theta.map(|t| {
        if t > 0.0 {
            -y.value() * epsilon
        } else if t < 0.0 {
            y.value() * epsilon
        } else {
            0.0
        }
    });
    let x_prime = x + &delta;
    Ok(AttackResult {
        achieved_loss: softplus(-y.value() * theta.dot(&x_prime)),
        on_boundary: boundary_flag(delta.amax(), epsilon),
        degenerate,
        iterations: 0,
        delta,
        x_prime,
    })
}

/// Worst-case linear logistic loss written through the dual norm:
/// `log(1 + exp(-y theta.x + epsilon ||theta||_q))`.
///
/// Continuous in theta everywhere, including across sign changes.
pub fn dual_norm_adv_loss(
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: BinaryLabel,
    epsilon: f64,
    p: NormKind,
) -> Result<f64> {
    check_same_dim(theta, x)?;
    check_epsilon(epsilon)?;
    Ok(softplus(-y.value() * theta.dot(x) + epsilon * p.dual_norm(theta)))
}

/// Gradient in theta of [`dual_norm_adv_loss`].
///
/// For p = inf this uses the sign subgradient of ||theta||_1 (sign(0) = 0),
/// so on the coordinate axes it returns one member of the subdifferential;
/// the loss itself is non-differentiable there.
pub fn dual_norm_adv_loss_grad(
    theta: &DVector<f64>,
    x: &DVector<f64>,
    y: BinaryLabel,
    epsilon: f64,
    p: NormKind,
) -> Result<DVector<f64>> {
    check_same_dim(theta, x)?;
    check_epsilon(epsilon)?;
    let s = sigmoid(-y.value() * theta.dot(x) + epsilon * p.dual_norm(theta));
    let dual_grad: DVector<f64> = match p {
        NormKind::L2 => {
            let n = theta.norm();
            if n == 0.0 {
                DVector::zeros(theta.len())
            } else {
                theta / n
            }
        }
        // f64::signum maps 0.0 to 1.0, so spell out the three-way sign.
        NormKind::LInf => theta.map(|t| {
            if t > 0.0 {
                1.0
            } else if t < 0.0 {
                -1.0
            } else {
                0.0
            }
        }),
    };
    Ok((x * (-y.value()) + dual_grad * epsilon) * s)
}

/// Projected-gradient-attack configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PgdConfig {
    pub steps: usize,
    pub step_size: f64,
    pub random_init: bool,
    pub seed: u64,
}

impl PgdConfig {
    pub fn new(steps: usize, step_size: f64, random_init: bool, seed: u64) -> Result<Self> {
        let cfg = PgdConfig {
            steps,
            step_size,
            random_init,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter {
                name: "pgd.steps",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidParameter {
                name: "pgd.step_size",
                reason: format!("must be positive and finite, got {}", self.step_size),
            });
        }
        Ok(())
    }

    /// Defaults used for loss-surface sampling: 20 steps of epsilon/4 from
    /// the clean input, no random restart.
    pub fn surface_default(epsilon: f64) -> Result<Self> {
        Self::new(20, (epsilon / 4.0).max(f64::MIN_POSITIVE), false, 0)
    }
}

/// Iterative steepest-ascent attack with projection.
///
/// For p = inf each step moves `step_size * sign(grad_x)`; for p = 2 it moves
/// `step_size * grad_x / ||grad_x||_2`. A zero gradient leaves the iterate in
/// place. Every iterate (including the start) is scored and the best one is
/// returned, so `achieved_loss` is monotone in `steps` and never below the
/// loss at the starting perturbation.
pub fn pgd_attack(
    model: &Model,
    theta: &ParamVector,
    x: &InputPoint,
    y: BinaryLabel,
    ball: &NormBall,
    cfg: &PgdConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    let yv = y.value();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut delta = if cfg.random_init {
        ball.sample(&mut rng, x.len())
    } else {
        DVector::zeros(x.len())
    };
    delta = ball.project(&delta);

    let loss_at = |d: &DVector<f64>| -> Result<f64> {
        let loss = model.loss_raw(theta, &(x.as_dvector() + d), yv);
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::NonFinite("pgd_attack loss"))
        }
    };

    let mut best_delta = delta.clone();
    let mut best_loss = loss_at(&delta)?;
    for _ in 0..cfg.steps {
        let x_cur = x.as_dvector() + &delta;
        let grad = model.grad_x_raw(theta, &x_cur, yv);
        let step: DVector<f64> = match ball.p {
            NormKind::LInf => grad.map(|g| {
                if g > 0.0 {
                    cfg.step_size
                } else if g < 0.0 {
                    -cfg.step_size
                } else {
                    0.0
                }
            }),
            NormKind::L2 => {
                let n = grad.norm();
                if n == 0.0 {
                    DVector::zeros(grad.len())
                } else {
                    grad * (cfg.step_size / n)
                }
            }
        };
        delta = ball.project(&(&delta + step));
        let loss = loss_at(&delta)?;
        if loss > best_loss {
            best_loss = loss;
            best_delta = delta.clone();
        }
    }

    let x_prime = x.as_dvector() + &best_delta;
    Ok(AttackResult {
        achieved_loss: best_loss,
        on_boundary: boundary_flag(ball.p.norm(&best_delta), ball.epsilon),
        degenerate: false,
        iterations: cfg.steps,
        delta: best_delta,
        x_prime,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_model, Activation, ModelSpec};

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::new(v.to_vec()).unwrap()
    }

    fn ip(v: &[f64]) -> InputPoint {
        InputPoint::new(v.to_vec()).unwrap()
    }

    #[test]
    fn exact_l2_attack_matches_hand_computed_direction() {
        let r = exact_l2_attack(&dv(&[3.0, 4.0]), &dv(&[0.0, 0.0]), BinaryLabel::Pos, 1.0).unwrap();
        assert!((r.delta[0] + 0.6).abs() < 1e-12);
        assert!((r.delta[1] + 0.8).abs() < 1e-12);
        assert_eq!(r.x_prime, r.delta);
        assert!(r.on_boundary);
        assert!(!r.degenerate);
    }

    #[test]
    fn exact_l2_attack_with_zero_theta_is_degenerate() {
        let r = exact_l2_attack(&dv(&[0.0, 0.0]), &dv(&[1.0, 2.0]), BinaryLabel::Neg, 0.5).unwrap();
        assert_eq!(r.delta, dv(&[0.0, 0.0]));
        assert!(r.degenerate);
        assert!(!r.on_boundary);
    }

    #[test]
    fn exact_linf_attack_follows_signs_and_flags_zero_coordinates() {
        let r = exact_linf_attack(
            &dv(&[2.0, -1.0, 0.0]),
            &dv(&[0.0, 0.0, 0.0]),
            BinaryLabel::Neg,
            0.5,
        )
        .unwrap();
        assert_eq!(r.delta, dv(&[0.5, -0.5, 0.0]));
        assert!(r.degenerate);
        assert!(r.on_boundary);
    }

    #[test]
    fn zero_epsilon_returns_the_clean_point() {
        let x = dv(&[0.3, -0.2]);
        for r in [
            exact_l2_attack(&dv(&[1.0, 2.0]), &x, BinaryLabel::Pos, 0.0).unwrap(),
            exact_linf_attack(&dv(&[1.0, 2.0]), &x, BinaryLabel::Pos, 0.0).unwrap(),
        ] {
            assert_eq!(r.delta, dv(&[0.0, 0.0]));
            assert_eq!(r.x_prime, x);
        }
    }

    #[test]
    fn negative_epsilon_is_rejected() {
        assert!(exact_l2_attack(&dv(&[1.0]), &dv(&[0.0]), BinaryLabel::Pos, -0.1).is_err());
        assert!(NormBall::l2(f64::NAN).is_err());
        assert!(PgdConfig::new(0, 0.1, false, 0).is_err());
        assert!(PgdConfig::new(5, 0.0, false, 0).is_err());
    }

    /// Brute force: maximize the loss over a fine discretization of the L2
    /// circle boundary (the linear loss is monotone in theta.delta, so the
    /// maximum lies on the boundary whenever theta != 0).
    fn l2_circle_oracle(theta: &DVector<f64>, x: &DVector<f64>, y: f64, eps: f64) -> f64 {
        let n = 10_000;
        (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
                let delta = dv(&[eps * t.cos(), eps * t.sin()]);
                softplus(-y * theta.dot(&(x + delta)))
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Brute force: maximize over a 200x200 grid of the Linf box.
    fn linf_grid_oracle(theta: &DVector<f64>, x: &DVector<f64>, y: f64, eps: f64) -> f64 {
        let n = 200;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                let a = -eps + 2.0 * eps * (i as f64) / ((n - 1) as f64);
                let b = -eps + 2.0 * eps * (j as f64) / ((n - 1) as f64);
                let loss = softplus(-y * theta.dot(&(x + dv(&[a, b]))));
                best = best.max(loss);
            }
        }
        best
    }

    #[test]
    fn closed_forms_attain_the_brute_force_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..25 {
            let theta = dv(&[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
            let x = dv(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            let y = if rng.random_bool(0.5) {
                BinaryLabel::Pos
            } else {
                BinaryLabel::Neg
            };
            let eps = rng.random_range(0.1..1.0);
            let l2 = exact_l2_attack(&theta, &x, y, eps).unwrap();
            assert!(l2.achieved_loss >= l2_circle_oracle(&theta, &x, y.value(), eps) - 1e-9);
            let li = exact_linf_attack(&theta, &x, y, eps).unwrap();
            assert!(li.achieved_loss >= linf_grid_oracle(&theta, &x, y.value(), eps) - 1e-9);
        }
    }

    #[test]
    fn closed_form_losses_match_the_dual_norm_expression() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let theta = dv(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]);
            let x = dv(&[rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
            let y = if rng.random_bool(0.5) {
                BinaryLabel::Pos
            } else {
                BinaryLabel::Neg
            };
            let eps = rng.random_range(0.0..1.5);
            let l2 = exact_l2_attack(&theta, &x, y, eps).unwrap();
            let dual2 = dual_norm_adv_loss(&theta, &x, y, eps, NormKind::L2).unwrap();
            assert!((l2.achieved_loss - dual2).abs() < 1e-9);
            let li = exact_linf_attack(&theta, &x, y, eps).unwrap();
            let dual_inf = dual_norm_adv_loss(&theta, &x, y, eps, NormKind::LInf).unwrap();
            assert!((li.achieved_loss - dual_inf).abs() < 1e-9);
        }
    }

    #[test]
    fn dual_norm_grad_matches_finite_differences_off_the_axes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = dv(&[-1.0, 1.0]);
        for p in [NormKind::L2, NormKind::LInf] {
            for _ in 0..20 {
                // Stay away from the non-differentiable sets.
                let theta = dv(&[
                    rng.random_range(0.2..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    rng.random_range(0.2..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                ]);
                let g =
                    dual_norm_adv_loss_grad(&theta, &x, BinaryLabel::Pos, 0.6, p).unwrap();
                let h = 1e-6;
                for j in 0..2 {
                    let mut tp = theta.clone();
                    let mut tm = theta.clone();
                    tp[j] += h;
                    tm[j] -= h;
                    let fd = (dual_norm_adv_loss(&tp, &x, BinaryLabel::Pos, 0.6, p).unwrap()
                        - dual_norm_adv_loss(&tm, &x, BinaryLabel::Pos, 0.6, p).unwrap())
                        / (2.0 * h);
                    assert!((g[j] - fd).abs() < 1e-6, "p={p:?}, coord {j}");
                }
            }
        }
    }

    #[test]
    fn attack_direction_is_invariant_to_positive_scaling_of_theta() {
        let x = dv(&[0.4, -0.3]);
        for c in [0.5, 2.0, 17.0] {
            let base = exact_l2_attack(&dv(&[1.0, -2.0]), &x, BinaryLabel::Pos, 0.7).unwrap();
            let scaled =
                exact_l2_attack(&(dv(&[1.0, -2.0]) * c), &x, BinaryLabel::Pos, 0.7).unwrap();
            assert!((base.delta - &scaled.delta).norm() < 1e-12);
            let base_inf = exact_linf_attack(&dv(&[1.0, -2.0]), &x, BinaryLabel::Pos, 0.7).unwrap();
            let scaled_inf =
                exact_linf_attack(&(dv(&[1.0, -2.0]) * c), &x, BinaryLabel::Pos, 0.7).unwrap();
            assert_eq!(base_inf.delta, scaled_inf.delta);
        }
    }

    #[test]
    fn single_large_pgd_step_recovers_the_exact_linf_attack_on_linear() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let theta = pv(&[1.5, -0.5]);
        let x = ip(&[-1.0, 1.0]);
        let ball = NormBall::linf(0.6).unwrap();
        let cfg = PgdConfig::new(1, 0.6, false, 0).unwrap();
        let pgd = pgd_attack(&model, &theta, &x, BinaryLabel::Pos, &ball, &cfg).unwrap();
        let exact = exact_linf_attack(&theta, &x, BinaryLabel::Pos, 0.6).unwrap();
        assert!((pgd.delta - &exact.delta).norm() < 1e-12);
        assert!((pgd.achieved_loss - exact.achieved_loss).abs() < 1e-12);
    }

    #[test]
    fn pgd_loss_is_monotone_in_step_count() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let theta = pv(&[0.8, 1.3]);
        let x = ip(&[0.2, -0.4]);
        let ball = NormBall::l2(0.5).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for steps in 1..=15 {
            let cfg = PgdConfig::new(steps, 0.05, false, 0).unwrap();
            let r = pgd_attack(&model, &theta, &x, BinaryLabel::Pos, &ball, &cfg).unwrap();
            assert!(r.achieved_loss >= prev - 1e-15, "steps={steps}");
            prev = r.achieved_loss;
        }
    }

    #[test]
    fn pgd_approaches_the_closed_form_on_the_linear_model() {
        let model = make_model(ModelSpec::linear(2), 0).unwrap();
        let theta = pv(&[1.0, -0.7]);
        let x = ip(&[-1.0, 1.0]);
        for (ball, exact) in [
            (
                NormBall::l2(0.6).unwrap(),
                exact_l2_attack(&theta, &x, BinaryLabel::Pos, 0.6).unwrap(),
            ),
            (
                NormBall::linf(0.6).unwrap(),
                exact_linf_attack(&theta, &x, BinaryLabel::Pos, 0.6).unwrap(),
            ),
        ] {
            let cfg = PgdConfig::new(50, 0.15, false, 0).unwrap();
            let pgd = pgd_attack(&model, &theta, &x, BinaryLabel::Pos, &ball, &cfg).unwrap();
            assert!(
                exact.achieved_loss - pgd.achieved_loss < 1e-6,
                "pgd {} vs exact {}",
                pgd.achieved_loss,
                exact.achieved_loss
            );
        }
    }

    #[test]
    fn pgd_works_on_the_mlp_and_respects_the_budget() {
        let model = make_model(ModelSpec::mlp(2, vec![8], Activation::Swish), 5).unwrap();
        let theta = model.init_params().clone();
        let x = ip(&[0.5, -0.5]);
        let ball = NormBall::linf(0.25).unwrap();
        let cfg = PgdConfig::new(10, 0.05, true, 42).unwrap();
        let r = pgd_attack(&model, &theta, &x, BinaryLabel::Neg, &ball, &cfg).unwrap();
        assert!(ball.contains(&r.delta, 1e-12));
        let clean = model.loss(&theta, &x, BinaryLabel::Neg).unwrap();
        assert!(r.achieved_loss >= clean);
        // Determinism under a fixed seed.
        let r2 = pgd_attack(&model, &theta, &x, BinaryLabel::Neg, &ball, &cfg).unwrap();
        assert_eq!(r.delta, r2.delta);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn finite_vec(len: usize, bound: f64) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-bound..bound, len)
        }

        proptest! {
            #[test]
            fn projection_is_idempotent_and_feasible(
                v in finite_vec(3, 5.0),
                eps in 0.0_f64..2.0,
                linf in proptest::bool::ANY,
            ) {
                let ball = if linf { NormBall::linf(eps).unwrap() } else { NormBall::l2(eps).unwrap() };
                let d = DVector::from_vec(v);
                let p1 = ball.project(&d);
                let p2 = ball.project(&p1);
                prop_assert!(ball.contains(&p1, 1e-12));
                // Idempotent up to one rounding of the radial rescale.
                prop_assert!((p1 - p2).norm() <= 1e-15 * (1.0 + eps));
            }

            #[test]
            fn closed_form_attacks_are_always_feasible(
                t in finite_vec(3, 4.0),
                x in finite_vec(3, 4.0),
                eps in 0.0_f64..2.0,
            ) {
                let theta = DVector::from_vec(t);
                let xv = DVector::from_vec(x);
                let l2 = exact_l2_attack(&theta, &xv, BinaryLabel::Pos, eps).unwrap();
                prop_assert!(l2.delta.norm() <= eps * (1.0 + 1e-12));
                let li = exact_linf_attack(&theta, &xv, BinaryLabel::Neg, eps).unwrap();
                prop_assert!(li.delta.amax() <= eps * (1.0 + 1e-12));
            }

            #[test]
            fn dual_norm_loss_dominates_any_feasible_perturbation(
                t in finite_vec(2, 3.0),
                x in finite_vec(2, 3.0),
                d in finite_vec(2, 1.0),
                eps in 0.01_f64..1.5,
            ) {
                let theta = DVector::from_vec(t);
                let xv = DVector::from_vec(x);
                let ball = NormBall::l2(eps).unwrap();
                let delta = ball.project(&DVector::from_vec(d));
                let worst = dual_norm_adv_loss(&theta, &xv, BinaryLabel::Pos, eps, NormKind::L2).unwrap();
                let any = softplus(-theta.dot(&(&xv + delta)));
                prop_assert!(any <= worst + 1e-12);
            }
        }
    }
}
