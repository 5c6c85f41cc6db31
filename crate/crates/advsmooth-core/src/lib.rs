//! Desk-scale laboratory for studying how adversarial perturbations and
//! entropy smoothing shape the loss landscape of small binary classifiers.
//!
//! The crate is organized around six building blocks:
//!
//! * [`model`] - tiny differentiable models (linear logistic, swish logistic,
//!   dense MLP) with analytic gradients and input-space Hessians.
//! * [`attack`] - norm-ball threat models, closed-form optimal attacks for the
//!   linear model, projected gradient descent, and the dual-norm form of the
//!   adversarial loss.
//! * [`probe`] - empirical Lipschitz estimation, curvature checks at optimal
//!   attacks, bordered-Hessian verification, and implicit-function Jacobians
//!   of the attack map.
//! * [`entropy`] - local-entropy smoothing of a loss: exact evaluation by
//!   tensor-product quadrature, stochastic gradient Langevin estimation, and
//!   the entropy-descent outer steps (first and second order), plus adversarial
//!   weight perturbation and plain SGD steps.
//! * [`surface`] - 2-D loss-surface sampling with discontinuity detection,
//!   filter-normalized 1-D slices, and CSV/JSON export.
//! * [`train`] - a reproducible adversarial-training harness over synthetic
//!   Gaussian data with per-epoch robust metrics.
//! * [`verify`] - a named battery of seeded checks that exercises the central
//!   numerical claims end to end and reports one pass/fail outcome per check.
//!
//! Everything is deterministic given explicit seeds, and every numerical claim
//! made by the library is cross-checked in the test suite against brute-force
//! oracles (grid search, finite differences, quadrature).

pub mod attack;
pub mod entropy;
pub mod error;
pub mod model;
pub mod probe;
pub mod quad;
pub mod surface;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
