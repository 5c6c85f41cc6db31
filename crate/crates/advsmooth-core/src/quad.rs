//! Gauss-Legendre quadrature rules.
//!
//! Nodes and weights on [-1, 1] come from the Golub-Welsch construction:
//! the eigenvalues of the symmetric tridiagonal Jacobi matrix of the
//! Legendre recurrence are the nodes, and the squared first components of
//! the normalized eigenvectors (times the zeroth moment, 2) are the weights.
//!
//! [`composite_axis`] tiles an interval with uniform panels of one base rule
//! and lets the caller pin extra panel edges, so integrands that are smooth
//! only piecewise (for example an absolute value with a kink at zero) still
//! converge spectrally panel by panel.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// A Gauss-Legendre rule on the reference interval [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Build the n-point rule; exact for polynomials up to degree 2n - 1.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "quadrature order",
                reason: "must be >= 1".into(),
            });
        }
        if n == 1 {
            return Ok(GaussLegendre {
                nodes: vec![0.0],
                weights: vec![2.0],
            });
        }
        let mut jacobi = DMatrix::zeros(n, n);
        for k in 1..n {
            let kf = k as f64;
            let b = kf / (4.0 * kf * kf - 1.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eigen = SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let node = eigen.eigenvalues[i];
                let v0 = eigen.eigenvectors[(0, i)];
                (node, 2.0 * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(GaussLegendre {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integrate a scalar function over [lo, hi] with this single rule.
    pub fn integrate(&self, lo: f64, hi: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let c = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + c * t))
            .sum::<f64>()
            * c
    }
}

/// Nodes and weights of a composite rule on one concrete interval.
#[derive(Debug, Clone)]
pub struct AxisRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AxisRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Tile [lo, hi] with `n_panels` uniform panels of `base`, additionally
/// splitting panels at each of `extra_edges` that falls strictly inside the
/// interval. Edges closer than 1e-12 to an existing edge are dropped.
pub fn composite_axis(
    base: &GaussLegendre,
    lo: f64,
    hi: f64,
    n_panels: usize,
    extra_edges: &[f64],
) -> Result<AxisRule> {
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::InvalidParameter {
            name: "interval",
            reason: format!("need finite lo < hi, got [{lo}, {hi}]"),
        });
    }
    if n_panels == 0 {
        return Err(Error::InvalidParameter {
            name: "n_panels",
            reason: "must be >= 1".into(),
        });
    }
    let mut edges: Vec<f64> = (0..=n_panels)
        .map(|i| lo + (hi - lo) * (i as f64) / (n_panels as f64))
        .collect();
    for &e in extra_edges {
        if e > lo && e < hi {
            edges.push(e);
        }
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let total = base.len() * (edges.len() - 1);
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let c = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (&t, &w) in base.nodes.iter().zip(&base.weights) {
            nodes.push(mid + c * t);
            weights.push(w * c);
        }
    }
    Ok(AxisRule { nodes, weights })
}
