//! Polyhedral numerics: least-norm points of polytopes, projection onto
//! half-space intersections, phase-one feasibility and distance helpers.

mod dykstra;
mod lp;
mod minnorm;

pub use dykstra::{hoffman_estimate, project, project_with, ProjectOptions};
pub use lp::{lp_membership, Membership};
pub use minnorm::{min_norm_point, MinNormCertificate, MIN_NORM_TOL};

use serde::Serialize;

use crate::linalg;

/// `{x : normal . x <= offset}`
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Positive part of `normal . x - offset`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        (linalg::dot(&self.normal, x) - self.offset).max(0.0)
    }

    /// Euclidean distance from `x` to the half-space.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let nn = linalg::norm(&self.normal);
        if nn == 0.0 {
            return 0.0;
        }
        self.violation(x) / nn
    }
}

/// Finite intersection of half-spaces, possibly redundant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polyhedron {
    pub halfspaces: Vec<HalfSpace>,
}

impl Polyhedron {
    pub fn new(halfspaces: Vec<HalfSpace>) -> Self {
        Self { halfspaces }
    }

    /// Non-negative orthant of dimension `n`.
    pub fn orthant(n: usize) -> Self {
        Self::new(
            (0..n)
                .map(|i| {
                    let mut g = vec![0.0; n];
                    g[i] = -1.0;
                    HalfSpace::new(g, 0.0)
                })
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.halfspaces.first().map_or(0, |h| h.normal.len())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.distance(x) <= tol)
    }

    /// `max_i d(x, H_i)`, a lower bound on the distance to the polyhedron.
    pub fn max_halfspace_distance(&self, x: &[f64]) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.distance(x))
            .fold(0.0, f64::max)
    }

    /// Distance via [`project`]; exact zero inside.
    pub fn distance(&self, x: &[f64]) -> crate::Result<f64> {
        if self.max_halfspace_distance(x) == 0.0 {
            return Ok(0.0);
        }
        let p = project(self, x, dykstra::DEFAULT_TOL)?;
        Ok(linalg::dist(x, &p))
    }
}

/// Convex hull of a finite, non-empty vertex list.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polytope {
    pub vertices: Vec<Vec<f64>>,
}

impl Polytope {
    pub fn new(vertices: Vec<Vec<f64>>) -> Self {
        assert!(!vertices.is_empty(), "polytope needs at least one vertex");
        Self { vertices }
    }
}
