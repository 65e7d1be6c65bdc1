//! Phase-one dense tableau simplex with Bland's rule, used to decide
//! `target in M conv(P)`.

use serde::Serialize;

use super::{min_norm_point, Polytope, MIN_NORM_TOL};
use crate::error::Result;
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Membership {
    /// Convex weights over the vertices with `sum_v w_v M v = target`.
    Feasible { weights: Vec<f64> },
    /// `separator . target - separator . (M v) >= margin > 0` for every vertex.
    Infeasible { separator: Vec<f64>, margin: f64 },
}

impl Membership {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Membership::Feasible { .. })
    }
}

/// Decides whether `target` lies in `M conv(vertices)`.
pub fn lp_membership(target: &[f64], poly: &Polytope, m: &[Vec<f64>]) -> Result<Membership> {
    let images: Vec<Vec<f64>> = poly.vertices.iter().map(|v| linalg::matvec(m, v)).collect();
    let n = target.len();
    let cols = images.len();
    let rows = n + 1;

    // rows: sum_j images[j][i] a_j = target_i, and sum_j a_j = 1
    let mut a: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| if i < n { images[j][i] } else { 1.0 })
                .collect()
        })
        .collect();
    let mut b: Vec<f64> = (0..rows).map(|i| if i < n { target[i] } else { 1.0 }).collect();
    for i in 0..rows {
        if b[i] < 0.0 {
            b[i] = -b[i];
            a[i].iter_mut().for_each(|v| *v = -*v);
        }
    }
    let scale = 1.0
        + a.iter()
            .flat_map(|r| r.iter())
            .chain(b.iter())
            .fold(0.0f64, |s, v| s.max(v.abs()));
    let eps = 1e-12 * scale;

    // tableau columns: structural | artificial | rhs
    let width = cols + rows + 1;
    let mut t: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            let mut row = vec![0.0; width];
            row[..cols].copy_from_slice(&a[i]);
            row[cols + i] = 1.0;
            row[width - 1] = b[i];
            row
        })
        .collect();
    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    // reduced costs of the phase-one objective (sum of artificials)
    let mut cost = vec![0.0; width];
    for row in &t {
        for j in 0..cols {
            cost[j] -= row[j];
        }
        cost[width - 1] -= row[width - 1];
    }

    while let Some(enter) = (0..cols + rows).find(|&j| cost[j] < -eps) {
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            if t[i][enter] > eps {
                let ratio = t[i][width - 1] / t[i][enter];
                let better = ratio < best - eps
                    || (ratio <= best + eps && leave.is_some_and(|l| basis[i] < basis[l]));
                if leave.is_none() || better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        // phase one is bounded below by zero, so a pivot row always exists
        let Some(p) = leave else { break };
        let piv = t[p][enter];
        t[p].iter_mut().for_each(|v| *v /= piv);
        let prow = t[p].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != p && row[enter] != 0.0 {
                let f = row[enter];
                row.iter_mut().zip(&prow).for_each(|(v, pv)| *v -= f * pv);
            }
        }
        let f = cost[enter];
        cost.iter_mut().zip(&prow).for_each(|(v, pv)| *v -= f * pv);
        basis[p] = enter;
    }

    let infeasibility = -cost[width - 1];
    if infeasibility <= 1e-10 * scale {
        let mut w = vec![0.0; cols];
        for (i, &bv) in basis.iter().enumerate() {
            if bv < cols {
                w[bv] = t[i][width - 1].max(0.0);
            }
        }
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            w.iter_mut().for_each(|v| *v /= s);
            return Ok(Membership::Feasible { weights: w });
        }
    }

    // separate using the least-norm point of {M v - target}
    let shifted = Polytope::new(images.iter().map(|p| linalg::sub(p, target)).collect());
    let cert = min_norm_point(&shifted, MIN_NORM_TOL)?;
    let separator = linalg::scale(&cert.point, -1.0);
    let margin = shifted
        .vertices
        .iter()
        .map(|d| linalg::dot(&cert.point, d))
        .fold(f64::INFINITY, f64::min);
    Ok(Membership::Infeasible { separator, margin })
}
