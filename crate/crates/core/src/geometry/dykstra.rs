//! Euclidean projection onto an intersection of half-spaces.
//!
//! Cones (all offsets zero) are projected exactly through the polar cone:
//! `P_K(x) = x - E u*` where `u* = argmin_{u >= 0} ||E u - x||` and the
//! columns of `E` are the normals. General polyhedra, and any cone case whose
//! answer fails the containment check, use Dykstra's cyclic projections.

use super::Polyhedron;
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::CounterRng;

pub(super) const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct ProjectOptions {
    /// Stop when a full cycle moves the iterate by less than this.
    pub tol: f64,
    pub max_cycles: usize,
}

impl Default for ProjectOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_cycles: 100_000,
        }
    }
}

/// Euclidean projection of `x` onto `poly`.
pub fn project(poly: &Polyhedron, x: &[f64], tol: f64) -> Result<Vec<f64>> {
    project_with(
        poly,
        x,
        ProjectOptions {
            tol,
            ..ProjectOptions::default()
        },
    )
}

pub fn project_with(poly: &Polyhedron, x: &[f64], opts: ProjectOptions) -> Result<Vec<f64>> {
    let hs: Vec<_> = poly
        .halfspaces
        .iter()
        .filter_map(|h| {
            let nn = linalg::dot(&h.normal, &h.normal);
            (nn > 0.0).then_some((h, nn))
        })
        .collect();
    if hs.iter().all(|(h, _)| h.violation(x) == 0.0) {
        return Ok(x.to_vec());
    }
    if hs.iter().all(|(h, _)| h.offset == 0.0) {
        let normals: Vec<&[f64]> = hs.iter().map(|(h, _)| h.normal.as_slice()).collect();
        if let Some(u) = nnls(&normals, x) {
            let mut p = x.to_vec();
            for (a, w) in normals.iter().zip(&u) {
                p = linalg::axpy(&p, -w, a);
            }
            let scale = 1.0 + linalg::norm(x);
            if hs.iter().all(|(h, _)| h.distance(&p) <= 1e-12 * scale) {
                return Ok(p);
            }
        }
    }
    dykstra(&hs, x, opts)
}

fn dykstra(hs: &[(&super::HalfSpace, f64)], x: &[f64], opts: ProjectOptions) -> Result<Vec<f64>> {
    let n = x.len();
    let mut cur = x.to_vec();
    let mut corrections = vec![vec![0.0; n]; hs.len()];
    let mut z = vec![0.0; n];
    for _ in 0..opts.max_cycles {
        let before = cur.clone();
        for ((h, nn), y) in hs.iter().zip(corrections.iter_mut()) {
            for k in 0..n {
                z[k] = cur[k] + y[k];
            }
            let excess = linalg::dot(&h.normal, &z) - h.offset;
            if excess > 0.0 {
                let s = excess / nn;
                for k in 0..n {
                    cur[k] = z[k] - s * h.normal[k];
                    y[k] = s * h.normal[k];
                }
            } else {
                cur.copy_from_slice(&z);
                y.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        if linalg::dist(&cur, &before) < opts.tol {
            return Ok(cur);
        }
    }
    let residual = hs.iter().map(|(h, _)| h.distance(&cur)).fold(0.0, f64::max);
    Err(Error::NumericFailure {
        message: "Dykstra projection hit the cycle cap".into(),
        iterations: opts.max_cycles,
        best: cur,
        residual,
    })
}

/// Lawson-Hanson non-negative least squares: `argmin_{u >= 0} ||E u - f||`
/// with `E` given by its columns. `None` on a singular inner solve.
fn nnls(cols: &[&[f64]], f: &[f64]) -> Option<Vec<f64>> {
    let m = cols.len();
    let mut u = vec![0.0; m];
    let mut passive = vec![false; m];
    let scale = 1.0 + linalg::norm(f);
    let gradient = |u: &[f64]| -> Vec<f64> {
        let mut r = f.to_vec();
        for (a, w) in cols.iter().zip(u) {
            r = linalg::axpy(&r, -w, a);
        }
        cols.iter().map(|a| linalg::dot(a, &r)).collect()
    };
    for _ in 0..3 * m + 10 {
        let w = gradient(&u);
        let Some(t) = (0..m)
            .filter(|&j| !passive[j] && w[j] > 1e-12 * scale * linalg::norm(cols[j]))
            .max_by(|&a, &b| w[a].total_cmp(&w[b]))
        else {
            return Some(u);
        };
        passive[t] = true;
        loop {
            let idx: Vec<usize> = (0..m).filter(|&j| passive[j]).collect();
            let gram: Vec<Vec<f64>> = idx
                .iter()
                .map(|&i| idx.iter().map(|&j| linalg::dot(cols[i], cols[j])).collect())
                .collect();
            let rhs: Vec<f64> = idx.iter().map(|&i| linalg::dot(cols[i], f)).collect();
            let z = linalg::solve(gram, rhs, 1e-12)?;
            if z.iter().all(|v| *v > 0.0) {
                for (k, &j) in idx.iter().enumerate() {
                    u[j] = z[k];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (k, &j) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(u[j] / (u[j] - z[k]));
                }
            }
            for (k, &j) in idx.iter().enumerate() {
                u[j] += alpha * (z[k] - u[j]);
                if u[j] <= 1e-15 {
                    u[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|p| *p) {
                break;
            }
        }
    }
    Some(u)
}

/// Empirical lower bound on the Hoffman-type constant `c` with
/// `d(x, P) <= c max_i d(x, H_i)`, from uniform samples in `[-5, 5]^n`.
pub fn hoffman_estimate(poly: &Polyhedron, samples: usize, seed: u64) -> Result<f64> {
    if samples < 100 {
        return Err(Error::Config(format!("samples: {samples} < 100")));
    }
    let n = poly.dim();
    let mut rng = CounterRng::for_stream(seed, 0);
    let mut best = 0.0f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..n).map(|_| 10.0 * rng.next_f64() - 5.0).collect();
        let lower = poly.max_halfspace_distance(&x);
        if lower <= 1e-12 {
            continue;
        }
        let p = project(poly, &x, 1e-12)?;
        best = best.max(linalg::dist(&x, &p) / lower);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::super::HalfSpace;
    use super::*;

    fn diag_line() -> Polyhedron {
        let mut p = Polyhedron::orthant(2);
        p.halfspaces.push(HalfSpace::new(vec![1.0, -1.0], 0.0));
        p.halfspaces.push(HalfSpace::new(vec![-1.0, 1.0], 0.0));
        p
    }

    #[test]
    fn narrow_wedge_is_exact() {
        let mut p = Polyhedron::orthant(2);
        p.halfspaces.push(HalfSpace::new(vec![-0.01, 1.0], 0.0));
        let got = project(&p, &[1.0, 5.0], 1e-12).unwrap();
        let t = 1.05 / 1.0001;
        assert!((got[0] - t).abs() < 1e-14 && (got[1] - 0.01 * t).abs() < 1e-14, "{got:?}");
        assert!(linalg::norm(&project(&p, &[-1.0, 1.0], 1e-12).unwrap()) < 1e-15);
    }

    #[test]
    fn inside_is_identity() {
        assert_eq!(project(&diag_line(), &[2.0, 2.0], 1e-9).unwrap(), vec![2.0, 2.0]);
        assert_eq!(
            project(&Polyhedron::orthant(3), &[1.0, 0.0, 2.0], 1e-9).unwrap(),
            vec![1.0, 0.0, 2.0]
        );
    }

    #[test]
    fn diagonal_example() {
        let p = project(&diag_line(), &[3.0, 1.0], 1e-12).unwrap();
        assert!(linalg::dist(&p, &[2.0, 2.0]) < 1e-9);
        assert!((linalg::dist(&p, &[3.0, 1.0]) - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn tandem_ray_example() {
        // {(2a, a)} from x1 - x2 <= x1/2 and x2 <= x1/2, intersected with the orthant
        let mut poly = Polyhedron::orthant(2);
        poly.halfspaces.push(HalfSpace::new(vec![0.5, -1.0], 0.0));
        poly.halfspaces.push(HalfSpace::new(vec![-0.5, 1.0], 0.0));
        let p = project(&poly, &[4.0, 0.0], 1e-12).unwrap();
        assert!(linalg::dist(&p, &[3.2, 1.6]) < 1e-9, "{p:?}");
        assert!((linalg::dist(&p, &[4.0, 0.0]) - 3.2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn orthant_corner_needs_corrections() {
        // plain alternating projections would also work here; Dykstra must agree
        let p = project(&Polyhedron::orthant(2), &[-1.0, -3.0], 1e-12).unwrap();
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn hoffman_single_halfspace_is_one() {
        let poly = Polyhedron::new(vec![HalfSpace::new(vec![1.0, 2.0], 1.0)]);
        let c = hoffman_estimate(&poly, 500, 3).unwrap();
        assert!((c - 1.0).abs() < 1e-9, "{c}");
    }

    #[test]
    fn hoffman_orthant_point() {
        let poly = Polyhedron::orthant(2);
        let x = [-1.0, -1.0];
        let d = poly.distance(&x).unwrap();
        assert!((d / poly.max_halfspace_distance(&x) - 2f64.sqrt()).abs() < 1e-9);
        let c = hoffman_estimate(&poly, 2000, 1).unwrap();
        assert!(c <= 2f64.sqrt() + 1e-9 && c > 1.3);
    }

    #[test]
    fn hoffman_diagonal_cone_at_least_one() {
        assert!(hoffman_estimate(&diag_line(), 1000, 9).unwrap() >= 1.0);
    }
}
