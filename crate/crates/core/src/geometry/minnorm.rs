//! Wolfe's active-set algorithm for the least-norm point of a polytope.

use serde::Serialize;

use super::Polytope;
use crate::error::{Error, Result};
use crate::linalg;

pub const MIN_NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinNormCertificate {
    pub point: Vec<f64>,
    /// Convex weights over the supplied vertices, in input order.
    pub coefficients: Vec<f64>,
}

impl MinNormCertificate {
    /// `min_v <d*, v> - |d*|^2`; non-negative up to tolerance at an optimum.
    pub fn optimality_gap(&self, vertices: &[Vec<f64>]) -> f64 {
        let nn = linalg::dot(&self.point, &self.point);
        vertices
            .iter()
            .map(|v| linalg::dot(&self.point, v) - nn)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Least-norm point of `conv(P.vertices)` with its convex weights.
///
/// Wolfe's method keeps an affinely independent "corral" of vertices and
/// alternates between adding the vertex most violating the optimality
/// condition and moving towards the affine minimizer of the corral.
pub fn min_norm_point(poly: &Polytope, tol: f64) -> Result<MinNormCertificate> {
    let pts = &poly.vertices;
    let m = pts.len();
    let n = pts[0].len();
    let max_sq = pts
        .iter()
        .map(|p| linalg::dot(p, p))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let cap = (10 * m * m).max(100);

    let start = (0..m)
        .min_by(|&i, &j| linalg::dot(&pts[i], &pts[i]).total_cmp(&linalg::dot(&pts[j], &pts[j])))
        .unwrap();
    let mut corral: Vec<usize> = vec![start];
    let mut weights: Vec<f64> = vec![1.0];
    let mut x = pts[start].clone();

    let combine = |corral: &[usize], w: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &wi) in corral.iter().zip(w) {
            for k in 0..n {
                out[k] += wi * pts[i][k];
            }
        }
        out
    };

    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > cap {
            return Err(Error::NumericFailure {
                message: "least-norm point did not converge".into(),
                iterations,
                residual: linalg::norm(&x),
                best: x,
            });
        }
        // major cycle: most violating vertex
        let xx = linalg::dot(&x, &x);
        let (j, best) = (0..m)
            .map(|j| (j, linalg::dot(&x, &pts[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if best >= xx - tol * max_sq || corral.contains(&j) {
            break;
        }
        corral.push(j);
        weights.push(0.0);

        // minor cycles
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::NumericFailure {
                    message: "least-norm point did not converge".into(),
                    iterations,
                    residual: linalg::norm(&x),
                    best: x,
                });
            }
            let alpha = match affine_minimizer(pts, &corral) {
                Some(a) => a,
                None => {
                    // affinely dependent corral: drop the newest point
                    corral.pop();
                    weights.pop();
                    break;
                }
            };
            if alpha.iter().all(|&a| a > 1e-14) {
                weights = alpha;
                x = combine(&corral, &weights);
                break;
            }
            // step from weights towards alpha until a weight hits zero
            let mut theta = 1.0f64;
            for (w, a) in weights.iter().zip(&alpha) {
                if *a <= 1e-14 && w - a > 0.0 {
                    theta = theta.min(w / (w - a));
                }
            }
            for (w, a) in weights.iter_mut().zip(&alpha) {
                *w = (1.0 - theta) * *w + theta * a;
            }
            let mut k = 0;
            while k < corral.len() {
                if weights[k] <= 1e-14 {
                    corral.remove(k);
                    weights.remove(k);
                } else {
                    k += 1;
                }
            }
            let s: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= s);
            x = combine(&corral, &weights);
        }
    }

    let mut coefficients = vec![0.0; m];
    for (&i, &w) in corral.iter().zip(&weights) {
        coefficients[i] += w;
    }
    Ok(MinNormCertificate {
        point: x,
        coefficients,
    })
}

/// Weights of the point of `aff(corral)` closest to the origin.
fn affine_minimizer(pts: &[Vec<f64>], corral: &[usize]) -> Option<Vec<f64>> {
    let k = corral.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    // minimize |p0 + B c|^2 with B = [p_i - p0]
    let p0 = &pts[corral[0]];
    let b: Vec<Vec<f64>> = corral[1..].iter().map(|&i| linalg::sub(&pts[i], p0)).collect();
    let gram: Vec<Vec<f64>> = b
        .iter()
        .map(|bi| b.iter().map(|bj| linalg::dot(bi, bj)).collect())
        .collect();
    let rhs: Vec<f64> = b.iter().map(|bi| -linalg::dot(bi, p0)).collect();
    let c = linalg::solve(gram, rhs, 1e-12)?;
    let mut alpha = Vec::with_capacity(k);
    alpha.push(1.0 - c.iter().sum::<f64>());
    alpha.extend(c);
    Some(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mnp(v: &[&[f64]]) -> MinNormCertificate {
        min_norm_point(&Polytope::new(v.iter().map(|x| x.to_vec()).collect()), MIN_NORM_TOL)
            .unwrap()
    }

    #[test]
    fn singleton() {
        let c = mnp(&[&[-1.0, 0.0]]);
        assert_eq!(c.point, vec![-1.0, 0.0]);
        assert_eq!(c.coefficients, vec![1.0]);
    }

    #[test]
    fn segment_is_exact() {
        let c = mnp(&[&[-1.0, 0.0], &[0.0, -1.0]]);
        assert_eq!(c.point, vec![-0.5, -0.5]);
        assert_eq!(c.coefficients, vec![0.5, 0.5]);
    }

    #[test]
    fn origin_inside_hull() {
        let c = mnp(&[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0]]);
        assert!(linalg::norm(&c.point) < 1e-12);
        let s: f64 = c.coefficients.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_and_collinear_vertices() {
        let c = mnp(&[&[1.0, 1.0], &[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]]);
        assert!(linalg::dist(&c.point, &[1.0, 1.0]) < 1e-12);
        let c = mnp(&[&[1.0, -1.0], &[1.0, 0.0], &[1.0, 1.0]]);
        assert!(linalg::dist(&c.point, &[1.0, 0.0]) < 1e-12);
    }

    #[test]
    fn three_dim_face() {
        // least-norm point of the triangle e1,e2,e3 is (1/3,1/3,1/3)
        let c = mnp(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]]);
        for v in &c.point {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }
}
