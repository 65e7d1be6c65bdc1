//! Fluid model of a Max-Weight network as the subgradient flow of the
//! piecewise-linear potential
//!
//! ```text
//! Phi(x)        = max_{mu in S} ((I - R) mu)^T x
//! Phi_lambda(x) = Phi(x) - lambda^T x
//! ```
//!
//! The fluid trajectory moves with the least-norm element of
//! `conv{lambda + (R - I) mu : mu in S(q)}`, where `S(q)` is the set of
//! maximizing actions. Because the action set is closed under zeroing single
//! components, the maximizers at the boundary of the orthant already contain
//! the partial-service vectors, so no separate idling (reflection) term is
//! carried: it is identically zero in this representation.
//!
//! Weighted networks are integrated in the coordinates `x = W^{1/2} q`, where
//! they become plain Max-Weight networks, and mapped back.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    lp_membership, min_norm_point, project_with, HalfSpace, Membership, Polyhedron, Polytope,
    ProjectOptions, MIN_NORM_TOL,
};
use crate::linalg;
use crate::netmodel::{Network, WeightTransform};
use crate::report::{fmt_f64, CsvTable};
use crate::rng::CounterRng;

/// Drift norms at or below this are treated as zero.
pub const ABSORB_TOL: f64 = 1e-11;
/// Maximum number of drift changes before integration is abandoned.
pub const MAX_EVENTS: usize = 1_000_000;
/// Relative perturbation used to tell boundary from interior rates.
pub const CAPACITY_EPS: f64 = 1e-6;

fn tie_tol(scale: f64) -> f64 {
    1e-12 * scale.abs().max(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialEval {
    /// `Phi(x)`
    pub value: f64,
    /// Maximizing action indices, ascending.
    pub maximizers: Vec<usize>,
    /// `Phi(x) - lambda^T W x`
    pub lambda_value: f64,
}

/// Evaluates the potential and its maximizers. For weighted networks the
/// scheduler objective `W (I - R) mu` replaces `(I - R) mu`.
pub fn potential(net: &Network, lambda: &[f64], x: &[f64]) -> PotentialEval {
    let values: Vec<f64> = (0..net.actions().len()).map(|i| net.objective(x, i)).collect();
    let value = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = tie_tol(value);
    let maximizers = (0..values.len()).filter(|&i| value - values[i] <= tol).collect();
    let wl: Vec<f64> = lambda.iter().zip(net.weights()).map(|(l, w)| l * w).collect();
    PotentialEval {
        value,
        maximizers,
        lambda_value: value - linalg::dot(&wl, x),
    }
}

/// Drift of the fluid solution at a state, with the convex weights that
/// certify it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCertificate {
    /// `q'` in work per unit time.
    pub drift: Vec<f64>,
    /// Active action indices `S(q)`.
    pub active: Vec<usize>,
    /// Convex weights over `active`: `drift = lambda + (R - I) sum_k s_k mu_k`.
    pub coefficients: Vec<f64>,
}

impl DriftCertificate {
    pub fn is_zero(&self) -> bool {
        linalg::norm(&self.drift) <= ABSORB_TOL
    }
}

/// Plain Max-Weight view of a network plus the change of coordinates.
struct System {
    net: Network,
    transform: Option<WeightTransform>,
    /// Arrival rate in inner coordinates.
    lambda: Vec<f64>,
}

impl System {
    fn new(net: &Network, lambda: &[f64]) -> Result<Self> {
        if lambda.len() != net.n() {
            return Err(Error::Config(format!(
                "lambda has {} entries, network has {} queues",
                lambda.len(),
                net.n()
            )));
        }
        if lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::Config(format!("lambda {lambda:?} must be non-negative")));
        }
        if net.is_unweighted() {
            Ok(Self {
                net: net.clone(),
                transform: None,
                lambda: lambda.to_vec(),
            })
        } else {
            let (mw, tr) = net.wmw_to_mw();
            let lambda = tr.forward(lambda);
            Ok(Self {
                net: mw,
                transform: Some(tr),
                lambda,
            })
        }
    }

    fn inner(&self, x: &[f64]) -> Vec<f64> {
        match &self.transform {
            Some(t) => t.forward(x),
            None => x.to_vec(),
        }
    }

    fn outer(&self, x: &[f64]) -> Vec<f64> {
        match &self.transform {
            Some(t) => t.inverse(x),
            None => x.to_vec(),
        }
    }

    fn values(&self, q: &[f64]) -> Vec<f64> {
        self.net.services().iter().map(|s| linalg::dot(s, q)).collect()
    }

    /// Active set at `q` (ties within tolerance) plus `forced`.
    fn active_set(&self, q: &[f64], forced: &[usize]) -> (Vec<usize>, f64) {
        let values = self.values(q);
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = tie_tol(best.abs().max(linalg::norm(q)));
        let mut active: Vec<usize> = (0..values.len())
            .filter(|&i| best - values[i] <= tol || forced.contains(&i))
            .collect();
        active.dedup();
        (active, best)
    }

    /// Least-norm drift in inner coordinates.
    fn drift(&self, q: &[f64], forced: &[usize]) -> Result<DriftCertificate> {
        let (active, _) = self.active_set(q, forced);
        let vertices: Vec<Vec<f64>> = active
            .iter()
            .map(|&i| linalg::sub(&self.lambda, self.net.service(i)))
            .collect();
        let cert = min_norm_point(&Polytope::new(vertices), MIN_NORM_TOL)?;
        Ok(DriftCertificate {
            drift: cert.point,
            active,
            coefficients: cert.coefficients,
        })
    }

    fn to_outer_cert(&self, cert: DriftCertificate) -> DriftCertificate {
        DriftCertificate {
            drift: self.outer(&cert.drift),
            ..cert
        }
    }
}

/// Least-norm element of `{lambda + (R - I) u : u in conv S(q)}`.
pub fn fluid_drift(net: &Network, lambda: &[f64], q: &[f64]) -> Result<DriftCertificate> {
    if q.iter().any(|v| *v < 0.0) {
        return Err(Error::Config(format!("state {q:?} is not non-negative")));
    }
    let sys = System::new(net, lambda)?;
    let cert = sys.drift(&sys.inner(q), &[])?;
    Ok(sys.to_outer_cert(cert))
}

/// Exact piecewise-linear fluid solution.
#[derive(Debug, Clone, Serialize)]
pub struct FluidTrajectory {
    /// Breakpoint times, strictly increasing, starting at 0.
    pub times: Vec<f64>,
    /// States at the breakpoints.
    pub states: Vec<Vec<f64>>,
    /// `segments[j]` holds the drift on `[times[j], times[j+1]]`.
    pub segments: Vec<DriftCertificate>,
    /// Reached a state with zero drift; the state is constant afterwards.
    pub absorbed: bool,
    pub horizon: f64,
}

impl FluidTrajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Time at which the trajectory became stationary, if it did.
    pub fn absorption_time(&self) -> Option<f64> {
        self.absorbed.then(|| self.end_time())
    }

    /// State at time `t`. Beyond the last breakpoint the final state is
    /// returned, which is exact once absorbed; otherwise times past the
    /// horizon are clamped.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.state_into(t, self.segment_index(t), &mut out);
        out
    }

    fn segment_index(&self, t: f64) -> usize {
        // index j with times[j] <= t < times[j+1]
        match self.times.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(j) => j,
            Err(j) => j.saturating_sub(1),
        }
    }

    fn state_into(&self, t: f64, j: usize, out: &mut [f64]) {
        if j >= self.segments.len() {
            out.copy_from_slice(self.states.last().unwrap());
            return;
        }
        let dt = (t - self.times[j]).max(0.0);
        let v = &self.segments[j].drift;
        for k in 0..out.len() {
            out[k] = (self.states[j][k] + dt * v[k]).max(0.0);
        }
    }

    /// Sequential evaluator for non-decreasing query times.
    pub fn cursor(&self) -> FluidCursor<'_> {
        FluidCursor { traj: self, seg: 0 }
    }

    /// `t, q_1..q_n, v_1..v_n` per breakpoint; `v` is the drift on the
    /// segment starting there (zero once absorbed).
    pub fn to_csv(&self) -> CsvTable {
        let n = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("q_{i}")));
        header.extend((1..=n).map(|i| format!("v_{i}")));
        let mut table = CsvTable::new(header);
        for (j, (t, q)) in self.times.iter().zip(&self.states).enumerate() {
            let v = match self.segments.get(j) {
                Some(s) => s.drift.clone(),
                None if self.absorbed => vec![0.0; n],
                None => self.segments.last().map_or(vec![0.0; n], |s| s.drift.clone()),
            };
            let mut row = vec![fmt_f64(*t)];
            row.extend(q.iter().map(|x| fmt_f64(*x)));
            row.extend(v.iter().map(|x| fmt_f64(*x)));
            table.push(row);
        }
        table
    }
}

pub struct FluidCursor<'a> {
    traj: &'a FluidTrajectory,
    seg: usize,
}

impl FluidCursor<'_> {
    /// State at `t`; `t` must not decrease between calls.
    pub fn state_into(&mut self, t: f64, out: &mut [f64]) {
        let times = &self.traj.times;
        while self.seg + 1 < times.len() && times[self.seg + 1] <= t {
            self.seg += 1;
        }
        self.traj.state_into(t, self.seg, out);
    }
}

/// Integrates the fluid model exactly on `[0, horizon]`.
///
/// On each segment the drift is the least-norm drift at its start. The next
/// breakpoint is the earliest time at which an inactive action's objective
/// catches up with the active maximum (a linear equation in `t`), or at which
/// a queue empties. Consecutive segments with the same drift are merged.
pub fn integrate_fluid(
    net: &Network,
    lambda: &[f64],
    q0: &[f64],
    horizon: f64,
) -> Result<FluidTrajectory> {
    if !(horizon > 0.0) {
        return Err(Error::Config(format!("horizon {horizon} must be positive")));
    }
    if q0.len() != net.n() || q0.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Config(format!("initial state {q0:?} is invalid")));
    }
    let sys = System::new(net, lambda)?;
    let n = net.n();
    let mut q = sys.inner(q0);
    let mut t = 0.0f64;
    let mut times = vec![0.0];
    let mut states = vec![q.clone()];
    let mut segments: Vec<DriftCertificate> = Vec::new();
    let mut absorbed = false;
    let mut forced: Vec<usize> = Vec::new();
    let mut events = 0usize;

    loop {
        let cert = sys.drift(&q, &forced)?;
        if cert.is_zero() {
            absorbed = true;
            break;
        }
        let v = &cert.drift;
        let values = sys.values(&q);
        let best = cert
            .active
            .iter()
            .map(|&i| values[i])
            .fold(f64::NEG_INFINITY, f64::max);
        // slope of the active maximum along v
        let top_slope = cert
            .active
            .iter()
            .zip(&cert.coefficients)
            .filter(|(_, c)| **c > 0.0)
            .map(|(&i, _)| linalg::dot(sys.net.service(i), v))
            .fold(f64::NEG_INFINITY, f64::max);

        let mut tau = f64::INFINITY;
        // (time, Some(action)) for a new maximizer, (time, None) for an emptying queue
        let mut hits: Vec<(f64, Option<usize>, usize)> = Vec::new();
        for (i, &value) in values.iter().enumerate() {
            if cert.active.contains(&i) {
                continue;
            }
            let slope = linalg::dot(sys.net.service(i), v);
            let closing = slope - top_slope;
            if closing > 1e-15 * (1.0 + slope.abs()) {
                let root = (best - value).max(0.0) / closing;
                if root > 1e-12 {
                    hits.push((root, Some(i), 0));
                    tau = tau.min(root);
                }
            }
        }
        for k in 0..n {
            if v[k] < 0.0 && q[k] > 0.0 {
                let root = q[k] / -v[k];
                if root > 1e-12 {
                    hits.push((root, None, k));
                    tau = tau.min(root);
                }
            }
        }
        hits.retain(|(root, _, _)| *root <= tau * (1.0 + 1e-9));

        let same_drift = segments
            .last()
            .is_some_and(|s| linalg::dist(&s.drift, v) <= 1e-12 * (1.0 + linalg::norm(v)));
        if same_drift {
            // continue the previous segment instead of opening a new one
            times.pop();
            states.pop();
        } else {
            segments.push(cert.clone());
        }

        let t_next = (t + tau).min(horizon);
        let dt = t_next - t;
        for k in 0..n {
            let x = q[k] + dt * v[k];
            debug_assert!(x >= -1e-9, "fluid state went negative: {x}");
            q[k] = x.max(0.0);
        }
        if t_next < horizon {
            for &(_, who, k) in &hits {
                if who.is_none() {
                    q[k] = 0.0;
                }
            }
        }
        t = t_next;
        times.push(t);
        states.push(q.clone());

        if t >= horizon {
            break;
        }
        events += 1;
        if events > MAX_EVENTS {
            return Err(Error::NumericFailure {
                message: format!("more than {MAX_EVENTS} fluid events"),
                iterations: events,
                best: sys.outer(&q),
                residual: t,
            });
        }
        forced = hits.iter().filter_map(|(_, who, _)| *who).collect();
    }

    // a trailing zero-length point can appear when absorption happens right
    // at a breakpoint; segments and times must stay aligned
    while segments.len() >= times.len() {
        segments.pop();
    }
    let states = states.iter().map(|s| sys.outer(s)).collect();
    let segments = segments.into_iter().map(|c| sys.to_outer_cert(c)).collect();
    Ok(FluidTrajectory {
        times,
        states,
        segments,
        absorbed,
        horizon,
    })
}

/// Fixed points of the fluid model:
/// `{x >= 0 : (W (I - R) mu)^T x <= (W lambda)^T x for all mu}`.
#[derive(Debug, Clone, Serialize)]
pub struct InvariantSet {
    pub lambda: Vec<f64>,
    pub poly: Polyhedron,
}

impl InvariantSet {
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.poly.contains(x, tol)
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.project_tol(x, 1e-12)
    }

    pub fn project_tol(&self, x: &[f64], tol: f64) -> Result<Vec<f64>> {
        project_with(
            &self.poly,
            x,
            ProjectOptions {
                tol,
                ..ProjectOptions::default()
            },
        )
    }

    /// `d(x, I(lambda))`; exactly zero for members.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        if self.poly.max_halfspace_distance(x) == 0.0 {
            return Ok(0.0);
        }
        Ok(linalg::dist(x, &self.project(x)?))
    }
}

/// Builds `I(lambda)`; fails when `lambda` is outside the capacity region.
pub fn invariant_set(net: &Network, lambda: &[f64]) -> Result<InvariantSet> {
    if capacity_check(net, lambda)? == Capacity::Outside {
        return Err(Error::Domain(format!(
            "lambda {lambda:?} is outside the capacity region; I(lambda) is undefined"
        )));
    }
    let n = net.n();
    let mut poly = Polyhedron::orthant(n);
    for i in 0..net.actions().len() {
        let normal: Vec<f64> = net
            .service(i)
            .iter()
            .zip(lambda)
            .zip(net.weights())
            .map(|((s, l), w)| w * (s - l))
            .collect();
        if normal.iter().any(|g| *g != 0.0) && !poly.halfspaces.iter().any(|h| h.normal == normal) {
            poly.halfspaces.push(HalfSpace::new(normal, 0.0));
        }
    }
    Ok(InvariantSet {
        lambda: lambda.to_vec(),
        poly,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Capacity {
    Interior,
    Boundary,
    Outside,
}

/// Classifies `lambda` against `(I - R) conv(S)`.
pub fn capacity_check(net: &Network, lambda: &[f64]) -> Result<Capacity> {
    if lambda.len() != net.n() || lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::Config(format!("lambda {lambda:?} must be a non-negative {}-vector", net.n())));
    }
    let m = i_minus_r(net);
    let poly = Polytope::new(net.actions().to_vec());
    if !lp_membership(lambda, &poly, &m)?.is_feasible() {
        return Ok(Capacity::Outside);
    }
    let pushed = linalg::scale(lambda, 1.0 + CAPACITY_EPS);
    if lp_membership(&pushed, &poly, &m)?.is_feasible() {
        Ok(Capacity::Interior)
    } else {
        Ok(Capacity::Boundary)
    }
}

fn i_minus_r(net: &Network) -> Vec<Vec<f64>> {
    let n = net.n();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| f64::from(u8::from(i == j)) - net.routing()[i][j])
                .collect()
        })
        .collect()
}

/// Direction `v = W (I - R)(mu - nu)` orthogonal to `I(lambda)`, built from
/// two distinct actions of a convex decomposition of `lambda`.
pub fn collapse_direction(net: &Network, lambda: &[f64]) -> Result<Vec<f64>> {
    let m = i_minus_r(net);
    let all = Polytope::new(net.actions().to_vec());
    let weights = match lp_membership(lambda, &all, &m)? {
        Membership::Feasible { weights } => weights,
        Membership::Infeasible { .. } => {
            return Err(Error::Domain(format!("lambda {lambda:?} is outside the capacity region")))
        }
    };
    let support: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 1e-12).collect();
    let distinct = |a: usize, b: usize| linalg::dist(net.service(a), net.service(b)) > 1e-12;

    let mut pair = None;
    'outer: for (x, &a) in support.iter().enumerate() {
        for &b in &support[x + 1..] {
            if distinct(a, b) {
                pair = Some((a, b));
                break 'outer;
            }
        }
    }
    if pair.is_none() {
        // every support image equals lambda; look for a decomposition that
        // avoids actions mapping onto lambda itself
        let others: Vec<usize> = (0..net.actions().len())
            .filter(|&i| linalg::dist(net.service(i), lambda) > 1e-12)
            .collect();
        if !others.is_empty() {
            let sub = Polytope::new(others.iter().map(|&i| net.actions()[i].clone()).collect());
            if let Membership::Feasible { weights } = lp_membership(lambda, &sub, &m)? {
                let supp: Vec<usize> = (0..weights.len())
                    .filter(|&k| weights[k] > 1e-12)
                    .map(|k| others[k])
                    .collect();
                'o2: for (x, &a) in supp.iter().enumerate() {
                    for &b in &supp[x + 1..] {
                        if distinct(a, b) {
                            pair = Some((a, b));
                            break 'o2;
                        }
                    }
                }
            }
        }
    }
    let (a, b) = pair.ok_or_else(|| {
        Error::ExtremePoint(format!("no two distinct actions decompose lambda {lambda:?}"))
    })?;
    let v: Vec<f64> = net
        .weighted_service(a)
        .iter()
        .zip(net.weighted_service(b))
        .map(|(x, y)| x - y)
        .collect();

    // check orthogonality on sampled members of I(lambda)
    let iset = invariant_set(net, lambda)?;
    let mut rng = CounterRng::for_stream(0x5EED, 0);
    for _ in 0..32 {
        let x: Vec<f64> = (0..net.n()).map(|_| 2.0 * rng.next_f64()).collect();
        let p = iset.project(&x)?;
        let err = linalg::dot(&v, &p).abs();
        if err > 1e-9 * (1.0 + linalg::norm(&v) * linalg::norm(&p)) {
            return Err(Error::Geometry(format!(
                "direction {v:?} is not orthogonal to I(lambda) at {p:?} (residual {err:e})"
            )));
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct AttractionReport {
    /// Minimum per-segment decay rate of `d(q(t), I(lambda))` over all
    /// segments that start off the set; infinite when there are none.
    pub alpha_hat: f64,
    /// Per start: first breakpoint time with `d <= 1e-8`.
    pub absorption_times: Vec<Option<f64>>,
    /// Per start: minimum decay rate on that trajectory.
    pub min_slopes: Vec<f64>,
    pub initial_distances: Vec<f64>,
}

/// Measures how fast fluid trajectories approach `I(lambda)`.
pub fn attraction_rate(
    net: &Network,
    lambda: &[f64],
    starts: &[Vec<f64>],
    horizon: f64,
) -> Result<AttractionReport> {
    const ON_SET: f64 = 1e-8;
    let iset = invariant_set(net, lambda)?;
    let mut alpha = f64::INFINITY;
    let mut absorption_times = Vec::with_capacity(starts.len());
    let mut min_slopes = Vec::with_capacity(starts.len());
    let mut initial_distances = Vec::with_capacity(starts.len());
    for q0 in starts {
        let traj = integrate_fluid(net, lambda, q0, horizon)?;
        let d: Vec<f64> = traj
            .states
            .iter()
            .map(|s| iset.distance(s))
            .collect::<Result<_>>()?;
        initial_distances.push(d[0]);
        let mut slope_min = f64::INFINITY;
        for j in 0..traj.segments.len() {
            if d[j] > ON_SET {
                let s = (d[j] - d[j + 1]) / (traj.times[j + 1] - traj.times[j]);
                slope_min = slope_min.min(s);
            }
        }
        alpha = alpha.min(slope_min);
        min_slopes.push(slope_min);
        absorption_times.push(d.iter().position(|&x| x <= ON_SET).map(|j| traj.times[j]));
    }
    Ok(AttractionReport {
        alpha_hat: alpha,
        absorption_times,
        min_slopes,
        initial_distances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::instances::{e1, e2, with_weights};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        linalg::dist(a, b) <= tol
    }

    #[test]
    fn potential_examples() {
        let p = potential(&e1(), &[0.0, 0.0], &[3.0, 1.0]);
        assert_eq!(p.value, 3.0);
        assert_eq!(p.maximizers.len(), 1);
        assert_eq!(e1().actions()[p.maximizers[0]], vec![1.0, 0.0]);

        let p = potential(&e1(), &[0.0, 0.0], &[2.0, 2.0]);
        assert_eq!(p.value, 2.0);
        let acts: Vec<_> = p.maximizers.iter().map(|&i| e1().actions()[i].clone()).collect();
        assert!(acts.contains(&vec![1.0, 0.0]) && acts.contains(&vec![0.0, 1.0]));
        assert_eq!(acts.len(), 2);

        let p = potential(&e2(), &[0.0, 0.0], &[0.0, 3.0]);
        assert_eq!(p.value, 3.0);
        assert_eq!(e2().actions()[p.maximizers[0]], vec![0.0, 1.0]);
        assert_eq!(p.maximizers.len(), 1);

        let p = potential(&e1(), &[0.5, 0.5], &[3.0, 1.0]);
        assert_eq!(p.lambda_value, 1.0);
    }

    #[test]
    fn drift_examples() {
        let c = fluid_drift(&e1(), &[0.0, 0.0], &[3.0, 1.0]).unwrap();
        assert_eq!(c.drift, vec![-1.0, 0.0]);
        assert_eq!(c.active.len(), 1);
        assert_eq!(c.coefficients, vec![1.0]);

        let c = fluid_drift(&e1(), &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!(close(&c.drift, &[-0.5, -0.5], 1e-15));

        let c = fluid_drift(&e1(), &[0.5, 0.5], &[1.0, 1.0]).unwrap();
        assert!(close(&c.drift, &[0.0, 0.0], 1e-15));
        assert!(c.coefficients.iter().all(|s| (s - 0.5).abs() < 1e-15));
    }

    #[test]
    fn drift_rejects_negative_state() {
        assert!(fluid_drift(&e1(), &[0.0, 0.0], &[-1.0, 1.0]).is_err());
    }

    #[test]
    fn integrate_e1_drain() {
        let tr = integrate_fluid(&e1(), &[0.0, 0.0], &[3.0, 1.0], 5.0).unwrap();
        assert_eq!(tr.times.len(), 3);
        assert!((tr.times[1] - 2.0).abs() < 1e-9 && (tr.times[2] - 4.0).abs() < 1e-9);
        assert!(close(&tr.states[1], &[1.0, 1.0], 1e-9));
        assert!(close(&tr.states[2], &[0.0, 0.0], 1e-9));
        assert!(tr.absorbed);
        assert_eq!(tr.absorption_time(), Some(tr.times[2]));
        assert!(close(&tr.state_at(4.5), &[0.0, 0.0], 1e-12));
        assert!(close(&tr.state_at(3.0), &[0.5, 0.5], 1e-9));
    }

    #[test]
    fn integrate_e1_boundary_rate() {
        let tr = integrate_fluid(&e1(), &[0.5, 0.5], &[3.0, 1.0], 5.0).unwrap();
        assert_eq!(tr.times.len(), 2);
        assert!((tr.times[1] - 2.0).abs() < 1e-9);
        assert!(close(&tr.states[1], &[2.0, 2.0], 1e-9));
        assert!(tr.absorbed);
    }

    #[test]
    fn integrate_e2_downstream_drain() {
        let tr = integrate_fluid(&e2(), &[0.0, 0.0], &[0.0, 3.0], 5.0).unwrap();
        assert_eq!(tr.times.len(), 2);
        assert!((tr.times[1] - 3.0).abs() < 1e-9);
        assert!(close(&tr.segments[0].drift, &[0.0, -1.0], 1e-12));
        assert!(tr.states.iter().all(|s| s[0] == 0.0));
        assert!(tr.absorbed);
    }

    #[test]
    fn integrate_stops_at_horizon() {
        // outside the capacity region the fluid grows forever
        let tr = integrate_fluid(&e1(), &[0.8, 0.8], &[1.0, 0.0], 3.0).unwrap();
        assert!(!tr.absorbed);
        assert_eq!(tr.end_time(), 3.0);
        let last = tr.states.last().unwrap();
        // total work grows at 0.6 per unit time
        assert!((last[0] + last[1] - (1.0 + 3.0 * 0.6)).abs() < 1e-9);
    }

    #[test]
    fn weighted_fluid_matches_transform() {
        let net = with_weights(&e1(), vec![4.0, 1.0]);
        // weighted tie at 4 q1 = q2
        let tr = integrate_fluid(&net, &[0.0, 0.0], &[1.0, 1.0], 10.0).unwrap();
        assert!(tr.absorbed);
        // serve queue 2 alone until 4 q1 = q2 fails immediately: 4 > 1, so queue 1 first
        assert!(close(&tr.segments[0].drift, &[-1.0, 0.0], 1e-12));
        let t1 = tr.times[1];
        let q1 = &tr.states[1];
        assert!((4.0 * q1[0] - q1[1]).abs() < 1e-9, "{q1:?} at {t1}");
    }

    #[test]
    fn invariant_set_examples() {
        let i = invariant_set(&e1(), &[0.5, 0.5]).unwrap();
        assert!(i.contains(&[3.0, 3.0], 1e-12));
        assert!(!i.contains(&[3.0, 2.0], 1e-6));
        let p = i.project(&[3.0, 1.0]).unwrap();
        assert!(close(&p, &[2.0, 2.0], 1e-9));

        let i = invariant_set(&e1(), &[0.2, 0.2]).unwrap();
        assert!(i.contains(&[0.0, 0.0], 0.0));
        assert!(i.distance(&[1.0, 1.0]).unwrap() > 1.0);
        assert!(close(&i.project(&[1.0, 2.0]).unwrap(), &[0.0, 0.0], 1e-9));

        let i = invariant_set(&e2(), &[0.5, 0.0]).unwrap();
        assert!(i.contains(&[2.0, 1.0], 1e-12));
        assert!(close(&i.project(&[4.0, 0.0]).unwrap(), &[3.2, 1.6], 1e-9));
    }

    #[test]
    fn invariant_set_outside_is_domain_error() {
        assert!(matches!(invariant_set(&e1(), &[0.8, 0.8]), Err(Error::Domain(_))));
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(capacity_check(&e1(), &[0.2, 0.3]).unwrap(), Capacity::Interior);
        assert_eq!(capacity_check(&e1(), &[0.5, 0.5]).unwrap(), Capacity::Boundary);
        assert_eq!(capacity_check(&e1(), &[0.8, 0.8]).unwrap(), Capacity::Outside);
        assert_eq!(capacity_check(&e2(), &[0.5, 0.0]).unwrap(), Capacity::Boundary);
        assert_eq!(capacity_check(&e1(), &[0.0, 0.0]).unwrap(), Capacity::Interior);
    }

    #[test]
    fn collapse_examples() {
        let v = collapse_direction(&e1(), &[0.5, 0.5]).unwrap();
        assert!(close(&v, &[1.0, -1.0], 1e-12) || close(&v, &[-1.0, 1.0], 1e-12));
        let v = collapse_direction(&e2(), &[0.5, 0.0]).unwrap();
        assert!(close(&v, &[1.0, -2.0], 1e-12) || close(&v, &[-1.0, 2.0], 1e-12));
        assert!(matches!(
            collapse_direction(&e1(), &[1.0, 0.0]),
            Err(Error::ExtremePoint(_))
        ));
    }

    #[test]
    fn attraction_examples() {
        let rep = attraction_rate(&e1(), &[0.5, 0.5], &[vec![3.0, 1.0]], 10.0).unwrap();
        assert!((rep.alpha_hat - 0.5f64.sqrt()).abs() < 1e-9);
        assert!((rep.absorption_times[0].unwrap() - 2.0).abs() < 1e-9);

        let rep = attraction_rate(&e1(), &[0.0, 0.0], &[vec![3.0, 1.0]], 10.0).unwrap();
        assert!((rep.initial_distances[0] - 10f64.sqrt()).abs() < 1e-9);
        assert!((rep.absorption_times[0].unwrap() - 4.0).abs() < 1e-9);
        assert!((rep.alpha_hat - 0.5f64.sqrt()).abs() < 1e-9);

        let rep = attraction_rate(&e1(), &[0.5, 0.5], &[vec![1.0, 1.0]], 10.0).unwrap();
        assert_eq!(rep.alpha_hat, f64::INFINITY);
        assert_eq!(rep.absorption_times[0], Some(0.0));
    }

    fn euler(net: &Network, lambda: &[f64], q0: &[f64], horizon: f64, h: f64) -> Vec<(f64, Vec<f64>)> {
        let mut q = q0.to_vec();
        let mut out = vec![(0.0, q.clone())];
        let steps = (horizon / h).round() as usize;
        for k in 1..=steps {
            let v = fluid_drift(net, lambda, &q).unwrap().drift;
            for i in 0..q.len() {
                q[i] = (q[i] + h * v[i]).max(0.0);
            }
            out.push((k as f64 * h, q.clone()));
        }
        out
    }

    #[test]
    fn exact_matches_euler_oracle() {
        let cases: Vec<(Network, Vec<f64>, Vec<f64>)> = vec![
            (e1(), vec![0.5, 0.5], vec![3.0, 1.0]),
            (e1(), vec![0.3, 0.2], vec![3.0, 1.0]),
            (e2(), vec![0.3, 0.1], vec![1.0, 2.0]),
            (e2(), vec![0.5, 0.0], vec![4.0, 0.0]),
            (with_weights(&e2(), vec![2.0, 1.0]), vec![0.2, 0.1], vec![0.5, 3.0]),
        ];
        let h = 1e-4;
        for (net, lambda, q0) in cases {
            let exact = integrate_fluid(&net, &lambda, &q0, 5.0).unwrap();
            let approx = euler(&net, &lambda, &q0, 5.0, h);
            let err = approx
                .iter()
                .step_by(100)
                .map(|(t, q)| linalg::dist(q, &exact.state_at(*t)))
                .fold(0.0, f64::max);
            assert!(err <= 10.0 * h, "{lambda:?} {q0:?}: {err}");
        }
    }

    #[test]
    fn potential_decreases_between_breakpoints() {
        let net = e2();
        let lambda = [0.3, 0.1];
        let tr = integrate_fluid(&net, &lambda, &[1.0, 2.0], 10.0).unwrap();
        for j in 0..tr.segments.len() {
            let a = potential(&net, &lambda, &tr.states[j]).lambda_value;
            let b = potential(&net, &lambda, &tr.states[j + 1]).lambda_value;
            let dt = tr.times[j + 1] - tr.times[j];
            let rate = linalg::dot(&tr.segments[j].drift, &tr.segments[j].drift);
            assert!(b <= a + 1e-12);
            assert!((a - b - rate * dt).abs() <= 1e-9 * (1.0 + a.abs()), "segment {j}");
        }
    }

    #[test]
    fn csv_export() {
        let tr = integrate_fluid(&e1(), &[0.0, 0.0], &[3.0, 1.0], 5.0).unwrap();
        let csv = tr.to_csv().render();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,q_1,q_2,v_1,v_2");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,3,1,-1,0"));
        assert!(lines[3].ends_with(",0,0"));
    }
}
