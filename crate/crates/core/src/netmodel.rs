//! Static network instances, the weighted Max-Weight scheduler and the
//! discrete evolution rule
//!
//! ```text
//! Q(t+1) = Q(t) + A(t) + (R - I) min(mu(t), Q(t))
//! ```
//!
//! where `mu(t)` maximizes `Q(t)^T W (I - R) mu` over the action set.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Largest action set accepted after closure.
pub const MAX_ACTIONS: usize = 4096;

/// Absolute tolerance used to detect ties between scheduler objectives.
pub const TIE_TOL: f64 = 1e-12;

/// Lexicographic comparison of two equal-length vectors.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Smallest superset of `base` closed under zeroing any single component.
///
/// The result is sorted lexicographically ascending, so the zero vector is
/// always first and the lexicographically largest vector is last.
pub fn close_actions(base: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = base.first() else {
        return Err(Error::InvalidAction("empty action set".into()));
    };
    let n = first.len();
    for mu in base {
        if mu.len() != n {
            return Err(Error::InvalidAction(format!(
                "action {mu:?} has dimension {}, expected {n}",
                mu.len()
            )));
        }
        if let Some(v) = mu.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidAction(format!(
                "action {mu:?} has invalid component {v}"
            )));
        }
    }

    let mut out: Vec<Vec<f64>> = base.iter().map(|mu| normalize_zero(mu)).collect();
    out.sort_by(|a, b| lex_cmp(a, b));
    out.dedup();
    let mut frontier = out.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for mu in &frontier {
            for i in 0..n {
                if mu[i] != 0.0 {
                    let mut z = mu.clone();
                    z[i] = 0.0;
                    if let Err(pos) = out.binary_search_by(|p| lex_cmp(p, &z)) {
                        out.insert(pos, z.clone());
                        next.push(z);
                        if out.len() > MAX_ACTIONS {
                            return Err(Error::Config(format!(
                                "closed action set exceeds {MAX_ACTIONS} vectors"
                            )));
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    Ok(out)
}

// -0.0 and 0.0 compare unequal under total_cmp
fn normalize_zero(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x == 0.0 { 0.0 } else { x }).collect()
}

/// A non-negative workload vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueState(Vec<f64>);

impl QueueState {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if let Some(v) = q.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Config(format!("queue state has invalid entry {v}")));
        }
        Ok(Self(q))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Outcome of one scheduling decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    /// Index into [`Network::actions`].
    pub chosen: usize,
    pub objective: f64,
    /// Every maximizing action index, ascending.
    pub tied: Vec<usize>,
}

/// Network description as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub n: usize,
    pub routing: Vec<Vec<f64>>,
    pub base_actions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    routing: Vec<Vec<f64>>,
    actions: Vec<Vec<f64>>,
    weights: Vec<f64>,
    /// `(I - R) mu` per action.
    service: Vec<Vec<f64>>,
    /// `W (I - R) mu` per action; the scheduler objective is `q . weighted[i]`.
    weighted: Vec<Vec<f64>>,
    closure_added: bool,
}

impl Network {
    /// Builds a network, closing `base_actions` under component zeroing.
    pub fn new(
        routing: Vec<Vec<f64>>,
        base_actions: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = routing.len();
        if n == 0 {
            return Err(Error::Config("routing: network needs at least one queue".into()));
        }
        for (i, row) in routing.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config(format!(
                    "routing: row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Config(format!("routing: row {i} has negative entry {v}")));
            }
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if weights.len() != n {
            return Err(Error::Config(format!(
                "weights: {} entries, expected {n}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::Config(format!("weights: entry {w} is not positive")));
        }
        let actions = close_actions(&base_actions)?;
        if actions[0].len() != n {
            return Err(Error::Config(format!(
                "base_actions: dimension {} does not match n = {n}",
                actions[0].len()
            )));
        }
        let mut base_sorted: Vec<Vec<f64>> = base_actions.iter().map(|m| normalize_zero(m)).collect();
        base_sorted.sort_by(|a, b| lex_cmp(a, b));
        base_sorted.dedup();
        let closure_added = base_sorted.len() != actions.len();

        let service: Vec<Vec<f64>> = actions
            .iter()
            .map(|mu| {
                let r_mu = linalg::matvec(&routing, mu);
                linalg::sub(mu, &r_mu)
            })
            .collect();
        let weighted = service
            .iter()
            .map(|s| s.iter().zip(&weights).map(|(x, w)| x * w).collect())
            .collect();
        Ok(Self {
            n,
            routing,
            actions,
            weights,
            service,
            weighted,
            closure_added,
        })
    }

    pub fn from_config(cfg: NetworkConfig) -> Result<Self> {
        if cfg.routing.len() != cfg.n {
            return Err(Error::Config(format!(
                "routing: {} rows, but n = {}",
                cfg.routing.len(),
                cfg.n
            )));
        }
        Self::new(cfg.routing, cfg.base_actions, cfg.weights)
    }

    pub fn to_config(&self) -> NetworkConfig {
        NetworkConfig {
            n: self.n,
            routing: self.routing.clone(),
            base_actions: self.actions.clone(),
            weights: if self.is_unweighted() {
                None
            } else {
                Some(self.weights.clone())
            },
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn routing(&self) -> &[Vec<f64>] {
        &self.routing
    }

    /// Closed action set, sorted lexicographically ascending.
    pub fn actions(&self) -> &[Vec<f64>] {
        &self.actions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_unweighted(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Whether closing the base actions added vectors.
    pub fn closure_added(&self) -> bool {
        self.closure_added
    }

    /// `(I - R) mu` for action `i`.
    pub fn service(&self, i: usize) -> &[f64] {
        &self.service[i]
    }

    pub fn services(&self) -> &[Vec<f64>] {
        &self.service
    }

    /// `W (I - R) mu` for action `i`.
    pub fn weighted_service(&self, i: usize) -> &[f64] {
        &self.weighted[i]
    }

    /// Scheduler objective `q^T W (I - R) mu_i`.
    pub fn objective(&self, q: &[f64], i: usize) -> f64 {
        linalg::dot(q, &self.weighted[i])
    }

    /// Exact maximizer of the weighted objective with the lexicographically
    /// largest maximizer as tie-break.
    pub fn schedule(&self, q: &[f64]) -> ScheduleDecision {
        let values: Vec<f64> = (0..self.actions.len()).map(|i| self.objective(q, i)).collect();
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| best - **v <= TIE_TOL)
            .map(|(i, _)| i)
            .collect();
        // actions are sorted ascending, so the last tied index is lex-largest
        let chosen = *tied.last().expect("action set is non-empty");
        ScheduleDecision {
            chosen,
            objective: values[chosen],
            tied,
        }
    }

    /// Allocation-free version of [`Network::schedule`] returning only the
    /// chosen index.
    pub fn schedule_index(&self, q: &[f64]) -> usize {
        let mut best = f64::NEG_INFINITY;
        for i in 0..self.weighted.len() {
            best = best.max(self.objective(q, i));
        }
        (0..self.weighted.len())
            .rev()
            .find(|&i| best - self.objective(q, i) <= TIE_TOL)
            .expect("action set is non-empty")
    }

    /// One slot of the evolution rule. Returns the new state.
    pub fn step(&self, q: &[f64], arrivals: &[f64]) -> Vec<f64> {
        let mut out = q.to_vec();
        self.step_in_place(&mut out, arrivals);
        out
    }

    /// In-place evolution step; returns the index of the action used.
    pub fn step_in_place(&self, q: &mut [f64], arrivals: &[f64]) -> usize {
        debug_assert_eq!(q.len(), self.n);
        let chosen = self.schedule_index(q);
        let mu = &self.actions[chosen];
        let n = self.n;
        // served = min(mu, q)
        let mut served = [0.0f64; 16];
        let mut served_vec;
        let served: &mut [f64] = if n <= 16 {
            &mut served[..n]
        } else {
            served_vec = vec![0.0; n];
            &mut served_vec
        };
        for i in 0..n {
            served[i] = mu[i].min(q[i]);
        }
        for i in 0..n {
            let routed_in: f64 = (0..n).map(|j| self.routing[i][j] * served[j]).sum();
            let v = q[i] + arrivals[i] + routed_in - served[i];
            debug_assert!(v >= -1e-9, "negative workload {v} at queue {i}");
            q[i] = v.max(0.0);
        }
        chosen
    }

    /// Equivalent unit-weight instance together with the state transform
    /// `x -> W^{1/2} x`.
    pub fn wmw_to_mw(&self) -> (Network, WeightTransform) {
        let tr = WeightTransform::new(&self.weights);
        let n = self.n;
        let routing = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| tr.sqrt_w[i] * self.routing[i][j] / tr.sqrt_w[j])
                    .collect()
            })
            .collect();
        let actions = self.actions.iter().map(|mu| tr.forward(mu)).collect();
        let net = Network::new(routing, actions, None)
            .expect("positive diagonal scaling preserves validity");
        (net, tr)
    }
}

/// Diagonal change of coordinates `x -> W^{1/2} x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTransform {
    sqrt_w: Vec<f64>,
}

impl WeightTransform {
    pub fn new(weights: &[f64]) -> Self {
        Self {
            sqrt_w: weights.iter().map(|w| w.sqrt()).collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.sqrt_w).map(|(v, s)| v * s).collect()
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.sqrt_w).map(|(v, s)| v / s).collect()
    }
}

/// Queue path produced by [`simulate`].
#[derive(Debug, Clone)]
pub struct DiscreteTrajectory {
    /// `Q(0), ..., Q(K)`.
    pub states: Vec<Vec<f64>>,
    /// Action index chosen at `Q(k)` for `k < K`.
    pub decisions: Vec<usize>,
}

/// Runs the evolution rule from `q0` over the given arrival sequence.
pub fn simulate(net: &Network, q0: &[f64], arrivals: &[Vec<f64>]) -> DiscreteTrajectory {
    let mut states = Vec::with_capacity(arrivals.len() + 1);
    let mut decisions = Vec::with_capacity(arrivals.len());
    let mut q = q0.to_vec();
    states.push(q.clone());
    for a in arrivals {
        decisions.push(net.step_in_place(&mut q, a));
        states.push(q.clone());
    }
    DiscreteTrajectory { states, decisions }
}

/// Worked two-queue instances used across tests and examples.
pub mod instances {
    use super::Network;

    /// Two single-hop queues, one served per slot.
    pub fn e1() -> Network {
        Network::new(
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            None,
        )
        .unwrap()
    }

    /// Tandem: work served at queue 1 moves to queue 2.
    pub fn e2() -> Network {
        Network::new(
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            None,
        )
        .unwrap()
    }

    pub fn with_weights(net: &Network, weights: Vec<f64>) -> Network {
        Network::new(net.routing().to_vec(), net.actions().to_vec(), Some(weights)).unwrap()
    }
}
