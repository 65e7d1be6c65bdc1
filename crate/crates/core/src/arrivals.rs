//! Arrival generators and the partial-sum deviation statistic.
//!
//! Every generator is a pure function of `(spec, scale r, seed)`: randomness
//! comes from [`CounterRng`] streams, one per replication.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::report::{wilson, ProportionEstimate};
use crate::rng::{mix64, CounterRng};

/// Closed-form scalar function of the scale parameter `r`, restricted to
/// `c * r^p` and `c * exp(gamma * r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosedForm {
    Power { c: f64, p: f64 },
    Exp { c: f64, gamma: f64 },
}

impl ClosedForm {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            ClosedForm::Power { c, p } => c * r.powf(p),
            ClosedForm::Exp { c, gamma } => c * (gamma * r).exp(),
        }
    }

    pub fn power(c: f64, p: f64) -> Self {
        ClosedForm::Power { c, p }
    }

    pub fn exp(c: f64, gamma: f64) -> Self {
        ClosedForm::Exp { c, gamma }
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ClosedForm::Power { c, p } => {
                if c != 1.0 {
                    write!(f, "{c}*")?;
                }
                if p == 1.0 {
                    write!(f, "r")
                } else {
                    write!(f, "r^{p}")
                }
            }
            ClosedForm::Exp { c, gamma } => {
                if c != 1.0 {
                    write!(f, "{c}*")?;
                }
                write!(f, "exp({gamma}*r)")
            }
        }
    }
}

impl FromStr for ClosedForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::Config(format!("cannot parse closed form {s:?} (expected c*r^p or c*exp(g*r))"));
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad());

        // split a leading coefficient at the first '*' outside parentheses
        let mut depth = 0;
        let mut split = None;
        for (i, ch) in s.char_indices() {
            match ch {
                '(' => depth += 1,
                ')' => depth -= 1,
                '*' if depth == 0 => {
                    split = Some(i);
                    break;
                }
                _ => {}
            }
        }
        let (c, term) = match split {
            Some(i) => (num(&s[..i])?, &s[i + 1..]),
            None => (1.0, s.as_str()),
        };
        let form = if term == "r" {
            ClosedForm::Power { c, p: 1.0 }
        } else if let Some(p) = term.strip_prefix("r^") {
            ClosedForm::Power { c, p: num(p)? }
        } else if let Some(inner) = term.strip_prefix("exp(").and_then(|t| t.strip_suffix(')')) {
            let gamma = if inner == "r" {
                1.0
            } else if let Some(g) = inner.strip_suffix("*r") {
                num(g)?
            } else {
                return Err(bad());
            };
            ClosedForm::Exp { c, gamma }
        } else if split.is_none() {
            ClosedForm::Power { c: num(term)?, p: 0.0 }
        } else {
            return Err(bad());
        };
        Ok(form)
    }
}

impl Serialize for ClosedForm {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ClosedForm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `lambda^r = lambda * (1 - c / r)`.
pub fn heavy_traffic_sequence(lambda: &[f64], c: f64, r: f64) -> Vec<f64> {
    debug_assert!(c >= 0.0 && r >= 1.0);
    linalg::scale(lambda, 1.0 - c / r)
}

/// Burst parameters of the converse construction: with probability
/// `1/h(r)` a slot brings `lambda + h~(r) w` where `h~(r) = r g(r) / h(r)`;
/// otherwise exactly `lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstSpec {
    /// Burst direction; computed from the invariant-set geometry when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    pub f: ClosedForm,
    pub g: ClosedForm,
    pub h: ClosedForm,
    /// Control run: bursts carry no extra work.
    #[serde(default)]
    pub zero_burst: bool,
}

impl BurstSpec {
    /// The default power-law family: `f = r`, `g = r^3`, `h = r^2.5`.
    pub fn power_law_default() -> Self {
        Self {
            w: None,
            f: ClosedForm::power(1.0, 1.0),
            g: ClosedForm::power(1.0, 3.0),
            h: ClosedForm::power(1.0, 2.5),
            zero_burst: false,
        }
    }

    pub fn burst_size(&self, r: f64) -> f64 {
        if self.zero_burst {
            0.0
        } else {
            r * self.g.eval(r) / self.h.eval(r)
        }
    }

    /// Evaluates the three limit requirements of the construction on a grid:
    /// `r f / h -> 0`, `h / g -> 0`, `h^2 / (r g) -> infinity`.
    pub fn check_limits(&self, grid: &[f64]) -> BurstLimitCheck {
        let rf_h: Vec<f64> = grid.iter().map(|&r| r * self.f.eval(r) / self.h.eval(r)).collect();
        let h_g: Vec<f64> = grid.iter().map(|&r| self.h.eval(r) / self.g.eval(r)).collect();
        let h2_rg: Vec<f64> = grid
            .iter()
            .map(|&r| self.h.eval(r).powi(2) / (r * self.g.eval(r)))
            .collect();
        let vanishing = |v: &[f64]| {
            v.windows(2).all(|w| w[1] < w[0]) && v.last().unwrap() / v[0] < 0.1
        };
        let exploding = |v: &[f64]| {
            v.windows(2).all(|w| w[1] > w[0]) && v.last().unwrap() / v[0] > 10.0
        };
        BurstLimitCheck {
            ok: vanishing(&rf_h) && vanishing(&h_g) && exploding(&h2_rg),
            grid: grid.to_vec(),
            rf_over_h: rf_h,
            h_over_g: h_g,
            h2_over_rg: h2_rg,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BurstLimitCheck {
    pub ok: bool,
    pub grid: Vec<f64>,
    pub rf_over_h: Vec<f64>,
    pub h_over_g: Vec<f64>,
    pub h2_over_rg: Vec<f64>,
}

/// Arrival process description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArrivalSpec {
    /// `A(t) = lambda^r` for every slot.
    Constant {
        lambda: Vec<f64>,
        /// Heavy-traffic approach rate `c` in `lambda^r = lambda (1 - c/r)`.
        #[serde(default)]
        approach: f64,
    },
    /// Independent components, each `a * Bernoulli(lambda_i^r / a)`.
    IidBounded {
        lambda: Vec<f64>,
        a: f64,
        #[serde(default)]
        approach: f64,
    },
    /// Two-state Markov chain started from its stationary law; in state `s`
    /// component `i` is `a * Bernoulli(state_means[s][i] / a)`.
    MarkovModulated {
        state_means: Vec<Vec<f64>>,
        transition: [[f64; 2]; 2],
        a: f64,
    },
    ConverseBurst { lambda: Vec<f64>, burst: BurstSpec },
}

impl ArrivalSpec {
    pub fn constant(lambda: Vec<f64>) -> Self {
        ArrivalSpec::Constant { lambda, approach: 0.0 }
    }

    pub fn iid(lambda: Vec<f64>, a: f64) -> Self {
        ArrivalSpec::IidBounded { lambda, a, approach: 0.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            ArrivalSpec::Constant { lambda, .. }
            | ArrivalSpec::IidBounded { lambda, .. }
            | ArrivalSpec::ConverseBurst { lambda, .. } => lambda.len(),
            ArrivalSpec::MarkovModulated { state_means, .. } => {
                state_means.first().map_or(0, Vec::len)
            }
        }
    }

    /// Limit mean `lambda` (before any heavy-traffic scaling or bursts).
    pub fn limit_mean(&self) -> Vec<f64> {
        match self {
            ArrivalSpec::Constant { lambda, .. }
            | ArrivalSpec::IidBounded { lambda, .. }
            | ArrivalSpec::ConverseBurst { lambda, .. } => lambda.clone(),
            ArrivalSpec::MarkovModulated { .. } => self.mean_at(1.0),
        }
    }

    /// Upper bound on a single component, when one exists.
    pub fn bound(&self) -> Option<f64> {
        match self {
            ArrivalSpec::IidBounded { a, .. } | ArrivalSpec::MarkovModulated { a, .. } => Some(*a),
            ArrivalSpec::Constant { lambda, .. } => {
                Some(lambda.iter().copied().fold(0.0, f64::max))
            }
            ArrivalSpec::ConverseBurst { .. } => None,
        }
    }

    /// Exact mean of the process at scale `r`.
    pub fn mean_at(&self, r: f64) -> Vec<f64> {
        match self {
            ArrivalSpec::Constant { lambda, approach }
            | ArrivalSpec::IidBounded { lambda, approach, .. } => {
                heavy_traffic_sequence(lambda, *approach, r)
            }
            ArrivalSpec::MarkovModulated { state_means, transition, .. } => {
                let pi0 = stationary_first(transition);
                state_means[0]
                    .iter()
                    .zip(&state_means[1])
                    .map(|(m0, m1)| pi0 * m0 + (1.0 - pi0) * m1)
                    .collect()
            }
            ArrivalSpec::ConverseBurst { lambda, burst } => {
                let w = burst.w.clone().unwrap_or_else(|| vec![0.0; lambda.len()]);
                let rate = burst.burst_size(r) / burst.h.eval(r);
                linalg::axpy(lambda, rate, &w)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_vec = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return Err(Error::Config(format!("{name}: empty vector")));
            }
            if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
                return Err(Error::Config(format!("{name}: invalid entry {x}")));
            }
            Ok(())
        };
        match self {
            ArrivalSpec::Constant { lambda, approach } => {
                check_vec("lambda", lambda)?;
                check_approach(*approach)
            }
            ArrivalSpec::IidBounded { lambda, a, approach } => {
                check_vec("lambda", lambda)?;
                check_approach(*approach)?;
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::Config(format!("a: bound {a} must be positive")));
                }
                if let Some(l) = lambda.iter().find(|l| **l > *a) {
                    return Err(Error::Config(format!(
                        "lambda: mean {l} outside [0, a] with a = {a}"
                    )));
                }
                Ok(())
            }
            ArrivalSpec::MarkovModulated { state_means, transition, a } => {
                if state_means.len() != 2 {
                    return Err(Error::Config("state_means: exactly two states required".into()));
                }
                if state_means[0].len() != state_means[1].len() {
                    return Err(Error::Config("state_means: dimension mismatch".into()));
                }
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::Config(format!("a: bound {a} must be positive")));
                }
                for m in state_means {
                    check_vec("state_means", m)?;
                    if m.iter().any(|x| x > a) {
                        return Err(Error::Config("state_means: entry exceeds a".into()));
                    }
                }
                for row in transition {
                    if row.iter().any(|p| !(0.0..=1.0).contains(p))
                        || (row[0] + row[1] - 1.0).abs() > 1e-12
                    {
                        return Err(Error::Config(format!(
                            "transition: row {row:?} is not a probability vector"
                        )));
                    }
                }
                if transition[0][1] + transition[1][0] <= 0.0 {
                    return Err(Error::Config("transition: chain is reducible".into()));
                }
                Ok(())
            }
            ArrivalSpec::ConverseBurst { lambda, burst } => {
                check_vec("lambda", lambda)?;
                if let Some(w) = &burst.w {
                    check_vec("burst.w", w)?;
                    if w.len() != lambda.len() {
                        return Err(Error::Config("burst.w: dimension mismatch".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// Sampler at scale `r` driven by the given generator.
    pub fn process(&self, r: f64, rng: CounterRng) -> Result<ArrivalProcess> {
        self.validate()?;
        let kind = match self {
            ArrivalSpec::Constant { .. } => Kind::Constant,
            ArrivalSpec::IidBounded { a, .. } => Kind::Iid { a: *a },
            ArrivalSpec::MarkovModulated { state_means, transition, a } => {
                let pi0 = stationary_first(transition);
                Kind::Markov {
                    means: [state_means[0].clone(), state_means[1].clone()],
                    stay: [transition[0][0], transition[1][1]],
                    a: *a,
                    state: None,
                    pi0,
                }
            }
            ArrivalSpec::ConverseBurst { lambda, burst } => {
                let w = burst.w.clone().ok_or_else(|| {
                    Error::Config("burst.w: burst direction is required to sample".into())
                })?;
                let prob = 1.0 / burst.h.eval(r);
                if !(0.0..=1.0).contains(&prob) {
                    return Err(Error::Config(format!(
                        "burst.h: 1/h({r}) = {prob} is not a probability"
                    )));
                }
                Kind::Burst {
                    jump: linalg::axpy(lambda, burst.burst_size(r), &w),
                    prob,
                }
            }
        };
        let base = match self {
            ArrivalSpec::ConverseBurst { lambda, .. } => lambda.clone(),
            _ => self.mean_at(r),
        };
        Ok(ArrivalProcess {
            mean: self.mean_at(r),
            base,
            kind,
            rng,
        })
    }
}

fn check_approach(c: f64) -> Result<()> {
    if c >= 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("approach: {c} must be non-negative")))
    }
}

fn stationary_first(p: &[[f64; 2]; 2]) -> f64 {
    let (p01, p10) = (p[0][1], p[1][0]);
    p10 / (p01 + p10)
}

#[derive(Debug, Clone)]
enum Kind {
    Constant,
    Iid { a: f64 },
    Markov {
        means: [Vec<f64>; 2],
        stay: [f64; 2],
        a: f64,
        state: Option<usize>,
        pi0: f64,
    },
    Burst { jump: Vec<f64>, prob: f64 },
}

/// Stateful sampler created by [`ArrivalSpec::process`].
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    mean: Vec<f64>,
    /// Per-slot parameter: the mean for i.i.d./constant kinds, `lambda` for
    /// bursts.
    base: Vec<f64>,
    kind: Kind,
    rng: CounterRng,
}

impl ArrivalProcess {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn next_into(&mut self, out: &mut [f64]) {
        match &mut self.kind {
            Kind::Constant => out.copy_from_slice(&self.base),
            Kind::Iid { a } => {
                for (o, m) in out.iter_mut().zip(&self.base) {
                    *o = if self.rng.bernoulli(m / *a) { *a } else { 0.0 };
                }
            }
            Kind::Markov { means, stay, a, state, pi0 } => {
                let s = match *state {
                    None => usize::from(!self.rng.bernoulli(*pi0)),
                    Some(s) => {
                        if self.rng.bernoulli(stay[s]) {
                            s
                        } else {
                            1 - s
                        }
                    }
                };
                *state = Some(s);
                for (o, m) in out.iter_mut().zip(&means[s]) {
                    *o = if self.rng.bernoulli(m / *a) { *a } else { 0.0 };
                }
            }
            Kind::Burst { jump, prob } => {
                if self.rng.bernoulli(*prob) {
                    out.copy_from_slice(jump);
                } else {
                    out.copy_from_slice(&self.base);
                }
            }
        }
    }

    pub fn next_vec(&mut self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.next_into(&mut v);
        v
    }
}

/// Generator for replication `rep` at scale `r` of a run seeded with `seed`.
pub fn replication_rng(seed: u64, r: f64, rep: u64) -> CounterRng {
    CounterRng::for_stream(seed ^ mix64(r.to_bits()), rep)
}

/// `K` samples at scale `r` (replication 0 of `seed`).
pub fn generate(spec: &ArrivalSpec, r: f64, horizon: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut p = spec.process(r, replication_rng(seed, r, 0))?;
    Ok((0..horizon).map(|_| p.next_vec()).collect())
}

/// `maxdev(k) = max_{t<k} || sum_{tau<=t} (A(tau) - lambda) ||` for
/// `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationPath(pub Vec<f64>);

impl DeviationPath {
    pub fn at(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn last(&self) -> f64 {
        *self.0.last().unwrap()
    }
}

pub fn max_deviation(samples: &[Vec<f64>], lambda: &[f64]) -> DeviationPath {
    let mut tracker = DeviationTracker::new(lambda.to_vec());
    let mut out = Vec::with_capacity(samples.len() + 1);
    out.push(0.0);
    for a in samples {
        tracker.push(a);
        out.push(tracker.max());
    }
    DeviationPath(out)
}

/// Streaming form of [`max_deviation`].
#[derive(Debug, Clone)]
pub struct DeviationTracker {
    lambda: Vec<f64>,
    sum: Vec<f64>,
    max: f64,
}

impl DeviationTracker {
    pub fn new(lambda: Vec<f64>) -> Self {
        let n = lambda.len();
        Self { lambda, sum: vec![0.0; n], max: 0.0 }
    }

    /// Adds `A(t)`; afterwards `max()` equals `maxdev(t + 1)`.
    pub fn push(&mut self, a: &[f64]) {
        for ((s, x), l) in self.sum.iter_mut().zip(a).zip(&self.lambda) {
            *s += x - l;
        }
        self.max = self.max.max(linalg::norm(&self.sum));
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// One grid point of [`f_tailed_probe`].
#[derive(Debug, Clone, Serialize)]
pub struct FTailRow {
    pub r: f64,
    pub f: f64,
    pub probability: ProportionEstimate,
    /// `f(r, delta) * P_hat`
    pub product: f64,
    /// `f(r, delta)` times the Wilson upper bound.
    pub product_upper: f64,
}

/// Estimates `f(r, delta) P[(1/r) sup_{t<=r} ||sum_{tau<=t}(A^r - lambda^r)|| > delta]`
/// on each `r` of the grid.
pub fn f_tailed_probe(
    spec: &ArrivalSpec,
    f: &(dyn Fn(f64, f64) -> f64 + Sync),
    delta: f64,
    r_grid: &[f64],
    replications: usize,
    seed: u64,
) -> Result<Vec<FTailRow>> {
    use rayon::prelude::*;

    if replications < 100 {
        return Err(Error::Config(format!(
            "replications: {replications} < 100 for a tail probe"
        )));
    }
    spec.validate()?;
    r_grid
        .iter()
        .map(|&r| {
            let steps = r.floor() as usize + 1;
            let hits: Result<Vec<bool>> = (0..replications)
                .into_par_iter()
                .map(|rep| {
                    let mut p = spec.process(r, replication_rng(seed, r, rep as u64))?;
                    let mut tracker = DeviationTracker::new(p.mean().to_vec());
                    let mut a = vec![0.0; p.dim()];
                    for _ in 0..steps {
                        p.next_into(&mut a);
                        tracker.push(&a);
                        if tracker.max() / r > delta {
                            return Ok(true);
                        }
                    }
                    Ok(false)
                })
                .collect();
            let hits = hits?.into_iter().filter(|h| *h).count();
            let est = wilson(hits, replications);
            let fv = f(r, delta);
            Ok(FTailRow {
                r,
                f: fv,
                probability: est,
                product: if est.estimate == 0.0 { 0.0 } else { fv * est.estimate },
                product_upper: fv * est.upper,
            })
        })
        .collect()
}
