//! Seeded Monte Carlo harnesses.
//!
//! Every report is a pure function of its configuration and seed. Replication
//! `k` at scale `r` always draws from [`replication_rng`]`(seed, r, k)`, and
//! parallel results are collected in replication order, so the thread count
//! never changes an output.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arrivals::{
    f_tailed_probe, replication_rng, ArrivalSpec, BurstLimitCheck, BurstSpec, ClosedForm,
    DeviationTracker, FTailRow,
};
use crate::error::{Error, Result};
use crate::fluid::{collapse_direction, integrate_fluid, invariant_set, InvariantSet};
use crate::linalg;
use crate::netmodel::{instances, Network, NetworkConfig};
use crate::report::{
    fmt_f64, log_log_slope, non_decreasing_with_overlap, non_increasing_with_overlap, quantile,
    wilson, CsvTable, ProportionEstimate,
};

/// Per-replication step guard for scaled runs: `r g(r) T`.
pub const STEP_BUDGET: f64 = 1e9;
pub const WMW_TOL: f64 = 1e-9;
pub const C_HAT_CAVEAT: &str = "empirical lower bound on any valid C";

fn default_delta() -> f64 {
    0.5
}

/// Network given inline, as a path to a JSON file, or as `builtin:e1` /
/// `builtin:e2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkRef {
    Inline(NetworkConfig),
    Path(PathBuf),
}

impl NetworkRef {
    /// Relative paths are resolved against `base`.
    pub fn load(&self, base: &Path) -> Result<Network> {
        match self {
            NetworkRef::Inline(cfg) => Network::from_config(cfg.clone()),
            NetworkRef::Path(p) => match p.to_str() {
                Some("builtin:e1") => Ok(instances::e1()),
                Some("builtin:e2") => Ok(instances::e2()),
                _ => {
                    let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                    let text = std::fs::read_to_string(&path).map_err(|e| {
                        Error::Config(format!("network {}: {e}", path.display()))
                    })?;
                    let cfg: NetworkConfig = serde_json::from_str(&text).map_err(|e| {
                        Error::Config(format!("network {}: {e}", path.display()))
                    })?;
                    Network::from_config(cfg)
                }
            },
        }
    }
}

impl From<&Network> for NetworkRef {
    fn from(net: &Network) -> Self {
        NetworkRef::Inline(net.to_config())
    }
}

/// Runs `f` on a dedicated pool with `threads` workers (or the global pool).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("threads: must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn check_replications(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("replications: must be at least 1".into()));
    }
    Ok(())
}

fn check_dim(name: &str, v: &[f64], n: usize) -> Result<()> {
    if v.len() != n {
        return Err(Error::Config(format!("{name}: expected {n} entries, got {}", v.len())));
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite() || **x < 0.0) {
        return Err(Error::Config(format!("{name}: invalid entry {x}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sensitivity

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    pub network: NetworkRef,
    pub arrivals: ArrivalSpec,
    pub q0: Vec<f64>,
    /// Increasing horizons `K`.
    pub horizons: Vec<usize>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityRow {
    pub horizon: usize,
    /// Max ratio over replications.
    pub c_hat: f64,
    pub mean: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    /// Max over replications of `max_{k<=K} ||Q(k) - q(k)||`.
    pub max_error: f64,
    pub mean_maxdev: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub lambda: Vec<f64>,
    pub seed: u64,
    pub replications: usize,
    pub rows: Vec<SensitivityRow>,
    /// `ratios[rep][h]`
    pub ratios: Vec<Vec<f64>>,
    /// `errors[rep][h]`
    pub errors: Vec<Vec<f64>>,
    pub c_hat_caveat: &'static str,
    /// `C(K_last) <= 1.25 C(K_first)`
    pub bounded: bool,
}

impl SensitivityReport {
    pub fn c_hat(&self) -> f64 {
        self.rows.iter().map(|r| r.c_hat).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["horizon", "statistic", "value"]);
        for row in &self.rows {
            let k = row.horizon.to_string();
            for (name, v) in [
                ("c_hat", row.c_hat),
                ("mean", row.mean),
                ("q50", row.q50),
                ("q90", row.q90),
                ("q99", row.q99),
                ("max_error", row.max_error),
                ("mean_maxdev", row.mean_maxdev),
            ] {
                t.push(vec![k.clone(), name.into(), fmt_f64(v)]);
            }
        }
        t
    }
}

/// Compares the discrete path with the fluid solution from the same start:
/// `ratio(K) = max_{k<=K} ||Q(k) - q(k)|| / (1 + ||lambda|| + maxdev(K))`.
pub fn sensitivity_experiment(net: &Network, cfg: &SensitivityConfig) -> Result<SensitivityReport> {
    check_replications(cfg.replications)?;
    check_dim("q0", &cfg.q0, net.n())?;
    cfg.arrivals.validate()?;
    if cfg.arrivals.dim() != net.n() {
        return Err(Error::Config("arrivals: dimension does not match the network".into()));
    }
    if cfg.horizons.is_empty() || cfg.horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("horizons: must be a non-empty increasing list".into()));
    }
    let k_max = *cfg.horizons.last().unwrap();
    let lambda = cfg.arrivals.mean_at(1.0);
    let lambda_norm = linalg::norm(&lambda);
    let fluid = integrate_fluid(net, &lambda, &cfg.q0, (k_max as f64).max(1.0))?;

    let per_rep: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| -> Result<_> {
            let mut proc = cfg.arrivals.process(1.0, replication_rng(cfg.seed, 1.0, rep as u64))?;
            let mut tracker = DeviationTracker::new(lambda.clone());
            let mut cursor = fluid.cursor();
            let n = net.n();
            let (mut q, mut x, mut a) = (cfg.q0.clone(), vec![0.0; n], vec![0.0; n]);
            let mut max_err = 0.0f64;
            let (mut ratios, mut errs, mut devs) = (Vec::new(), Vec::new(), Vec::new());
            let mut next_h = 0;
            for k in 0..=k_max {
                cursor.state_into(k as f64, &mut x);
                max_err = max_err.max(linalg::dist(&q, &x));
                if k == cfg.horizons[next_h] {
                    ratios.push(max_err / (1.0 + lambda_norm + tracker.max()));
                    errs.push(max_err);
                    devs.push(tracker.max());
                    next_h += 1;
                }
                if k < k_max {
                    proc.next_into(&mut a);
                    tracker.push(&a);
                    net.step_in_place(&mut q, &a);
                }
            }
            Ok((ratios, errs, devs))
        })
        .collect::<Result<_>>()?;

    let rows = cfg
        .horizons
        .iter()
        .enumerate()
        .map(|(h, &horizon)| {
            let col: Vec<f64> = per_rep.iter().map(|r| r.0[h]).collect();
            SensitivityRow {
                horizon,
                c_hat: col.iter().copied().fold(0.0, f64::max),
                mean: col.iter().sum::<f64>() / col.len() as f64,
                q50: quantile(&col, 0.5),
                q90: quantile(&col, 0.9),
                q99: quantile(&col, 0.99),
                max_error: per_rep.iter().map(|r| r.1[h]).fold(0.0, f64::max),
                mean_maxdev: per_rep.iter().map(|r| r.2[h]).sum::<f64>() / col.len() as f64,
            }
        })
        .collect::<Vec<_>>();
    let bounded = rows.last().unwrap().c_hat <= 1.25 * rows[0].c_hat;
    Ok(SensitivityReport {
        lambda,
        seed: cfg.seed,
        replications: cfg.replications,
        ratios: per_rep.iter().map(|r| r.0.clone()).collect(),
        errors: per_rep.iter().map(|r| r.1.clone()).collect(),
        rows,
        c_hat_caveat: C_HAT_CAVEAT,
        bounded,
    })
}

// ---------------------------------------------------------------------------
// fluid scaling

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidConvergenceConfig {
    pub network: NetworkRef,
    pub arrivals: ArrivalSpec,
    pub q0: Vec<f64>,
    /// Fluid horizon `T`.
    pub horizon: f64,
    pub r_grid: Vec<f64>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluidConvergenceRow {
    pub r: f64,
    pub mean_sup_distance: f64,
    pub max_sup_distance: f64,
    /// Mean of `(1/r) maxdev(rT)`.
    pub mean_deviation: f64,
    /// Max of `sup / ((1/r) maxdev(rT) + 1/r)`.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FluidConvergenceReport {
    pub lambda: Vec<f64>,
    pub seed: u64,
    pub rows: Vec<FluidConvergenceRow>,
    /// Log-log slope of the mean sup-distance against `r`.
    pub slope: f64,
}

impl FluidConvergenceReport {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["r", "statistic", "value"]);
        for row in &self.rows {
            for (name, v) in [
                ("mean_sup_distance", row.mean_sup_distance),
                ("max_sup_distance", row.max_sup_distance),
                ("mean_deviation", row.mean_deviation),
                ("max_ratio", row.max_ratio),
            ] {
                t.push(vec![fmt_f64(row.r), name.into(), fmt_f64(v)]);
            }
        }
        t
    }
}

/// `sup_t ||Q^r(floor(rt))/r - q(t)||` over the grid times `t = k/r`,
/// `k <= rT`, with `Q^r(0)` the rounding of `r q0`.
pub fn fluid_convergence_experiment(
    net: &Network,
    cfg: &FluidConvergenceConfig,
) -> Result<FluidConvergenceReport> {
    check_replications(cfg.replications)?;
    check_dim("q0", &cfg.q0, net.n())?;
    cfg.arrivals.validate()?;
    if !(cfg.horizon > 0.0) {
        return Err(Error::Config("horizon: must be positive".into()));
    }
    if cfg.r_grid.is_empty() || cfg.r_grid.iter().any(|r| !(*r >= 1.0)) {
        return Err(Error::Config("r_grid: entries must be at least 1".into()));
    }
    let lambda = cfg.arrivals.limit_mean();
    let fluid = integrate_fluid(net, &lambda, &cfg.q0, cfg.horizon)?;
    let n = net.n();

    let mut rows = Vec::new();
    for &r in &cfg.r_grid {
        let steps = (r * cfg.horizon).floor() as usize;
        let per_rep: Vec<(f64, f64)> = (0..cfg.replications)
            .into_par_iter()
            .map(|rep| -> Result<_> {
                let mut proc = cfg.arrivals.process(r, replication_rng(cfg.seed, r, rep as u64))?;
                let mut tracker = DeviationTracker::new(proc.mean().to_vec());
                let mut cursor = fluid.cursor();
                let mut q: Vec<f64> = cfg.q0.iter().map(|v| (r * v).round()).collect();
                let (mut x, mut a) = (vec![0.0; n], vec![0.0; n]);
                let mut sup = 0.0f64;
                for k in 0..=steps {
                    cursor.state_into(k as f64 / r, &mut x);
                    let d = q.iter().zip(&x).map(|(qi, xi)| (qi / r - xi).powi(2)).sum::<f64>().sqrt();
                    sup = sup.max(d);
                    if k < steps {
                        proc.next_into(&mut a);
                        tracker.push(&a);
                        net.step_in_place(&mut q, &a);
                    }
                }
                Ok((sup, tracker.max() / r))
            })
            .collect::<Result<_>>()?;
        let reps = per_rep.len() as f64;
        rows.push(FluidConvergenceRow {
            r,
            mean_sup_distance: per_rep.iter().map(|p| p.0).sum::<f64>() / reps,
            max_sup_distance: per_rep.iter().map(|p| p.0).fold(0.0, f64::max),
            mean_deviation: per_rep.iter().map(|p| p.1).sum::<f64>() / reps,
            max_ratio: per_rep
                .iter()
                .map(|p| p.0 / (p.1 + 1.0 / r))
                .fold(0.0, f64::max),
        });
    }
    let slope = if rows.len() >= 2 {
        log_log_slope(
            &rows.iter().map(|r| r.r).collect::<Vec<_>>(),
            &rows.iter().map(|r| r.mean_sup_distance).collect::<Vec<_>>(),
        )
    } else {
        f64::NAN
    };
    Ok(FluidConvergenceReport {
        lambda,
        seed: cfg.seed,
        rows,
        slope,
    })
}

// ---------------------------------------------------------------------------
// state space collapse

/// Time scaling `q^r(t) = Q^r(floor(g(r) t)) / r` on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub g: ClosedForm,
    pub r_grid: Vec<f64>,
    pub horizon: f64,
}

impl ScalingSpec {
    pub fn diffusion(r_grid: Vec<f64>, horizon: f64) -> Self {
        Self {
            g: ClosedForm::power(1.0, 2.0),
            r_grid,
            horizon,
        }
    }

    pub fn exponential(gamma: f64, r_grid: Vec<f64>, horizon: f64) -> Self {
        Self {
            g: ClosedForm::exp(1.0, gamma),
            r_grid,
            horizon,
        }
    }

    pub fn steps(&self, r: f64) -> usize {
        (self.g.eval(r) * self.horizon).floor() as usize
    }

    /// Grid sanity; collapse runs also need `g` to grow at least linearly.
    pub fn validate(&self, for_ssc: bool) -> Result<()> {
        if !(self.horizon > 0.0) {
            return Err(Error::Config("scaling.horizon: must be positive".into()));
        }
        if self.r_grid.is_empty() || self.r_grid.iter().any(|r| !(*r >= 1.0)) {
            return Err(Error::Config("scaling.r_grid: entries must be at least 1".into()));
        }
        if self.r_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("scaling.r_grid: must be increasing".into()));
        }
        let g: Vec<f64> = self.r_grid.iter().map(|&r| self.g.eval(r)).collect();
        if g.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!("scaling.g: {} is not increasing on the grid", self.g)));
        }
        // only the growth class matters: liminf g(r)/r > 0
        let fast_enough = match self.g {
            ClosedForm::Power { c, p } => c > 0.0 && p >= 1.0,
            ClosedForm::Exp { c, gamma } => c > 0.0 && gamma > 0.0,
        };
        if for_ssc && !fast_enough {
            return Err(Error::Config(format!("scaling.g: {} grows slower than r", self.g)));
        }
        Ok(())
    }

    /// Enforces `r g(r) T <= 1e9` on every grid point.
    pub fn check_budget(&self) -> Result<()> {
        for &r in &self.r_grid {
            let requested = r * self.g.eval(r) * self.horizon;
            if !(requested <= STEP_BUDGET) {
                return Err(Error::StepBudget {
                    requested,
                    limit: STEP_BUDGET,
                });
            }
        }
        Ok(())
    }
}

/// Initial condition at scale `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Q0Rule {
    /// `q^r(0) = P(q0) + e_1 / sqrt(r)` with `P` the projection onto `I(lambda)`.
    ProjectedPerturbed { q0: Vec<f64> },
    /// `q^r(0) = q0`, which must lie in `I(lambda)`.
    Fixed { q0: Vec<f64> },
}

impl Q0Rule {
    fn q0(&self) -> &[f64] {
        match self {
            Q0Rule::ProjectedPerturbed { q0 } | Q0Rule::Fixed { q0 } => q0,
        }
    }

    /// Unscaled `Q^r(0) = r q^r(0)`.
    pub fn initial(&self, iset: &InvariantSet, r: f64) -> Result<Vec<f64>> {
        match self {
            Q0Rule::ProjectedPerturbed { q0 } => {
                let mut p = iset.project(q0)?;
                p[0] += 1.0 / r.sqrt();
                Ok(linalg::scale(&p, r))
            }
            Q0Rule::Fixed { q0 } => {
                if !iset.contains(q0, 1e-9) {
                    return Err(Error::Config(format!("q0: {q0:?} does not lie in I(lambda)")));
                }
                Ok(linalg::scale(q0, r))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SscConfig {
    pub network: NetworkRef,
    pub arrivals: ArrivalSpec,
    pub scaling: ScalingSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub q0: Q0Rule,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    /// When given, rows also carry `r f(r) / g(r) * P_hat`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<ClosedForm>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProductTerm {
    pub factor: f64,
    pub value: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbabilityRow {
    pub r: f64,
    pub steps: usize,
    pub probability: ProportionEstimate,
    pub mean_sup_distance: f64,
    pub max_sup_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub product: Option<ProductTerm>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub r: f64,
    pub replication: usize,
    pub sup_distance: f64,
    pub exceeded: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Trend {
    pub non_increasing: bool,
    pub non_increasing_with_overlap: bool,
    pub non_decreasing: bool,
    pub non_decreasing_with_overlap: bool,
}

impl Trend {
    pub fn of(rows: &[ProbabilityRow]) -> Self {
        let p: Vec<ProportionEstimate> = rows.iter().map(|r| r.probability).collect();
        Self {
            non_increasing: p.windows(2).all(|w| w[1].estimate <= w[0].estimate),
            non_increasing_with_overlap: non_increasing_with_overlap(&p),
            non_decreasing: p.windows(2).all(|w| w[1].estimate >= w[0].estimate),
            non_decreasing_with_overlap: non_decreasing_with_overlap(&p),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SscReport {
    pub lambda: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
    pub rows: Vec<ProbabilityRow>,
    pub trend: Trend,
    pub records: Vec<ReplicationRecord>,
    /// Scaled path of replication 0 per grid point, when requested.
    #[serde(skip)]
    pub dumps: Vec<(f64, CsvTable)>,
}

fn probability_csv(rows: &[ProbabilityRow]) -> CsvTable {
    let mut t = CsvTable::new(["r", "statistic", "value"]);
    for row in rows {
        let r = fmt_f64(row.r);
        let p = &row.probability;
        let mut stats = vec![
            ("steps", row.steps as f64),
            ("successes", p.successes as f64),
            ("trials", p.trials as f64),
            ("p_hat", p.estimate),
            ("p_lower", p.lower),
            ("p_upper", p.upper),
            ("mean_sup_distance", row.mean_sup_distance),
            ("max_sup_distance", row.max_sup_distance),
        ];
        if let Some(prod) = &row.product {
            stats.extend([
                ("product_factor", prod.factor),
                ("product", prod.value),
                ("product_upper", prod.upper),
            ]);
        }
        for (name, v) in stats {
            t.push(vec![r.clone(), name.into(), fmt_f64(v)]);
        }
    }
    t
}

impl SscReport {
    pub fn to_csv(&self) -> CsvTable {
        probability_csv(&self.rows)
    }
}

struct ScaledOutcome {
    sup: f64,
    dump: Option<CsvTable>,
}

/// One replication of a scaled path; `d(Q(k)/r, I)` is evaluated at every
/// step.
#[allow(clippy::too_many_arguments)]
fn scaled_replication(
    net: &Network,
    iset: &InvariantSet,
    spec: &ArrivalSpec,
    r: f64,
    steps: usize,
    g: f64,
    init: &[f64],
    rng: crate::rng::CounterRng,
    dump: bool,
) -> Result<ScaledOutcome> {
    let n = net.n();
    let mut proc = spec.process(r, rng)?;
    let mut q = init.to_vec();
    let mut a = vec![0.0; n];
    let mut scaled = vec![0.0; n];
    let mut sup = 0.0f64;
    let mut table = dump.then(|| {
        let mut h = vec!["k".to_string(), "t".to_string()];
        h.extend((1..=n).map(|i| format!("q_{i}")));
        h.push("d".into());
        CsvTable::new(h)
    });
    for k in 0..=steps {
        for i in 0..n {
            scaled[i] = q[i] / r;
        }
        let d = iset.distance(&scaled)?;
        sup = sup.max(d);
        if let Some(t) = table.as_mut() {
            let mut row = vec![k.to_string(), fmt_f64(k as f64 / g)];
            row.extend(scaled.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(d));
            t.push(row);
        }
        if k < steps {
            proc.next_into(&mut a);
            net.step_in_place(&mut q, &a);
        }
    }
    Ok(ScaledOutcome { sup, dump: table })
}

type GridRun = (Vec<ProbabilityRow>, Vec<ReplicationRecord>, Vec<(f64, CsvTable)>);

#[allow(clippy::too_many_arguments)]
fn probability_table(
    net: &Network,
    iset: &InvariantSet,
    spec: &ArrivalSpec,
    scaling: &ScalingSpec,
    delta: f64,
    q0: &Q0Rule,
    replications: usize,
    seed: u64,
    f: Option<&ClosedForm>,
    dump: bool,
) -> Result<GridRun> {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut dumps = Vec::new();
    for &r in &scaling.r_grid {
        let steps = scaling.steps(r);
        let g = scaling.g.eval(r);
        let init = q0.initial(iset, r)?;
        let outcomes: Vec<ScaledOutcome> = (0..replications)
            .into_par_iter()
            .map(|rep| {
                scaled_replication(
                    net,
                    iset,
                    spec,
                    r,
                    steps,
                    g,
                    &init,
                    replication_rng(seed, r, rep as u64),
                    dump && rep == 0,
                )
            })
            .collect::<Result<_>>()?;
        let hits = outcomes.iter().filter(|o| o.sup > delta).count();
        let probability = wilson(hits, replications);
        let sups: Vec<f64> = outcomes.iter().map(|o| o.sup).collect();
        for (rep, &s) in sups.iter().enumerate() {
            records.push(ReplicationRecord {
                r,
                replication: rep,
                sup_distance: s,
                exceeded: s > delta,
            });
        }
        if let Some(t) = outcomes.into_iter().next().and_then(|o| o.dump) {
            dumps.push((r, t));
        }
        let product = f.map(|f| {
            let factor = r * f.eval(r) / g;
            ProductTerm {
                factor,
                value: factor * probability.estimate,
                upper: factor * probability.upper,
            }
        });
        rows.push(ProbabilityRow {
            r,
            steps,
            probability,
            mean_sup_distance: sups.iter().sum::<f64>() / sups.len() as f64,
            max_sup_distance: sups.iter().copied().fold(0.0, f64::max),
            product,
        });
    }
    Ok((rows, records, dumps))
}

/// Estimates `P[sup_{t<=T} d(q^r(t), I(lambda)) > delta]` on each grid point.
pub fn ssc_experiment(net: &Network, cfg: &SscConfig, dump: bool) -> Result<SscReport> {
    check_replications(cfg.replications)?;
    cfg.arrivals.validate()?;
    if cfg.arrivals.dim() != net.n() {
        return Err(Error::Config("arrivals: dimension does not match the network".into()));
    }
    check_dim("q0", cfg.q0.q0(), net.n())?;
    if !(cfg.delta > 0.0) {
        return Err(Error::Config("delta: must be positive".into()));
    }
    cfg.scaling.validate(true)?;
    cfg.scaling.check_budget()?;
    let lambda = cfg.arrivals.limit_mean();
    let iset = invariant_set(net, &lambda)?;
    let (rows, records, dumps) = probability_table(
        net,
        &iset,
        &cfg.arrivals,
        &cfg.scaling,
        cfg.delta,
        &cfg.q0,
        cfg.replications,
        cfg.seed,
        cfg.f.as_ref(),
        dump,
    )?;
    Ok(SscReport {
        lambda,
        delta: cfg.delta,
        seed: cfg.seed,
        trend: Trend::of(&rows),
        rows,
        records,
        dumps,
    })
}

/// `gamma = safety * min(delta, alpha) / (2 C n a^2)`.
pub fn exponential_rate(delta: f64, alpha: f64, c_hat: f64, n: usize, a: f64, safety: f64) -> f64 {
    safety * delta.min(alpha) / (2.0 * c_hat * n as f64 * a * a)
}

// ---------------------------------------------------------------------------
// converse

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverseConfig {
    pub network: NetworkRef,
    pub lambda: Vec<f64>,
    #[serde(default = "BurstSpec::power_law_default")]
    pub burst: BurstSpec,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub horizon: f64,
    pub r_grid: Vec<f64>,
    /// Start in `I(lambda)`; defaults to the projection of the all-ones vector.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BurstGeometry {
    /// Unit normal of the hyperplane `Z` containing `I(lambda)`.
    pub v_hat: Vec<f64>,
    pub w: Vec<f64>,
    /// `d(w, Z)`
    pub distance: f64,
}

/// Picks `w >= 0` outside `Z = v_hat^perp` with `d(w, Z) = 1`.
pub fn burst_direction(net: &Network, lambda: &[f64]) -> Result<BurstGeometry> {
    let v = collapse_direction(net, lambda)?;
    let norm = linalg::norm(&v);
    let mut v_hat = linalg::scale(&v, 1.0 / norm);
    let i = (0..v_hat.len())
        .max_by(|&a, &b| v_hat[a].abs().total_cmp(&v_hat[b].abs()).then(b.cmp(&a)))
        .unwrap();
    if v_hat[i] < 0.0 {
        v_hat = linalg::scale(&v_hat, -1.0);
    }
    let mut w = vec![0.0; v_hat.len()];
    w[i] = 1.0 / v_hat[i];
    let distance = linalg::dot(&v_hat, &w);
    Ok(BurstGeometry { v_hat, w, distance })
}

fn check_burst_w(w: &[f64], v_hat: &[f64]) -> Result<f64> {
    let d = linalg::dot(w, v_hat).abs();
    if w.iter().any(|x| *x < 0.0) || d <= 1e-12 {
        return Err(Error::Geometry(format!(
            "burst direction {w:?} must be non-negative and leave the hyperplane of I(lambda)"
        )));
    }
    Ok(d)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConverseReport {
    pub lambda: Vec<f64>,
    pub delta: f64,
    pub seed: u64,
    pub geometry: BurstGeometry,
    pub limits: BurstLimitCheck,
    pub zero_burst: bool,
    pub rows: Vec<ProbabilityRow>,
    pub trend: Trend,
    pub records: Vec<ReplicationRecord>,
    #[serde(skip)]
    pub dumps: Vec<(f64, CsvTable)>,
}

impl ConverseReport {
    pub fn to_csv(&self) -> CsvTable {
        probability_csv(&self.rows)
    }
}

/// Bursty arrivals that push the scaled path off `I(lambda)` along `w`.
pub fn converse_experiment(net: &Network, cfg: &ConverseConfig, dump: bool) -> Result<ConverseReport> {
    check_replications(cfg.replications)?;
    check_dim("lambda", &cfg.lambda, net.n())?;
    if !(cfg.delta > 0.0) {
        return Err(Error::Config("delta: must be positive".into()));
    }
    let scaling = ScalingSpec {
        g: cfg.burst.g,
        r_grid: cfg.r_grid.clone(),
        horizon: cfg.horizon,
    };
    scaling.validate(true)?;
    scaling.check_budget()?;
    let iset = invariant_set(net, &cfg.lambda)?;
    let mut geometry = burst_direction(net, &cfg.lambda)?;
    if let Some(w) = &cfg.burst.w {
        check_dim("burst.w", w, net.n())?;
        geometry.distance = check_burst_w(w, &geometry.v_hat)?;
        geometry.w = w.clone();
    }
    let mut burst = cfg.burst.clone();
    burst.w = Some(geometry.w.clone());
    let spec = ArrivalSpec::ConverseBurst {
        lambda: cfg.lambda.clone(),
        burst,
    };
    let q0 = match &cfg.q0 {
        Some(q) => q.clone(),
        None => iset.project(&vec![1.0; net.n()])?,
    };
    check_dim("q0", &q0, net.n())?;
    let rule = Q0Rule::Fixed { q0 };
    let (rows, records, dumps) = probability_table(
        net,
        &iset,
        &spec,
        &scaling,
        cfg.delta,
        &rule,
        cfg.replications,
        cfg.seed,
        None,
        dump,
    )?;
    Ok(ConverseReport {
        lambda: cfg.lambda.clone(),
        delta: cfg.delta,
        seed: cfg.seed,
        geometry,
        limits: cfg.burst.check_limits(&[1e2, 1e3, 1e4, 1e5, 1e6]),
        zero_burst: cfg.burst.zero_burst,
        trend: Trend::of(&rows),
        rows,
        records,
        dumps,
    })
}

// ---------------------------------------------------------------------------
// weighted reduction

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WmwConfig {
    pub network: NetworkRef,
    pub arrivals: ArrivalSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q0: Option<Vec<f64>>,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WmwReport {
    pub weights: Vec<f64>,
    pub steps: usize,
    pub max_discrepancy: f64,
    pub ok: bool,
}

impl WmwReport {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["statistic", "value"]);
        t.push(vec!["steps".into(), self.steps.to_string()]);
        t.push(vec!["max_discrepancy".into(), fmt_f64(self.max_discrepancy)]);
        t.push(vec!["ok".into(), self.ok.to_string()]);
        t
    }
}

/// Runs the weighted network and its unit-weight image side by side and
/// checks `Q~(k) = W^{1/2} Q(k)` at every step.
pub fn wmw_equivalence_check(net: &Network, cfg: &WmwConfig) -> Result<WmwReport> {
    cfg.arrivals.validate()?;
    let n = net.n();
    let q0 = cfg.q0.clone().unwrap_or_else(|| vec![0.0; n]);
    check_dim("q0", &q0, n)?;
    let (mw, tr) = net.wmw_to_mw();
    let mut proc = cfg.arrivals.process(1.0, replication_rng(cfg.seed, 1.0, 0))?;
    let mut q = q0.clone();
    let mut qt = tr.forward(&q0);
    let mut a = vec![0.0; n];
    let mut worst = 0.0f64;
    for step in 1..=cfg.steps {
        proc.next_into(&mut a);
        net.step_in_place(&mut q, &a);
        mw.step_in_place(&mut qt, &tr.forward(&a));
        let d = linalg::dist(&qt, &tr.forward(&q));
        if d > WMW_TOL {
            return Err(Error::WmwMismatch { step, discrepancy: d });
        }
        worst = worst.max(d);
    }
    Ok(WmwReport {
        weights: net.weights().to_vec(),
        steps: cfg.steps,
        max_discrepancy: worst,
        ok: true,
    })
}

// ---------------------------------------------------------------------------
// f-tailed probe

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FTailConfig {
    pub arrivals: ArrivalSpec,
    pub delta: f64,
    /// Exponent factor in `f(r, delta) = exp(beta r delta / (n a^2))`.
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Overrides the default `f` with a closed form in `r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<ClosedForm>,
    pub r_grid: Vec<f64>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_beta() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize)]
pub struct FTailReport {
    pub f: ClosedForm,
    pub delta: f64,
    pub seed: u64,
    pub rows: Vec<FTailRow>,
    /// Products never increase along the grid.
    pub non_increasing: bool,
}

impl FTailReport {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["r", "statistic", "value"]);
        for row in &self.rows {
            let p = &row.probability;
            for (name, v) in [
                ("f", row.f),
                ("p_hat", p.estimate),
                ("p_lower", p.lower),
                ("p_upper", p.upper),
                ("product", row.product),
                ("product_upper", row.product_upper),
            ] {
                t.push(vec![fmt_f64(row.r), name.into(), fmt_f64(v)]);
            }
        }
        t
    }
}

/// The exponential tail factor for bounded arrivals, as a closed form in `r`.
pub fn hoeffding_factor(beta: f64, delta: f64, n: usize, a: f64) -> ClosedForm {
    ClosedForm::exp(1.0, beta * delta / (n as f64 * a * a))
}

pub fn ftail_experiment(cfg: &FTailConfig) -> Result<FTailReport> {
    cfg.arrivals.validate()?;
    if !(cfg.delta > 0.0) {
        return Err(Error::Config("delta: must be positive".into()));
    }
    let f = match cfg.f {
        Some(f) => f,
        None => {
            let a = cfg.arrivals.bound().filter(|a| *a > 0.0).ok_or_else(|| {
                Error::Config("arrivals: the default f needs a bounded arrival kind".into())
            })?;
            hoeffding_factor(cfg.beta, cfg.delta, cfg.arrivals.dim(), a)
        }
    };
    let rows = f_tailed_probe(
        &cfg.arrivals,
        &|r, _| f.eval(r),
        cfg.delta,
        &cfg.r_grid,
        cfg.replications,
        cfg.seed,
    )?;
    let non_increasing = rows.windows(2).all(|w| w[1].product <= w[0].product);
    Ok(FTailReport {
        f,
        delta: cfg.delta,
        seed: cfg.seed,
        rows,
        non_increasing,
    })
}

/// Exact `P[max_{t<=steps-1} |S_t - (t+1) p| > threshold]` for partial sums
/// `S_t` of i.i.d. Bernoulli(p) variables, by dynamic programming over the
/// count.
pub fn bernoulli_walk_tail(p: f64, steps: usize, threshold: f64) -> f64 {
    let mut alive = vec![1.0f64];
    let mut escaped = 0.0;
    for t in 1..=steps {
        let mut next = vec![0.0; t + 1];
        for (s, m) in alive.iter().enumerate() {
            next[s] += m * (1.0 - p);
            next[s + 1] += m * p;
        }
        for (s, m) in next.iter_mut().enumerate() {
            if (s as f64 - t as f64 * p).abs() > threshold {
                escaped += *m;
                *m = 0.0;
            }
        }
        alive = next;
    }
    escaped
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::instances::{e1, e2, with_weights};

    fn single_queue() -> Network {
        Network::new(vec![vec![0.0]], vec![vec![1.0]], None).unwrap()
    }

    #[test]
    fn sensitivity_single_queue_is_exact() {
        let cfg = SensitivityConfig {
            network: NetworkRef::from(&single_queue()),
            arrivals: ArrivalSpec::constant(vec![0.0]),
            q0: vec![5.0],
            horizons: vec![3, 10],
            replications: 2,
            seed: 1,
        };
        let rep = sensitivity_experiment(&single_queue(), &cfg).unwrap();
        assert!(rep.rows.iter().all(|r| r.c_hat == 0.0));
    }

    #[test]
    fn sensitivity_constant_boundary_rate() {
        let net = e1();
        let cfg = SensitivityConfig {
            network: NetworkRef::from(&net),
            arrivals: ArrivalSpec::constant(vec![0.5, 0.5]),
            q0: vec![3.0, 1.0],
            horizons: vec![10, 100, 1000],
            replications: 1,
            seed: 0,
        };
        let rep = sensitivity_experiment(&net, &cfg).unwrap();
        // Q chatters between (2,2) and (1.5,2.5) once the diagonal is reached
        let e = 0.5f64.sqrt();
        for row in &rep.rows {
            assert!((row.max_error - e).abs() < 1e-12, "{row:?}");
            assert!((row.c_hat - e / (1.0 + e)).abs() < 1e-12);
        }
        assert!(rep.bounded);
    }

    #[test]
    fn sensitivity_rejects_bad_config() {
        let net = e1();
        let mut cfg = SensitivityConfig {
            network: NetworkRef::from(&net),
            arrivals: ArrivalSpec::constant(vec![0.5, 0.5]),
            q0: vec![3.0, 1.0],
            horizons: vec![10, 5],
            replications: 1,
            seed: 0,
        };
        assert!(matches!(sensitivity_experiment(&net, &cfg), Err(Error::Config(_))));
        cfg.horizons = vec![5];
        cfg.replications = 0;
        assert!(matches!(sensitivity_experiment(&net, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn fluid_convergence_constant_rate() {
        let net = e1();
        let cfg = FluidConvergenceConfig {
            network: NetworkRef::from(&net),
            arrivals: ArrivalSpec::constant(vec![0.5, 0.5]),
            q0: vec![3.0, 1.0],
            horizon: 5.0,
            r_grid: vec![10.0, 20.0, 40.0, 80.0],
            replications: 1,
            seed: 0,
        };
        let rep = fluid_convergence_experiment(&net, &cfg).unwrap();
        for row in &rep.rows {
            assert!((row.mean_sup_distance * row.r - 0.5f64.sqrt()).abs() < 1e-9);
        }
        assert!((rep.slope + 1.0).abs() < 1e-9);
    }

    #[test]
    fn fluid_convergence_r1_matches_sensitivity() {
        let net = e2();
        let arrivals = ArrivalSpec::iid(vec![0.3, 0.2], 1.0);
        let fc = fluid_convergence_experiment(
            &net,
            &FluidConvergenceConfig {
                network: NetworkRef::from(&net),
                arrivals: arrivals.clone(),
                q0: vec![2.0, 1.0],
                horizon: 50.0,
                r_grid: vec![1.0],
                replications: 4,
                seed: 9,
            },
        )
        .unwrap();
        let sens = sensitivity_experiment(
            &net,
            &SensitivityConfig {
                network: NetworkRef::from(&net),
                arrivals,
                q0: vec![2.0, 1.0],
                horizons: vec![50],
                replications: 4,
                seed: 9,
            },
        )
        .unwrap();
        assert_eq!(fc.rows[0].max_sup_distance, sens.rows[0].max_error);
    }

    #[test]
    fn ssc_constant_in_set_never_leaves() {
        let net = e1();
        let cfg = SscConfig {
            network: NetworkRef::from(&net),
            arrivals: ArrivalSpec::constant(vec![0.5, 0.5]),
            scaling: ScalingSpec::diffusion(vec![20.0, 40.0], 1.0),
            delta: 0.5,
            q0: Q0Rule::Fixed { q0: vec![1.0, 1.0] },
            replications: 3,
            seed: 4,
            f: None,
        };
        let rep = ssc_experiment(&net, &cfg, true).unwrap();
        for row in &rep.rows {
            assert_eq!(row.probability.successes, 0);
            assert!(row.max_sup_distance <= 1.0 / row.r);
        }
        assert_eq!(rep.dumps.len(), 2);
        assert_eq!(rep.dumps[0].1.len(), 401);
    }

    #[test]
    fn ssc_validation() {
        let net = e1();
        let mut cfg = SscConfig {
            network: NetworkRef::from(&net),
            arrivals: ArrivalSpec::constant(vec![0.5, 0.5]),
            scaling: ScalingSpec::exponential(1.0, vec![40.0], 1.0),
            delta: 0.5,
            q0: Q0Rule::Fixed { q0: vec![1.0, 1.0] },
            replications: 3,
            seed: 4,
            f: None,
        };
        assert!(matches!(ssc_experiment(&net, &cfg, false), Err(Error::StepBudget { .. })));
        cfg.scaling = ScalingSpec::diffusion(vec![20.0], 1.0);
        cfg.q0 = Q0Rule::Fixed { q0: vec![1.0, 0.0] };
        assert!(matches!(ssc_experiment(&net, &cfg, false), Err(Error::Config(_))));
        cfg.q0 = Q0Rule::Fixed { q0: vec![1.0, 1.0] };
        cfg.arrivals = ArrivalSpec::constant(vec![0.8, 0.8]);
        assert!(matches!(ssc_experiment(&net, &cfg, false), Err(Error::Domain(_))));
        cfg.arrivals = ArrivalSpec::constant(vec![0.5, 0.5]);
        cfg.scaling = ScalingSpec {
            g: ClosedForm::power(1.0, 0.5),
            r_grid: vec![4.0, 9.0],
            horizon: 1.0,
        };
        assert!(matches!(ssc_experiment(&net, &cfg, false), Err(Error::Config(_))));
    }

    #[test]
    fn projected_rule_starts_near_set() {
        let iset = invariant_set(&e1(), &[0.5, 0.5]).unwrap();
        let rule = Q0Rule::ProjectedPerturbed { q0: vec![3.0, 1.0] };
        let q = rule.initial(&iset, 100.0).unwrap();
        assert!(linalg::dist(&q, &[210.0, 200.0]) < 1e-6);
    }

    #[test]
    fn burst_direction_e1() {
        let g = burst_direction(&e1(), &[0.5, 0.5]).unwrap();
        let s = 0.5f64.sqrt();
        assert!(linalg::dist(&g.v_hat, &[s, -s]) < 1e-12);
        assert!(linalg::dist(&g.w, &[2f64.sqrt(), 0.0]) < 1e-12);
        assert!((g.distance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn burst_w_inside_hyperplane_is_rejected() {
        let g = burst_direction(&e1(), &[0.5, 0.5]).unwrap();
        assert!(matches!(check_burst_w(&[1.0, 1.0], &g.v_hat), Err(Error::Geometry(_))));
        assert!(matches!(check_burst_w(&[-1.0, 0.0], &g.v_hat), Err(Error::Geometry(_))));
    }

    #[test]
    fn wmw_identity_and_weighted() {
        let rep = wmw_equivalence_check(
            &e1(),
            &WmwConfig {
                network: NetworkRef::from(&e1()),
                arrivals: ArrivalSpec::iid(vec![0.4, 0.4], 1.0),
                q0: Some(vec![3.0, 1.0]),
                steps: 500,
                seed: 2,
            },
        )
        .unwrap();
        assert_eq!(rep.max_discrepancy, 0.0);
        let net = with_weights(&e1(), vec![4.0, 1.0]);
        let rep = wmw_equivalence_check(
            &net,
            &WmwConfig {
                network: NetworkRef::from(&net),
                arrivals: ArrivalSpec::constant(vec![0.5, 0.5]),
                q0: Some(vec![3.0, 1.0]),
                steps: 100,
                seed: 2,
            },
        )
        .unwrap();
        assert!(rep.max_discrepancy <= WMW_TOL);
    }

    #[test]
    fn walk_tail_small_cases() {
        // one fair step: |S_1 - 0.5| = 0.5 always
        assert_eq!(bernoulli_walk_tail(0.5, 1, 0.4), 1.0);
        assert_eq!(bernoulli_walk_tail(0.5, 1, 0.5), 0.0);
        // two steps, threshold 0.9: only S_2 in {0, 2} escapes
        assert!((bernoulli_walk_tail(0.5, 2, 0.9) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ftail_probe_matches_exact_walk() {
        let cfg = FTailConfig {
            arrivals: ArrivalSpec::iid(vec![0.5], 1.0),
            delta: 0.3,
            beta: 1.0,
            f: None,
            r_grid: vec![20.0],
            replications: 4000,
            seed: 11,
        };
        let rep = ftail_experiment(&cfg).unwrap();
        let exact = bernoulli_walk_tail(0.5, 21, 0.3 * 20.0);
        let p = rep.rows[0].probability;
        assert!(p.lower <= exact && exact <= p.upper, "{p:?} vs {exact}");
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let net = e1();
        let cfg = SensitivityConfig {
            network: NetworkRef::from(&net),
            arrivals: ArrivalSpec::iid(vec![0.45, 0.45], 1.0),
            q0: vec![3.0, 1.0],
            horizons: vec![100, 1000],
            replications: 16,
            seed: 5,
        };
        let a = with_threads(Some(1), || sensitivity_experiment(&net, &cfg)).unwrap().unwrap();
        let b = with_threads(Some(4), || sensitivity_experiment(&net, &cfg)).unwrap().unwrap();
        assert_eq!(a.to_csv().render(), b.to_csv().render());
        assert_eq!(a.ratios, b.ratios);
    }

    #[test]
    fn network_ref_forms() {
        let base = Path::new(".");
        let r: NetworkRef = serde_json::from_str("\"builtin:e2\"").unwrap();
        assert_eq!(r.load(base).unwrap().to_config(), e2().to_config());
        let inline = serde_json::to_string(&NetworkRef::from(&e1())).unwrap();
        let r: NetworkRef = serde_json::from_str(&inline).unwrap();
        assert_eq!(r.load(base).unwrap().to_config(), e1().to_config());
        let r: NetworkRef = serde_json::from_str("\"does/not/exist.json\"").unwrap();
        assert!(matches!(r.load(base), Err(Error::Config(_))));
    }
}
