//! Command-line front end. The `mwlab` binary only forwards to [`run`].
//!
//! Exit codes: 0 success, 1 I/O or numeric failure, 2 configuration or
//! validation error, 3 step budget exceeded, 4 domain error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::arrivals::{generate, ArrivalSpec, DeviationTracker};
use crate::error::{Error, Result};
use crate::experiments::{
    converse_experiment, ftail_experiment, sensitivity_experiment, ssc_experiment,
    wmw_equivalence_check, with_threads, ConverseConfig, FTailConfig, NetworkRef,
    SensitivityConfig, SscConfig, WmwConfig, STEP_BUDGET,
};
use crate::fluid::{capacity_check, collapse_direction, integrate_fluid, invariant_set, Capacity};
use crate::linalg::parse_vector;
use crate::netmodel::{Network, NetworkConfig};
use crate::report::{fmt_f64, to_json, write_atomic, CsvTable};

pub const THREADS_ENV: &str = "MWLAB_THREADS";

/// Comma-separated vector flag such as `--lambda 0.5,0.5`.
pub type Vector = Vec<f64>;

#[derive(Debug, Parser)]
#[command(name = "mwlab", version, about = "Max-Weight network simulation and fluid analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Overrides the seed stored in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Also write per-trajectory CSV files.
    #[arg(long, global = true)]
    pub dump_trajectories: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the discrete queue dynamics.
    Simulate {
        /// Network JSON.
        #[arg(long)]
        config: PathBuf,
        /// Arrival spec JSON.
        #[arg(long)]
        arrivals: PathBuf,
        #[arg(long)]
        steps: u64,
        /// Initial queue vector, e.g. `3,1` (default: empty queues).
        #[arg(long, value_parser = parse_vector)]
        q0: Option<Vector>,
    },
    /// Integrate the fluid model exactly.
    Fluid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_vector)]
        lambda: Vector,
        #[arg(long, value_parser = parse_vector)]
        q0: Vector,
        #[arg(long)]
        horizon: f64,
    },
    /// Describe I(lambda) and, on the boundary, a collapse direction.
    InvariantSet {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_vector)]
        lambda: Vector,
        /// Points to project onto I(lambda), separated by `;`.
        #[arg(long)]
        project: Option<String>,
    },
    /// Classify lambda against the capacity region.
    Capacity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_parser = parse_vector)]
        lambda: Vector,
    },
    Sensitivity {
        #[arg(long)]
        config: PathBuf,
    },
    Ssc {
        #[arg(long)]
        config: PathBuf,
    },
    Converse {
        #[arg(long)]
        config: PathBuf,
    },
    CheckWmw {
        #[arg(long)]
        config: PathBuf,
    },
    ProbeFtail {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

/// Written to `<out>/manifest.json` after every successful run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name.
    pub argv: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidAction(_) | Error::Json(_) => 2,
        Error::StepBudget { .. } => 3,
        Error::Domain(_) | Error::ExtremePoint(_) | Error::Geometry(_) | Error::WmwMismatch { .. } => 4,
        Error::NumericFailure { .. } | Error::Io(_) => 1,
    }
}

/// Parses `args` (including the program name), runs, and reports errors on
/// stderr.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let argv = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mwlab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn execute(cli: Cli, argv: Vec<String>) -> Result<()> {
    if let Command::Replay { manifest } = &cli.command {
        let text = std::fs::read_to_string(manifest)?;
        let m: RunManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", manifest.display())))?;
        let mut args = vec!["mwlab".to_string()];
        args.extend(m.argv.iter().cloned());
        let inner = Cli::try_parse_from(&args).map_err(|e| Error::Config(e.to_string()))?;
        if matches!(inner.command, Command::Replay { .. }) {
            return Err(Error::Config("manifest records another replay".into()));
        }
        return execute(inner, m.argv);
    }

    let start = Instant::now();
    let g = cli.global.clone();
    std::fs::create_dir_all(&g.out)?;
    let mut outputs = Outputs::new(&g.out);
    let (name, configs) = match cli.command {
        Command::Simulate { config, arrivals, steps, q0 } => {
            cmd_simulate(&config, &arrivals, steps, q0, g.seed.unwrap_or(0), &mut outputs)?;
            ("simulate", vec![config, arrivals])
        }
        Command::Fluid { config, lambda, q0, horizon } => {
            let net = load_network(&config)?;
            let tr = integrate_fluid(&net, &lambda, &q0, horizon)?;
            outputs.csv("fluid.csv", &tr.to_csv())?;
            ("fluid", vec![config])
        }
        Command::InvariantSet { config, lambda, project } => {
            cmd_invariant_set(&config, &lambda, project.as_deref(), &mut outputs)?;
            ("invariant-set", vec![config])
        }
        Command::Capacity { config, lambda } => {
            let net = load_network(&config)?;
            let class = capacity_check(&net, &lambda)?;
            println!("{}", serde_json::to_value(class)?.as_str().unwrap_or_default());
            outputs.json("capacity.json", &serde_json::json!({ "lambda": lambda, "capacity": class }))?;
            ("capacity", vec![config])
        }
        Command::Sensitivity { config } => {
            let (mut cfg, net) = load_experiment::<SensitivityConfig>(&config, |c| &c.network)?;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            let rep = with_threads(g.threads, || sensitivity_experiment(&net, &cfg))??;
            outputs.csv("sensitivity.csv", &rep.to_csv())?;
            outputs.summary("sensitivity.json", &cfg, &rep)?;
            ("sensitivity", vec![config])
        }
        Command::Ssc { config } => {
            let (mut cfg, net) = load_experiment::<SscConfig>(&config, |c| &c.network)?;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            let rep = with_threads(g.threads, || ssc_experiment(&net, &cfg, g.dump_trajectories))??;
            outputs.csv("ssc.csv", &rep.to_csv())?;
            outputs.summary("ssc.json", &cfg, &rep)?;
            outputs.dumps(&rep.dumps)?;
            ("ssc", vec![config])
        }
        Command::Converse { config } => {
            let (mut cfg, net) = load_experiment::<ConverseConfig>(&config, |c| &c.network)?;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            let rep =
                with_threads(g.threads, || converse_experiment(&net, &cfg, g.dump_trajectories))??;
            outputs.csv("converse.csv", &rep.to_csv())?;
            outputs.summary("converse.json", &cfg, &rep)?;
            outputs.dumps(&rep.dumps)?;
            ("converse", vec![config])
        }
        Command::CheckWmw { config } => {
            let (mut cfg, net) = load_experiment::<WmwConfig>(&config, |c| &c.network)?;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            let rep = wmw_equivalence_check(&net, &cfg)?;
            outputs.csv("wmw.csv", &rep.to_csv())?;
            outputs.summary("wmw.json", &cfg, &rep)?;
            ("check-wmw", vec![config])
        }
        Command::ProbeFtail { config } => {
            let mut cfg: FTailConfig = read_json(&config)?;
            cfg.seed = g.seed.unwrap_or(cfg.seed);
            let rep = with_threads(g.threads, || ftail_experiment(&cfg))??;
            outputs.csv("ftail.csv", &rep.to_csv())?;
            outputs.summary("ftail.json", &cfg, &rep)?;
            ("probe-ftail", vec![config])
        }
        Command::Replay { .. } => unreachable!(),
    };
    let manifest = RunManifest {
        command: name.to_string(),
        argv,
        config_paths: configs,
        seed: g.seed,
        out_dir: g.out.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: outputs.written,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    write_atomic(&g.out.join("manifest.json"), &to_json(&manifest)?)
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), written: Vec::new() }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        self.write(name, &table.render())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &to_json(value)?)
    }

    fn summary<C: Serialize, R: Serialize>(&mut self, name: &str, config: &C, report: &R) -> Result<()> {
        self.json(name, &serde_json::json!({ "config": config, "report": report }))
    }

    fn dumps(&mut self, dumps: &[(f64, CsvTable)]) -> Result<()> {
        for (r, table) in dumps {
            self.csv(&format!("trajectories/r_{}.csv", fmt_f64(*r)), table)?;
        }
        Ok(())
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    // serde_json reports line and column of the offending field
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_network(path: &Path) -> Result<Network> {
    let cfg: NetworkConfig = read_json(path)?;
    Network::from_config(cfg)
}

fn load_experiment<T: DeserializeOwned>(
    path: &Path,
    network: impl Fn(&T) -> &NetworkRef,
) -> Result<(T, Network)> {
    let cfg: T = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let net = network(&cfg).load(base)?;
    Ok((cfg, net))
}

fn cmd_simulate(
    net_path: &Path,
    arrivals_path: &Path,
    steps: u64,
    q0: Option<Vec<f64>>,
    seed: u64,
    outputs: &mut Outputs,
) -> Result<()> {
    let net = load_network(net_path)?;
    let spec: ArrivalSpec = read_json(arrivals_path)?;
    spec.validate()?;
    if spec.dim() != net.n() {
        return Err(Error::Config(format!(
            "{}: arrivals have dimension {}, network has {} queues",
            arrivals_path.display(),
            spec.dim(),
            net.n()
        )));
    }
    if steps as f64 > STEP_BUDGET {
        return Err(Error::StepBudget { requested: steps as f64, limit: STEP_BUDGET });
    }
    let mut q = q0.unwrap_or_else(|| vec![0.0; net.n()]);
    if q.len() != net.n() || q.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Config(format!("q0: {q:?} is not a non-negative {}-vector", net.n())));
    }
    let samples = generate(&spec, 1.0, steps as usize, seed)?;
    let mut tracker = DeviationTracker::new(spec.mean_at(1.0));
    let n = net.n();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("q_{i}")));
    header.push("action".into());
    header.push("maxdev".into());
    let mut table = CsvTable::new(header);
    for (t, a) in samples.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(q.iter().map(|v| fmt_f64(*v)));
        let maxdev = tracker.max();
        let chosen = net.step_in_place(&mut q, a);
        tracker.push(a);
        row.push(chosen.to_string());
        row.push(fmt_f64(maxdev));
        table.push(row);
    }
    outputs.csv("trajectory.csv", &table)
}

#[derive(Serialize)]
struct InvariantSetSummary {
    lambda: Vec<f64>,
    capacity: Capacity,
    /// Rows `normal . x <= 0`, orthant rows included.
    halfspaces: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    collapse_direction: Option<Vec<f64>>,
    projections: Vec<Projection>,
}

#[derive(Serialize)]
struct Projection {
    point: Vec<f64>,
    projection: Vec<f64>,
    distance: f64,
}

fn cmd_invariant_set(
    config: &Path,
    lambda: &[f64],
    project: Option<&str>,
    outputs: &mut Outputs,
) -> Result<()> {
    let net = load_network(config)?;
    let capacity = capacity_check(&net, lambda)?;
    let iset = invariant_set(&net, lambda)?;
    let collapse = match capacity {
        Capacity::Boundary => match collapse_direction(&net, lambda) {
            Ok(v) => Some(v),
            Err(Error::ExtremePoint(_)) => None,
            Err(e) => return Err(e),
        },
        _ => None,
    };
    let mut projections = Vec::new();
    for chunk in project.unwrap_or("").split(';').filter(|s| !s.trim().is_empty()) {
        let point = parse_vector(chunk).map_err(|e| Error::Config(format!("project: {e}")))?;
        if point.len() != net.n() {
            return Err(Error::Config(format!("project: {point:?} has the wrong dimension")));
        }
        let p = iset.project(&point)?;
        projections.push(Projection {
            distance: crate::linalg::dist(&point, &p),
            point,
            projection: p,
        });
    }
    let summary = InvariantSetSummary {
        lambda: lambda.to_vec(),
        capacity,
        halfspaces: iset.poly.halfspaces.iter().map(|h| h.normal.clone()).collect(),
        collapse_direction: collapse,
        projections,
    };
    outputs.json("invariant_set.json", &summary)
}
