//! File-driven experiment runner behind the `aoi-harvest` binary.
//!
//! Subcommands: `solve`, `evaluate`, `sweep-bmax`, `sweep-alpha`,
//! `approx-amax`, `simulate`, `trace`. Exit codes: 0 success, 1 validation
//! failure, 2 solver non-convergence, 3 structural error.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::chain::{metrics_csv_row, METRICS_CSV_HEADER};
use crate::error::Error;
use crate::model::{config_fingerprint, load_config, SystemConfig};
use crate::presets::{restrict_modes, without_recovery};
use crate::rewards::RewardSpec;
use crate::sim::{write_trace_csv, SimConfig, DEFAULT_BURN_IN};
use crate::solver::{evaluate_policy, Policy, SolverParams};
use crate::{policy_metrics, prepare, solve_with_metrics, Prepared};

#[derive(Debug, Parser)]
#[command(
    name = "aoi-harvest",
    about = "Optimal transmission scheduling for an energy-harvesting status-update sensor",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Objective {
    /// Minimize the probability of the age sitting at its cap.
    Peak,
    /// Minimize the long-run average age.
    Avg,
    /// Minimize the alpha-weighted combination of both.
    Weighted,
}

#[derive(Debug, Args)]
struct ObjectiveArgs {
    #[arg(long, value_enum, default_value = "avg")]
    objective: Objective,
    /// Weight for the weighted objective, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Per-slot reward at the age cap for the peak objective (negative).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    r_prime: f64,
}

impl ObjectiveArgs {
    fn spec(&self) -> Result<RewardSpec, Error> {
        let spec = match self.objective {
            Objective::Peak => RewardSpec::PeakHit {
                r_prime: self.r_prime,
            },
            Objective::Avg => RewardSpec::AverageAge,
            Objective::Weighted => RewardSpec::Weighted {
                alpha: self.alpha.ok_or_else(|| {
                    Error::ConfigParse("--alpha is required with --objective weighted".into())
                })?,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    fn label(&self) -> &'static str {
        match self.objective {
            Objective::Peak => "peak",
            Objective::Avg => "avg",
            Objective::Weighted => "weighted",
        }
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Convergence tolerance on the value-difference span.
    #[arg(long, default_value_t = 1e-10)]
    epsilon_c: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_iter: usize,
}

impl SolverArgs {
    fn params(&self) -> SolverParams {
        SolverParams {
            eps_c: self.epsilon_c,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one instance for one objective; write the policy and metrics.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        objective: ObjectiveArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Metrics CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Policy file output path.
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Evaluate a stored policy on an instance (cross-evaluation).
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[command(flatten)]
        objective: ObjectiveArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve across battery capacities, recovery on/off, and mode subsets.
    SweepBmax {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        objective: ObjectiveArgs,
        #[command(flatten)]
        solver: SolverArgs,
        /// Capacities: a range `2..30` (inclusive) or a comma list `2,4,8`.
        #[arg(long, default_value = "2..30")]
        bmax: String,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the weighted objective across a grid of alpha values.
    SweepAlpha {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Comma list of weights; defaults to 0, 0.1, ..., 1.
        #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
        alphas: String,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grow the age cap until the optimal policy almost never reaches it.
    ApproxAmax {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value_t = 2)]
        k0: u32,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long, default_value_t = 5)]
        step: u32,
        #[arg(long, default_value_t = 500)]
        ceiling: u32,
        /// History CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        policy_out: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the four metrics under a stored policy.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 10_000_000)]
        horizon: u64,
        #[arg(long, default_value_t = DEFAULT_BURN_IN)]
        burn_in: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-slot event log of a simulated trajectory.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 100)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Clap handles --help/--version as "errors" with exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig { .. }
        | Error::ConfigParse(_)
        | Error::PolicyFile(_)
        | Error::SimSetup(_)
        | Error::Io(_) => 1,
        Error::NotConverged { .. } => 2,
        _ => 3,
    }
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Solve {
            config,
            objective,
            solver,
            out,
            policy_out,
        } => cmd_solve(&config, &objective, &solver.params(), out, policy_out),
        Command::Evaluate {
            config,
            policy,
            objective,
            solver,
            out,
        } => cmd_evaluate(&config, &policy, &objective, &solver.params(), out),
        Command::SweepBmax {
            config,
            objective,
            solver,
            bmax,
            jobs,
            out,
        } => cmd_sweep_bmax(&config, &objective, &solver.params(), &bmax, jobs, &out),
        Command::SweepAlpha {
            config,
            solver,
            alphas,
            jobs,
            out,
        } => cmd_sweep_alpha(&config, &solver.params(), &alphas, jobs, &out),
        Command::ApproxAmax {
            config,
            solver,
            k0,
            epsilon,
            step,
            ceiling,
            out,
            policy_out,
        } => cmd_approx(&config, &solver.params(), k0, epsilon, step, ceiling, out, policy_out),
        Command::Simulate {
            config,
            policy,
            horizon,
            burn_in,
            seed,
            out,
        } => cmd_simulate(&config, &policy, horizon, burn_in, seed, out),
        Command::Trace {
            config,
            policy,
            horizon,
            seed,
            out,
        } => cmd_trace(&config, &policy, horizon, seed, out),
    }
}

fn load_and_prepare(path: &Path) -> Result<(SystemConfig, Prepared), Error> {
    let cfg = load_config(path)?;
    let prep = prepare(&cfg)?;
    Ok((cfg, prep))
}

fn load_policy_for(prep: &Prepared, path: &Path) -> Result<Policy, Error> {
    let file = File::open(path)?;
    Policy::read_text(&prep.space, BufReader::new(file))
}

fn write_out(out: Option<PathBuf>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => {
            let mut f = BufWriter::new(File::create(path)?);
            f.write_all(content.as_bytes())?;
            f.flush()?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn cmd_solve(
    config: &Path,
    objective: &ObjectiveArgs,
    params: &SolverParams,
    out: Option<PathBuf>,
    policy_out: Option<PathBuf>,
) -> Result<(), Error> {
    let spec = objective.spec()?;
    let (cfg, prep) = load_and_prepare(config)?;
    let (solved, metrics) = solve_with_metrics(&prep, &spec, params)?;
    if let Some(path) = policy_out {
        let mut f = BufWriter::new(File::create(path)?);
        solved.policy.write_text(&prep.space, &mut f)?;
        f.flush()?;
    }
    let row = metrics_csv_row(
        objective.label(),
        objective.alpha,
        cfg.b_max,
        cfg.recovery.p_rec,
        cfg.recovery.n_rec,
        &metrics,
        solved.gain,
        solved.iterations,
    );
    write_out(out, &format!("{METRICS_CSV_HEADER}\n{row}\n"))?;
    eprintln!(
        "solved {} states in {} iterations (gain {:.12e}, span {:.3e}, config {})",
        prep.space.len(),
        solved.iterations,
        solved.gain,
        solved.span_at_stop,
        config_fingerprint(&cfg),
    );
    Ok(())
}

fn cmd_evaluate(
    config: &Path,
    policy_path: &Path,
    objective: &ObjectiveArgs,
    params: &SolverParams,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let spec = objective.spec()?;
    let (cfg, prep) = load_and_prepare(config)?;
    let policy = load_policy_for(&prep, policy_path)?;
    let rewards = spec.reward_vector(&prep.space);
    let evaluated = evaluate_policy(&prep.kernel, &policy, &rewards, params)?.require_converged()?;
    let metrics = policy_metrics(&prep, &policy)?;
    let row = metrics_csv_row(
        objective.label(),
        objective.alpha,
        cfg.b_max,
        cfg.recovery.p_rec,
        cfg.recovery.n_rec,
        &metrics,
        evaluated.gain,
        evaluated.iterations,
    );
    write_out(out, &format!("{METRICS_CSV_HEADER}\n{row}\n"))?;
    Ok(())
}

/// A sweep work item: a full variant instance plus its extra CSV columns.
struct SweepItem {
    cfg: SystemConfig,
    spec: RewardSpec,
    label: &'static str,
    alpha: Option<f64>,
    extra: String,
}

impl SweepItem {
    fn row(&self, params: &SolverParams) -> String {
        let hash = config_fingerprint(&self.cfg);
        match prepare(&self.cfg).and_then(|prep| solve_with_metrics(&prep, &self.spec, params)) {
            Ok((solved, metrics)) => {
                let base = metrics_csv_row(
                    self.label,
                    self.alpha,
                    self.cfg.b_max,
                    self.cfg.recovery.p_rec,
                    self.cfg.recovery.n_rec,
                    &metrics,
                    solved.gain,
                    solved.iterations,
                );
                format!("{base},{}{hash},\n", self.extra)
            }
            Err(e) => {
                let msg = e.to_string().replace([',', '\n'], ";");
                format!(
                    "{},{},{},{},{},,,,,,,{}{hash},{msg}\n",
                    self.label,
                    self.alpha.map(|a| a.to_string()).unwrap_or_default(),
                    self.cfg.b_max,
                    self.cfg.recovery.p_rec,
                    self.cfg.recovery.n_rec,
                    self.extra,
                )
            }
        }
    }
}

fn cmd_sweep_bmax(
    config: &Path,
    objective: &ObjectiveArgs,
    params: &SolverParams,
    bmax: &str,
    jobs: Option<usize>,
    out: &Path,
) -> Result<(), Error> {
    let spec = objective.spec()?;
    let base = load_config(config)?;
    let values = parse_int_list(bmax)?;
    let mode_subsets = mode_subsets(base.modes.len());
    let mut items = Vec::new();
    for &b in &values {
        for recovery in [false, true] {
            for subset in &mode_subsets {
                let mut cfg = restrict_modes(&base, subset);
                if !recovery {
                    cfg = without_recovery(&cfg);
                }
                cfg.b_max = b;
                let modes_label: String = subset.iter().map(|m| (m + 1).to_string()).collect();
                let extra = format!(
                    "{modes_label},{},",
                    if recovery { "on" } else { "off" }
                );
                items.push(SweepItem {
                    cfg,
                    spec,
                    label: objective.label(),
                    alpha: objective.alpha,
                    extra,
                });
            }
        }
    }
    let header = format!("{METRICS_CSV_HEADER},modes,recovery,config_hash,error");
    run_sweep(&items, params, jobs, out, &header)
}

fn cmd_sweep_alpha(
    config: &Path,
    params: &SolverParams,
    alphas: &str,
    jobs: Option<usize>,
    out: &Path,
) -> Result<(), Error> {
    let base = load_config(config)?;
    let values = parse_float_list(alphas)?;
    let items: Vec<SweepItem> = values
        .iter()
        .map(|&alpha| SweepItem {
            cfg: base.clone(),
            spec: RewardSpec::Weighted { alpha },
            label: "weighted",
            alpha: Some(alpha),
            extra: String::new(),
        })
        .collect();
    for item in &items {
        item.spec.validate()?;
    }
    let header = format!("{METRICS_CSV_HEADER},config_hash,error");
    run_sweep(&items, params, jobs, out, &header)
}

/// Runs sweep items on a bounded pool, writing rows in item order and
/// flushing after every row. If the output file already holds a valid
/// prefix of the sweep, the completed rows are kept and skipped.
fn run_sweep(
    items: &[SweepItem],
    params: &SolverParams,
    jobs: Option<usize>,
    out: &Path,
    header: &str,
) -> Result<(), Error> {
    let jobs = jobs
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1);
    let skip = resumable_rows(out, header)?;
    let mut sink: Box<dyn Write> = if skip > 0 {
        eprintln!("resuming: keeping {skip} completed rows");
        Box::new(OpenOptions::new().append(true).open(out)?)
    } else {
        let mut f = File::create(out)?;
        writeln!(f, "{header}")?;
        f.flush()?;
        Box::new(f)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    let todo = &items[skip.min(items.len())..];
    for chunk in todo.chunks(jobs * 2) {
        let rows: Vec<String> = pool.install(|| chunk.par_iter().map(|i| i.row(params)).collect());
        for row in rows {
            sink.write_all(row.as_bytes())?;
            sink.flush()?;
        }
    }
    Ok(())
}

/// Number of complete data rows already present, or 0 for a fresh file.
fn resumable_rows(out: &Path, header: &str) -> Result<usize, Error> {
    let file = match File::open(out) {
        Ok(f) => f,
        Err(_) => return Ok(0),
    };
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(first)) if first == header => {}
        _ => return Ok(0),
    }
    let mut count = 0;
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            count += 1;
        }
    }
    Ok(count)
}

#[allow(clippy::too_many_arguments)]
fn cmd_approx(
    config: &Path,
    params: &SolverParams,
    k0: u32,
    epsilon: f64,
    step: u32,
    ceiling: u32,
    out: Option<PathBuf>,
    policy_out: Option<PathBuf>,
) -> Result<(), Error> {
    if k0 < 2 {
        return Err(Error::ConfigParse("--k0 must be at least 2".into()));
    }
    if epsilon <= 0.0 {
        return Err(Error::ConfigParse("--epsilon must be positive".into()));
    }
    if step < 1 {
        return Err(Error::ConfigParse("--step must be at least 1".into()));
    }
    let base = load_config(config)?;
    let result = crate::approx::find_amax(
        &base,
        &crate::approx::ApproxParams {
            k0,
            epsilon,
            step,
            ceiling,
            solver: *params,
        },
    )?;
    let mut csv = String::from("K,peak_prob\n");
    for (k, p) in &result.history {
        csv.push_str(&format!("{k},{p}\n"));
    }
    write_out(out, &csv)?;
    if let Some(path) = policy_out {
        let mut cfg = base;
        cfg.a_max = i64::from(result.a_max_final);
        let prep = prepare(&cfg)?;
        let mut f = BufWriter::new(File::create(path)?);
        result.policy.write_text(&prep.space, &mut f)?;
        f.flush()?;
    }
    eprintln!(
        "age cap {} certified with peak probability {:.3e} (epsilon {epsilon:e})",
        result.a_max_final, result.peak_prob_final
    );
    Ok(())
}

fn cmd_simulate(
    config: &Path,
    policy_path: &Path,
    horizon: u64,
    burn_in: u64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let (_, prep) = load_and_prepare(config)?;
    let policy = load_policy_for(&prep, policy_path)?;
    let sim = SimConfig {
        horizon,
        burn_in,
        seed,
        start: prep.space.decode(prep.space.canonical_start()),
    };
    let m = crate::sim::simulate(&prep.scaled, &prep.space, &policy, &sim)?;
    let mut csv = String::from(
        "avg_age,avg_age_se,peak_hit_prob,peak_hit_prob_se,avg_tx_power,avg_tx_power_se,avg_battery,avg_battery_se,slots,seed\n",
    );
    csv.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{seed}\n",
        m.avg_age.mean,
        m.avg_age.std_err,
        m.peak_hit_prob.mean,
        m.peak_hit_prob.std_err,
        m.avg_tx_power.mean,
        m.avg_tx_power.std_err,
        m.avg_battery.mean,
        m.avg_battery.std_err,
        m.slots_counted,
    ));
    write_out(out, &csv)?;
    Ok(())
}

fn cmd_trace(
    config: &Path,
    policy_path: &Path,
    horizon: u64,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let (_, prep) = load_and_prepare(config)?;
    let policy = load_policy_for(&prep, policy_path)?;
    let sim = SimConfig {
        horizon,
        burn_in: 0,
        seed,
        start: prep.space.decode(prep.space.canonical_start()),
    };
    let events = crate::sim::trace(&prep.scaled, &prep.space, &policy, &sim)?;
    let mut buf = Vec::new();
    write_trace_csv(&events, &prep.scaled, &mut buf)?;
    write_out(out, &String::from_utf8(buf).expect("csv is utf-8"))?;
    Ok(())
}

/// Mode subsets swept by `sweep-bmax`: each single mode, then all modes.
fn mode_subsets(num_modes: usize) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> = (0..num_modes).map(|m| vec![m]).collect();
    if num_modes > 1 {
        subsets.push((0..num_modes).collect());
    }
    subsets
}

fn parse_int_list(text: &str) -> Result<Vec<i64>, Error> {
    let bad = |msg: &str| Error::ConfigParse(format!("bad value list `{text}`: {msg}"));
    let values: Vec<i64> = if let Some((lo, hi)) = text.split_once("..") {
        let lo: i64 = lo.trim().parse().map_err(|_| bad("bad range start"))?;
        let hi: i64 = hi.trim().parse().map_err(|_| bad("bad range end"))?;
        if lo > hi {
            return Err(bad("range start exceeds end"));
        }
        (lo..=hi).collect()
    } else {
        text.split(',')
            .map(|v| v.trim().parse::<i64>().map_err(|_| bad("bad integer")))
            .collect::<Result<_, _>>()?
    };
    if values.is_empty() {
        return Err(bad("empty"));
    }
    if !values.windows(2).all(|w| w[0] < w[1]) {
        return Err(bad("values must be strictly increasing"));
    }
    Ok(values)
}

fn parse_float_list(text: &str) -> Result<Vec<f64>, Error> {
    let bad = |msg: &str| Error::ConfigParse(format!("bad value list `{text}`: {msg}"));
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| bad("bad number")))
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(bad("empty"));
    }
    if !values.windows(2).all(|w| w[0] < w[1]) {
        return Err(bad("values must be strictly increasing"));
    }
    Ok(values)
}
