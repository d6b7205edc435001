//! `ckptwin`: analytic periods, single simulations, makespan tables, sweeps
//! and BestPeriod searches from the command line.
//!
//! Exit codes: 0 on success, 1 on invalid input or configuration, 2 when the
//! first-order model does not apply to the requested point.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use ckptwin::analytic::{analytic_policy, general_q_waste, optimal_policy, tp_extr};
use ckptwin::engine::{run_seed, SimSetup, TraceSet};
use ckptwin::harness::{
    csv_header_comments, preset_paper_defaults, preset_table, run_sweep, run_table, to_csv_string,
    CpMode, ExperimentConfig, PredictorPreset, SweepAxis,
};
use ckptwin::model::{ExpectedFaultOffset, PolicyConfig, Strategy, SECONDS_PER_DAY};
use ckptwin::search::{best_period, best_period_analytic, SearchSpec};
use ckptwin::tracegen::DistKind;
use ckptwin::Error;

#[derive(Debug, Parser)]
#[command(
    name = "ckptwin",
    version,
    about = "Checkpointing with fault-prediction windows"
)]
struct Cli {
    /// Base seed of the replications (seed k uses base + k).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Fault law: `exp`, `weibull:<shape>` or `uniform`.
    #[arg(long, global = true)]
    dist: Option<DistKind>,

    /// Predictor: `accurate`, `weak` or `p=<precision>,r=<recall>`.
    #[arg(long, global = true)]
    predictor: Option<PredictorPreset>,

    /// Proactive checkpoint cost: `eq` (Cp = C), `0.1` or `2` (times C).
    #[arg(long = "cp-mode", global = true)]
    cp_mode: Option<CpMode>,

    /// JSON experiment configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Number of replications.
    #[arg(long, global = true)]
    reps: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Point selection shared by the single-point subcommands.
#[derive(Debug, clap::Args)]
struct Point {
    /// Number of components (defaults to the first of the configuration).
    #[arg(long)]
    n: Option<u64>,

    /// Prediction window I in seconds (defaults to the first of the configuration).
    #[arg(long)]
    window: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic periods and waste of every strategy, and the recommended one.
    Analytic {
        #[command(flatten)]
        point: Point,
        /// Evaluate at this regular period instead of the optimum.
        #[arg(long)]
        t_regular: Option<f64>,
        /// Proactive period for WithCkptI (default: its optimum).
        #[arg(long)]
        t_proactive: Option<f64>,
        /// Trust probability (default: 1 for prediction-aware strategies).
        #[arg(long)]
        q: Option<f64>,
    },
    /// Simulate one strategy on one trace.
    Simulate {
        #[command(flatten)]
        point: Point,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long)]
        t_regular: Option<f64>,
        #[arg(long)]
        t_proactive: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
        /// Also write the trace used, in text form.
        #[arg(long)]
        dump_trace: Option<PathBuf>,
    },
    /// Mean makespans and gains over Daly on the published table grid.
    Table,
    /// Waste along one axis.
    Sweep {
        #[arg(long)]
        axis: SweepAxis,
        /// Axis values (comma separated); default: the configuration's list.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Add BestPeriod columns.
        #[arg(long)]
        best_period: bool,
    },
    /// Brute-force search of the best regular period.
    BestPeriod {
        #[command(flatten)]
        point: Point,
        #[arg(long)]
        strategy: Strategy,
        /// Traces averaged by the search (default 20).
        #[arg(long)]
        traces: Option<usize>,
    },
}

fn config_for(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = match (&cli.config, &cli.command) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Command::Table) => preset_table(0.7),
        (None, _) => preset_paper_defaults(),
    };
    if let Some(seed) = cli.seed {
        config.base_seed = seed;
    }
    if let Some(dist) = cli.dist {
        config.dist = dist;
    }
    if let Some(predictor) = cli.predictor {
        config.predictors = vec![predictor];
    }
    if let Some(cp_mode) = cli.cp_mode {
        config.cp_mode = cp_mode;
    }
    if let Some(reps) = cli.reps {
        config.n_reps = reps;
    }
    if let Some(out) = &cli.out {
        config.output = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn single_setup(config: &ExperimentConfig, point: &Point) -> Result<SimSetup, Error> {
    let n = point.n.unwrap_or(config.n_procs[0]);
    let window = point.window.unwrap_or(config.windows[0]);
    config.setup(n, config.predictors[0], window)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(path) => fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        }),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    text
}

#[derive(Serialize)]
struct AnalyticLine {
    strategy: Strategy,
    t_regular: Option<f64>,
    t_proactive: Option<f64>,
    trust_prob: f64,
    t_regular_clamped: bool,
    t_proactive_clamped: bool,
    waste: Option<f64>,
    slowdown: Option<f64>,
    status: String,
}

#[derive(Serialize)]
struct AnalyticReport {
    n_procs: u64,
    mtbf: f64,
    window: f64,
    precision: f64,
    recall: f64,
    strategies: Vec<AnalyticLine>,
    recommended: Option<Strategy>,
}

fn analytic(
    config: &ExperimentConfig,
    point: &Point,
    t_regular: Option<f64>,
    t_proactive: Option<f64>,
    q: Option<f64>,
) -> Result<String, Error> {
    let setup = single_setup(config, point)?;
    let platform = setup.trace.platform;
    let predictor = setup.trace.predictor;
    let e_fault = ExpectedFaultOffset::midpoint(&predictor);
    let mut lines = Vec::new();
    for &strategy in &config.strategies {
        let evaluated = analytic_policy(strategy, &platform, &predictor, e_fault).and_then(
            |(mut policy, reg_clamped, pro_clamped)| {
                if let Some(t) = t_regular {
                    policy.t_regular = t;
                }
                if let Some(t) = t_proactive {
                    policy.t_proactive = t;
                }
                if let (Some(q), true) = (q, strategy.uses_predictions()) {
                    policy.trust_prob = q;
                }
                policy.validate(&platform, &predictor)?;
                let (breakdown, _) = general_q_waste(
                    strategy,
                    policy.t_regular,
                    policy.t_proactive,
                    policy.trust_prob,
                    &platform,
                    &predictor,
                    e_fault,
                )?;
                Ok((policy, reg_clamped, pro_clamped, breakdown))
            },
        );
        lines.push(match evaluated {
            Ok((policy, reg_clamped, pro_clamped, breakdown)) => AnalyticLine {
                strategy,
                t_regular: Some(policy.t_regular),
                t_proactive: (strategy == Strategy::WithCkptI).then_some(policy.t_proactive),
                trust_prob: policy.trust_prob,
                t_regular_clamped: reg_clamped && t_regular.is_none(),
                t_proactive_clamped: pro_clamped && t_proactive.is_none(),
                waste: Some(breakdown.waste),
                slowdown: Some(breakdown.t_final_over_t_base),
                status: "ok".to_owned(),
            },
            Err(e) if e.is_model_validity() => AnalyticLine {
                strategy,
                t_regular: None,
                t_proactive: None,
                trust_prob: 0.0,
                t_regular_clamped: false,
                t_proactive_clamped: false,
                waste: None,
                slowdown: None,
                status: e.to_string(),
            },
            Err(e) => return Err(e),
        });
    }
    let recommended = optimal_policy(&platform, &predictor, e_fault)
        .ok()
        .map(|best| best.policy.strategy);
    if lines.iter().all(|l| l.waste.is_none()) && recommended.is_none() {
        return Err(Error::ModelValidity {
            what: "no strategy has a valid analytic waste; platform MTBF",
            value: platform.mtbf(),
        });
    }
    Ok(json(&AnalyticReport {
        n_procs: platform.n_procs,
        mtbf: platform.mtbf(),
        window: predictor.window,
        precision: predictor.precision,
        recall: predictor.recall,
        strategies: lines,
        recommended,
    }))
}

#[derive(Serialize)]
struct SimulateReport {
    seed: u64,
    config_hash: String,
    policy: PolicyConfig,
    t_base: f64,
    makespan: f64,
    makespan_days: f64,
    waste: f64,
    result: ckptwin::engine::SimResult,
}

fn simulate(
    config: &ExperimentConfig,
    point: &Point,
    strategy: Strategy,
    t_regular: Option<f64>,
    t_proactive: Option<f64>,
    q: Option<f64>,
    dump_trace: Option<&Path>,
) -> Result<String, Error> {
    let setup = single_setup(config, point)?;
    let platform = setup.trace.platform;
    let predictor = setup.trace.predictor;
    let e_fault = ExpectedFaultOffset::midpoint(&predictor);
    let mut policy = match t_regular {
        Some(t) => match strategy.uses_predictions() {
            true => PolicyConfig::trusting(strategy, t, 0.0),
            false => PolicyConfig::periodic(strategy, t),
        },
        None => analytic_policy(strategy, &platform, &predictor, e_fault)?.0,
    };
    if strategy == Strategy::WithCkptI {
        policy.t_proactive = match t_proactive {
            Some(t) => t,
            None => tp_extr(&platform, &predictor, e_fault)?.value,
        };
    }
    if let Some(q) = q {
        policy.trust_prob = q;
    }
    policy.validate(&platform, &predictor)?;
    let seed = config.base_seed;
    let trace = setup.trace.generate(setup.initial_horizon(), seed)?;
    let (result, longer) = run_seed(&policy, &setup, seed, Some(&trace))?;
    if let Some(path) = dump_trace {
        longer
            .as_ref()
            .unwrap_or(&trace)
            .dump(path, &setup.trace.hash())?;
    }
    Ok(json(&SimulateReport {
        seed,
        config_hash: setup.trace.hash(),
        policy,
        t_base: setup.t_base,
        makespan: result.makespan,
        makespan_days: result.makespan / SECONDS_PER_DAY,
        waste: result.waste,
        result,
    }))
}

#[derive(Serialize)]
struct BestPeriodReport {
    strategy: Strategy,
    search: SearchSpec,
    t_regular_star: f64,
    waste_star: f64,
    analytic_t_regular: Option<f64>,
    /// Simulated waste at the analytic period, on the same traces.
    analytic_sim_waste: Option<f64>,
    /// Minimiser of the closed-form waste over the same grid.
    formula_grid_t_regular: Option<f64>,
}

fn best_period_cmd(
    config: &ExperimentConfig,
    point: &Point,
    strategy: Strategy,
    traces: Option<usize>,
) -> Result<String, Error> {
    let setup = single_setup(config, point)?;
    let platform = setup.trace.platform;
    let predictor = setup.trace.predictor;
    let e_fault = ExpectedFaultOffset::midpoint(&predictor);
    let mut spec = SearchSpec::default_for(&platform, setup.t_base);
    if let Some(n) = traces {
        spec.n_traces = n;
    }
    let set = TraceSet::new(setup, config.base_seed, spec.n_traces)?;
    let out = best_period(strategy, &set, &spec)?;
    let analytic = analytic_policy(strategy, &platform, &predictor, e_fault).ok();
    let analytic_sim_waste = match analytic {
        Some((policy, _, _)) if policy.validate(&platform, &predictor).is_ok() => {
            Some(set.stats(&policy)?.waste.mean)
        }
        _ => None,
    };
    let formula = best_period_analytic(strategy, &platform, &predictor, e_fault, &spec).ok();
    Ok(json(&BestPeriodReport {
        strategy,
        search: spec,
        t_regular_star: out.t_r_star,
        waste_star: out.waste_star,
        analytic_t_regular: analytic.map(|(p, _, _)| p.t_regular),
        analytic_sim_waste,
        formula_grid_t_regular: formula.map(|f| f.t_r_star),
    }))
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut config = config_for(cli)?;
    let out = config.output.clone();
    let text = match &cli.command {
        Command::Analytic {
            point,
            t_regular,
            t_proactive,
            q,
        } => analytic(&config, point, *t_regular, *t_proactive, *q)?,
        Command::Simulate {
            point,
            strategy,
            t_regular,
            t_proactive,
            q,
            dump_trace,
        } => simulate(
            &config,
            point,
            *strategy,
            *t_regular,
            *t_proactive,
            *q,
            dump_trace.as_deref(),
        )?,
        Command::Table => {
            let rows = run_table(&config)?;
            to_csv_string(&rows, &csv_header_comments(&config))
        }
        Command::Sweep {
            axis,
            values,
            best_period,
        } => {
            if !values.is_empty() {
                match axis {
                    SweepAxis::NProcs => {
                        config.n_procs = values.iter().map(|&v| v as u64).collect()
                    }
                    SweepAxis::TRegular => config.t_regular = values.clone(),
                    SweepAxis::IWindow => config.windows = values.clone(),
                }
            }
            config.best_period |= *best_period;
            let rows = run_sweep(&config, *axis)?;
            to_csv_string(&rows, &csv_header_comments(&config))
        }
        Command::BestPeriod {
            point,
            strategy,
            traces,
        } => best_period_cmd(&config, point, *strategy, *traces)?,
    };
    write_output(out.as_deref(), &text)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.use_stderr() {
                true => ExitCode::from(1),
                false => ExitCode::SUCCESS,
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_model_validity() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
