//! Command-line interface for the flexnet library.
//!
//! Exit codes: 0 all checks passed, 1 usage or I/O error, 2 a verification
//! row failed, 3 stability rejection.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use flexnet::bounds::{prop1_bound, theta_bound, thm1_bound, thm2_bound, thm3_bound, valid_from};
use flexnet::exact::{solve_model, SolveOptions};
use flexnet::metrics::{alpha, beta, rat_to_f64, theta_metric, RationalJson, WeightFunction};
use flexnet::model::{load_model, model_to_json, NetworkModel};
use flexnet::sim::{estimate_occupancy, SimConfig};
use flexnet::stability::{check_ergodic_with_cap, StabilityStatus, DEFAULT_SUBSET_CAP};
use flexnet::transforms::{edge_simplify, full_simplify, gamma_split};

use flexnet_cli::battery::{run_monotonicity_battery, BatteryKind, MonotonicityOptions};
use flexnet_cli::experiment::{
    run_family_sweep, run_verification, ExactParams, ExperimentSpec, FamilyKind, HarnessError,
    Method, ModelSource, SimParams,
};
use flexnet_cli::output::{
    bounds_csv, emit, emit_sidecar, sweep_csv, verification_csv, CSV_HEADER,
};

const EXIT_ROW_FAILED: u8 = 2;
const EXIT_STABILITY: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "flexnet",
    about = "Load-balancing networks on bipartite compatibility graphs: metrics, stability, occupancy bounds, exact solving and simulation",
    version
)]
struct Cli {
    /// Base seed for randomized subcommands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the primary output to this file (atomically) instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format for tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Default)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Subcommand-specific default (CSV for tables, JSON for reports).
    Default,
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Flexibility metrics of a model as exact rationals.
    Metrics {
        model: PathBuf,
        /// Also report the uniform-weight theta metric.
        #[arg(long)]
        theta: bool,
    },
    /// Ergodicity verdict via exhaustive subset enumeration.
    CheckErgodic {
        model: PathBuf,
        /// Cap on the server count for the enumeration.
        #[arg(long, default_value_t = DEFAULT_SUBSET_CAP)]
        cap: usize,
    },
    /// Occupancy lower-bound table of a model.
    Bounds {
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        imax: usize,
        /// Include the uniform-weight theta bound column.
        #[arg(long)]
        theta: bool,
    },
    /// Apply a network transformation and emit the result with its record.
    Transform {
        model: PathBuf,
        #[arg(long, value_enum)]
        op: TransformOp,
        /// Edge as "dispatcher,server" (edge-simplify only).
        #[arg(long)]
        edge: Option<String>,
        /// Degree threshold (gamma-split only).
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Exact stationary occupancy of a small model.
    SolveExact {
        model: PathBuf,
        /// Per-server queue cap; chosen automatically when omitted.
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 10)]
        imax: usize,
    },
    /// Event-driven simulation with batch-means confidence intervals.
    Simulate {
        model: PathBuf,
        #[arg(long, default_value_t = 1e6)]
        horizon: f64,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 10)]
        imax: usize,
        #[arg(long, default_value_t = 20)]
        batches: usize,
        #[arg(long, default_value_t = 0.2)]
        burn_in: f64,
        #[arg(long, default_value_t = 1_000_000)]
        guard: u64,
    },
    /// Audit the occupancy bounds against an exact solve or a simulation.
    Verify(VerifyArgs),
    /// Audit the combined bound across a graph family.
    Sweep(SweepArgs),
    /// Stationary monotonicity battery over random transformed models.
    Monotonicity {
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 8)]
        imax: usize,
        /// Transformation kinds to include.
        #[arg(long, value_enum, value_delimiter = ',')]
        kinds: Vec<BatteryKindArg>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TransformOp {
    EdgeSimplify,
    FullSimplify,
    GammaSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BatteryKindArg {
    ArrivalDecrease,
    ServiceIncrease,
    EdgeSimplify,
}

impl From<BatteryKindArg> for BatteryKind {
    fn from(value: BatteryKindArg) -> Self {
        match value {
            BatteryKindArg::ArrivalDecrease => BatteryKind::ArrivalDecrease,
            BatteryKindArg::ServiceIncrease => BatteryKind::ServiceIncrease,
            BatteryKindArg::EdgeSimplify => BatteryKind::EdgeSimplify,
        }
    }
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Model file; alternatively use --family/--n/--load.
    model: Option<PathBuf>,
    #[arg(long)]
    family: Option<FamilyKind>,
    #[arg(long)]
    n: Option<usize>,
    /// Load factor for family models (fraction of the critical rate).
    #[arg(long, default_value_t = 0.8)]
    load: f64,
    #[arg(long, default_value = "exact")]
    method: String,
    #[arg(long, default_value_t = 10)]
    imax: usize,
    /// Include the uniform-weight theta bound.
    #[arg(long)]
    theta: bool,
    #[command(flatten)]
    exact: ExactArgs,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    family: FamilyKind,
    #[arg(long, default_value_t = 1)]
    n_from: usize,
    #[arg(long, default_value_t = 20)]
    n_to: usize,
    #[arg(long, default_value_t = 0.8)]
    load: f64,
    #[arg(long, default_value = "simulate")]
    method: String,
    #[arg(long, default_value_t = 10)]
    imax: usize,
    #[command(flatten)]
    exact: ExactArgs,
    #[command(flatten)]
    sim: SimArgs,
}

#[derive(Debug, Args)]
struct ExactArgs {
    /// Per-server queue cap for the exact method.
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Debug, Args)]
struct SimArgs {
    #[arg(long, default_value_t = 1e6)]
    horizon: f64,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 20)]
    batches: usize,
    #[arg(long, default_value_t = 0.2)]
    burn_in: f64,
}

fn parse_method(label: &str, exact: &ExactArgs, sim: &SimArgs) -> Result<Method> {
    match label {
        "exact" => Ok(Method::Exact(ExactParams {
            cap: exact.cap,
            tol: exact.tol,
            ..ExactParams::default()
        })),
        "simulate" => Ok(Method::Simulate(SimParams {
            horizon: sim.horizon,
            replications: sim.reps,
            batches: sim.batches,
            burn_in: sim.burn_in,
            ..SimParams::default()
        })),
        other => bail!("unknown method {other}; expected exact or simulate"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Metrics { model, theta } => {
            let model = load_model(&model)?;
            let graph = model.graph();
            let a: RationalJson = alpha(graph).into();
            let b: RationalJson = beta(graph).into();
            let t: Option<RationalJson> = theta.then(|| {
                theta_metric(graph, &WeightFunction::uniform(graph))
                    .expect("uniform weights are valid")
                    .into()
            });
            let content = match cli.format {
                Format::Csv => {
                    let mut s = format!(
                        "{CSV_HEADER}\nalpha_num,alpha_den,alpha,beta_num,beta_den,beta"
                    );
                    if t.is_some() {
                        s.push_str(",theta_num,theta_den,theta");
                    }
                    s.push('\n');
                    s.push_str(&format!(
                        "{},{},{},{},{},{}",
                        a.num, a.den, a.float, b.num, b.den, b.float
                    ));
                    if let Some(t) = &t {
                        s.push_str(&format!(",{},{},{}", t.num, t.den, t.float));
                    }
                    s.push('\n');
                    s
                }
                _ => {
                    let mut obj = serde_json::json!({"alpha": a, "beta": b});
                    if let Some(t) = t {
                        obj["theta_uniform"] = serde_json::to_value(t)?;
                    }
                    serde_json::to_string_pretty(&obj)? + "\n"
                }
            };
            emit(out, &content)?;
            Ok(0)
        }
        Command::CheckErgodic { model, cap } => {
            let model = load_model(&model)?;
            let verdict = check_ergodic_with_cap(&model, cap)?;
            let content = match cli.format {
                Format::Csv => {
                    let witness = verdict
                        .witness
                        .as_ref()
                        .map(|w| {
                            w.iter().map(|u| u.as_str()).collect::<Vec<_>>().join(";")
                        })
                        .unwrap_or_default();
                    format!(
                        "{CSV_HEADER}\nstatus,margin,witness\n{:?},{:e},{}\n",
                        verdict.status, verdict.margin, witness
                    )
                }
                _ => serde_json::to_string_pretty(&verdict)? + "\n",
            };
            emit(out, &content)?;
            Ok(if verdict.status == StabilityStatus::Ergodic {
                0
            } else {
                EXIT_STABILITY
            })
        }
        Command::Bounds { model, imax, theta } => {
            let model = load_model(&model)?;
            let content = bounds_table(&model, imax, theta, cli.format)?;
            emit(out, &content)?;
            Ok(0)
        }
        Command::Transform {
            model,
            op,
            edge,
            gamma,
        } => {
            let model = load_model(&model)?;
            let report = match op {
                TransformOp::EdgeSimplify => {
                    let spec = edge.context("--edge d,u is required for edge-simplify")?;
                    let (d, u) = spec
                        .split_once(',')
                        .context("--edge must be \"dispatcher,server\"")?;
                    let (result, record) = edge_simplify(&model, &d.into(), &u.into())?;
                    serde_json::json!({
                        "op": "edge-simplify",
                        "record": record,
                        "model": serde_json::from_str::<serde_json::Value>(&model_to_json(&result))?,
                    })
                }
                TransformOp::FullSimplify => {
                    let (result, record) = full_simplify(&model)?;
                    serde_json::json!({
                        "op": "full-simplify",
                        "record": record,
                        "model": serde_json::from_str::<serde_json::Value>(&model_to_json(&result))?,
                    })
                }
                TransformOp::GammaSplit => {
                    let gamma = gamma.context("--gamma is required for gamma-split")?;
                    let (g0, induced, record) = gamma_split(&model, gamma)?;
                    serde_json::json!({
                        "op": "gamma-split",
                        "record": record,
                        "g0_model": serde_json::from_str::<serde_json::Value>(&model_to_json(&g0))?,
                        "g_gamma_model": serde_json::from_str::<serde_json::Value>(&model_to_json(&induced))?,
                    })
                }
            };
            emit(out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            Ok(0)
        }
        Command::SolveExact {
            model,
            cap,
            tol,
            imax,
        } => {
            let model = load_model(&model)?;
            let occ = solve_model(
                &model,
                &SolveOptions {
                    cap,
                    tol,
                    i_max: imax,
                    ..SolveOptions::default()
                },
            )?;
            let content = match cli.format {
                Format::Json => serde_json::to_string_pretty(&occ)? + "\n",
                _ => {
                    let mut s = format!("{CSV_HEADER}\ni,Eq");
                    for u in occ.tails.keys() {
                        s.push_str(&format!(",tail_{u}"));
                    }
                    s.push('\n');
                    for i in 0..=imax {
                        s.push_str(&format!("{},{:e}", i, occ.curve.values[i]));
                        for t in occ.tails.values() {
                            s.push_str(&format!(",{:e}", t[i]));
                        }
                        s.push('\n');
                    }
                    s
                }
            };
            emit(out, &content)?;
            emit_sidecar(
                out,
                &serde_json::json!({
                    "residual": occ.residual,
                    "boundary_mass": occ.boundary_mass,
                    "tol": occ.tol,
                    "mean_total_tasks": occ.mean_total_tasks,
                }),
            )?;
            Ok(0)
        }
        Command::Simulate {
            model,
            horizon,
            reps,
            imax,
            batches,
            burn_in,
            guard,
        } => {
            let model = load_model(&model)?;
            let mut config = SimConfig::new(horizon, cli.seed, imax);
            config.batches = batches;
            config.burn_in = burn_in;
            config.divergence_guard = guard;
            let result = estimate_occupancy(&model, &config, reps)?;
            let content = match cli.format {
                Format::Json => serde_json::to_string_pretty(&result)? + "\n",
                _ => {
                    let mut s = format!("{CSV_HEADER}\ni,estimate,ci_lo,ci_hi\n");
                    for i in 0..=imax {
                        let v = result.occupancy.values[i];
                        let h = result.occupancy.half_widths[i];
                        s.push_str(&format!("{},{:e},{:e},{:e}\n", i, v, v - h, v + h));
                    }
                    s
                }
            };
            emit(out, &content)?;
            emit_sidecar(
                out,
                &serde_json::json!({
                    "events": result.events,
                    "aborted_unstable": result.aborted_unstable,
                    "mean_total_tasks": result.mean_total_tasks,
                    "arrivals": result.arrivals,
                    "completions": result.completions,
                    "mean_sojourn": result.mean_sojourn,
                    "replications": result.replications,
                    "seed": cli.seed,
                }),
            )?;
            Ok(if result.aborted_unstable {
                EXIT_STABILITY
            } else {
                0
            })
        }
        Command::Verify(args) => {
            let source = match (&args.model, args.family) {
                (Some(path), None) => ModelSource::File(path.clone()),
                (None, Some(family)) => ModelSource::Family {
                    family,
                    n: args.n.context("--n is required with --family")?,
                    load: args.load,
                },
                _ => bail!("give either a model file or --family/--n, not both"),
            };
            let spec = ExperimentSpec {
                source,
                method: parse_method(&args.method, &args.exact, &args.sim)?,
                i_max: args.imax,
                seed: cli.seed,
                include_theta: args.theta,
            };
            match run_verification(&spec) {
                Ok(report) => {
                    let content = match cli.format {
                        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
                        _ => verification_csv(&report),
                    };
                    emit(out, &content)?;
                    Ok(if report.all_pass { 0 } else { EXIT_ROW_FAILED })
                }
                Err(HarnessError::Rejected(verdict)) => {
                    eprintln!(
                        "stability rejection: {:?}, witness {:?}",
                        verdict.status, verdict.witness
                    );
                    Ok(EXIT_STABILITY)
                }
                Err(err) => Err(err.into()),
            }
        }
        Command::Sweep(args) => {
            let method = parse_method(&args.method, &args.exact, &args.sim)?;
            match run_family_sweep(
                args.family,
                args.n_from..=args.n_to,
                args.load,
                &method,
                args.imax,
                cli.seed,
            ) {
                Ok(report) => {
                    let content = match cli.format {
                        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
                        _ => sweep_csv(&report),
                    };
                    emit(out, &content)?;
                    Ok(if report.all_pass { 0 } else { EXIT_ROW_FAILED })
                }
                Err(HarnessError::SweepRejected(n, verdict)) => {
                    eprintln!(
                        "stability rejection at n={n}: {:?}, witness {:?}",
                        verdict.status, verdict.witness
                    );
                    Ok(EXIT_STABILITY)
                }
                Err(err) => Err(err.into()),
            }
        }
        Command::Monotonicity { count, imax, kinds } => {
            let kinds: Vec<BatteryKind> = if kinds.is_empty() {
                BatteryKind::ALL.to_vec()
            } else {
                kinds.into_iter().map(Into::into).collect()
            };
            let report = run_monotonicity_battery(&MonotonicityOptions {
                count,
                seed: cli.seed,
                i_max: imax,
                kinds,
                ..MonotonicityOptions::default()
            });
            let content = match cli.format {
                Format::Csv => {
                    let mut s = format!(
                        "{CSV_HEADER}\nkind,cases,identity_cases,comparisons,violations,worst_margin,worst_slack\n"
                    );
                    for o in &report.outcomes {
                        s.push_str(&format!(
                            "{},{},{},{},{},{:e},{:e}\n",
                            o.kind,
                            o.cases,
                            o.identity_cases,
                            o.comparisons,
                            o.violations,
                            o.worst_margin,
                            o.worst_slack
                        ));
                    }
                    s
                }
                _ => serde_json::to_string_pretty(&report)? + "\n",
            };
            emit(out, &content)?;
            Ok(if report.all_pass { 0 } else { EXIT_ROW_FAILED })
        }
    }
}

fn bounds_table(
    model: &NetworkModel,
    i_max: usize,
    include_theta: bool,
    format: Format,
) -> Result<String> {
    let graph = model.graph();
    let rho0 = model.rho0();
    let alpha_f = rat_to_f64(alpha(graph));
    let beta_f = rat_to_f64(beta(graph));
    let theta_f = include_theta.then(|| {
        rat_to_f64(
            theta_metric(graph, &WeightFunction::uniform(graph))
                .expect("uniform weights are valid"),
        )
    });
    let simple_rho = model
        .is_simple()
        .then(|| model.lambda(0) / model.mu(0))
        .filter(|&rho| rho < graph.n_servers() as f64);
    let vf = valid_from(rho0);
    let mut rows = Vec::with_capacity(i_max + 1);
    for i in 0..=i_max as u32 {
        let prop1 = simple_rho.map(|rho| prop1_bound(rho, graph.n_servers(), i).expect("checked"));
        rows.push((
            i,
            prop1,
            thm1_bound(rho0, alpha_f, i).value,
            theta_f.map(|t| theta_bound(rho0, t, i).value),
            thm2_bound(rho0, beta_f, i).value,
            thm3_bound(rho0, alpha_f, beta_f, i).value,
        ));
    }
    match format {
        Format::Json => {
            let json_rows: Vec<serde_json::Value> = rows
                .iter()
                .map(|(i, prop1, t1, tt, t2, t3)| {
                    serde_json::json!({
                        "i": i,
                        "prop1": prop1,
                        "thm1": t1,
                        "thm1_theta": tt,
                        "thm2": t2,
                        "thm3": t3,
                        "valid": *i >= vf,
                    })
                })
                .collect();
            Ok(serde_json::to_string_pretty(&serde_json::json!({
                "rho0": rho0,
                "alpha": alpha_f,
                "beta": beta_f,
                "valid_from": vf,
                "rows": json_rows,
            }))? + "\n")
        }
        _ => Ok(bounds_csv(&rows, vf)),
    }
}
