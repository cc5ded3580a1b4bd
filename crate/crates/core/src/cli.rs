//! Command-line front end. `main` only forwards to [`run`].

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::delivery::{self, DeliveryOptimum, LinkModel};
use crate::distill::{nested_distill, recurrence_round, BellDiagonalState, DistillMode};
use crate::error::{LinkError, Result};
use crate::io::{self, Artifact, ConfigFile, Format, RunManifest};
use crate::mc::{self, ChiSquareTest, DistillMcStats, McStats};
use crate::model::{FidelityModel, LinkMetrics, ProtocolSpec};
use crate::planner;
use crate::presets;
use crate::protocol::FormulaId;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DOMAIN: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "optolink", version, about = "Heralded optical link analysis and planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    #[value(name = "1p-upconversion")]
    OnePhotonUpconversion,
    #[value(name = "1p-tms")]
    OnePhotonTms,
    #[value(name = "2p-upconversion")]
    TwoPhotonUpconversion,
    #[value(name = "2p-tms")]
    TwoPhotonTms,
}

impl ProtocolArg {
    fn short_name(self) -> &'static str {
        match self {
            ProtocolArg::OnePhotonUpconversion => "1p-upconversion",
            ProtocolArg::OnePhotonTms => "1p-tms",
            ProtocolArg::TwoPhotonUpconversion => "2p-upconversion",
            ProtocolArg::TwoPhotonTms => "2p-tms",
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FidelityModelArg {
    ThermalHalf,
    Linear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Calibrated,
    Recurrence,
}

#[derive(Debug, Args)]
struct Output {
    /// Directory for artifacts. Without it the main result goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Args)]
struct LinkArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the configured delivery time.
    #[arg(long = "t-del")]
    t_del: Option<f64>,
    /// Override the heralding protocol.
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    #[arg(long = "fidelity-model", value_enum)]
    fidelity_model: Option<FidelityModelArg>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form metrics, delivery curve and infidelity breakdown.
    Analyze {
        #[command(flatten)]
        link: LinkArgs,
        #[command(flatten)]
        output: Output,
        /// Curve length in attempt periods (default: ten coherence times).
        #[arg(long)]
        curve_points: Option<u64>,
    },
    /// Seeded Monte Carlo of on-demand delivery.
    Simulate {
        #[command(flatten)]
        link: LinkArgs,
        #[command(flatten)]
        output: Output,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write one CSV row per trial.
        #[arg(long)]
        dump_trials: bool,
    },
    /// Resource plan for the architecture in the config.
    Plan {
        #[command(flatten)]
        link: LinkArgs,
        #[command(flatten)]
        output: Output,
    },
    /// Pareto set of link count, rate and fidelity for a transducer budget.
    Tradeoff {
        #[command(flatten)]
        link: LinkArgs,
        #[command(flatten)]
        output: Output,
        /// Transducer budget (default: the architecture's budget).
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Nested entanglement distillation.
    Distill {
        /// Input fidelity; defaults to the delivered fidelity of --config.
        #[arg(long)]
        fidelity: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        rounds: u32,
        #[arg(long, value_enum, default_value = "calibrated")]
        mode: ModeArg,
        /// Also sample stochastic round success.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// List built-in parameter sets, or show one.
    Presets {
        name: Option<String>,
        #[command(flatten)]
        output: Output,
    },
}

fn load(link: &LinkArgs) -> Result<ConfigFile> {
    let mut cfg = io::parse_config(&link.config)?;
    if let Some(t) = link.t_del {
        cfg.policy.t_del_us = t;
    }
    if let Some(p) = link.protocol {
        let (basis, pump) = ProtocolSpec::parse_short_name(p.short_name())
            .expect("every protocol flag has a short name");
        cfg.protocol.basis = basis;
        cfg.protocol.pump = pump;
    }
    if let Some(m) = link.fidelity_model {
        cfg.policy.fidelity_model = match m {
            FidelityModelArg::ThermalHalf => FidelityModel::ThermalHalf,
            FidelityModelArg::Linear => FidelityModel::LinearSum,
        };
    }
    cfg.validate()?;
    Ok(cfg.resolved())
}

/// Formula heralding probability next to a calibration override.
#[derive(Debug, Clone, Copy, Serialize)]
struct HeraldCheck {
    formula: f64,
    configured: f64,
    /// `|formula - configured| / configured`.
    relative_gap: f64,
    /// Gap above 1%: the override is not what the formula gives.
    discrepancy: bool,
    within_25_percent: bool,
}

#[derive(Debug, Serialize)]
struct AnalyzeReport {
    protocol: &'static str,
    formula_id: FormulaId,
    fidelity_model: FidelityModel,
    metrics: LinkMetrics,
    /// Present only when the heralding probability is overridden.
    herald_check: Option<HeraldCheck>,
    optimum: Option<DeliveryOptimum>,
}

#[derive(Debug, Serialize)]
struct SimulateReport {
    stats: McStats,
    analytic_f_del: f64,
    analytic_p_success: f64,
    f_del_z: f64,
    p_success_z: f64,
    herald_chi_square: ChiSquareTest,
}

#[derive(Debug, Serialize)]
struct DistillReport {
    distillation: crate::distill::NestedDistillation,
    /// One recurrence step on two Werner pairs at the input fidelity.
    first_round: crate::distill::DistillationOutcome,
    monte_carlo: Option<DistillMcStats>,
}

fn z_score(x: f64, mean: f64, se: f64) -> f64 {
    if se > 0.0 {
        (x - mean) / se
    } else if x == mean {
        0.0
    } else {
        f64::INFINITY
    }
}

struct Outcome {
    artifacts: Vec<Artifact>,
    /// Index of the artifact printed when no output directory is given.
    primary: usize,
    out: Option<PathBuf>,
}

fn with_manifest_if_csv(mut artifacts: Vec<Artifact>, manifest: &RunManifest) -> Vec<Artifact> {
    if artifacts.iter().any(|a| a.name.ends_with(".csv")) {
        artifacts.push(io::manifest_artifact(manifest));
    }
    artifacts
}

fn execute(command: Command, argv: &[String]) -> Result<Outcome> {
    let started = io::timestamp();
    let name = argv.first().cloned().unwrap_or_default();
    let manifest = |cfg: Option<ConfigFile>, seed: Option<u64>, params: Value| {
        let mut m = RunManifest::start(&name, cfg, seed);
        m.started_at = started.clone();
        m.parameters = params;
        m.finish();
        m
    };

    match command {
        Command::Analyze {
            link,
            output,
            curve_points,
        } => {
            let cfg = load(&link)?;
            let config = cfg.link();
            let metrics = delivery::delivered_fidelity(&config)?;
            let model = LinkModel::new(&config)?;
            let herald_check = config.protocol.p_her_override.map(|configured| {
                let formula = model.analytics.p_her;
                let gap = (configured - formula).abs() / configured;
                HeraldCheck {
                    formula,
                    configured,
                    relative_gap: gap,
                    discrepancy: gap > 0.01,
                    within_25_percent: gap <= 0.25,
                }
            });
            let report = AnalyzeReport {
                protocol: config.protocol.short_name(),
                formula_id: model.analytics.formula_id,
                fidelity_model: config.policy.fidelity_model,
                metrics,
                herald_check,
                optimum: delivery::optimum_of(&model).ok(),
            };
            let curve = model.curve(curve_points.unwrap_or_else(|| model.grid_len()));
            let breakdown = delivery::infidelity_breakdown(&config)?;
            let m = manifest(Some(cfg), None, json!({ "curve_points": curve_points }));
            let format = output.format.map(Format::from).unwrap_or(Format::Json);
            let artifacts = vec![
                io::emit_report("metrics", &m, &report, format),
                io::csv_records_artifact("delivery_curve.csv", &curve.points),
                io::csv_records_artifact("breakdown.csv", &breakdown),
            ];
            Ok(Outcome {
                artifacts: with_manifest_if_csv(artifacts, &m),
                primary: 0,
                out: output.out,
            })
        }
        Command::Simulate {
            link,
            output,
            trials,
            seed,
            dump_trials,
        } => {
            let cfg = load(&link)?;
            let config = cfg.link();
            let (stats, records) = if dump_trials {
                let (s, r) = mc::run_trials_with_records(&config, trials, seed)?;
                (s, Some(r))
            } else {
                (mc::run_trials(&config, trials, seed)?, None)
            };
            let analytic = delivery::delivered_fidelity(&config)?;
            let model = LinkModel::new(&config)?;
            let report = SimulateReport {
                f_del_z: z_score(stats.mean_f_del, analytic.f_del, stats.std_error),
                p_success_z: z_score(stats.p_success, analytic.p_success, stats.p_success_std_error),
                herald_chi_square: mc::geometric_chi_square(&stats, model.round_probability()),
                analytic_f_del: analytic.f_del,
                analytic_p_success: analytic.p_success,
                stats,
            };
            let m = manifest(Some(cfg), Some(seed), json!({ "trials": trials }));
            let format = output.format.map(Format::from).unwrap_or(Format::Json);
            let mut artifacts = vec![io::emit_report("mc_stats", &m, &report, format)];
            if let Some(r) = records {
                artifacts.push(io::csv_records_artifact("trials.csv", &r));
            }
            Ok(Outcome {
                artifacts: with_manifest_if_csv(artifacts, &m),
                primary: 0,
                out: output.out,
            })
        }
        Command::Plan { link, output } => {
            let cfg = load(&link)?;
            let spec = cfg.architecture.clone().ok_or_else(|| {
                LinkError::Config("plan needs an `architecture` section in the config".to_string())
            })?;
            let report = planner::plan(&spec, &cfg.link())?;
            let m = manifest(Some(cfg), None, json!({}));
            let format = output.format.map(Format::from).unwrap_or(Format::Json);
            Ok(Outcome {
                artifacts: with_manifest_if_csv(vec![io::emit_report("plan", &m, &report, format)], &m),
                primary: 0,
                out: output.out,
            })
        }
        Command::Tradeoff {
            link,
            output,
            budget,
        } => {
            let cfg = load(&link)?;
            let budget = budget
                .or(cfg.architecture.as_ref().map(|a| a.transducer_budget))
                .ok_or_else(|| {
                    LinkError::Config(
                        "tradeoff needs --budget or an architecture transducer_budget".to_string(),
                    )
                })?;
            let front = planner::tradeoff_surface(budget, &cfg.link())?;
            let m = manifest(Some(cfg), None, json!({ "budget": budget }));
            let artifact = match output.format.map(Format::from).unwrap_or(Format::Csv) {
                Format::Csv => io::csv_records_artifact("pareto.csv", &front),
                Format::Json => io::json_artifact("pareto.json", &m, &front),
            };
            Ok(Outcome {
                artifacts: with_manifest_if_csv(vec![artifact], &m),
                primary: 0,
                out: output.out,
            })
        }
        Command::Distill {
            fidelity,
            config,
            rounds,
            mode,
            trials,
            seed,
            output,
        } => {
            let cfg = match &config {
                Some(p) => Some(io::parse_config(p)?.resolved()),
                None => None,
            };
            let f_in = match (fidelity, &cfg) {
                (Some(f), _) => f,
                (None, Some(c)) => delivery::delivered_fidelity(&c.link())?.f_del,
                (None, None) => {
                    return Err(LinkError::Config(
                        "distill needs --fidelity or --config".to_string(),
                    ))
                }
            };
            let mode = match mode {
                ModeArg::Calibrated => DistillMode::Calibrated,
                ModeArg::Recurrence => DistillMode::Recurrence,
            };
            let distillation = nested_distill(f_in, rounds, mode)?;
            let werner = BellDiagonalState::werner(f_in);
            let report = DistillReport {
                distillation,
                first_round: recurrence_round(&werner, &werner)?,
                monte_carlo: match trials {
                    Some(n) => Some(mc::run_distill_trials(f_in, rounds, n, seed)?),
                    None => None,
                },
            };
            let m = manifest(
                cfg,
                trials.map(|_| seed),
                json!({ "f_in": f_in, "rounds": rounds, "mode": mode, "trials": trials }),
            );
            let format = output.format.map(Format::from).unwrap_or(Format::Json);
            Ok(Outcome {
                artifacts: with_manifest_if_csv(vec![io::emit_report("distill", &m, &report, format)], &m),
                primary: 0,
                out: output.out,
            })
        }
        Command::Presets { name, output } => {
            let listing: Value = match &name {
                Some(n) => serde_json::to_value(presets::preset(n)?),
                None => serde_json::to_value(
                    presets::all_names()
                        .iter()
                        .map(|n| {
                            presets::preset(n).map(|p| {
                                (n.clone(), serde_json::to_value(p).expect("presets serialize"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .collect::<serde_json::Map<_, _>>(),
                ),
            }
            .expect("presets serialize");
            let m = manifest(None, None, json!({ "name": name }));
            let format = output.format.map(Format::from).unwrap_or(Format::Json);
            Ok(Outcome {
                artifacts: with_manifest_if_csv(vec![io::emit_report("presets", &m, &listing, format)], &m),
                primary: 0,
                out: output.out,
            })
        }
    }
}

/// Single-line JSON description of an error.
pub fn error_json(e: &LinkError) -> Value {
    let mut obj = json!({ "kind": e.kind(), "message": e.to_string() });
    match e {
        LinkError::Schema { pointer, .. } => obj["pointer"] = json!(pointer),
        LinkError::Invalid(v) => obj["violations"] = json!(v),
        LinkError::Io { path, .. } => obj["path"] = json!(path),
        LinkError::NotFound { valid, .. } => obj["valid"] = json!(valid),
        LinkError::Unattainable { target, best } => {
            obj["target"] = json!(target);
            obj["best"] = json!(best);
        }
        _ => {}
    }
    json!({ "error": obj })
}

pub fn exit_code(e: &LinkError) -> i32 {
    if e.is_config_error() {
        EXIT_CONFIG
    } else {
        EXIT_DOMAIN
    }
}

/// Run the CLI on `args` (program name first). Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let err = json!({ "error": {
                        "kind": "usage",
                        "message": e.render().to_string().trim_end(),
                    }});
                    let _ = writeln!(stderr, "{err}");
                    EXIT_CONFIG
                }
            };
        }
    };
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let result = execute(cli.command, &argv).and_then(|o| match &o.out {
        Some(dir) => {
            let paths = io::write_artifacts(dir, &o.artifacts)?;
            let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
            Ok(format!("{}\n", json!({ "written": names })))
        }
        None => Ok(o.artifacts[o.primary].body.clone()),
    });
    match result {
        Ok(text) => {
            let _ = stdout.write_all(text.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_json(&e));
            exit_code(&e)
        }
    }
}
