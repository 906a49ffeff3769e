use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use pavd::analytics::{self, MalthusResult};
use pavd::config::{derive_stream, parse_config, RunConfig};
use pavd::ctbp_sim::{run_ctbp, Until};
use pavd::discrete_sim;
use pavd::experiments::{self, ExperimentKind, SCHEMA_VERSION};
use pavd::output;
use pavd::rate_model::RateModel;

/// Preferential attachment trees with vertex death: analytics and simulation.
#[derive(Parser)]
#[command(name = "pavd", version)]
struct Cli {
    /// JSON run configuration (or a bare model spec).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Builtin model family, used when no config file is given.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, env = "PAVD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regime, Malthusian parameter, offspring law and predicted centerings.
    Analyze,
    /// Discrete trajectories as CSV.
    SimulateDiscrete {
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Continuous-time trajectories as CSV.
    SimulateCtbp {
        #[arg(long, conflicts_with = "until_time")]
        until_events: Option<u64>,
        #[arg(long)]
        until_time: Option<f64>,
        /// Number of equally spaced sample times for --until-time.
        #[arg(long, default_value_t = 100)]
        time_points: usize,
    },
    /// Run one experiment and write its JSON report.
    Experiment {
        kind: ExperimentKind,
        /// Per-replica raw values.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match (&cli.config, &cli.model) {
        (Some(path), None) => parse_config(path).with_context(|| format!("reading {}", path.display()))?,
        (None, Some(family)) => RunConfig::from_value(&json!({ "family": family }))?,
        (Some(_), Some(_)) => bail!("--config and --model are mutually exclusive"),
        (None, None) => bail!("one of --config or --model is required"),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    Ok(cfg)
}

fn out_path<'a>(cli: &'a Cli, cfg: &'a RunConfig) -> Option<&'a Path> {
    cli.out.as_deref().or(cfg.out.as_deref().map(Path::new))
}

fn analyze(model: &RateModel, cfg: &RunConfig) -> Value {
    let regime = analytics::classify_regime(model, 1000);
    let malthus = analytics::malthusian(model, analytics::LAMBDA_TOL);
    let d_star = model.d_star().ok();
    let predictions = match (&malthus, d_star) {
        (Ok(mr), Some(d)) => predictions(model, mr, d),
        _ => Value::Null,
    };
    json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "analyze",
        "build": experiments::build_id(),
        "config_hash": cfg.hash(),
        "config": cfg.canonical(),
        "regime": regime,
        "malthusian": match &malthus {
            Ok(mr) => json!(mr),
            Err(e) => json!({ "error": e.to_string() }),
        },
        "offspring_law": analytics::offspring_law(model, 20),
        "predictions": predictions,
    })
}

fn predictions(model: &RateModel, mr: &MalthusResult, d_star: f64) -> Value {
    let centerings: Vec<Value> = [1e3, 1e4, 1e5, 1e6]
        .into_iter()
        .map(|n| match analytics::predicted_centerings(model, n, mr, d_star) {
            Ok(c) => json!({ "n": n, "c_o": c.c_o, "c_i": c.c_i, "c_deg": c.c_deg }),
            Err(e) => json!({ "n": n, "error": e.to_string() }),
        })
        .collect();
    let grid: Vec<f64> = (1..=10).map(f64::from).collect();
    let residuals: Vec<Value> = analytics::k_alpha_residuals(model, mr, d_star, &grid)
        .into_iter()
        .map(|(t, r)| json!({ "t": t, "residual": r }))
        .collect();
    json!({ "centerings": centerings, "k_alpha_residuals": residuals })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = load(&cli)?;
    let model = RateModel::from_spec(cfg.model.clone())?;
    match &cli.command {
        Command::Analyze => output::write_json(out_path(&cli, &cfg), &analyze(&model, &cfg))?,
        Command::SimulateDiscrete { steps } => {
            if let Some(s) = steps {
                cfg.steps = *s;
            }
            let marks = cfg.checkpoints.resolve(cfg.steps);
            let runs: Vec<_> = (0..cfg.replicas)
                .into_par_iter()
                .map(|i| discrete_sim::run(&model, cfg.steps, &marks, cfg.hubs, &mut derive_stream(cfg.seed, i)))
                .collect();
            let rows: Vec<_> = runs.iter().enumerate().flat_map(|(i, t)| output::discrete_rows(i as u64, t)).collect();
            output::write_csv(out_path(&cli, &cfg), &output::discrete_header(cfg.hubs), &rows)?;
            let survived = runs.iter().filter(|t| t.survived).count();
            eprintln!("config {}: {survived}/{} replicas survived to n = {}", cfg.hash(), cfg.replicas, cfg.steps);
        }
        Command::SimulateCtbp { until_events, until_time, time_points } => {
            if let Some(t) = until_time {
                cfg.until_time = Some(*t);
            }
            if let Some(n) = until_events {
                cfg.until_time = None;
                cfg.steps = *n;
            }
            let until = match cfg.until_time {
                Some(t) if t > 0.0 && t.is_finite() => Until::Time(t),
                Some(t) => bail!("--until-time must be positive and finite, got {t}"),
                None => Until::Events(cfg.steps),
            };
            let (times, marks) = match until {
                Until::Time(t) => {
                    let k = (*time_points).max(1);
                    ((0..=k).map(|j| t * j as f64 / k as f64).collect(), Vec::new())
                }
                Until::Events(n) => (Vec::new(), cfg.checkpoints.resolve(n)),
            };
            let lambda_star = analytics::malthusian(&model, analytics::LAMBDA_TOL).ok().map(|m| m.lambda_star);
            let runs: Vec<_> = (0..cfg.replicas)
                .into_par_iter()
                .map(|i| {
                    run_ctbp(&model, until, &times, &marks, cfg.hubs, lambda_star, &mut derive_stream(cfg.seed, i))
                })
                .collect();
            let rows: Vec<_> = runs.iter().enumerate().flat_map(|(i, t)| output::ctbp_rows(i as u64, t)).collect();
            output::write_csv(out_path(&cli, &cfg), &output::ctbp_header(cfg.hubs), &rows)?;
            let extinct = runs.iter().filter(|t| t.extinct).count();
            eprintln!("config {}: {extinct}/{} replicas extinct", cfg.hash(), cfg.replicas);
        }
        Command::Experiment { kind, csv } => {
            if let Some(r) = cli.replicas {
                experiments::set_replicas(&mut cfg, *kind, r);
            }
            let out = experiments::run_configured(*kind, &cfg)?;
            output::write_json(out_path(&cli, &cfg), &out.report)?;
            if let Some(path) = csv.as_deref().or(cfg.csv.as_deref().map(Path::new)) {
                let (header, rows) = output::table_csv(&out.raw);
                output::write_csv(Some(path), &header, &rows)?;
            }
            eprintln!("{}: {:?}: {}", kind.name(), out.report.verdict, out.report.evidence);
        }
    }
    Ok(())
}
