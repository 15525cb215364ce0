mod config;
mod error;

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use liquid_core::curves::{sample_all, CURVE_POINTS};
use liquid_core::divergence_fit::woe_rescale;
use liquid_core::legacy_smoothing::{smooth_step_scorecard, SmoothOptions};
use liquid_core::smoothness_tuning::{default_grid, validate_grid};
use liquid_core::synth::SynthSpec;
use liquid_core::{greedy_tune, Dataset, FitContext, FitError, FitParams, FittedModel, ModelSpec};
use liquid_service::ServiceConfig;
use serde::Serialize;
use serde_json::json;
use tracing::info;

use config::{check_schema, read_json, resolve_data, RunConfig, SmoothConfig};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "liquid", version, about = "Roughness-penalized liquid scorecards")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one model and write it with its curves.
    Fit(RunArgs),
    /// Greedy per-characteristic smoothness search.
    Tune(RunArgs),
    /// Generate a synthetic dataset and its true curves.
    Synth(SynthArgs),
    /// Smooth a step-function scorecard.
    Smooth(SmoothArgs),
    /// Run the HTTP tuning service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the split seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "lambda2", value_name = "NAME=VALUE", value_parser = parse_lambda2)]
    lambda2: Vec<(String, f64)>,
    /// Comma-separated smoothness grid, must start at 0.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<Grid>,
}

#[derive(Debug, Clone)]
struct Grid(Vec<f64>);

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV output path; true curves go next to it.
    #[arg(long, default_value = "synth.csv")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SmoothArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "smoothed.json")]
    out: PathBuf,
    #[arg(long = "lambda2", value_name = "NAME=VALUE", value_parser = parse_lambda2)]
    lambda2: Vec<(String, f64)>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value_t = 1_000_000)]
    max_rows: usize,
    /// Idle seconds before a session is dropped.
    #[arg(long, default_value_t = 1800)]
    ttl_secs: u64,
}

fn parse_lambda2(raw: &str) -> Result<(String, f64), String> {
    let (name, value) = raw.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got '{raw}'"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("'{value}' is not a number"))?;
    if name.is_empty() {
        return Err("empty characteristic name".into());
    }
    Ok((name.to_string(), value))
}

fn parse_grid(raw: &str) -> Result<Grid, String> {
    let grid = raw
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("'{v}' is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    validate_grid(&grid).map_err(|e| e.to_string())?;
    Ok(Grid(grid))
}

#[derive(Serialize)]
struct ModelArtifact<'a> {
    schema_version: u32,
    model: &'a FittedModel,
    /// Coefficients scaled so the class-mean score gap equals the divergence.
    woe_beta: &'a [f64],
}

#[derive(Serialize)]
struct FitSummary<'a> {
    schema_version: u32,
    dev_rows: usize,
    val_rows: usize,
    lambda2: BTreeMap<&'a str, Option<f64>>,
    dev_divergence: f64,
    val_divergence: Option<f64>,
    model: PathBuf,
    curves: Vec<PathBuf>,
}

struct Loaded {
    spec: ModelSpec,
    dev: Dataset,
    val: Dataset,
    grid: Option<Vec<f64>>,
}

fn load_run(args: &RunArgs) -> Result<Loaded, CliError> {
    let cfg: RunConfig = read_json(&args.config)?;
    check_schema(cfg.schema_version, &args.config)?;
    let data_path = resolve_data(args.data.as_deref(), cfg.data.as_deref(), &args.config)?;
    let data = Dataset::from_path(&data_path)?;
    let mut spec = cfg.model;
    let overrides: BTreeMap<String, f64> = args.lambda2.iter().cloned().collect();
    let params = FitParams::with_overrides(&spec, &overrides, &BTreeMap::new())?;
    for (c, l) in spec.characteristics.iter_mut().zip(params.lambda2) {
        c.lambda2 = l;
    }
    spec.validate().map_err(FitError::from)?;
    for c in &spec.characteristics {
        data.require_column(c.column_name())?;
    }
    let seed = args.seed.unwrap_or(cfg.split.seed);
    let (dev, val) = data.split(cfg.split.val_fraction, seed)?;
    info!(rows = data.len(), dev = dev.len(), val = val.len(), seed, "loaded dataset");
    Ok(Loaded {
        spec,
        dev,
        val,
        grid: args.grid.clone().map(|g| g.0).or(cfg.grid),
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn print_json<T: Serialize>(value: &T) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).expect("summary serializes");
    // a closed reader is not an error worth failing the run for
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn cmd_fit(args: &RunArgs) -> Result<(), CliError> {
    let run = load_run(args)?;
    let ctx = FitContext::new(&run.spec, &run.dev, Some(&run.val))?;
    let fitted = ctx.fit(&FitParams::from_spec(&run.spec))?;
    let woe = woe_rescale(&fitted)?;

    create_dir(&args.out)?;
    let model_path = args.out.join("model.json");
    write_json(
        &model_path,
        &ModelArtifact {
            schema_version: config::CONFIG_SCHEMA_VERSION,
            model: &fitted,
            woe_beta: &woe.beta,
        },
    )?;
    let curve_dir = args.out.join("curves");
    create_dir(&curve_dir)?;
    let mut curve_paths = Vec::new();
    for curve in sample_all(&fitted, CURVE_POINTS).map_err(FitError::from)? {
        let path = curve_dir.join(format!("{}.csv", curve.name));
        let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        curve
            .write_csv(file)
            .map_err(|e| CliError::io(&path, std::io::Error::other(e)))?;
        curve_paths.push(path);
    }
    let summary = FitSummary {
        schema_version: config::CONFIG_SCHEMA_VERSION,
        dev_rows: run.dev.len(),
        val_rows: run.val.len(),
        lambda2: run
            .spec
            .characteristics
            .iter()
            .map(|c| (c.name.as_str(), c.has_liquid().then_some(c.lambda2)))
            .collect(),
        dev_divergence: fitted.dev_divergence,
        val_divergence: fitted.val_divergence,
        model: model_path,
        curves: curve_paths,
    };
    write_json(&args.out.join("summary.json"), &summary)?;
    print_json(&summary);
    Ok(())
}

fn cmd_tune(args: &RunArgs) -> Result<(), CliError> {
    let run = load_run(args)?;
    let grid = run.grid.clone().unwrap_or_else(default_grid);
    let report = greedy_tune(&run.spec, &run.dev, &run.val, &grid)?;
    create_dir(&args.out)?;
    let report_path = args.out.join("report.json");
    write_json(&report_path, &report)?;
    print_json(&json!({
        "report": report_path,
        "ordering": report.ordering,
        "chosen_lambda2": report.chosen_lambda2,
        "baseline_val_divergence": report.baseline_val_divergence,
        "final_val_divergence": report.final_val_divergence,
    }));
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let mut spec: SynthSpec = read_json(&args.config)?;
    check_schema(spec.schema_version, &args.config)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let data = spec.generate()?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = fs::File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    data.write_csv(std::io::BufWriter::new(file))?;
    let truth_path = args.out.with_extension("truth.json");
    write_json(
        &truth_path,
        &json!({ "schema_version": config::CONFIG_SCHEMA_VERSION, "spec": spec, "curves": spec.truth_curves() }),
    )?;
    print_json(&json!({ "rows": data.len(), "data": args.out, "truth": truth_path, "seed": spec.seed }));
    Ok(())
}

fn cmd_smooth(args: &SmoothArgs) -> Result<(), CliError> {
    let cfg: SmoothConfig = read_json(&args.config)?;
    check_schema(cfg.schema_version, &args.config)?;
    let data_path = resolve_data(args.data.as_deref(), cfg.data.as_deref(), &args.config)?;
    let data = Dataset::from_path(&data_path)?;
    let mut options = SmoothOptions {
        lambda2: cfg.lambda2,
        patterns: cfg.patterns,
    };
    options.lambda2.extend(args.lambda2.iter().cloned());
    let smoothed = smooth_step_scorecard(&cfg.scorecard, &data, &options)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(&args.out, &smoothed)?;
    let flagged: Vec<String> = smoothed
        .characteristics
        .iter()
        .flat_map(|c| c.bins.iter().filter(|b| b.flagged).map(move |b| format!("{}/{}", c.name, b.label)))
        .collect();
    print_json(&json!({ "out": args.out, "flagged_bins": flagged }));
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Result<(), CliError> {
    let config = ServiceConfig {
        max_rows: args.max_rows,
        session_ttl: Duration::from_secs(args.ttl_secs),
        ..ServiceConfig::default()
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::config("RUNTIME", e.to_string()))?;
    runtime
        .block_on(liquid_service::serve(args.addr, config))
        .map_err(|e| CliError::config("SERVE", e.to_string()))
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("LIQUID_LOG").unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Tune(a) => cmd_tune(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Smooth(a) => cmd_smooth(a),
        Command::Serve(a) => cmd_serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
