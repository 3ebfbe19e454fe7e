//! Command-line surface of the `dheb` binary.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use dheb_core::baselines::DEFAULT_RIDGE_LAMBDA;
use dheb_core::data::{ingest_csv_infer, write_csv};
use dheb_core::evaluation::{
    rolling_backtest, run_benchmark, staleness_experiment, BacktestConfig, BenchmarkConfig,
};
use dheb_core::methods::named_row;
use dheb_core::simulation::{default_grid_pairs, generate, write_truth_csv, SimConfig};
use dheb_core::{Dataset, FittedModel, Method, NormalParams, TrainConfig};

use crate::config::{FileConfig, ServeConfig};
use crate::daemon::{self, DaemonOptions};
use crate::error::{require_file, CliError, CliResult};
use crate::serve::{self, ServeOptions};
use crate::store;

#[derive(Debug, Parser)]
#[command(name = "dheb", version, about = "Hierarchical RPC prediction for sparse bid units")]
pub struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Train a model and write it to a file.
    Train(TrainArgs),
    /// Predict RPCs for a query CSV.
    Predict(PredictArgs),
    /// Rolling next-day backtest of several methods on one dataset.
    Evaluate(EvaluateArgs),
    /// Compare all methods over the simulated (n, s) grid.
    Benchmark(BenchmarkArgs),
    /// AVG-MSE cost of retraining every T days instead of daily.
    Staleness(StalenessArgs),
    /// Serve predictions over HTTP from a model file.
    Serve(ServeArgs),
    /// Retrain on a fixed period and publish the model file.
    RetrainDaemon(DaemonArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Also write `bid_unit_id,true_rpc`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub n_bid_units: usize,
    /// Observations per bid unit (controls x-sparsity).
    #[arg(long, short = 'n', default_value_t = 10)]
    pub n_obs: usize,
    /// Fraction of revenues set to zero (y-sparsity).
    #[arg(long, short = 's', default_value_t = 0.0)]
    pub zero_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mu0: f64,
    #[arg(long, default_value_t = 0.25)]
    pub sigma0_sq: f64,
    #[arg(long)]
    pub child_variance: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub noise_variance: f64,
    /// Keep negative revenues instead of truncating at zero.
    #[arg(long)]
    pub allow_negative: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Clone, Default)]
pub struct MethodArgs {
    /// One of dheb, fheb, 2hb, wa, rlr.
    #[arg(long)]
    pub method: Option<String>,
    /// Comma-separated feature order for fheb.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<String>>,
    /// Stopping ratio r.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub variance_floor: Option<f64>,
    /// Ridge strength for rlr.
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Train only on the trailing window of this many days.
    #[arg(long)]
    pub window_days: Option<i64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with `bid_unit_id,date,<feature columns>`.
    #[arg(long)]
    pub query: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    #[arg(long, default_value_t = 60)]
    pub train_window: i64,
    #[arg(long, default_value_t = 30)]
    pub horizon: usize,
    /// First test day (YYYY-MM-DD); defaults to data start plus the window.
    #[arg(long)]
    pub first_test_day: Option<NaiveDate>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated methods; WA is always included.
    #[arg(long, value_delimiter = ',', default_value = "wa,rlr,2hb,dheb")]
    pub methods: Vec<String>,
    /// Feature order for fheb.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<String>>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[command(flatten)]
    pub backtest: BacktestArgs,
    /// JSON report path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Flat `model,metric,value` CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Only `default` (n in {3,10,30} x s in {0.5,0.9,0.98}) is built in.
    #[arg(long, default_value = "default")]
    pub grid: String,
    #[arg(long, default_value_t = 10)]
    pub replicates: usize,
    #[arg(long, default_value_t = 2017)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_bid_units: usize,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StalenessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,7,14")]
    pub periods: Vec<usize>,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub backtest: BacktestArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Address to listen on, e.g. 127.0.0.1:8080.
    #[arg(long)]
    pub listen: Option<String>,
    /// How often to check the model file for a replacement.
    #[arg(long)]
    pub poll_ms: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DaemonArgs {
    /// Training data CSV, re-read on every run.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Where to publish the model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Retrain period T in days.
    #[arg(long)]
    pub period: Option<u32>,
    #[arg(long)]
    pub window_days: Option<i64>,
    #[command(flatten)]
    pub method: MethodArgs,
    /// Run once and exit.
    #[arg(long)]
    pub once: bool,
    /// Seconds per scheduling day (testing aid); wall-clock days otherwise.
    #[arg(long)]
    pub tick_secs: Option<f64>,
    /// Exit after this many runs.
    #[arg(long)]
    pub max_runs: Option<usize>,
}

/// Parses and runs one command. Logging must already be set up.
pub fn execute(cli: Cli) -> CliResult<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a, &file),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Staleness(a) => staleness(a, &file),
        Command::Serve(a) => serve_cmd(a, &file),
        Command::RetrainDaemon(a) => retrain_daemon(a, &file),
    }
}

/// Log level from the config file, if any, for use before `DHEB_LOG`.
pub fn configured_log_level(cli: &Cli) -> Option<String> {
    cli.config
        .as_deref()
        .and_then(|p| FileConfig::load(p).ok())
        .and_then(|c| c.log_level)
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value).context("writing JSON")?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    require_file(path, "input file")?;
    let ingested = ingest_csv_infer(path).with_context(|| format!("reading {}", path.display()))?;
    if ingested.dropped > 0 {
        log::warn!("dropped {} zero-click rows from {}", ingested.dropped, path.display());
    }
    Ok(ingested.dataset)
}

fn resolve_method(a: &MethodArgs, file: &FileConfig, default: &str) -> CliResult<(Method, TrainConfig)> {
    let name = a
        .method
        .clone()
        .or_else(|| file.method.clone())
        .unwrap_or_else(|| default.to_string());
    let mut method: Method = name.parse().map_err(|e: dheb_core::Error| CliError::usage(e.to_string()))?;
    match &mut method {
        Method::Fheb { order } => {
            *order = a.order.clone().or_else(|| file.order.clone()).unwrap_or_default();
            if order.is_empty() {
                return Err(CliError::usage("fheb needs --order, e.g. --order A,B,C,D"));
            }
        }
        Method::Rlr { lambda } => {
            *lambda = a.lambda.or(file.lambda).unwrap_or(DEFAULT_RIDGE_LAMBDA);
        }
        _ => {}
    }
    let mut train = TrainConfig::default();
    if let Some(r) = a.r.or(file.r) {
        train.stop_ratio = r;
    }
    if let Some(v) = a.variance_floor.or(file.variance_floor) {
        train.variance_floor = v;
    }
    train.validate()?;
    Ok((method, train))
}

fn feature_names(ds: &Dataset) -> Vec<String> {
    ds.schema().names().map(str::to_string).collect()
}

fn simulate(a: SimulateArgs) -> CliResult<()> {
    let cfg = SimConfig {
        n_bid_units: a.n_bid_units,
        top_prior: NormalParams::new(a.mu0, a.sigma0_sq)?,
        child_variance: a.child_variance,
        noise_variance: a.noise_variance,
        n_obs_per_unit: a.n_obs,
        y_zero_fraction: a.zero_fraction,
        truncate_negative: !a.allow_negative,
        seed: a.seed,
        ..SimConfig::default()
    };
    let sim = generate(&cfg)?;
    write_csv(&sim.dataset, output(Some(&a.out))?)?;
    if let Some(t) = &a.truth {
        write_truth_csv(&sim.truth, output(Some(t))?)?;
    }
    log::info!("wrote {} observations to {}", sim.dataset.len(), a.out.display());
    Ok(())
}

fn train(a: TrainArgs, file: &FileConfig) -> CliResult<()> {
    let (method, cfg) = resolve_method(&a.method, file, "dheb")?;
    let mut ds = load_dataset(&a.input)?;
    if let Some(w) = a.window_days.or(file.train_window_days) {
        if w < 1 {
            return Err(CliError::usage("--window-days must be at least 1"));
        }
        if let Some(range) = ds.date_range() {
            ds = ds.between(range.end - chrono::Duration::days(w - 1), range.end);
        }
    }
    let mut model = method.fit(&ds, &cfg)?;
    model.set_trained_at(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true));
    store::save(&a.out, &model, &feature_names(&ds))?;
    log::info!("trained {method} on {} rows; wrote {}", ds.len(), a.out.display());
    Ok(())
}

/// Predictions for every row of a query CSV, in input order.
pub fn predict_rows(
    model: &FittedModel,
    names: &[String],
    query: &Path,
) -> CliResult<Vec<(String, String, f64)>> {
    let mut rdr = csv::Reader::from_path(query).with_context(|| format!("reading {}", query.display()))?;
    let header: Vec<String> = rdr.headers().context("reading query header")?.iter().map(str::to_string).collect();
    let col = |n: &str| header.iter().position(|h| h == n);
    let unit_col = col("bid_unit_id")
        .ok_or_else(|| CliError::usage("query CSV needs a bid_unit_id column"))?;
    let date_col = col("date");
    let feature_cols: Vec<Option<usize>> = names.iter().map(|n| col(n)).collect();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("query row {}", i + 2))?;
        let unit = rec.get(unit_col).unwrap_or_default().to_string();
        let date_text = date_col.and_then(|c| rec.get(c)).unwrap_or_default().to_string();
        let date = if date_text.is_empty() {
            None
        } else {
            Some(
                NaiveDate::parse_from_str(&date_text, "%Y-%m-%d")
                    .with_context(|| format!("query row {}: bad date `{date_text}`", i + 2))?,
            )
        };
        let row = named_row(date, names, |f| {
            let k = names.iter().position(|n| n == f)?;
            feature_cols[k].and_then(|c| rec.get(c)).filter(|v| !v.is_empty())
        });
        let rpc = model.predict_row(&unit, &row);
        out.push((unit, date_text, rpc));
    }
    Ok(out)
}

fn predict(a: PredictArgs) -> CliResult<()> {
    require_file(&a.model, "model file")?;
    require_file(&a.query, "query file")?;
    let (model, names) = store::load(&a.model)?;
    let rows = predict_rows(&model, &names, &a.query)?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    w.write_record(["bid_unit_id", "date", "rpc"]).context("writing output")?;
    for (unit, date, rpc) in rows {
        w.write_record([unit, date, rpc.to_string()]).context("writing output")?;
    }
    w.flush()?;
    Ok(())
}

fn backtest_config(b: &BacktestArgs, stride: usize) -> CliResult<BacktestConfig> {
    if b.train_window < 1 || b.horizon == 0 || stride == 0 {
        return Err(CliError::usage("window, horizon and stride must be positive"));
    }
    Ok(BacktestConfig {
        train_window_days: b.train_window,
        horizon_days: b.horizon,
        retrain_stride: stride,
        first_test_day: b.first_test_day,
    })
}

fn evaluate(a: EvaluateArgs) -> CliResult<()> {
    let ds = load_dataset(&a.input)?;
    let cfg = backtest_config(&a.backtest, a.stride)?;
    let mut methods = vec![Method::Wa];
    for name in &a.methods {
        let margs = MethodArgs {
            method: Some(name.clone()),
            order: a.order.clone(),
            r: a.r,
            variance_floor: None,
            lambda: a.lambda,
        };
        let (m, _) = resolve_method(&margs, &FileConfig::default(), "dheb")?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let mut train = TrainConfig::default();
    if let Some(r) = a.r {
        train.stop_ratio = r;
    }
    train.validate()?;
    let report = rolling_backtest(&ds, &methods, &train, &cfg)?;
    for m in &report.models {
        log::info!(
            "{}: AVG-MSE {:?}, improvement vs WA {:?}%",
            m.name,
            m.avg_mse,
            m.improvement_vs_wa
        );
    }
    if let Some(p) = &a.csv {
        report.write_csv(output(Some(p))?)?;
    }
    write_json(a.out.as_deref(), &report)
}

fn benchmark(a: BenchmarkArgs) -> CliResult<()> {
    if a.grid != "default" {
        return Err(CliError::usage(format!("unknown grid `{}`; only `default` exists", a.grid)));
    }
    if a.replicates == 0 {
        return Err(CliError::usage("--replicates must be positive"));
    }
    let mut cfg = BenchmarkConfig {
        pairs: default_grid_pairs(),
        replicates: a.replicates,
        base_seed: a.seed,
        ..BenchmarkConfig::default()
    };
    cfg.base.n_bid_units = a.n_bid_units;
    if let Some(r) = a.r {
        cfg.train.stop_ratio = r;
    }
    if let Some(l) = a.lambda {
        cfg.rlr_lambda = l;
    }
    cfg.train.validate()?;
    let report = run_benchmark(&cfg)?;
    for c in &report.cells {
        let parts: Vec<String> = c
            .models
            .iter()
            .map(|m| format!("{} {:.2}", m.name, m.mean_improvement_vs_wa.unwrap_or(f64::NAN)))
            .collect();
        log::info!("n={} s={}: {}", c.n_obs_per_unit, c.y_zero_fraction, parts.join(", "));
    }
    if let Some(p) = &a.csv {
        report.write_csv(output(Some(p))?)?;
    }
    write_json(a.out.as_deref(), &report)
}

fn staleness(a: StalenessArgs, file: &FileConfig) -> CliResult<()> {
    let ds = load_dataset(&a.input)?;
    let (method, train) = resolve_method(&a.method, file, "dheb")?;
    let cfg = backtest_config(&a.backtest, 1)?;
    if a.periods.contains(&0) {
        return Err(CliError::usage("retrain periods must be at least 1"));
    }
    let report = staleness_experiment(&ds, &method, &train, &cfg, &a.periods)?;
    write_json(a.out.as_deref(), &report)
}

fn serve_config(a: &ServeArgs, file: &FileConfig) -> CliResult<ServeConfig> {
    let cfg = ServeConfig {
        model_path: a
            .model
            .clone()
            .or_else(|| file.model_path.clone())
            .ok_or_else(|| CliError::usage("--model is required"))?,
        listen_address: a
            .listen
            .clone()
            .or_else(|| file.listen_address.clone())
            .unwrap_or_else(|| "127.0.0.1:8080".into()),
        retrain_period: file.retrain_period.unwrap_or(1),
        data_source: file.data_source.clone(),
        log_level: file.log_level.clone().unwrap_or_else(|| "info".into()),
        poll_interval_ms: a.poll_ms.or(file.poll_interval_ms).unwrap_or(1000),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn serve_cmd(a: ServeArgs, file: &FileConfig) -> CliResult<()> {
    let cfg = serve_config(&a, file)?;
    require_file(&cfg.model_path, "model file")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let handle = serve::start(&ServeOptions {
            model_path: cfg.model_path.clone(),
            listen_address: cfg.listen_address.clone(),
            poll_interval: Duration::from_millis(cfg.poll_interval_ms),
        })
        .await?;
        tokio::signal::ctrl_c().await?;
        log::info!("shutting down");
        handle.shutdown().await
    })?;
    Ok(())
}

fn retrain_daemon(a: DaemonArgs, file: &FileConfig) -> CliResult<()> {
    let (method, train) = resolve_method(&a.method, file, "dheb")?;
    let data_source = a
        .data
        .clone()
        .or_else(|| file.data_source.clone())
        .ok_or_else(|| CliError::usage("--data is required"))?;
    require_file(&data_source, "data source")?;
    let model_path = a
        .model
        .clone()
        .or_else(|| file.model_path.clone())
        .ok_or_else(|| CliError::usage("--model is required"))?;
    let period = a.period.or(file.retrain_period).unwrap_or(1);
    if period < 1 {
        return Err(CliError::usage("--period must be at least 1"));
    }
    let window_days = a.window_days.or(file.train_window_days).unwrap_or(60);
    if window_days < 1 {
        return Err(CliError::usage("--window-days must be at least 1"));
    }
    let day_length = match a.tick_secs {
        Some(s) if s.is_finite() && s > 0.0 => Some(Duration::from_secs_f64(s)),
        Some(_) => return Err(CliError::usage("--tick-secs must be positive")),
        None => None,
    };
    let opts = DaemonOptions {
        data_source,
        model_path,
        period,
        method,
        train,
        window_days,
        day_length,
        max_runs: if a.once { Some(1) } else { a.max_runs },
    };
    if a.once {
        daemon::run_once(&opts)?;
    } else {
        daemon::run(&opts)?;
    }
    Ok(())
}
