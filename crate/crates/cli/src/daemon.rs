//! Offline phase: periodically retrains on the trailing window of the data
//! source and publishes the model file for the online phase.

use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use chrono::{DateTime, NaiveDate, Utc};
use dheb_core::data::ingest_csv_infer;
use dheb_core::{Method, TrainConfig};

use crate::store;

#[derive(Debug, Clone)]
pub struct DaemonOptions {
    pub data_source: PathBuf,
    pub model_path: PathBuf,
    /// Retrain every `period` days.
    pub period: u32,
    pub method: Method,
    pub train: TrainConfig,
    pub window_days: i64,
    /// Length of one "day" for the schedule. `None` means wall-clock days
    /// aligned to UTC midnight.
    pub day_length: Option<Duration>,
    /// Stop after this many offline runs.
    pub max_runs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub trained_at: String,
    pub window: (NaiveDate, NaiveDate),
    pub observations: usize,
}

/// One offline run: ingest, cut the trailing window, train, publish.
pub fn run_once(opts: &DaemonOptions) -> anyhow::Result<RunSummary> {
    let ingested = ingest_csv_infer(&opts.data_source)
        .with_context(|| format!("reading {}", opts.data_source.display()))?;
    let ds = ingested.dataset;
    let range = ds
        .date_range()
        .context("data source has no observations")?;
    let from = range.end - chrono::Duration::days(opts.window_days - 1);
    let window = ds.between(from, range.end);
    let mut model = opts.method.fit(&window, &opts.train)?;
    let trained_at = Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true);
    model.set_trained_at(trained_at.clone());
    let names: Vec<String> = ds.schema().names().map(str::to_string).collect();
    store::save(&opts.model_path, &model, &names)?;
    log::info!(
        "published {} model trained on {} rows ({}..{}) to {}",
        opts.method,
        window.len(),
        from,
        range.end,
        opts.model_path.display()
    );
    Ok(RunSummary {
        trained_at,
        window: (from, range.end),
        observations: window.len(),
    })
}

/// Time to wait after a run finishing at `now` until the next one, `period`
/// UTC days later at midnight.
pub fn until_next_run(now: DateTime<Utc>, period: u32) -> Duration {
    let next_day = now.date_naive() + chrono::Duration::days(period as i64);
    let next = next_day.and_hms_opt(0, 0, 0).unwrap().and_utc();
    (next - now).to_std().unwrap_or(Duration::ZERO)
}

pub fn run(opts: &DaemonOptions) -> anyhow::Result<Vec<RunSummary>> {
    anyhow::ensure!(opts.period >= 1, "retrain period must be at least 1 day");
    anyhow::ensure!(opts.window_days >= 1, "training window must be at least 1 day");
    let mut runs = Vec::new();
    loop {
        match run_once(opts) {
            Ok(s) => runs.push(s),
            // A failed run leaves the previous model in place.
            Err(e) => log::error!("offline run failed: {e:#}"),
        }
        if opts.max_runs.is_some_and(|m| runs.len() >= m) {
            return Ok(runs);
        }
        let wait = match opts.day_length {
            Some(day) => day * opts.period,
            None => until_next_run(Utc::now(), opts.period),
        };
        log::debug!("next offline run in {wait:?}");
        std::thread::sleep(wait);
    }
}
