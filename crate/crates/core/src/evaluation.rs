//! Rolling next-day backtests, the benchmark grid and the retrain-period
//! (staleness) experiment.
//!
//! The score is the mean over test days of the per-day mean squared revenue
//! error `(β̂·x − y)²`, taken over the bid units active on that day.

use std::io::Write;
use std::time::Instant;

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::DEFAULT_RIDGE_LAMBDA;
use crate::data::{sparsity, unit_day_table, Dataset};
use crate::error::{Error, Result};
use crate::methods::{FittedModel, Method};
use crate::simulation::{default_grid_pairs, generate, grid_configs, SimConfig};
use crate::tree::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvgMse {
    pub value: f64,
    pub days_used: usize,
    pub days_skipped: usize,
}

/// `predictions[t][i]` is the RPC predicted for the i-th record of day t and
/// `actuals[t][i]` its `(clicks, revenue)`. Days without records are skipped.
pub fn avg_mse(predictions: &[Vec<f64>], actuals: &[Vec<(f64, f64)>]) -> Result<AvgMse> {
    if predictions.len() != actuals.len() {
        return Err(Error::InsufficientData(format!(
            "{} prediction days but {} actual days",
            predictions.len(),
            actuals.len()
        )));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (t, (p, a)) in predictions.iter().zip(actuals).enumerate() {
        if p.len() != a.len() {
            return Err(Error::InsufficientData(format!(
                "day {t}: {} predictions for {} actuals",
                p.len(),
                a.len()
            )));
        }
        if p.is_empty() {
            log::warn!("day {t} has no evaluable bid units; excluded");
            continue;
        }
        let day: f64 = p
            .iter()
            .zip(a)
            .map(|(b, (x, y))| (b * x - y).powi(2))
            .sum::<f64>()
            / p.len() as f64;
        sum += day;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InsufficientData("no evaluable days".into()));
    }
    Ok(AvgMse {
        value: sum / used as f64,
        days_used: used,
        days_skipped: predictions.len() - used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestConfig {
    pub train_window_days: i64,
    pub horizon_days: usize,
    /// Retrain every `retrain_stride` test days; 1 retrains daily.
    pub retrain_stride: usize,
    /// First test day; defaults to the data start plus the train window.
    pub first_test_day: Option<NaiveDate>,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            train_window_days: 60,
            horizon_days: 30,
            retrain_stride: 1,
            first_test_day: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayFailure {
    pub date: NaiveDate,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub name: String,
    pub avg_mse: Option<f64>,
    /// Percent reduction of AVG-MSE relative to the WA baseline.
    pub improvement_vs_wa: Option<f64>,
    pub time_ratio_vs_wa: Option<f64>,
    /// Training plus prediction time summed over the horizon.
    pub wall_clock_secs: f64,
    pub daily_mse: Vec<Option<f64>>,
    pub failed_days: Vec<DayFailure>,
    pub offline_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: BacktestConfig,
    pub test_days: Vec<NaiveDate>,
    pub models: Vec<ModelReport>,
    pub not_implemented: Vec<String>,
}

impl EvalReport {
    pub fn model(&self, name: &str) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Flat `model,metric,value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| Error::Csv {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(["model", "metric", "value"]).map_err(to_err)?;
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for m in &self.models {
            for (metric, value) in [
                ("avg_mse", fmt(m.avg_mse)),
                ("improvement_vs_wa_pct", fmt(m.improvement_vs_wa)),
                ("time_ratio_vs_wa", fmt(m.time_ratio_vs_wa)),
                ("wall_clock_secs", m.wall_clock_secs.to_string()),
                ("failed_days", m.failed_days.len().to_string()),
                ("offline_runs", m.offline_runs.to_string()),
            ] {
                w.write_record([m.name.as_str(), metric, value.as_str()]).map_err(to_err)?;
            }
            for (day, mse) in self.test_days.iter().zip(&m.daily_mse) {
                if let Some(v) = mse {
                    w.write_record([m.name.clone(), format!("daily_mse:{day}"), v.to_string()])
                        .map_err(to_err)?;
                }
            }
        }
        for name in &self.not_implemented {
            w.write_record([name.as_str(), "status", "not implemented"]).map_err(to_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn improvement(baseline_mse: f64, model_mse: f64) -> f64 {
    (baseline_mse - model_mse) / baseline_mse * 100.0
}

fn test_days(ds: &Dataset, cfg: &BacktestConfig) -> Result<Vec<NaiveDate>> {
    if cfg.train_window_days < 1 || cfg.horizon_days == 0 || cfg.retrain_stride == 0 {
        return Err(Error::Config(format!("invalid backtest config {cfg:?}")));
    }
    let range = ds
        .date_range()
        .ok_or_else(|| Error::InsufficientData("empty dataset".into()))?;
    let first = cfg
        .first_test_day
        .unwrap_or(range.start + Duration::days(cfg.train_window_days));
    let last = first + Duration::days(cfg.horizon_days as i64 - 1);
    if first - Duration::days(cfg.train_window_days) < range.start || last > range.end {
        return Err(Error::InsufficientData(format!(
            "data spans {}..{} but the backtest needs {}..{}",
            range.start,
            range.end,
            first - Duration::days(cfg.train_window_days),
            last
        )));
    }
    Ok((0..cfg.horizon_days as i64).map(|k| first + Duration::days(k)).collect())
}

/// Backtests one method; returns the report without baseline-relative
/// fields.
pub fn backtest_method(
    ds: &Dataset,
    method: &Method,
    train: &TrainConfig,
    cfg: &BacktestConfig,
) -> Result<ModelReport> {
    let days = test_days(ds, cfg)?;
    let mut current: Option<FittedModel> = None;
    let mut elapsed = 0.0;
    let mut offline_runs = 0;
    let mut failed_days = Vec::new();
    let mut preds = Vec::with_capacity(days.len());
    let mut actuals = Vec::with_capacity(days.len());
    let mut daily_mse = Vec::with_capacity(days.len());

    for (k, &day) in days.iter().enumerate() {
        if k % cfg.retrain_stride == 0 {
            let window = ds.between(day - Duration::days(cfg.train_window_days), day - Duration::days(1));
            let start = Instant::now();
            let fitted = method.fit(&window, train);
            elapsed += start.elapsed().as_secs_f64();
            offline_runs += 1;
            current = match fitted {
                Ok(m) => Some(m),
                Err(e) => {
                    log::warn!("{} failed to train for {day}: {e}", method.name());
                    None
                }
            };
        }
        let active: Vec<_> = ds.observations().iter().filter(|o| o.date == day).collect();
        let Some(model) = &current else {
            failed_days.push(DayFailure {
                date: day,
                error: "no trained model".into(),
            });
            daily_mse.push(None);
            continue;
        };
        let start = Instant::now();
        let p: Vec<f64> = active
            .iter()
            .map(|o| model.predict_row(&o.bid_unit_id, &o.features))
            .collect();
        elapsed += start.elapsed().as_secs_f64();
        let a: Vec<(f64, f64)> = active.iter().map(|o| (o.clicks as f64, o.revenue)).collect();
        daily_mse.push((!p.is_empty()).then(|| {
            p.iter().zip(&a).map(|(b, (x, y))| (b * x - y).powi(2)).sum::<f64>() / p.len() as f64
        }));
        preds.push(p);
        actuals.push(a);
    }
    let avg = avg_mse(&preds, &actuals).ok().map(|m| m.value);
    Ok(ModelReport {
        name: method.name().to_string(),
        avg_mse: avg,
        improvement_vs_wa: None,
        time_ratio_vs_wa: None,
        wall_clock_secs: elapsed,
        daily_mse,
        failed_days,
        offline_runs,
    })
}

/// Backtests every method on the same test days and fills in the
/// WA-relative improvement and time ratio.
pub fn rolling_backtest(
    ds: &Dataset,
    methods: &[Method],
    train: &TrainConfig,
    cfg: &BacktestConfig,
) -> Result<EvalReport> {
    let days = test_days(ds, cfg)?;
    let mut models = methods
        .iter()
        .map(|m| backtest_method(ds, m, train, cfg))
        .collect::<Result<Vec<_>>>()?;
    let wa = models
        .iter()
        .find(|m| m.name == Method::Wa.name())
        .map(|m| (m.avg_mse, m.wall_clock_secs));
    if let Some((wa_mse, wa_time)) = wa {
        for m in models.iter_mut() {
            m.improvement_vs_wa = match (wa_mse, m.avg_mse) {
                (Some(b), Some(v)) if b > 0.0 => Some(improvement(b, v)),
                (Some(b), Some(v)) if b == v => Some(0.0),
                _ => None,
            };
            m.time_ratio_vs_wa = (wa_time > 0.0).then(|| m.wall_clock_secs / wa_time);
        }
    }
    Ok(EvalReport {
        config: *cfg,
        test_days: days,
        models,
        not_implemented: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub base: SimConfig,
    pub pairs: Vec<(usize, f64)>,
    pub replicates: usize,
    pub base_seed: u64,
    pub backtest: BacktestConfig,
    pub train: TrainConfig,
    pub rlr_lambda: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            base: SimConfig::default(),
            pairs: default_grid_pairs(),
            replicates: 10,
            base_seed: 2017,
            backtest: BacktestConfig::default(),
            train: TrainConfig::default(),
            rlr_lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }
}

impl BenchmarkConfig {
    pub fn methods(&self) -> Vec<Method> {
        vec![
            Method::Wa,
            Method::Rlr {
                lambda: self.rlr_lambda,
            },
            Method::TwoLevel,
            Method::Fheb {
                order: self.base.implicit_hierarchy.clone(),
            },
            Method::Dheb,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub mean_improvement_vs_wa: Option<f64>,
    pub mean_time_ratio_vs_wa: Option<f64>,
    pub mean_avg_mse: Option<f64>,
    pub replicates_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n_obs_per_unit: usize,
    pub y_zero_fraction: f64,
    pub mean_x_sparsity: f64,
    pub mean_y_sparsity: Option<f64>,
    pub models: Vec<ModelSummary>,
}

impl CellSummary {
    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRun {
    pub pair_index: usize,
    pub replicate: usize,
    pub x_sparsity: f64,
    pub y_sparsity: Option<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub cells: Vec<CellSummary>,
    pub runs: Vec<ReplicateRun>,
    pub not_implemented: Vec<String>,
}

impl BenchmarkReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let to_err = |e: csv::Error| Error::Csv {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(["model", "metric", "value"]).map_err(to_err)?;
        let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for c in &self.cells {
            let cell = format!("n={},s={}", c.n_obs_per_unit, c.y_zero_fraction);
            for m in &c.models {
                for (metric, v) in [
                    ("mean_improvement_vs_wa_pct", m.mean_improvement_vs_wa),
                    ("mean_time_ratio_vs_wa", m.mean_time_ratio_vs_wa),
                    ("mean_avg_mse", m.mean_avg_mse),
                ] {
                    w.write_record([m.name.clone(), format!("{cell}:{metric}"), fmt(v)])
                        .map_err(to_err)?;
                }
            }
        }
        for name in &self.not_implemented {
            w.write_record([name.as_str(), "status", "not implemented"]).map_err(to_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Runs every method on every (n, s) cell and replicate of the grid.
/// Replicates run in parallel; each replicate's models run sequentially so
/// their time ratios stay comparable.
pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let methods = cfg.methods();
    let cells = grid_configs(&cfg.base, &cfg.pairs, cfg.replicates, cfg.base_seed);
    let runs = cells
        .par_iter()
        .map(|cell| {
            let sim = generate(&cell.config)?;
            let stats = sparsity(&unit_day_table(&sim.dataset, cell.config.date_range));
            let report = rolling_backtest(&sim.dataset, &methods, &cfg.train, &cfg.backtest)?;
            Ok(ReplicateRun {
                pair_index: cell.pair_index,
                replicate: cell.replicate,
                x_sparsity: stats.x_sparsity,
                y_sparsity: stats.y_sparsity,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summaries = cfg
        .pairs
        .iter()
        .enumerate()
        .map(|(p, &(n, s))| {
            let mine: Vec<&ReplicateRun> = runs.iter().filter(|r| r.pair_index == p).collect();
            let models = methods
                .iter()
                .map(|m| {
                    let reports: Vec<&ModelReport> =
                        mine.iter().filter_map(|r| r.report.model(m.name())).collect();
                    ModelSummary {
                        name: m.name().to_string(),
                        mean_improvement_vs_wa: mean(
                            reports.iter().filter_map(|r| r.improvement_vs_wa),
                        ),
                        mean_time_ratio_vs_wa: mean(reports.iter().filter_map(|r| r.time_ratio_vs_wa)),
                        mean_avg_mse: mean(reports.iter().filter_map(|r| r.avg_mse)),
                        replicates_scored: reports.iter().filter(|r| r.avg_mse.is_some()).count(),
                    }
                })
                .collect();
            CellSummary {
                n_obs_per_unit: n,
                y_zero_fraction: s,
                mean_x_sparsity: mean(mine.iter().map(|r| r.x_sparsity)).unwrap_or(f64::NAN),
                mean_y_sparsity: mean(mine.iter().filter_map(|r| r.y_sparsity)),
                models,
            }
        })
        .collect();

    Ok(BenchmarkReport {
        cells: summaries,
        runs,
        not_implemented: vec!["3HB".into()],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StalenessRow {
    pub retrain_period: usize,
    pub avg_mse: Option<f64>,
    /// Percent increase of AVG-MSE over the daily-retrain run.
    pub degradation_vs_daily: Option<f64>,
    pub offline_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StalenessReport {
    pub method: String,
    pub rows: Vec<StalenessRow>,
}

/// Runs the backtest once per retrain period and compares each to T = 1.
pub fn staleness_experiment(
    ds: &Dataset,
    method: &Method,
    train: &TrainConfig,
    cfg: &BacktestConfig,
    periods: &[usize],
) -> Result<StalenessReport> {
    if periods.contains(&0) {
        return Err(Error::Config("retrain period must be at least 1".into()));
    }
    let daily = backtest_method(ds, method, train, &BacktestConfig { retrain_stride: 1, ..*cfg })?;
    let rows = periods
        .iter()
        .map(|&t| {
            let r = if t == 1 {
                daily.clone()
            } else {
                backtest_method(ds, method, train, &BacktestConfig { retrain_stride: t, ..*cfg })?
            };
            let degradation = match (daily.avg_mse, r.avg_mse) {
                (Some(b), Some(v)) if b > 0.0 => Some((v - b) / b * 100.0),
                (Some(b), Some(v)) if b == v => Some(0.0),
                _ => None,
            };
            Ok(StalenessRow {
                retrain_period: t,
                avg_mse: r.avg_mse,
                degradation_vs_daily: degradation,
                offline_runs: r.offline_runs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StalenessReport {
        method: method.name().to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSchema, Observation};

    #[test]
    fn avg_mse_examples() {
        let perfect = avg_mse(&[vec![1.5, 2.0]], &[vec![(2.0, 3.0), (4.0, 8.0)]]).unwrap();
        assert_eq!(perfect.value, 0.0);
        assert_eq!(avg_mse(&[vec![1.0]], &[vec![(2.0, 3.0)]]).unwrap().value, 1.0);

        // Day 1 errors {1, 9}, day 2 error {4}: per-day means 5 and 4.
        let r = avg_mse(
            &[vec![1.0, 1.0], vec![1.0]],
            &[vec![(1.0, 2.0), (1.0, 4.0)], vec![(1.0, 3.0)]],
        )
        .unwrap();
        assert_eq!(r.value, 4.5);
    }

    #[test]
    fn avg_mse_skips_empty_days() {
        let r = avg_mse(&[vec![], vec![1.0]], &[vec![], vec![(1.0, 3.0)]]).unwrap();
        assert_eq!((r.value, r.days_used, r.days_skipped), (4.0, 1, 1));
        assert!(avg_mse(&[vec![]], &[vec![]]).is_err());
        assert!(avg_mse(&[vec![1.0]], &[vec![]]).is_err());
    }

    fn small() -> Dataset {
        let schema = FeatureSchema::new(&["A"]).unwrap();
        let start = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
        let mut v = Vec::new();
        for day in 0..20 {
            for u in 0..4u64 {
                if (day + u) % 2 == 0 {
                    v.push(Observation {
                        date: start + Duration::days(day as i64),
                        bid_unit_id: format!("u{u}"),
                        features: vec![format!("a{}", u % 2)],
                        clicks: 1 + (day * 7 + u) % 5,
                        revenue: ((day + u) % 3) as f64,
                    });
                }
            }
        }
        Dataset::new(schema, v).unwrap()
    }

    #[test]
    fn backtest_identical_models_agree() {
        let cfg = BacktestConfig {
            train_window_days: 10,
            horizon_days: 8,
            ..Default::default()
        };
        let r = rolling_backtest(&small(), &[Method::Wa, Method::Wa, Method::Dheb], &TrainConfig::default(), &cfg)
            .unwrap();
        assert_eq!(r.test_days.len(), 8);
        assert_eq!(r.models[0].avg_mse, r.models[1].avg_mse);
        assert_eq!(r.models[0].improvement_vs_wa, Some(0.0));
        assert_eq!(r.models[1].improvement_vs_wa, Some(0.0));
        let d = &r.models[2];
        let sign = d.improvement_vs_wa.unwrap().signum();
        assert_eq!(sign, (r.models[0].avg_mse.unwrap() - d.avg_mse.unwrap()).signum());
    }

    #[test]
    fn backtest_needs_enough_span() {
        let cfg = BacktestConfig::default();
        assert!(matches!(
            rolling_backtest(&small(), &[Method::Wa], &TrainConfig::default(), &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn training_failures_are_recorded() {
        // One click in the window: the empirical prior cannot be estimated.
        let schema = FeatureSchema::new(&["A"]).unwrap();
        let start = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
        let v = (0..6)
            .map(|d| Observation {
                date: start + Duration::days(d),
                bid_unit_id: "u".into(),
                features: vec!["a".into()],
                clicks: 1,
                revenue: 1.0,
            })
            .collect();
        let ds = Dataset::new(schema, v).unwrap();
        let cfg = BacktestConfig { train_window_days: 1, horizon_days: 3, ..Default::default() };
        let r = rolling_backtest(&ds, &[Method::Wa, Method::Dheb], &TrainConfig::default(), &cfg).unwrap();
        assert!(r.model("WA").unwrap().failed_days.is_empty());
        let dheb = r.model("DHEB").unwrap();
        assert_eq!(dheb.failed_days.len(), 3);
        assert_eq!(dheb.avg_mse, None);
    }

    #[test]
    fn staleness_schedule() {
        let cfg = BacktestConfig { train_window_days: 5, horizon_days: 14, ..Default::default() };
        let r = staleness_experiment(&small(), &Method::Wa, &TrainConfig::default(), &cfg, &[1, 4]).unwrap();
        assert_eq!(r.rows[0].degradation_vs_daily, Some(0.0));
        assert_eq!(r.rows[0].offline_runs, 14);
        assert_eq!(r.rows[1].offline_runs, 4); // ceil(14 / 4)
    }

    #[test]
    fn report_csv_has_rows() {
        let cfg = BacktestConfig { train_window_days: 10, horizon_days: 5, ..Default::default() };
        let r = rolling_backtest(&small(), &[Method::Wa], &TrainConfig::default(), &cfg).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("model,metric,value\n"));
        assert!(text.contains("WA,avg_mse,"));
    }
}
