//! One enum over every model family, so harnesses and the CLI can train,
//! persist and query them uniformly.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::baselines::{train_2hb, train_rlr, train_wa, RLRModel, WAModel, DEFAULT_RIDGE_LAMBDA};
use crate::data::{day_of_week_label, Dataset, DAY_OF_WEEK};
use crate::error::{Error, Result};
use crate::model::{load_model, save_model, FORMAT_VERSION};
use crate::tree::{train_dheb, train_fheb, HierarchyModel, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Method {
    Wa,
    Rlr { lambda: f64 },
    #[serde(rename = "2hb")]
    TwoLevel,
    Fheb { order: Vec<String> },
    Dheb,
}

impl Method {
    /// Short display name used in reports.
    pub fn name(&self) -> &'static str {
        match self {
            Method::Wa => "WA",
            Method::Rlr { .. } => "RLR",
            Method::TwoLevel => "2HB",
            Method::Fheb { .. } => "FHEB",
            Method::Dheb => "DHEB",
        }
    }

    pub fn fit(&self, ds: &Dataset, config: &TrainConfig) -> Result<FittedModel> {
        Ok(match self {
            Method::Wa => FittedModel::Wa(train_wa(ds)?),
            Method::Rlr { lambda } => FittedModel::Rlr(train_rlr(ds, *lambda)?),
            Method::TwoLevel => FittedModel::Hierarchy(train_2hb(ds, config)?),
            Method::Fheb { order } => FittedModel::Hierarchy(train_fheb(ds, order, config)?),
            Method::Dheb => FittedModel::Hierarchy(train_dheb(ds, config)?),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Parses `wa`, `rlr`, `2hb`, `dheb`, `fheb` (order given separately).
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wa" => Ok(Method::Wa),
            "rlr" => Ok(Method::Rlr {
                lambda: DEFAULT_RIDGE_LAMBDA,
            }),
            "2hb" => Ok(Method::TwoLevel),
            "fheb" => Ok(Method::Fheb { order: Vec::new() }),
            "dheb" => Ok(Method::Dheb),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Wa(WAModel),
    Rlr(RLRModel),
    Hierarchy(HierarchyModel),
}

/// Builds a schema-ordered feature row from named lookups. Missing values
/// become empty strings, which match no category; a missing day-of-week is
/// derived from `date`.
pub fn named_row<'a>(
    date: Option<NaiveDate>,
    feature_names: &[String],
    lookup: impl Fn(&str) -> Option<&'a str>,
) -> Vec<String> {
    let dow = date.map(day_of_week_label);
    feature_names
        .iter()
        .map(|f| match lookup(f) {
            Some(v) => v.to_string(),
            None if f == DAY_OF_WEEK => dow.clone().unwrap_or_default(),
            None => String::new(),
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct BaselineDoc<T> {
    format_version: u32,
    model_type: String,
    #[serde(default)]
    feature_names: Vec<String>,
    model: T,
}

impl FittedModel {
    /// RPC for a bid unit whose feature values are given in the order of
    /// `feature_names`.
    pub fn predict_row(&self, bid_unit_id: &str, features: &[String]) -> f64 {
        self.predict_row_detail(bid_unit_id, features).0
    }

    /// RPC plus the depth of the node that produced it (hierarchies only).
    pub fn predict_row_detail(&self, bid_unit_id: &str, features: &[String]) -> (f64, Option<usize>) {
        match self {
            FittedModel::Wa(m) => (m.predict(bid_unit_id), None),
            FittedModel::Rlr(m) => (m.predict_row(bid_unit_id, features), None),
            FittedModel::Hierarchy(m) => {
                let p = m.predict_row(bid_unit_id, features);
                (p.rpc, Some(p.matched_depth))
            }
        }
    }

    /// RPC from `(feature, value)` lookups; a missing day-of-week value is
    /// derived from `date`.
    pub fn predict_named<'a>(
        &self,
        bid_unit_id: &str,
        date: Option<NaiveDate>,
        feature_names: &[String],
        lookup: impl Fn(&str) -> Option<&'a str>,
    ) -> f64 {
        self.predict_row(bid_unit_id, &named_row(date, feature_names, lookup))
    }

    pub fn trained_at(&self) -> Option<&str> {
        match self {
            FittedModel::Hierarchy(m) => m.trained_at.as_deref(),
            FittedModel::Wa(m) => m.trained_at.as_deref(),
            FittedModel::Rlr(m) => m.trained_at.as_deref(),
        }
    }

    pub fn set_trained_at(&mut self, ts: impl Into<String>) {
        let ts = Some(ts.into());
        match self {
            FittedModel::Hierarchy(m) => m.trained_at = ts,
            FittedModel::Wa(m) => m.trained_at = ts,
            FittedModel::Rlr(m) => m.trained_at = ts,
        }
    }

    pub fn model_type(&self) -> &'static str {
        match self {
            FittedModel::Wa(_) => "wa",
            FittedModel::Rlr(_) => "rlr",
            FittedModel::Hierarchy(_) => "hierarchy",
        }
    }

    pub fn to_bytes(&self, feature_names: &[String]) -> Result<Vec<u8>> {
        match self {
            FittedModel::Hierarchy(m) => save_model(m),
            FittedModel::Wa(m) => Ok(serde_json::to_vec_pretty(&BaselineDoc {
                format_version: FORMAT_VERSION,
                model_type: "wa".into(),
                feature_names: feature_names.to_vec(),
                model: m,
            })?),
            FittedModel::Rlr(m) => Ok(serde_json::to_vec_pretty(&BaselineDoc {
                format_version: FORMAT_VERSION,
                model_type: "rlr".into(),
                feature_names: feature_names.to_vec(),
                model: m,
            })?),
        }
    }

    /// Loads any model file; returns the model and its feature order.
    pub fn from_bytes(bytes: &[u8]) -> Result<(FittedModel, Vec<String>)> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::CorruptModel(e.to_string()))?;
        let kind = value
            .get("model_type")
            .and_then(serde_json::Value::as_str)
            .unwrap_or("hierarchy")
            .to_string();
        let version = value.get("format_version").and_then(serde_json::Value::as_u64);
        if kind != "hierarchy" && version != Some(FORMAT_VERSION as u64) {
            return Err(Error::FormatVersion {
                found: version.unwrap_or(0) as u32,
                expected: FORMAT_VERSION,
            });
        }
        let corrupt = |e: serde_json::Error| Error::CorruptModel(e.to_string());
        match kind.as_str() {
            "hierarchy" => {
                let m = load_model(bytes)?;
                let names = m.schema.names().map(str::to_string).collect();
                Ok((FittedModel::Hierarchy(m), names))
            }
            "wa" => {
                let d: BaselineDoc<WAModel> = serde_json::from_value(value).map_err(corrupt)?;
                Ok((FittedModel::Wa(d.model), d.feature_names))
            }
            "rlr" => {
                let d: BaselineDoc<RLRModel> = serde_json::from_value(value).map_err(corrupt)?;
                if d.model.feature_weights.len() != d.feature_names.len() {
                    return Err(Error::CorruptModel("RLR weights do not match features".into()));
                }
                Ok((FittedModel::Rlr(d.model), d.feature_names))
            }
            other => Err(Error::CorruptModel(format!("unknown model_type `{other}`"))),
        }
    }
}
