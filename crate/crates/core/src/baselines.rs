//! Comparison models: click-weighted average (WA), ridge regression on
//! one-hot features (RLR), and the two-level root → bid unit model (2HB).

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Columns, Dataset};
use crate::error::{Error, Result};
use crate::tree::{train_fheb, HierarchyModel, TrainConfig};

/// Per-unit Σy/Σx with a global fallback for unseen units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WAModel {
    pub per_unit: BTreeMap<String, f64>,
    pub global: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at: Option<String>,
}

impl WAModel {
    pub fn predict(&self, bid_unit_id: &str) -> f64 {
        self.per_unit.get(bid_unit_id).copied().unwrap_or(self.global)
    }
}

pub fn train_wa(ds: &Dataset) -> Result<WAModel> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("WA needs at least one observation".into()));
    }
    let mut sums: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let (mut gx, mut gy) = (0.0, 0.0);
    for o in ds.observations() {
        let e = sums.entry(o.bid_unit_id.clone()).or_default();
        e.0 += o.clicks as f64;
        e.1 += o.revenue;
        gx += o.clicks as f64;
        gy += o.revenue;
    }
    Ok(WAModel {
        per_unit: sums.into_iter().map(|(u, (x, y))| (u, y / x)).collect(),
        global: gy / gx,
        trained_at: None,
    })
}

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;

/// Feature-dependent slope `revenue ≈ (wᵀφ)·clicks`, where φ one-hot
/// encodes every structural feature plus the bid unit itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RLRModel {
    pub lambda: f64,
    /// Weight per category, one map per schema feature.
    pub feature_weights: Vec<BTreeMap<String, f64>>,
    pub unit_weights: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trained_at: Option<String>,
}

impl RLRModel {
    /// `wᵀφ` for a schema-ordered feature row; unseen categories add 0.
    pub fn predict_row(&self, bid_unit_id: &str, features: &[String]) -> f64 {
        let mut s = self.unit_weights.get(bid_unit_id).copied().unwrap_or(0.0);
        for (w, c) in self.feature_weights.iter().zip(features) {
            s += w.get(c).copied().unwrap_or(0.0);
        }
        s
    }
}

/// Solves the ridge normal equations `(ΦᵀΦ + λI) w = ΦᵀY` where row m of Φ
/// is `x_m φ_m`.
pub fn train_rlr(ds: &Dataset, lambda: f64) -> Result<RLRModel> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("RLR needs at least one observation".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let cols = Columns::from_dataset(ds);
    let k = cols.categories.len();
    let mut offsets = Vec::with_capacity(k + 1);
    let mut p = 0usize;
    for cats in &cols.categories {
        offsets.push(p);
        p += cats.len();
    }
    offsets.push(p);
    p += cols.units.len();

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut active = Vec::with_capacity(k + 1);
    for m in 0..cols.len() {
        active.clear();
        for f in 0..k {
            active.push(offsets[f] + cols.codes[f][m] as usize);
        }
        active.push(offsets[k] + cols.unit[m] as usize);
        let (x, y) = (cols.x[m], cols.y[m]);
        for &i in &active {
            rhs[i] += x * y;
            for &j in &active {
                gram[(i, j)] += x * x;
            }
        }
    }
    for i in 0..p {
        gram[(i, i)] += lambda;
    }

    let singular = || {
        Error::Singular(
            "ridge system is singular with lambda = 0; use lambda > 0".to_string(),
        )
    };
    let chol = gram.cholesky().ok_or_else(singular)?;
    if lambda == 0.0 {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v.abs()), hi.max(v.abs())));
        if lo * lo <= 1e-12 * hi * hi {
            return Err(singular());
        }
    }
    let w = chol.solve(&rhs);
    if w.iter().any(|v| !v.is_finite()) {
        return Err(singular());
    }

    let feature_weights = (0..k)
        .map(|f| {
            cols.categories[f]
                .iter()
                .enumerate()
                .map(|(i, c)| (c.clone(), w[offsets[f] + i]))
                .collect()
        })
        .collect();
    let unit_weights = cols
        .units
        .iter()
        .enumerate()
        .map(|(i, u)| (u.clone(), w[offsets[k] + i]))
        .collect();
    Ok(RLRModel {
        lambda,
        feature_weights,
        unit_weights,
        trained_at: None,
    })
}

/// Root → bid unit model: every unit shrinks toward the empirical prior.
pub fn train_2hb(ds: &Dataset, config: &TrainConfig) -> Result<HierarchyModel> {
    train_fheb::<&str>(ds, &[], config)
}

/// Sorted per-unit OLS slopes, handy for checks against WA and RLR.
pub fn per_unit_ols(ds: &Dataset) -> HashMap<String, f64> {
    let mut acc: HashMap<String, (f64, f64)> = HashMap::new();
    for o in ds.observations() {
        let e = acc.entry(o.bid_unit_id.clone()).or_default();
        let x = o.clicks as f64;
        e.0 += x * x;
        e.1 += x * o.revenue;
    }
    acc.into_iter().map(|(u, (xx, xy))| (u, xy / xx)).collect()
}
