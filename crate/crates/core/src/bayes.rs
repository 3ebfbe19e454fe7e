//! Closed-form conjugate normal math for the regression `y = β·x + ε`.
//!
//! Updates work in precision space: the posterior precision is the prior
//! precision plus `X^T X / σε²`, and the posterior mean is written as a
//! shrinkage of the node OLS estimate toward the prior mean so that it is
//! exactly the prior mean when the data agree with it.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-9;

static POSTERIOR_UPDATES: AtomicU64 = AtomicU64::new(0);

/// Number of posterior updates performed by this process. Serving code
/// never calls into the training path, which this counter makes checkable.
pub fn posterior_update_count() -> u64 {
    POSTERIOR_UPDATES.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    #[serde(rename = "var")]
    pub variance: f64,
}

impl NormalParams {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::NonFinite(format!("mean {mean}")));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::NonFinite(format!("variance {variance} must be finite and > 0")));
        }
        Ok(Self { mean, variance })
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.variance
    }
}

/// Sufficient statistics of a node for the no-intercept regression.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeSufficientStats {
    /// Σ x²
    pub xtx: f64,
    /// Σ x·y
    pub xty: f64,
    pub n: usize,
    /// Residual sum of squares at the OLS slope.
    pub sse_ols: f64,
}

impl NodeSufficientStats {
    /// Two-pass accumulation: the OLS slope first, then residuals around it.
    pub fn from_pairs<I>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (f64, f64)>,
        I::IntoIter: Clone,
    {
        let it = pairs.into_iter();
        let (mut xtx, mut xty, mut n) = (0.0, 0.0, 0usize);
        for (x, y) in it.clone() {
            xtx += x * x;
            xty += x * y;
            n += 1;
        }
        if xtx == 0.0 {
            return Self { xtx, xty, n, sse_ols: 0.0 };
        }
        let beta = xty / xtx;
        let sse_ols = it.map(|(x, y)| (y - beta * x).powi(2)).sum();
        Self { xtx, xty, n, sse_ols }
    }

    /// Statistics of the rows `rows` of the given columns.
    pub fn from_rows(x: &[f64], y: &[f64], rows: &[usize]) -> Self {
        Self::from_pairs(rows.iter().map(|&r| (x[r], y[r])))
    }

    pub fn ols(&self) -> Option<f64> {
        (self.xtx > 0.0).then(|| self.xty / self.xtx)
    }

    /// `‖Y − βX‖²`, written around the OLS fit to avoid cancellation.
    pub fn sse_at(&self, beta: f64) -> f64 {
        match self.ols() {
            Some(b) => self.sse_ols + self.xtx * (beta - b).powi(2),
            None => 0.0,
        }
    }
}

pub fn ols(stats: &NodeSufficientStats) -> Result<f64> {
    stats.ols().ok_or(Error::EmptyNode)
}

/// `SSE_ols / (n − 1)`, floored. Fails for fewer than two observations; the
/// caller decides the fallback.
pub fn residual_variance(stats: &NodeSufficientStats, floor: f64) -> Result<f64> {
    if stats.n < 2 {
        return Err(Error::InsufficientData(format!(
            "residual variance needs n >= 2, got {}",
            stats.n
        )));
    }
    Ok((stats.sse_ols / (stats.n - 1) as f64).max(floor))
}

pub fn posterior_update(
    prior: &NormalParams,
    stats: &NodeSufficientStats,
    sigma_eps_sq: f64,
) -> Result<NormalParams> {
    POSTERIOR_UPDATES.fetch_add(1, Ordering::Relaxed);
    if !(prior.mean.is_finite() && prior.variance.is_finite() && prior.variance > 0.0) {
        return Err(Error::NonFinite(format!("prior {prior:?}")));
    }
    if !(sigma_eps_sq.is_finite() && sigma_eps_sq > 0.0) {
        return Err(Error::NonFinite(format!("sigma_eps_sq {sigma_eps_sq}")));
    }
    if !(stats.xtx.is_finite() && stats.xty.is_finite()) || stats.xtx < 0.0 {
        return Err(Error::NonFinite(format!("stats {stats:?}")));
    }
    let Some(beta_ols) = stats.ols() else {
        return Ok(*prior);
    };
    let prior_prec = prior.precision();
    let data_prec = stats.xtx / sigma_eps_sq;
    let precision = prior_prec + data_prec;
    let weight = data_prec / precision;
    let mean = prior.mean + weight * (beta_ols - prior.mean);
    NormalParams::new(mean, 1.0 / precision)
}

/// Click-weighted mean and dispersion of per-record RPC over `(x, y)` pairs.
pub fn empirical_prior<I>(pairs: I, floor: f64) -> Result<NormalParams>
where
    I: IntoIterator<Item = (f64, f64)>,
    I::IntoIter: Clone,
{
    let it = pairs.into_iter();
    let (sx, sy) = it.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    if sx < 2.0 {
        return Err(Error::InsufficientData(format!(
            "empirical prior needs at least 2 clicks, got {sx}"
        )));
    }
    let mu = sy / sx;
    let num: f64 = it.map(|(x, y)| x * (y / x - mu).powi(2)).sum();
    NormalParams::new(mu, (num / (sx - 1.0)).max(floor))
}

pub fn empirical_prior_dataset(ds: &crate::data::Dataset, floor: f64) -> Result<NormalParams> {
    empirical_prior(
        ds.observations()
            .iter()
            .map(|o| (o.clicks as f64, o.revenue)),
        floor,
    )
}
