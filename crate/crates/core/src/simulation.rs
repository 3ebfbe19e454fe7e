//! Synthetic bid-unit data with a latent category hierarchy.
//!
//! Each level of the implicit hierarchy draws a node mean from its parent's
//! normal distribution; a bid unit's true RPC is drawn from the distribution
//! of the deepest node on its path. Clicks are uniform integers, revenue is
//! `RPC·x + ε`, and finally a fraction `s` of all revenues is zeroed.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use chrono::NaiveDate;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bayes::NormalParams;
use crate::data::{Dataset, DateRange, FeatureSchema, Observation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_bid_units: usize,
    pub features: Vec<String>,
    /// Inclusive bounds on each feature's category count.
    pub category_range: (usize, usize),
    /// Top-down order of the latent hierarchy; a subset of `features`.
    pub implicit_hierarchy: Vec<String>,
    pub date_range: DateRange,
    pub top_prior: NormalParams,
    /// Spread of child means around their parent; defaults to the top
    /// prior variance.
    pub child_variance: Option<f64>,
    pub noise_variance: f64,
    pub n_obs_per_unit: usize,
    pub y_zero_fraction: f64,
    pub clicks_range: (u64, u64),
    /// Clamp negative revenues at zero.
    pub truncate_negative: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let names: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        Self {
            n_bid_units: 100,
            features: names.clone(),
            category_range: (10, 20),
            implicit_hierarchy: names,
            date_range: DateRange {
                start: NaiveDate::from_ymd_opt(2017, 1, 1).unwrap(),
                end: NaiveDate::from_ymd_opt(2017, 6, 30).unwrap(),
            },
            top_prior: NormalParams {
                mean: 1.0,
                variance: 0.25,
            },
            child_variance: None,
            noise_variance: 1.0,
            n_obs_per_unit: 10,
            y_zero_fraction: 0.0,
            clicks_range: (1, 20),
            truncate_negative: true,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_bid_units == 0 {
            return bad("n_bid_units must be positive".into());
        }
        let (lo, hi) = self.category_range;
        if lo == 0 || lo > hi {
            return bad(format!("invalid category range {lo}..={hi}"));
        }
        for h in &self.implicit_hierarchy {
            if !self.features.contains(h) {
                return bad(format!("hierarchy feature `{h}` is not a feature"));
            }
        }
        FeatureSchema::new(&self.features)?;
        if !(0.0..=1.0).contains(&self.y_zero_fraction) {
            return bad(format!("s must lie in [0, 1], got {}", self.y_zero_fraction));
        }
        if self.n_obs_per_unit == 0 {
            return bad("n_obs_per_unit must be at least 1".into());
        }
        if self.n_obs_per_unit as i64 > self.date_range.days() {
            return bad(format!(
                "n_obs_per_unit {} exceeds the {} days in range",
                self.n_obs_per_unit,
                self.date_range.days()
            ));
        }
        let (cl, ch) = self.clicks_range;
        if cl == 0 || cl > ch {
            return bad(format!("invalid clicks range {cl}..={ch}"));
        }
        for v in [self.top_prior.variance, self.noise_variance, self.child_var()] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("variances must be positive, got {v}"));
            }
        }
        if !self.top_prior.mean.is_finite() {
            return bad("top prior mean must be finite".into());
        }
        Ok(())
    }

    pub fn child_var(&self) -> f64 {
        self.child_variance.unwrap_or(self.top_prior.variance)
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub dataset: Dataset,
    pub truth: BTreeMap<String, f64>,
    /// Category count per feature, in schema order.
    pub category_counts: Vec<usize>,
}

pub fn generate(config: &SimConfig) -> Result<Simulated> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schema = FeatureSchema::new(&config.features)?;
    let (lo, hi) = config.category_range;
    let counts: Vec<usize> = config
        .features
        .iter()
        .map(|_| rng.random_range(lo..=hi))
        .collect();
    let hier_idx: Vec<usize> = config
        .implicit_hierarchy
        .iter()
        .map(|h| config.features.iter().position(|f| f == h).unwrap())
        .collect();

    let child_sd = config.child_var().sqrt();
    let normal = |mean: f64, sd: f64| Normal::new(mean, sd).expect("validated sd");
    // Latent node means keyed by category-code prefix along the hierarchy.
    let mut node_means: HashMap<Vec<usize>, f64> = HashMap::new();
    let top = config.top_prior;

    let days = config.date_range.days() as usize;
    let width = (config.n_bid_units.max(1) as f64).log10().floor() as usize + 1;
    let mut observations = Vec::with_capacity(config.n_bid_units * config.n_obs_per_unit);
    let mut truth = BTreeMap::new();
    let noise = normal(0.0, config.noise_variance.sqrt());

    for u in 0..config.n_bid_units {
        let cats: Vec<usize> = counts.iter().map(|&c| rng.random_range(0..c)).collect();
        let mut mean = top.mean;
        let mut sd = top.variance.sqrt();
        let mut prefix = Vec::with_capacity(hier_idx.len());
        for &f in &hier_idx {
            prefix.push(cats[f]);
            mean = match node_means.get(&prefix) {
                Some(&m) => m,
                None => {
                    let m = normal(mean, sd).sample(&mut rng);
                    node_means.insert(prefix.clone(), m);
                    m
                }
            };
            sd = child_sd;
        }
        let rpc = normal(mean, sd).sample(&mut rng);
        let unit = format!("bu{u:0width$}");
        truth.insert(unit.clone(), rpc);

        let features: Vec<String> = config
            .features
            .iter()
            .zip(&cats)
            .map(|(name, c)| format!("{name}{c:02}"))
            .collect();
        let mut day_idx = sample(&mut rng, days, config.n_obs_per_unit).into_vec();
        day_idx.sort_unstable();
        for d in day_idx {
            let clicks = rng.random_range(config.clicks_range.0..=config.clicks_range.1);
            let mut revenue = rpc * clicks as f64 + noise.sample(&mut rng);
            if config.truncate_negative {
                revenue = revenue.max(0.0);
            }
            observations.push(Observation {
                date: config.date_range.start + chrono::Duration::days(d as i64),
                bid_unit_id: unit.clone(),
                features: features.clone(),
                clicks,
                revenue,
            });
        }
    }

    let zeroed = (config.y_zero_fraction * observations.len() as f64).round() as usize;
    for i in sample(&mut rng, observations.len(), zeroed.min(observations.len())) {
        observations[i].revenue = 0.0;
    }

    let dataset = if config.truncate_negative {
        Dataset::new(schema, observations)?
    } else {
        Dataset::new_allow_negative(schema, observations)?
    };
    Ok(Simulated {
        dataset,
        truth,
        category_counts: counts,
    })
}

/// Default (n, s) pairs: n ∈ {3, 10, 30} × s ∈ {0.5, 0.9, 0.98}.
pub fn default_grid_pairs() -> Vec<(usize, f64)> {
    let mut v = Vec::with_capacity(9);
    for n in [3, 10, 30] {
        for s in [0.5, 0.9, 0.98] {
            v.push((n, s));
        }
    }
    v
}

/// Seed of replicate `replicate` of grid pair `pair`, mixed with splitmix64.
pub fn replicate_seed(base_seed: u64, pair: usize, replicate: usize) -> u64 {
    let mut z = base_seed
        ^ (pair as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (replicate as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub pair_index: usize,
    pub replicate: usize,
    pub n_obs_per_unit: usize,
    pub y_zero_fraction: f64,
    pub config: SimConfig,
}

/// Configurations for every (pair, replicate) combination.
pub fn grid_configs(
    base: &SimConfig,
    pairs: &[(usize, f64)],
    replicates: usize,
    base_seed: u64,
) -> Vec<GridCell> {
    let mut cells = Vec::with_capacity(pairs.len() * replicates);
    for (p, &(n, s)) in pairs.iter().enumerate() {
        for r in 0..replicates {
            let config = SimConfig {
                n_obs_per_unit: n,
                y_zero_fraction: s,
                seed: replicate_seed(base_seed, p, r),
                ..base.clone()
            };
            cells.push(GridCell {
                pair_index: p,
                replicate: r,
                n_obs_per_unit: n,
                y_zero_fraction: s,
                config,
            });
        }
    }
    cells
}

pub fn grid(
    base: &SimConfig,
    pairs: &[(usize, f64)],
    replicates: usize,
    base_seed: u64,
) -> Result<Vec<(GridCell, Simulated)>> {
    grid_configs(base, pairs, replicates, base_seed)
        .into_iter()
        .map(|cell| {
            let sim = generate(&cell.config)?;
            Ok((cell, sim))
        })
        .collect()
}

pub fn write_truth_csv<W: Write>(truth: &BTreeMap<String, f64>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(["bid_unit_id", "true_rpc"]).map_err(to_err)?;
    for (u, r) in truth {
        w.write_record([u.clone(), r.to_string()]).map_err(to_err)?;
    }
    w.flush()?;
    Ok(())
}
