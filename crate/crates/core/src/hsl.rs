//! Hierarchical shrinkage loss and split selection.
//!
//! The generic loss sums `h(α_j f(β_j) + γ_j g(β_j, β_parent))` over the
//! children of a candidate split. The instantiation used here is
//!
//! * `f(β_j) = (β_j − β̂_OLS,j)²`, weighted by `α_j = X_jᵀX_j / σε_j²`
//! * `g(β_j, μ) = (β_j − μ)²`, weighted by `γ_j = 1 / σ²` of the shared prior
//! * `h(v) = n_j · v`
//!
//! and every `β_j` is the child's posterior mean, which minimizes the loss.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bayes::{posterior_update, residual_variance, NodeSufficientStats, NormalParams};
use crate::data::Columns;
use crate::error::{Error, Result};

pub const DEFAULT_STOP_RATIO: f64 = 0.95;

/// A child node as seen by the loss: its data summary and its noise
/// variance after any fallback has been applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ChildSummary {
    pub category: String,
    pub stats: NodeSufficientStats,
    pub sigma_eps_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildLoss {
    pub category: String,
    pub n: usize,
    pub posterior: NormalParams,
    /// `α_j (β_j − β̂_OLS,j)²`
    pub within: f64,
    /// `γ (β_j − μ)²`
    pub parent: f64,
}

impl ChildLoss {
    pub fn contribution(&self) -> f64 {
        self.n as f64 * (self.within + self.parent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub per_child: Vec<ChildLoss>,
    pub total: f64,
}

/// Evaluates the shrinkage loss of a partition under the shared prior.
pub fn hsl_loss(parent_prior: &NormalParams, children: &[ChildSummary]) -> Result<LossBreakdown> {
    if children.is_empty() {
        return Err(Error::InsufficientData("hsl_loss needs at least one child".into()));
    }
    let gamma = parent_prior.precision();
    let mut per_child = Vec::with_capacity(children.len());
    let mut total = 0.0;
    for c in children {
        let posterior = posterior_update(parent_prior, &c.stats, c.sigma_eps_sq)?;
        let beta = posterior.mean;
        let within = match c.stats.ols() {
            Some(b) => c.stats.xtx / c.sigma_eps_sq * (beta - b).powi(2),
            None => 0.0,
        };
        let parent = gamma * (beta - parent_prior.mean).powi(2);
        let loss = ChildLoss {
            category: c.category.clone(),
            n: c.stats.n,
            posterior,
            within,
            parent,
        };
        total += loss.contribution();
        per_child.push(loss);
    }
    Ok(LossBreakdown { per_child, total })
}

/// True when the best split fails to cut the SSE by at least `1 − r`.
pub fn stopping(parent_sse: f64, children_sse: f64, r: f64) -> bool {
    if parent_sse <= 0.0 {
        return true;
    }
    children_sse / parent_sse > r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDecision {
    /// Feature index into the schema; `None` when no candidate exists.
    pub chosen_feature: Option<usize>,
    /// Loss per candidate feature index.
    pub losses: BTreeMap<usize, LossBreakdown>,
    pub stopped: bool,
    pub sse_ratio: f64,
    pub parent_sse: f64,
    pub children_sse: f64,
}

/// Everything select_split needs to know about the node being split.
#[derive(Debug, Clone, Copy)]
pub struct SplitContext<'a> {
    pub columns: &'a Columns,
    /// Rows of `columns` that belong to the node.
    pub rows: &'a [usize],
    /// The node's posterior: prior for its children and the node's own
    /// prediction for the stopping test.
    pub node_posterior: NormalParams,
    /// Fallback noise variance for children with fewer than two rows.
    pub node_sigma_eps_sq: f64,
    /// Candidate feature indices; ties break on feature name.
    pub available: &'a [usize],
    pub feature_names: &'a [String],
    pub stop_ratio: f64,
    pub variance_floor: f64,
}

/// Groups `rows` by the categories of feature `f`, ordered by category code.
pub fn partition(columns: &Columns, rows: &[usize], f: usize) -> Vec<(u32, Vec<usize>)> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for &r in rows {
        groups.entry(columns.codes[f][r]).or_default().push(r);
    }
    groups.into_iter().collect()
}

/// Child summary with the node-level σε² fallback applied.
pub fn summarize_child(
    columns: &Columns,
    rows: &[usize],
    category: String,
    fallback_sigma_eps_sq: f64,
    floor: f64,
) -> ChildSummary {
    let stats = NodeSufficientStats::from_rows(&columns.x, &columns.y, rows);
    let sigma_eps_sq = residual_variance(&stats, floor).unwrap_or(fallback_sigma_eps_sq);
    ChildSummary {
        category,
        stats,
        sigma_eps_sq,
    }
}

fn children_of(ctx: &SplitContext<'_>, f: usize) -> Vec<ChildSummary> {
    partition(ctx.columns, ctx.rows, f)
        .into_iter()
        .map(|(code, rows)| {
            summarize_child(
                ctx.columns,
                &rows,
                ctx.columns.categories[f][code as usize].clone(),
                ctx.node_sigma_eps_sq,
                ctx.variance_floor,
            )
        })
        .collect()
}

/// Chooses the loss-minimizing feature among those that actually partition
/// the node, then applies the stopping test to it.
pub fn select_split(ctx: &SplitContext<'_>) -> Result<SplitDecision> {
    if ctx.rows.is_empty() {
        return Err(Error::InsufficientData("cannot split an empty node".into()));
    }
    let node_stats = NodeSufficientStats::from_rows(&ctx.columns.x, &ctx.columns.y, ctx.rows);
    let parent_sse = node_stats.sse_at(ctx.node_posterior.mean);

    let mut losses = BTreeMap::new();
    let mut best: Option<(usize, f64, f64)> = None;
    for &f in ctx.available {
        let children = children_of(ctx, f);
        if children.len() < 2 {
            // does not partition this node
            continue;
        }
        let breakdown = hsl_loss(&ctx.node_posterior, &children)?;
        let children_sse: f64 = children
            .iter()
            .zip(&breakdown.per_child)
            .map(|(c, l)| c.stats.sse_at(l.posterior.mean))
            .sum();
        let better = match best {
            None => true,
            Some((bf, bl, _)) => {
                breakdown.total < bl
                    || (breakdown.total == bl && ctx.feature_names[f] < ctx.feature_names[bf])
            }
        };
        if better {
            best = Some((f, breakdown.total, children_sse));
        }
        losses.insert(f, breakdown);
    }

    let Some((chosen, _, children_sse)) = best else {
        return Ok(SplitDecision {
            chosen_feature: None,
            losses,
            stopped: true,
            sse_ratio: 1.0,
            parent_sse,
            children_sse: parent_sse,
        });
    };
    let sse_ratio = if parent_sse > 0.0 {
        children_sse / parent_sse
    } else if children_sse == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(SplitDecision {
        chosen_feature: Some(chosen),
        losses,
        stopped: stopping(parent_sse, children_sse, ctx.stop_ratio),
        sse_ratio,
        parent_sse,
        children_sse,
    })
}
