//! Hierarchy construction with stepwise empirical-Bayes inference.
//!
//! The root carries the empirical prior estimated from all training data.
//! Every other node takes its parent's posterior as prior and updates it
//! with its own data. Structural levels are grown breadth-first, either by
//! loss-driven split selection (`train_dheb`) or from a fixed feature order
//! (`train_fheb`); bid units are then attached under each structural leaf.

use std::collections::{BTreeMap, HashMap, VecDeque};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::bayes::{
    empirical_prior, posterior_update, residual_variance, NodeSufficientStats, NormalParams,
    DEFAULT_VARIANCE_FLOOR,
};
use crate::data::{day_of_week_label, Columns, Dataset, DateRange, FeatureSchema, DAY_OF_WEEK};
use crate::error::{Error, Result};
use crate::hsl::{partition, select_split, summarize_child, SplitContext, DEFAULT_STOP_RATIO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Stop growing a node when the best split keeps more than this
    /// fraction of the parent SSE.
    pub stop_ratio: f64,
    pub variance_floor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stop_ratio: DEFAULT_STOP_RATIO,
            variance_floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_ratio > 0.0 && self.stop_ratio <= 1.0) {
            return Err(Error::Config(format!("r must lie in (0, 1], got {}", self.stop_ratio)));
        }
        if !(self.variance_floor.is_finite() && self.variance_floor > 0.0) {
            return Err(Error::Config(format!(
                "variance floor must be positive, got {}",
                self.variance_floor
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HierarchyMethod {
    Dheb,
    Fheb,
}

/// Training configuration recorded inside a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub method: HierarchyMethod,
    pub r: f64,
    pub variance_floor: f64,
    pub tie_break: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_order: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub node_id: usize,
    pub parent_id: Option<usize>,
    pub depth: usize,
    /// Feature used to split this node's children; `None` on leaves.
    pub split_feature: Option<String>,
    /// Category of this node under its parent's split feature.
    pub category: Option<String>,
    pub prior: NormalParams,
    pub posterior: NormalParams,
    pub sigma_eps_sq: f64,
    pub n_obs: usize,
    pub is_bid_unit_leaf: bool,
    pub bid_unit_id: Option<String>,
    /// Child ids keyed by category, or by bid unit id under a structural leaf.
    pub children: BTreeMap<String, usize>,
}

impl TreeNode {
    pub fn is_structural_leaf(&self) -> bool {
        !self.is_bid_unit_leaf && self.split_feature.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyModel {
    pub schema: FeatureSchema,
    pub config: ModelConfig,
    pub trained_at: Option<String>,
    pub training_data_range: Option<DateRange>,
    nodes: Vec<TreeNode>,
}

/// Outcome of walking a query down the tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub rpc: f64,
    pub node_id: usize,
    pub matched_depth: usize,
    /// Whether the walk ended at the query's own bid-unit leaf.
    pub reached_leaf: bool,
}

impl HierarchyModel {
    /// Assembles a model from nodes listed in id order, rebuilding child
    /// maps and depths and checking structural invariants.
    pub fn from_nodes(
        schema: FeatureSchema,
        config: ModelConfig,
        trained_at: Option<String>,
        training_data_range: Option<DateRange>,
        mut nodes: Vec<TreeNode>,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::CorruptModel("model has no nodes".into()));
        }
        for n in nodes.iter_mut() {
            n.children.clear();
        }
        for i in 0..nodes.len() {
            if nodes[i].node_id != i {
                return Err(Error::CorruptModel(format!(
                    "node at position {i} has id {}",
                    nodes[i].node_id
                )));
            }
            match nodes[i].parent_id {
                None if i == 0 => nodes[i].depth = 0,
                None => return Err(Error::CorruptModel(format!("node {i} has no parent"))),
                Some(p) if p >= i => {
                    return Err(Error::CorruptModel(format!("node {i} has parent {p} >= own id")))
                }
                Some(p) => {
                    let key = if nodes[i].is_bid_unit_leaf {
                        if nodes[p].split_feature.is_some() || nodes[p].is_bid_unit_leaf {
                            return Err(Error::CorruptModel(format!(
                                "bid-unit leaf {i} hangs under a non-structural-leaf node"
                            )));
                        }
                        nodes[i].bid_unit_id.clone()
                    } else {
                        if nodes[p].split_feature.is_none() {
                            return Err(Error::CorruptModel(format!(
                                "node {i} hangs under unsplit node {p}"
                            )));
                        }
                        nodes[i].category.clone()
                    };
                    let key = key.ok_or_else(|| {
                        Error::CorruptModel(format!("node {i} lacks its category key"))
                    })?;
                    if nodes[p].children.insert(key, i).is_some() {
                        return Err(Error::CorruptModel(format!("duplicate child key under {p}")));
                    }
                    nodes[i].depth = nodes[p].depth + 1;
                }
            }
            if let Some(f) = &nodes[i].split_feature {
                if schema.index_of(f).is_none() {
                    return Err(Error::CorruptModel(format!("unknown split feature `{f}`")));
                }
            }
            for p in [nodes[i].prior, nodes[i].posterior] {
                if !(p.mean.is_finite() && p.variance.is_finite() && p.variance > 0.0) {
                    return Err(Error::CorruptModel(format!("node {i} has invalid params")));
                }
            }
        }
        if nodes[0].is_bid_unit_leaf {
            return Err(Error::CorruptModel("root cannot be a bid-unit leaf".into()));
        }
        Ok(Self {
            schema,
            config,
            trained_at,
            training_data_range,
            nodes,
        })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn with_trained_at(mut self, ts: impl Into<String>) -> Self {
        self.trained_at = Some(ts.into());
        self
    }

    /// Root-to-node list of (feature, category) pairs.
    pub fn category_path(&self, id: usize) -> Vec<(String, String)> {
        let mut path = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent_id {
            let node = &self.nodes[cur];
            if !node.is_bid_unit_leaf {
                let feature = self.nodes[p].split_feature.clone().unwrap_or_default();
                path.push((feature, node.category.clone().unwrap_or_default()));
            }
            cur = p;
        }
        path.reverse();
        path
    }

    /// Split features by depth, in first-seen (breadth-first) order.
    pub fn feature_order(&self) -> Vec<Vec<String>> {
        let mut levels: Vec<Vec<String>> = Vec::new();
        for n in &self.nodes {
            if let Some(f) = &n.split_feature {
                if levels.len() <= n.depth {
                    levels.resize(n.depth + 1, Vec::new());
                }
                if !levels[n.depth].contains(f) {
                    levels[n.depth].push(f.clone());
                }
            }
        }
        levels
    }

    pub fn bid_unit_leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_bid_unit_leaf)
    }

    pub fn structural_depth(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| !n.is_bid_unit_leaf)
            .map(|n| n.depth)
            .max()
            .unwrap_or(0)
    }

    /// Walks the tree using `lookup(feature) -> category`. Stops at the
    /// deepest node whose path matches and returns its posterior mean.
    pub fn predict_with<'a, F>(&self, bid_unit_id: &str, lookup: F) -> Prediction
    where
        F: Fn(&str) -> Option<&'a str>,
    {
        let mut cur = 0usize;
        loop {
            let node = &self.nodes[cur];
            let next = match &node.split_feature {
                Some(f) => lookup(f).and_then(|c| node.children.get(c)),
                None if !node.is_bid_unit_leaf => node.children.get(bid_unit_id),
                None => None,
            };
            match next {
                Some(&id) => cur = id,
                None => {
                    return Prediction {
                        rpc: node.posterior.mean,
                        node_id: cur,
                        matched_depth: node.depth,
                        reached_leaf: node.is_bid_unit_leaf,
                    }
                }
            }
        }
    }

    /// Prediction from feature values aligned with the schema order.
    pub fn predict_row(&self, bid_unit_id: &str, features: &[String]) -> Prediction {
        self.predict_with(bid_unit_id, |name| {
            self.schema
                .index_of(name)
                .and_then(|i| features.get(i))
                .map(String::as_str)
        })
    }

    /// Prediction from named feature values. A missing day-of-week feature
    /// is derived from `date`.
    pub fn predict(
        &self,
        bid_unit_id: &str,
        date: Option<NaiveDate>,
        features: &HashMap<String, String>,
    ) -> Prediction {
        let dow = date.map(day_of_week_label);
        self.predict_with(bid_unit_id, |name| match features.get(name) {
            Some(v) => Some(v.as_str()),
            None if name == DAY_OF_WEEK => dow.as_deref(),
            None => None,
        })
    }
}

/// Number of structural nodes whose split differs between two models,
/// matching nodes by their category path.
pub fn hierarchy_edit_distance(a: &HierarchyModel, b: &HierarchyModel) -> usize {
    let splits = |m: &HierarchyModel| -> BTreeMap<Vec<(String, String)>, Option<String>> {
        m.nodes()
            .iter()
            .filter(|n| !n.is_bid_unit_leaf)
            .map(|n| (m.category_path(n.node_id), n.split_feature.clone()))
            .collect()
    };
    let (sa, sb) = (splits(a), splits(b));
    let mut d = 0;
    for (k, v) in &sa {
        match sb.get(k) {
            Some(w) if w == v => {}
            _ => d += 1,
        }
    }
    d + sb.keys().filter(|k| !sa.contains_key(*k)).count()
}

enum Growth<'a> {
    Dynamic,
    Fixed(&'a [usize]),
}

struct Builder<'a> {
    cols: &'a Columns,
    names: Vec<String>,
    cfg: TrainConfig,
    nodes: Vec<TreeNode>,
    rows: Vec<Vec<usize>>,
    used: Vec<Vec<usize>>,
}

impl<'a> Builder<'a> {
    fn push(&mut self, node: TreeNode, rows: Vec<usize>, used: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(TreeNode { node_id: id, ..node });
        self.rows.push(rows);
        self.used.push(used);
        id
    }

    fn child(
        &mut self,
        parent: usize,
        rows: Vec<usize>,
        category: Option<String>,
        bid_unit_id: Option<String>,
        used: Vec<usize>,
    ) -> Result<usize> {
        let p = &self.nodes[parent];
        let (prior, fallback, depth) = (p.posterior, p.sigma_eps_sq, p.depth + 1);
        let summary = summarize_child(self.cols, &rows, String::new(), fallback, self.cfg.variance_floor);
        let posterior = posterior_update(&prior, &summary.stats, summary.sigma_eps_sq)?;
        let is_leaf = bid_unit_id.is_some();
        let key = if is_leaf { bid_unit_id.clone() } else { category.clone() };
        let id = self.push(
            TreeNode {
                node_id: 0,
                parent_id: Some(parent),
                depth,
                split_feature: None,
                category,
                prior,
                posterior,
                sigma_eps_sq: summary.sigma_eps_sq,
                n_obs: summary.stats.n,
                is_bid_unit_leaf: is_leaf,
                bid_unit_id,
                children: BTreeMap::new(),
            },
            rows,
            used,
        );
        if let Some(k) = key {
            self.nodes[parent].children.insert(k, id);
        }
        Ok(id)
    }

    fn split(&mut self, id: usize, f: usize) -> Result<()> {
        self.nodes[id].split_feature = Some(self.names[f].clone());
        let mut used = self.used[id].clone();
        used.push(f);
        let rows = std::mem::take(&mut self.rows[id]);
        for (code, part) in partition(self.cols, &rows, f) {
            let cat = self.cols.categories[f][code as usize].clone();
            self.child(id, part, Some(cat), None, used.clone())?;
        }
        self.rows[id] = rows;
        Ok(())
    }

    fn grow(&mut self, growth: Growth<'_>) -> Result<()> {
        let k = self.names.len();
        let mut queue = VecDeque::from([0usize]);
        while let Some(id) = queue.pop_front() {
            let chosen = match growth {
                Growth::Fixed(order) => order.get(self.nodes[id].depth).copied(),
                Growth::Dynamic => {
                    let available: Vec<usize> =
                        (0..k).filter(|f| !self.used[id].contains(f)).collect();
                    if available.is_empty() {
                        None
                    } else {
                        let decision = select_split(&SplitContext {
                            columns: self.cols,
                            rows: &self.rows[id],
                            node_posterior: self.nodes[id].posterior,
                            node_sigma_eps_sq: self.nodes[id].sigma_eps_sq,
                            available: &available,
                            feature_names: &self.names,
                            stop_ratio: self.cfg.stop_ratio,
                            variance_floor: self.cfg.variance_floor,
                        })?;
                        log::debug!(
                            "node {id}: best feature {:?}, sse ratio {:.4}, stopped {}",
                            decision.chosen_feature.map(|f| &self.names[f]),
                            decision.sse_ratio,
                            decision.stopped
                        );
                        if decision.stopped {
                            None
                        } else {
                            decision.chosen_feature
                        }
                    }
                }
            };
            if let Some(f) = chosen {
                let first_child = self.nodes.len();
                self.split(id, f)?;
                queue.extend(first_child..self.nodes.len());
            }
        }

        let leaves: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_structural_leaf())
            .collect();
        for leaf in leaves {
            let rows = std::mem::take(&mut self.rows[leaf]);
            let mut by_unit: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for &r in &rows {
                by_unit.entry(self.cols.unit[r]).or_default().push(r);
            }
            for (u, part) in by_unit {
                let unit = self.cols.units[u as usize].clone();
                self.child(leaf, part, None, Some(unit), Vec::new())?;
            }
        }
        Ok(())
    }
}

fn build(ds: &Dataset, config: &TrainConfig, growth: Growth<'_>, snapshot: ModelConfig) -> Result<HierarchyModel> {
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::InsufficientData("cannot train on an empty dataset".into()));
    }
    let cols = Columns::from_dataset(ds);
    let all: Vec<usize> = (0..cols.len()).collect();
    let prior = empirical_prior(cols.x.iter().copied().zip(cols.y.iter().copied()), config.variance_floor)?;
    let stats = NodeSufficientStats::from_rows(&cols.x, &cols.y, &all);
    let sigma_eps_sq = residual_variance(&stats, config.variance_floor).unwrap_or(prior.variance);

    let mut b = Builder {
        cols: &cols,
        names: ds.schema().names().map(str::to_string).collect(),
        cfg: *config,
        nodes: Vec::new(),
        rows: Vec::new(),
        used: Vec::new(),
    };
    // The root's distribution is the empirical prior itself; its data
    // already went into estimating it.
    b.push(
        TreeNode {
            node_id: 0,
            parent_id: None,
            depth: 0,
            split_feature: None,
            category: None,
            prior,
            posterior: prior,
            sigma_eps_sq,
            n_obs: stats.n,
            is_bid_unit_leaf: false,
            bid_unit_id: None,
            children: BTreeMap::new(),
        },
        all,
        Vec::new(),
    );
    b.grow(growth)?;
    let nodes = b.nodes;
    Ok(HierarchyModel {
        schema: ds.schema().clone(),
        config: snapshot,
        trained_at: None,
        training_data_range: ds.date_range(),
        nodes,
    })
}

/// Grows the hierarchy by loss-driven split selection with the SSE-ratio
/// stopping rule, then attaches bid-unit leaves.
pub fn train_dheb(ds: &Dataset, config: &TrainConfig) -> Result<HierarchyModel> {
    build(
        ds,
        config,
        Growth::Dynamic,
        ModelConfig {
            method: HierarchyMethod::Dheb,
            r: config.stop_ratio,
            variance_floor: config.variance_floor,
            tie_break: "lexicographic".into(),
            fixed_order: None,
        },
    )
}

/// Builds the hierarchy from a fixed feature order, one feature per level,
/// without a stopping test. An empty order gives root → bid units.
pub fn train_fheb<S: AsRef<str>>(ds: &Dataset, order: &[S], config: &TrainConfig) -> Result<HierarchyModel> {
    let mut idx = Vec::with_capacity(order.len());
    for name in order {
        let name = name.as_ref();
        let i = ds
            .schema()
            .index_of(name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
        if idx.contains(&i) {
            return Err(Error::Config(format!("feature `{name}` repeated in order")));
        }
        idx.push(i);
    }
    build(
        ds,
        config,
        Growth::Fixed(&idx),
        ModelConfig {
            method: HierarchyMethod::Fheb,
            r: config.stop_ratio,
            variance_floor: config.variance_floor,
            tie_break: "lexicographic".into(),
            fixed_order: Some(order.iter().map(|s| s.as_ref().to_string()).collect()),
        },
    )
}
