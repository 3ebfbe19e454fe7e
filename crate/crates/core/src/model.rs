//! Versioned JSON model files.

use serde::{Deserialize, Serialize};

use crate::bayes::NormalParams;
use crate::data::{DateRange, FeatureSchema};
use crate::error::{Error, Result};
use crate::tree::{HierarchyModel, ModelConfig, TreeNode};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    node_id: usize,
    parent_id: Option<usize>,
    split_feature: Option<String>,
    category: Option<String>,
    prior: NormalParams,
    posterior: NormalParams,
    sigma_eps_sq: f64,
    n_obs: usize,
    is_bid_unit_leaf: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bid_unit_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    format_version: u32,
    #[serde(default = "hierarchy_type")]
    model_type: String,
    schema: FeatureSchema,
    config: ModelConfig,
    trained_at: Option<String>,
    training_data_range: Option<DateRange>,
    nodes: Vec<NodeRecord>,
}

fn hierarchy_type() -> String {
    "hierarchy".into()
}

pub fn save_model(model: &HierarchyModel) -> Result<Vec<u8>> {
    let doc = ModelDoc {
        format_version: FORMAT_VERSION,
        model_type: hierarchy_type(),
        schema: model.schema.clone(),
        config: model.config.clone(),
        trained_at: model.trained_at.clone(),
        training_data_range: model.training_data_range,
        nodes: model
            .nodes()
            .iter()
            .map(|n| NodeRecord {
                node_id: n.node_id,
                parent_id: n.parent_id,
                split_feature: n.split_feature.clone(),
                category: n.category.clone(),
                prior: n.prior,
                posterior: n.posterior,
                sigma_eps_sq: n.sigma_eps_sq,
                n_obs: n.n_obs,
                is_bid_unit_leaf: n.is_bid_unit_leaf,
                bid_unit_id: n.bid_unit_id.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_vec_pretty(&doc)?)
}

/// Reads a model document. The version is checked before the body so that
/// files from other format versions fail with a version error.
pub fn load_model(bytes: &[u8]) -> Result<HierarchyModel> {
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::CorruptModel(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptModel("missing format_version".into()))?;
    if version != FORMAT_VERSION as u64 {
        return Err(Error::FormatVersion {
            found: version.try_into().unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let doc: ModelDoc =
        serde_json::from_value(value).map_err(|e| Error::CorruptModel(e.to_string()))?;
    if doc.model_type != "hierarchy" {
        return Err(Error::CorruptModel(format!(
            "expected a hierarchy model, found `{}`",
            doc.model_type
        )));
    }
    let nodes = doc
        .nodes
        .into_iter()
        .map(|r| TreeNode {
            node_id: r.node_id,
            parent_id: r.parent_id,
            depth: 0,
            split_feature: r.split_feature,
            category: r.category,
            prior: r.prior,
            posterior: r.posterior,
            sigma_eps_sq: r.sigma_eps_sq,
            n_obs: r.n_obs,
            is_bid_unit_leaf: r.is_bid_unit_leaf,
            bid_unit_id: r.bid_unit_id,
            children: Default::default(),
        })
        .collect();
    HierarchyModel::from_nodes(
        doc.schema,
        doc.config,
        doc.trained_at,
        doc.training_data_range,
        nodes,
    )
}
