//! Revenue-per-click prediction for sparse bid-unit data.
//!
//! A hierarchy over categorical features is grown top-down; each node's
//! posterior becomes its children's prior, and bid units sit at the bottom.
//! Predictions are posterior means, so units with little or all-zero history
//! still inherit a non-zero estimate from their ancestors.

pub mod baselines;
pub mod bayes;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod hsl;
pub mod methods;
pub mod model;
pub mod simulation;
pub mod tree;

pub use bayes::{NodeSufficientStats, NormalParams};
pub use data::{Dataset, FeatureSchema, Observation};
pub use error::{Error, Result};
pub use methods::{FittedModel, Method};
pub use tree::{train_dheb, train_fheb, HierarchyModel, TrainConfig};
