//! Wire types for cloud requests and responses.

use serde::{Deserialize, Serialize};
use tagcube::{Aggregator, FilterSpec, SimilarityKind, DEFAULT_MAX_TAGS};

/// Replaces `dim` in the grouping by the hierarchy level `parent`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rollup {
    pub dim: String,
    pub parent: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayoutSpec {
    /// Tags stay in weight order.
    #[default]
    None,
    Nn,
    Pwmc { exchanges: usize },
    Mc { iterations: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FontRange {
    pub min: f64,
    pub max: f64,
}

impl Default for FontRange {
    fn default() -> Self {
        Self { min: 10.0, max: 40.0 }
    }
}

fn default_k() -> usize {
    DEFAULT_MAX_TAGS
}

fn default_glue() -> f64 {
    0.5
}

/// A cloud request. Omitted optional fields take their defaults, so the
/// minimal body is `{"group_dims": [...], "aggregator": {"fn": "count"}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudQuery {
    /// Optional echo of the dataset in the URL; must match it when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub group_dims: Vec<String>,
    pub aggregator: Aggregator,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
    #[serde(default)]
    pub rollups: Vec<Rollup>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub clustering_dims: Vec<String>,
    #[serde(default)]
    pub similarity: Option<SimilarityKind>,
    #[serde(default)]
    pub layout: LayoutSpec,
    /// Absent means the cloud is computed exactly from every fact.
    #[serde(default)]
    pub iceberg_limit: Option<usize>,
    /// Base dimensions of the iceberg; defaults to every schema dimension.
    #[serde(default)]
    pub iceberg_dims: Option<Vec<String>>,
    #[serde(default)]
    pub seed: u64,
    /// Neighbours at least this similar are glued.
    #[serde(default = "default_glue")]
    pub glue_threshold: f64,
    #[serde(default)]
    pub font: FontRange,
}

impl CloudQuery {
    pub fn new<T: Into<String>>(group_dims: impl IntoIterator<Item = T>, aggregator: Aggregator) -> Self {
        Self {
            dataset: None,
            group_dims: group_dims.into_iter().map(Into::into).collect(),
            aggregator,
            filters: Vec::new(),
            rollups: Vec::new(),
            k: default_k(),
            clustering_dims: Vec::new(),
            similarity: None,
            layout: LayoutSpec::None,
            iceberg_limit: None,
            iceberg_dims: None,
            seed: 0,
            glue_threshold: default_glue(),
            font: FontRange::default(),
        }
    }
}

/// One element of the hinted list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum HintedItem {
    Tag { term: String, coords: Vec<String>, weight: f64, display_size: f64 },
    Glued,
    Permutable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Absent when no tag has a positive weight.
    pub entropy: Option<f64>,
    /// Absent for clouds of fewer than two tags.
    pub relative_entropy: Option<f64>,
    pub tag_count: usize,
    /// Arrangement cost of the returned order, when a layout ran.
    pub mla_cost: Option<f64>,
}

/// Everything a query produces apart from timing and identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudBody {
    pub approximate: bool,
    pub items: Vec<HintedItem>,
    pub metrics: Metrics,
    pub warnings: Vec<String>,
}

impl CloudBody {
    pub fn tags(&self) -> impl Iterator<Item = (&str, &[String], f64, f64)> {
        self.items.iter().filter_map(|i| match i {
            HintedItem::Tag { term, coords, weight, display_size } => {
                Some((term.as_str(), coords.as_slice(), *weight, *display_size))
            }
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudResponse {
    pub id: String,
    pub permalink: String,
    pub dataset_id: String,
    pub schema_version: u64,
    #[serde(flatten)]
    pub body: CloudBody,
    pub timing_ms: f64,
}
