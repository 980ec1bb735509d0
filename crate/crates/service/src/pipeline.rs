//! The query pipeline, free of HTTP and shared state so the CLI can run it
//! offline: source cloud (iceberg or exact), optional similarity layout,
//! font scaling, hints and metrics.

use std::collections::BTreeMap;
use std::sync::Arc;

use sha2::{Digest, Sha256};
use tagcube::{
    approx_cloud, emit_hints, entropy, exact_cloud, font_scale, materialize_iceberg, mc_order, mla_cost, nn_order,
    pwmc_order, relative_entropy, similarity_matrix, CloudError, Coord, FactTable, HintItem, IcebergCuboid,
    NnStart, QueryError, Schema, SimilarityError, SimilarityKind, TagCloud, VectorSource,
    DEFAULT_MAX_TAGS,
};
use thiserror::Error;

use crate::query::{CloudBody, CloudQuery, HintedItem, LayoutSpec, Metrics};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("k = {k} exceeds the tag cap of {max}")]
    TooManyTags { k: usize, max: usize },
    #[error("roll-up of `{dim}` to `{parent}`: {reason}")]
    InvalidRollup { dim: String, parent: String, reason: String },
    #[error("a layout needs at least one clustering dimension")]
    MissingClusteringDims,
    #[error("glue threshold must be a finite number")]
    InvalidGlueThreshold,
    #[error("dataset in body `{body}` does not match `{path}`")]
    DatasetMismatch { body: String, path: String },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Cloud(#[from] CloudError),
}

impl PipelineError {
    /// Short machine-readable name of the failure.
    pub fn code(&self) -> String {
        match self {
            PipelineError::Query(q) => query_code(q),
            PipelineError::Similarity(SimilarityError::Query(q)) => query_code(q),
            PipelineError::Similarity(e) => variant_name(e),
            PipelineError::Cloud(e) => variant_name(e),
            other => variant_name(other),
        }
    }
}

fn query_code(q: &QueryError) -> String {
    match q {
        QueryError::Cube(c) => variant_name(c),
        other => variant_name(other),
    }
}

/// Enum variant name taken from the `Debug` rendering.
pub fn variant_name(e: &impl std::fmt::Debug) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_owned()
}

/// Limits applied to every query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_tags: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_tags: DEFAULT_MAX_TAGS }
    }
}

/// Grouping levels after applying the roll-ups in order.
pub fn effective_group_dims(schema: &Schema, query: &CloudQuery) -> Result<Vec<String>, PipelineError> {
    let mut dims = query.group_dims.clone();
    for r in &query.rollups {
        let fail = |reason: &str| PipelineError::InvalidRollup {
            dim: r.dim.clone(),
            parent: r.parent.clone(),
            reason: reason.to_owned(),
        };
        let pos = dims.iter().position(|d| *d == r.dim).ok_or_else(|| fail("dimension is not grouped"))?;
        if schema.hierarchy_for(&r.dim, &r.parent).is_none() {
            return Err(fail("no such hierarchy"));
        }
        dims[pos] = r.parent.clone();
    }
    Ok(dims)
}

/// Base dimensions of the iceberg serving `query`.
pub fn iceberg_dims(schema: &Schema, query: &CloudQuery) -> Vec<String> {
    query.iceberg_dims.clone().unwrap_or_else(|| schema.dimensions().to_vec())
}

/// Checks everything that does not need the data.
pub fn validate(schema: &Schema, query: &CloudQuery, limits: &Limits) -> Result<Vec<String>, PipelineError> {
    if query.k == 0 {
        return Err(PipelineError::InvalidK);
    }
    if query.k > limits.max_tags {
        return Err(PipelineError::TooManyTags { k: query.k, max: limits.max_tags });
    }
    if query.iceberg_limit == Some(0) {
        return Err(QueryError::InvalidLimit.into());
    }
    if !(query.font.min > 0.0 && query.font.min <= query.font.max && query.font.max.is_finite()) {
        return Err(CloudError::InvalidFontRange.into());
    }
    if !query.glue_threshold.is_finite() {
        return Err(PipelineError::InvalidGlueThreshold);
    }
    if query.layout != LayoutSpec::None && query.clustering_dims.is_empty() {
        return Err(PipelineError::MissingClusteringDims);
    }
    effective_group_dims(schema, query)
}

/// Materializes the iceberg a query asks for, without caching.
pub fn build_iceberg(
    table: &Arc<FactTable<f64>>,
    schema: &Arc<Schema>,
    query: &CloudQuery,
) -> Result<Option<IcebergCuboid<f64>>, PipelineError> {
    let Some(limit) = query.iceberg_limit else {
        return Ok(None);
    };
    let dims = iceberg_dims(schema, query);
    Ok(Some(materialize_iceberg(table, schema, &dims, &query.aggregator, limit)?))
}

/// Runs a validated query. `iceberg` must be the one described by the
/// query's `iceberg_limit` and `iceberg_dims`, or `None` for exact queries.
pub fn execute(
    table: &FactTable<f64>,
    schema: &Schema,
    query: &CloudQuery,
    iceberg: Option<&IcebergCuboid<f64>>,
    limits: &Limits,
) -> Result<CloudBody, PipelineError> {
    let group_dims = validate(schema, query, limits)?;
    let core_query = tagcube::CloudQuery { group_dims: group_dims.clone(), filters: query.filters.clone(), k: query.k };
    let cloud: TagCloud<f64> = match iceberg {
        Some(ice) => approx_cloud(ice, &core_query)?,
        None => exact_cloud(table, schema, &query.aggregator, &core_query)?,
    };

    let mut warnings = Vec::new();
    if cloud.is_approximate() && !query.aggregator.is_additive() {
        warnings.push(format!(
            "{} over an iceberg has no error bound; weights may differ arbitrarily from the exact cloud",
            query.aggregator
        ));
    }
    if cloud.is_empty() {
        warnings.push("no facts match the query".to_owned());
    }

    let layout = if query.layout == LayoutSpec::None || cloud.len() < 2 {
        None
    } else {
        let kind = query.similarity.unwrap_or(SimilarityKind::Cosine);
        let source = match iceberg {
            Some(ice) => VectorSource::Iceberg(ice),
            None => VectorSource::Facts { table, schema, aggregator: &query.aggregator },
        };
        let matrix = similarity_matrix(source, cloud.tags(), &group_dims, &query.clustering_dims, &query.filters, kind)?;
        let start = nn_order(&matrix, NnStart::Heaviest);
        let order = match query.layout {
            LayoutSpec::None | LayoutSpec::Nn => start,
            LayoutSpec::Pwmc { exchanges } => pwmc_order(&start, &matrix, exchanges, query.seed).expect("same size"),
            LayoutSpec::Mc { iterations } => mc_order(&start, &matrix, iterations, query.seed).expect("same size"),
        };
        let cost = mla_cost(&order, &matrix).expect("same size");
        Some((order, matrix, cost))
    };

    let sizes: BTreeMap<Coord, f64> = font_scale(&cloud, query.font.min, query.font.max)?
        .into_iter()
        .map(|(t, s)| (t.coords, s))
        .collect();
    let tag_item = |t: &tagcube::Tag<f64>| HintedItem::Tag {
        term: t.term.clone(),
        coords: t.coords.0.clone(),
        weight: t.weight,
        display_size: sizes[&t.coords],
    };
    let items = match &layout {
        Some((order, matrix, _)) => emit_hints(order, matrix, query.glue_threshold)
            .expect("same size")
            .iter()
            .map(|h| match h {
                HintItem::Tag(t) => tag_item(t),
                HintItem::Glued => HintedItem::Glued,
                HintItem::Permutable => HintedItem::Permutable,
            })
            .collect(),
        None => cloud.tags().iter().map(tag_item).collect(),
    };

    let metrics = Metrics {
        entropy: entropy(&cloud).ok(),
        relative_entropy: relative_entropy(&cloud).ok(),
        tag_count: cloud.len(),
        mla_cost: layout.as_ref().map(|l| l.2),
    };
    Ok(CloudBody { approximate: cloud.is_approximate(), items, metrics, warnings })
}

/// Deterministic identifier of a query against one schema version of a
/// dataset. Identical requests share a permalink.
pub fn permalink_id(dataset_id: &str, schema_version: u64, query: &CloudQuery) -> String {
    let mut canonical = query.clone();
    canonical.dataset = None;
    let bytes = serde_json::to_vec(&(dataset_id, schema_version, &canonical)).expect("serializable");
    let digest = Sha256::digest(&bytes);
    digest.iter().take(16).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::Rollup;
    use tagcube::fixtures::{city_country_mapping, table2_csv};
    use tagcube::{define_schema, ingest_csv, Aggregator, FilterSpec, IngestOptions};

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn setup() -> (Arc<FactTable<f64>>, Arc<Schema>) {
        let t: FactTable<f64> = ingest_csv(table2_csv().as_bytes(), &IngestOptions::default()).unwrap();
        let s = define_schema(&t, &names(&["location", "time", "salesman", "product"]), &names(&["cost", "profit"]))
            .unwrap()
            .attach_hierarchy(&t, "location", "Country", city_country_mapping())
            .unwrap();
        (Arc::new(t), Arc::new(s))
    }

    fn run(q: &CloudQuery) -> Result<CloudBody, PipelineError> {
        let (t, s) = setup();
        let ice = build_iceberg(&t, &s, q)?;
        execute(&t, &s, q, ice.as_ref(), &Limits::default())
    }

    fn weights(b: &CloudBody) -> Vec<(String, f64)> {
        b.tags().map(|(term, _, w, _)| (term.to_owned(), w)).collect()
    }

    #[test]
    fn exact_count_by_location() {
        let mut q = CloudQuery::new(["location"], Aggregator::Count);
        q.k = 3;
        let b = run(&q).unwrap();
        assert_eq!(weights(&b), [("Paris".into(), 3.0), ("Montreal".into(), 2.0), ("New York".into(), 2.0)]);
        assert!(!b.approximate);
        assert!((b.metrics.entropy.unwrap() - 1.0789).abs() < 1e-4);
        assert_eq!(b.metrics.tag_count, 3);
    }

    #[test]
    fn iceberg_count_by_location() {
        let mut q = CloudQuery::new(["location"], Aggregator::Count);
        q.k = 3;
        q.iceberg_limit = Some(3);
        q.iceberg_dims = Some(names(&["location", "product"]));
        let b = run(&q).unwrap();
        assert!(b.approximate);
        assert!(b.tags().all(|t| t.2 == 2.0));
        assert!((b.metrics.relative_entropy.unwrap() - 1.0).abs() < 1e-12);
        assert!(b.warnings.is_empty());
    }

    #[test]
    fn rollups_and_filters() {
        let mut q = CloudQuery::new(["location"], Aggregator::Sum("profit".into()));
        q.rollups = vec![Rollup { dim: "location".into(), parent: "Country".into() }];
        let b = run(&q).unwrap();
        assert_eq!(weights(&b), [("Canada".into(), 95.0), ("France".into(), 45.0), ("USA".into(), 30.0)]);

        q.filters = vec![FilterSpec::slice("product", "dress")];
        let b = run(&q).unwrap();
        assert_eq!(weights(&b), [("Canada".into(), 55.0), ("France".into(), 10.0), ("USA".into(), 10.0)]);

        q.rollups[0].parent = "Continent".into();
        assert!(matches!(run(&q), Err(PipelineError::InvalidRollup { .. })));
    }

    #[test]
    fn validation_errors() {
        let mut q = CloudQuery::new(["location"], Aggregator::Count);
        q.k = 0;
        assert_eq!(run(&q).unwrap_err().code(), "InvalidK");
        q.k = 151;
        assert_eq!(run(&q).unwrap_err().code(), "TooManyTags");
        q.k = 3;
        q.group_dims = names(&["color"]);
        assert_eq!(run(&q).unwrap_err().code(), "UnknownDimension");
        q.group_dims = names(&["location"]);
        q.layout = LayoutSpec::Nn;
        assert_eq!(run(&q).unwrap_err().code(), "MissingClusteringDims");
        q.clustering_dims = names(&["location"]);
        assert_eq!(run(&q).unwrap_err().code(), "OverlappingDims");
    }

    #[test]
    fn layout_glues_similar_cities() {
        let mut q = CloudQuery::new(["location"], Aggregator::Count);
        q.k = 3;
        q.clustering_dims = names(&["product"]);
        q.layout = LayoutSpec::Pwmc { exchanges: 50 };
        let b = run(&q).unwrap();
        let order: Vec<&str> = b.tags().map(|t| t.0).collect();
        // Montreal and Paris both sell shoes; New York sells only chairs.
        assert_eq!(order, ["Paris", "Montreal", "New York"]);
        assert_eq!(b.items.iter().filter(|i| matches!(i, HintedItem::Glued)).count(), 1);
        assert!(matches!(b.items[1], HintedItem::Glued));
        assert!(b.metrics.mla_cost.is_some());
    }

    #[test]
    fn non_additive_iceberg_warns() {
        let mut q = CloudQuery::new(["location"], Aggregator::Max("cost".into()));
        q.iceberg_limit = Some(2);
        assert_eq!(run(&q).unwrap().warnings.len(), 1);
    }

    #[test]
    fn permalink_ids_are_stable() {
        let q = CloudQuery::new(["location"], Aggregator::Count);
        let mut echoed = q.clone();
        echoed.dataset = Some("ds-1".into());
        assert_eq!(permalink_id("ds-1", 1, &q), permalink_id("ds-1", 1, &echoed));
        assert_ne!(permalink_id("ds-1", 1, &q), permalink_id("ds-1", 2, &q));
        assert_eq!(permalink_id("ds-1", 1, &q).len(), 32);
    }

    #[test]
    fn variant_names() {
        assert_eq!(variant_name(&PipelineError::TooManyTags { k: 1, max: 0 }), "TooManyTags");
        assert_eq!(variant_name(&PipelineError::InvalidK), "InvalidK");
    }
}
