//! OLAP tag clouds: cuboids over a fact table rendered as weighted tag lists,
//! with iceberg approximation, quality metrics, and similarity-driven layout.
//!
//! Everything numeric is generic over [`Scalar`]; the aliases at the bottom
//! fix the common choices.

pub mod clustering;
pub mod cube;
pub mod fixtures;
pub mod iceberg;
pub mod scalar;
pub mod table;
pub mod tagcloud;

pub use clustering::*;
pub use cube::{
    aggregate_facts, build_cuboid, dice, drilldown, rollup, slice, Aggregator, Cell, Coord, CubeError, Cuboid, Filter,
};
pub use iceberg::{
    approx_cloud, exact_cloud, materialize_iceberg, relative_gain, retained_coords, CloudQuery, FilterOp, FilterSpec,
    IcebergCuboid, NonPositiveBaseline, QueryError,
};
pub use scalar::{Rational, Real, Scalar};
pub use table::{
    define_schema, hierarchy_mapping_from_csv, ingest_csv, Column, ColumnData, ColumnKind, DimensionColumn, FactTable,
    Hierarchy, IngestError, IngestOptions, Level, ProjectedLevel, Schema, SchemaError,
};
pub use tagcloud::{
    entropy, false_negative_index, false_positive_index, font_scale, prune, rank_order, relative_entropy, sort_tags,
    top_k, top_k_pairs, weight_map, CloudError, PruneMode, SortKey, Tag, TagCloud, DEFAULT_MAX_TAGS, TERM_SEPARATOR,
};

pub type FactTable64 = FactTable<f64>;
pub type Cuboid64 = Cuboid<f64>;
pub type TagCloud64 = TagCloud<f64>;
pub type Iceberg64 = IcebergCuboid<f64>;
pub type SimilarityMatrix64 = SimilarityMatrix<f64>;

pub type FactTable32 = FactTable<f32>;
pub type Cuboid32 = Cuboid<f32>;
pub type TagCloud32 = TagCloud<f32>;

pub type ExactFactTable = FactTable<Rational>;
pub type ExactCuboid = Cuboid<Rational>;
pub type ExactTagCloud = TagCloud<Rational>;
