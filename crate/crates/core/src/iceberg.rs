//! Iceberg cuboids and approximate cloud queries.
//!
//! An iceberg keeps only the `limit` heaviest cells of a cuboid over the
//! base dimensions. Cloud queries filter those cells, re-aggregate them to
//! the requested grouping and take the top k. The exact counterpart scans
//! every fact.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::{aggregate_facts, check_aggregator, resolve_levels, Aggregator, Cell, Coord, CubeError, Filter};
use crate::scalar::Scalar;
use crate::table::{FactTable, Level, Schema};
use crate::tagcloud::{cloud_from_ranked, rank_order, top_k_pairs, TagCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterOp {
    /// Fixes one value; the dimension leaves the result.
    Slice,
    /// Restricts to a value set; the dimension may still be grouped on.
    Dice,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub op: FilterOp,
    pub dim: String,
    pub values: Vec<String>,
}

impl FilterSpec {
    pub fn slice(dim: &str, value: &str) -> Self {
        Self { op: FilterOp::Slice, dim: dim.to_owned(), values: vec![value.to_owned()] }
    }

    pub fn dice<T: Into<String>>(dim: &str, values: impl IntoIterator<Item = T>) -> Self {
        Self { op: FilterOp::Dice, dim: dim.to_owned(), values: values.into_iter().map(Into::into).collect() }
    }
}

/// A top-k cloud request. Dimension names may be base dimensions or
/// hierarchy levels of the schema, so naming `Country` rolls `location` up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudQuery {
    pub group_dims: Vec<String>,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
    pub k: usize,
}

impl CloudQuery {
    pub fn group_by<T: Into<String>>(dims: impl IntoIterator<Item = T>, k: usize) -> Self {
        Self { group_dims: dims.into_iter().map(Into::into).collect(), filters: Vec::new(), k }
    }

    pub fn with_filter(mut self, filter: FilterSpec) -> Self {
        self.filters.push(filter);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error(transparent)]
    Cube(#[from] CubeError),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("iceberg limit must be at least 1")]
    InvalidLimit,
    #[error("slice on `{0}` needs exactly one value")]
    SliceArity(String),
    #[error("`{0}` is sliced away and cannot also be grouped on")]
    SlicedDimensionGrouped(String),
    #[error("`{0}` is not among the iceberg's base dimensions")]
    DimensionNotInIceberg(String),
}

/// A query resolved against a schema.
#[derive(Debug, Clone)]
pub(crate) struct ResolvedQuery {
    pub group: Vec<Level>,
    pub filters: Vec<Filter>,
    pub k: usize,
}

pub(crate) fn resolve_query(schema: &Schema, query: &CloudQuery) -> Result<ResolvedQuery, QueryError> {
    if query.k == 0 {
        return Err(QueryError::InvalidK);
    }
    if query.group_dims.is_empty() {
        return Err(CubeError::EmptyDimensionSet.into());
    }
    let group = resolve_levels(schema, &query.group_dims)?;
    let filters = resolve_filters(schema, &query.filters, &query.group_dims)?;
    Ok(ResolvedQuery { group, filters, k: query.k })
}

/// Validates filter specs against the schema. Sliced dimensions may not
/// appear in `grouped`.
pub(crate) fn resolve_filters(
    schema: &Schema,
    specs: &[FilterSpec],
    grouped: &[String],
) -> Result<Vec<Filter>, QueryError> {
    let mut filters = Vec::with_capacity(specs.len());
    for spec in specs {
        let level = schema.resolve_level(&spec.dim).ok_or_else(|| CubeError::UnknownDimension(spec.dim.clone()))?;
        match spec.op {
            FilterOp::Slice if spec.values.len() != 1 => return Err(QueryError::SliceArity(spec.dim.clone())),
            FilterOp::Slice if grouped.contains(&spec.dim) => {
                return Err(QueryError::SlicedDimensionGrouped(spec.dim.clone()))
            }
            FilterOp::Dice if spec.values.is_empty() => return Err(CubeError::EmptyValueSet.into()),
            _ => {}
        }
        filters.push(Filter { level, values: spec.values.iter().cloned().collect() });
    }
    Ok(filters)
}

/// The `limit` heaviest cells of the cuboid over `base_dims`.
#[derive(Debug, Clone)]
pub struct IcebergCuboid<S> {
    base_dims: Vec<String>,
    limit: usize,
    aggregator: Aggregator,
    cells: BTreeMap<Coord, Cell<S>>,
    full_cell_count: usize,
    table: Arc<FactTable<S>>,
    schema: Arc<Schema>,
}

impl<S> IcebergCuboid<S> {
    pub fn base_dims(&self) -> &[String] {
        &self.base_dims
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn aggregator(&self) -> &Aggregator {
        &self.aggregator
    }

    pub fn cells(&self) -> &BTreeMap<Coord, Cell<S>> {
        &self.cells
    }

    /// Number of cells of the full cuboid before truncation.
    pub fn full_cell_count(&self) -> usize {
        self.full_cell_count
    }

    pub fn is_saturated(&self) -> bool {
        self.cells.len() == self.full_cell_count
    }

    pub fn table(&self) -> &Arc<FactTable<S>> {
        &self.table
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }
}

/// Aggregates every fact over `dims` (base dimensions only) and keeps the
/// `limit` heaviest cells, ties going to the smaller coordinates.
pub fn materialize_iceberg<S: Scalar>(
    table: &Arc<FactTable<S>>,
    schema: &Arc<Schema>,
    dims: &[String],
    agg: &Aggregator,
    limit: usize,
) -> Result<IcebergCuboid<S>, QueryError> {
    if limit == 0 {
        return Err(QueryError::InvalidLimit);
    }
    if dims.is_empty() {
        return Err(CubeError::EmptyDimensionSet.into());
    }
    if let Some(d) = dims.iter().find(|d| !schema.dimensions().contains(d)) {
        return Err(CubeError::UnknownDimension(d.clone()).into());
    }
    let levels = resolve_levels(schema, dims)?;
    check_aggregator(schema, agg)?;
    let full = aggregate_facts(table, &levels, &[], agg)?;
    let full_cell_count = full.len();

    let mut ranked: Vec<(Coord, Cell<S>)> = full.into_iter().collect();
    if ranked.len() > limit {
        ranked.select_nth_unstable_by(limit - 1, |a, b| rank_order((&a.0, a.1.value()), (&b.0, b.1.value())));
        ranked.truncate(limit);
    }
    Ok(IcebergCuboid {
        base_dims: dims.to_vec(),
        limit,
        aggregator: agg.clone(),
        cells: ranked.into_iter().collect(),
        full_cell_count,
        table: Arc::clone(table),
        schema: Arc::clone(schema),
    })
}

/// Where each query level reads its base value inside an iceberg coordinate.
struct IcebergAccessor<'a> {
    pos: usize,
    level: &'a Level,
}

impl<S: Scalar> IcebergCuboid<S> {
    fn accessor<'a>(&self, level: &'a Level) -> Result<IcebergAccessor<'a>, QueryError> {
        let pos = self
            .base_dims
            .iter()
            .position(|d| d == level.base_name())
            .ok_or_else(|| QueryError::DimensionNotInIceberg(level.name().to_owned()))?;
        Ok(IcebergAccessor { pos, level })
    }

    /// Filters the retained cells and merges them onto `group` levels.
    pub(crate) fn regroup(&self, group: &[Level], filters: &[Filter]) -> Result<BTreeMap<Coord, Cell<S>>, QueryError> {
        let group_acc = group.iter().map(|l| self.accessor(l)).collect::<Result<Vec<_>, _>>()?;
        let filter_acc = filters
            .iter()
            .map(|f| Ok((self.accessor(&f.level)?, &f.values)))
            .collect::<Result<Vec<_>, QueryError>>()?;

        let mut out: BTreeMap<Coord, Cell<S>> = BTreeMap::new();
        'cells: for (coord, cell) in &self.cells {
            for (acc, values) in &filter_acc {
                match acc.level.map_value(&coord.0[acc.pos]) {
                    Some(v) if values.contains(v) => {}
                    _ => continue 'cells,
                }
            }
            let mut key = Vec::with_capacity(group_acc.len());
            for acc in &group_acc {
                match acc.level.map_value(&coord.0[acc.pos]) {
                    Some(v) => key.push(v.to_owned()),
                    None => continue 'cells,
                }
            }
            match out.get_mut(key.as_slice()) {
                Some(existing) => existing.merge(cell),
                None => {
                    out.insert(Coord(key), *cell);
                }
            }
        }
        Ok(out)
    }
}

/// Answers `query` from the iceberg alone. The result is flagged approximate.
pub fn approx_cloud<S: Scalar>(iceberg: &IcebergCuboid<S>, query: &CloudQuery) -> Result<TagCloud<S>, QueryError> {
    let resolved = resolve_query(&iceberg.schema, query)?;
    let cells = iceberg.regroup(&resolved.group, &resolved.filters)?;
    let ranked = top_k_pairs(cells.into_iter().map(|(c, cell)| (c, cell.value())), resolved.k);
    Ok(cloud_from_ranked(query.group_dims.clone(), ranked).with_approximate(true))
}

/// Ground truth: answers `query` from every fact.
pub fn exact_cloud<S: Scalar>(
    table: &FactTable<S>,
    schema: &Schema,
    agg: &Aggregator,
    query: &CloudQuery,
) -> Result<TagCloud<S>, QueryError> {
    let resolved = resolve_query(schema, query)?;
    check_aggregator(schema, agg)?;
    let cells = aggregate_facts(table, &resolved.group, &resolved.filters, agg)?;
    let ranked = top_k_pairs(cells.into_iter().map(|(c, cell)| (c, cell.value())), resolved.k);
    Ok(cloud_from_ranked(query.group_dims.clone(), ranked))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("exact timing must be positive")]
pub struct NonPositiveBaseline;

/// `(t_exact - t_iceberg) / t_exact`.
pub fn relative_gain(t_exact: f64, t_iceberg: f64) -> Result<f64, NonPositiveBaseline> {
    if t_exact > 0.0 {
        Ok((t_exact - t_iceberg) / t_exact)
    } else {
        Err(NonPositiveBaseline)
    }
}

/// Coordinates retained by an iceberg, handy for containment checks.
pub fn retained_coords<S>(iceberg: &IcebergCuboid<S>) -> BTreeSet<&Coord> {
    iceberg.cells.keys().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{city_country_mapping, table2_csv};
    use crate::table::{define_schema, ingest_csv, IngestOptions};
    use crate::tagcloud::{false_negative_index, false_positive_index, weight_map};

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

    fn wm(pairs: &[(&[&str], f64)]) -> BTreeMap<Coord, f64> {
        pairs.iter().map(|(k, v)| (Coord::new(k.iter().copied()), *v)).collect()
    }

    #[test]
    fn iceberg_keeps_heaviest_cells() {
        let (t, s) = setup();
        let ice = materialize_iceberg(&t, &s, &names(&["location", "product"]), &Aggregator::Count, 3).unwrap();
        assert_eq!(ice.full_cell_count(), 8);
        let got: BTreeMap<Coord, f64> = ice.cells().iter().map(|(c, cell)| (c.clone(), cell.value())).collect();
        assert_eq!(
            got,
            wm(&[(&["Montreal", "shoe"], 2.0), (&["Paris", "shoe"], 2.0), (&["New York", "chair"], 2.0)])
        );
        let one = materialize_iceberg(&t, &s, &names(&["location"]), &Aggregator::Count, 1).unwrap();
        assert_eq!(one.cells().keys().collect::<Vec<_>>(), [&Coord::new(["Paris"])]);
        let all = materialize_iceberg(&t, &s, &names(&["location", "product"]), &Aggregator::Count, 100).unwrap();
        assert!(all.is_saturated());
    }

    #[test]
    fn materialize_errors() {
        let (t, s) = setup();
        assert_eq!(
            materialize_iceberg(&t, &s, &names(&["location"]), &Aggregator::Count, 0).unwrap_err(),
            QueryError::InvalidLimit
        );
        assert_eq!(
            materialize_iceberg(&t, &s, &names(&["Country"]), &Aggregator::Count, 5).unwrap_err(),
            QueryError::Cube(CubeError::UnknownDimension("Country".into()))
        );
        assert_eq!(
            materialize_iceberg(&t, &s, &names(&["location"]), &Aggregator::Sum("x".into()), 5).unwrap_err(),
            QueryError::Cube(CubeError::UnknownMeasure("x".into()))
        );
    }

    #[test]
    fn approximate_versus_exact() {
        let (t, s) = setup();
        let ice = materialize_iceberg(&t, &s, &names(&["location", "product"]), &Aggregator::Count, 3).unwrap();
        let q = CloudQuery::group_by(["location"], 3);
        let approx = approx_cloud(&ice, &q).unwrap();
        assert!(approx.is_approximate());
        assert_eq!(weight_map(&approx), wm(&[(&["Montreal"], 2.0), (&["New York"], 2.0), (&["Paris"], 2.0)]));
        let exact = exact_cloud(&t, &s, &Aggregator::Count, &q).unwrap();
        assert!(!exact.is_approximate());
        assert_eq!(weight_map(&exact), wm(&[(&["Paris"], 3.0), (&["Montreal"], 2.0), (&["New York"], 2.0)]));
        assert_eq!(exact.tags()[0].term, "Paris");
        assert_eq!(false_positive_index(&approx, &exact), Ok(0.0));
        assert_eq!(false_negative_index(&approx, &exact), Ok(0.0));
    }

    #[test]
    fn filters_and_rollups_through_iceberg() {
        let (t, s) = setup();
        let ice = materialize_iceberg(&t, &s, &names(&["location", "product"]), &Aggregator::Count, 100).unwrap();
        let q = CloudQuery::group_by(["Country"], 5).with_filter(FilterSpec::slice("product", "shoe"));
        let approx = approx_cloud(&ice, &q).unwrap();
        assert_eq!(weight_map(&approx), wm(&[(&["Canada"], 2.0), (&["France"], 2.0)]));
        assert_eq!(weight_map(&exact_cloud(&t, &s, &Aggregator::Count, &q).unwrap()), weight_map(&approx));

        let none = CloudQuery::group_by(["location"], 5).with_filter(FilterSpec::dice("product", ["bicycle"]));
        let empty = approx_cloud(&ice, &none).unwrap();
        assert!(empty.is_empty() && empty.is_approximate());
    }

    #[test]
    fn query_validation() {
        let (t, s) = setup();
        let ice = materialize_iceberg(&t, &s, &names(&["location", "product"]), &Aggregator::Count, 10).unwrap();
        assert_eq!(approx_cloud(&ice, &CloudQuery::group_by(["location"], 0)).unwrap_err(), QueryError::InvalidK);
        assert_eq!(
            approx_cloud(&ice, &CloudQuery::group_by(["time"], 3)).unwrap_err(),
            QueryError::DimensionNotInIceberg("time".into())
        );
        let bad = CloudQuery::group_by(["location"], 3).with_filter(FilterSpec::slice("location", "Paris"));
        assert_eq!(approx_cloud(&ice, &bad).unwrap_err(), QueryError::SlicedDimensionGrouped("location".into()));
        let bad = CloudQuery::group_by(["location"], 3).with_filter(FilterSpec::dice("product", Vec::<String>::new()));
        assert_eq!(approx_cloud(&ice, &bad).unwrap_err(), QueryError::Cube(CubeError::EmptyValueSet));
        let bad = CloudQuery::group_by(["location"], 3).with_filter(FilterSpec::dice("product", ["a", "b"]));
        let bad = CloudQuery { filters: vec![FilterSpec { op: FilterOp::Slice, ..bad.filters[0].clone() }], ..bad };
        assert_eq!(exact_cloud(&t, &s, &Aggregator::Count, &bad).unwrap_err(), QueryError::SliceArity("product".into()));
    }

    #[test]
    fn gain() {
        assert!((relative_gain(10.0, 1.0).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(relative_gain(3.0, 3.0), Ok(0.0));
        assert!(relative_gain(1.0, 2.0).unwrap() < 0.0);
        assert_eq!(relative_gain(0.0, 1.0), Err(NonPositiveBaseline));
    }
}
