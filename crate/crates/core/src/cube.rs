//! Cuboids and the slice, dice, roll-up and drill-down operations.
//!
//! Every cuboid keeps its lineage: the source table and schema, the level
//! (base column plus applied hierarchies) of each coordinate, and every
//! filter that has been applied. Slice, dice and roll-up work directly on
//! cells because each [`Cell`] carries enough state to combine exactly.
//! Drill-down needs finer data than the cuboid holds and recomputes from the
//! facts.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::table::{FactTable, Hierarchy, Level, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "fn", content = "measure", rename_all = "lowercase")]
pub enum Aggregator {
    Count,
    Sum(String),
    Average(String),
    Min(String),
    Max(String),
}

impl Aggregator {
    pub fn measure(&self) -> Option<&str> {
        match self {
            Aggregator::Count => None,
            Aggregator::Sum(m) | Aggregator::Average(m) | Aggregator::Min(m) | Aggregator::Max(m) => Some(m),
        }
    }

    /// COUNT and SUM: merging cells adds values, so dropping cells can only
    /// lower a total when measures are non-negative.
    pub fn is_additive(&self) -> bool {
        matches!(self, Aggregator::Count | Aggregator::Sum(_))
    }

    fn seed<S: Scalar>(&self, measure: Option<S>) -> Cell<S> {
        let m = || measure.expect("measure present for non-COUNT aggregator");
        match self {
            Aggregator::Count => Cell::Count(1),
            Aggregator::Sum(_) => Cell::Sum(m()),
            Aggregator::Average(_) => Cell::Average { sum: m(), count: 1 },
            Aggregator::Min(_) => Cell::Min(m()),
            Aggregator::Max(_) => Cell::Max(m()),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregator::Count => write!(f, "COUNT"),
            Aggregator::Sum(m) => write!(f, "SUM({m})"),
            Aggregator::Average(m) => write!(f, "AVERAGE({m})"),
            Aggregator::Min(m) => write!(f, "MIN({m})"),
            Aggregator::Max(m) => write!(f, "MAX({m})"),
        }
    }
}

/// Partial aggregate for one coordinate. AVERAGE keeps `(sum, count)` so
/// merged averages stay exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<S> {
    Count(u64),
    Sum(S),
    Average { sum: S, count: u64 },
    Min(S),
    Max(S),
}

impl<S: Scalar> Cell<S> {
    pub fn value(&self) -> S {
        match *self {
            Cell::Count(n) => S::from_count(n),
            Cell::Sum(s) | Cell::Min(s) | Cell::Max(s) => s,
            Cell::Average { sum, count } => sum / S::from_count(count),
        }
    }

    pub fn merge(&mut self, other: &Cell<S>) {
        match (self, other) {
            (Cell::Count(a), Cell::Count(b)) => *a += b,
            (Cell::Sum(a), Cell::Sum(b)) => *a = *a + *b,
            (Cell::Average { sum, count }, Cell::Average { sum: s2, count: c2 }) => {
                *sum = *sum + *s2;
                *count += c2;
            }
            (Cell::Min(a), Cell::Min(b)) => *a = a.min_of(*b),
            (Cell::Max(a), Cell::Max(b)) => *a = a.max_of(*b),
            (a, b) => panic!("cannot merge cells of different aggregators: {a:?} and {b:?}"),
        }
    }
}

/// One attribute value per cuboid dimension. Ordered lexicographically,
/// which is the tie-break used by every ranking in the crate.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coord(pub Vec<String>);

impl Coord {
    pub fn new<I: IntoIterator<Item = T>, T: Into<String>>(values: I) -> Self {
        Coord(values.into_iter().map(Into::into).collect())
    }

    pub fn values(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn without(&self, pos: usize) -> Coord {
        let mut v = self.0.clone();
        v.remove(pos);
        Coord(v)
    }
}

impl std::borrow::Borrow<[String]> for Coord {
    fn borrow(&self) -> &[String] {
        &self.0
    }
}

/// Keeps a fact iff its value at `level` belongs to `values`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filter {
    pub level: Level,
    pub values: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CubeError {
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("unknown measure `{0}`")]
    UnknownMeasure(String),
    #[error("at least one dimension is required")]
    EmptyDimensionSet,
    #[error("dimension `{0}` appears twice")]
    DuplicateDimension(String),
    #[error("dice needs at least one value")]
    EmptyValueSet,
    #[error("hierarchy maps `{hierarchy}` but the dimension is `{dimension}`")]
    HierarchyMismatch { dimension: String, hierarchy: String },
    #[error("hierarchy does not cover values {0:?}")]
    IncompleteMapping(Vec<String>),
    #[error("`{0}` is a base dimension; there is no finer level")]
    NoFinerLevel(String),
}

/// A group-by view of a fact table.
#[derive(Debug, Clone)]
pub struct Cuboid<S> {
    levels: Vec<Level>,
    aggregator: Aggregator,
    cells: BTreeMap<Coord, Cell<S>>,
    table: Arc<FactTable<S>>,
    schema: Arc<Schema>,
    filters: Vec<Filter>,
}

impl<S: PartialEq> PartialEq for Cuboid<S> {
    fn eq(&self, other: &Self) -> bool {
        self.levels == other.levels
            && self.aggregator == other.aggregator
            && self.cells == other.cells
            && self.filters == other.filters
    }
}

impl<S> Cuboid<S> {
    pub fn dims(&self) -> Vec<String> {
        self.levels.iter().map(|l| l.name().to_owned()).collect()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn aggregator(&self) -> &Aggregator {
        &self.aggregator
    }

    pub fn cells(&self) -> &BTreeMap<Coord, Cell<S>> {
        &self.cells
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    pub fn table(&self) -> &Arc<FactTable<S>> {
        &self.table
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    fn position(&self, dim: &str) -> Result<usize, CubeError> {
        self.levels.iter().position(|l| l.name() == dim).ok_or_else(|| CubeError::UnknownDimension(dim.to_owned()))
    }
}

impl<S: Scalar> Cuboid<S> {
    pub fn value(&self, coord: &Coord) -> Option<S> {
        self.cells.get(coord).map(Cell::value)
    }

    /// Cell values keyed by coordinate, convenient for comparisons.
    pub fn values(&self) -> BTreeMap<Coord, S> {
        self.cells.iter().map(|(c, cell)| (c.clone(), cell.value())).collect()
    }
}

pub(crate) fn check_aggregator(schema: &Schema, agg: &Aggregator) -> Result<(), CubeError> {
    match agg.measure() {
        Some(m) if !schema.measures().iter().any(|x| x == m) => Err(CubeError::UnknownMeasure(m.to_owned())),
        _ => Ok(()),
    }
}

pub(crate) fn resolve_levels(schema: &Schema, dims: &[String]) -> Result<Vec<Level>, CubeError> {
    let mut seen = BTreeSet::new();
    dims.iter()
        .map(|d| {
            if !seen.insert(d.as_str()) {
                return Err(CubeError::DuplicateDimension(d.clone()));
            }
            schema.resolve_level(d).ok_or_else(|| CubeError::UnknownDimension(d.clone()))
        })
        .collect()
}

/// Scans the facts once, grouping those that pass every filter by their
/// values at `levels`. Facts whose value is not covered by some hierarchy on
/// a level path are skipped.
pub fn aggregate_facts<S: Scalar>(
    table: &FactTable<S>,
    levels: &[Level],
    filters: &[Filter],
    agg: &Aggregator,
) -> Result<BTreeMap<Coord, Cell<S>>, CubeError> {
    let unknown = |l: &Level| CubeError::UnknownDimension(l.base_name().to_owned());
    let mut group_cols = Vec::with_capacity(levels.len());
    for level in levels {
        let codes = table.dimension(level.base_name()).ok_or_else(|| unknown(level))?.codes();
        let projected = level.project(table).ok_or_else(|| unknown(level))?;
        group_cols.push((codes, projected));
    }
    let mut filter_cols = Vec::with_capacity(filters.len());
    for filter in filters {
        let codes = table.dimension(filter.level.base_name()).ok_or_else(|| unknown(&filter.level))?.codes();
        let projected = filter.level.project(table).ok_or_else(|| unknown(&filter.level))?;
        let pass: Vec<bool> = projected
            .by_code
            .iter()
            .map(|c| c.is_some_and(|c| filter.values.contains(&projected.values[c as usize])))
            .collect();
        filter_cols.push((codes, pass));
    }
    let measure = match agg.measure() {
        Some(m) => Some(table.measure(m).ok_or_else(|| CubeError::UnknownMeasure(m.to_owned()))?),
        None => None,
    };

    let mut groups: HashMap<Vec<u32>, Cell<S>> = HashMap::new();
    let mut key = Vec::with_capacity(levels.len());
    'rows: for row in 0..table.row_count() {
        for (codes, pass) in &filter_cols {
            if !pass[codes[row] as usize] {
                continue 'rows;
            }
        }
        key.clear();
        for (codes, projected) in &group_cols {
            match projected.by_code[codes[row] as usize] {
                Some(code) => key.push(code),
                None => continue 'rows,
            }
        }
        let seed = agg.seed(measure.map(|m| m[row]));
        match groups.get_mut(key.as_slice()) {
            Some(cell) => cell.merge(&seed),
            None => {
                groups.insert(key.clone(), seed);
            }
        }
    }

    Ok(groups
        .into_iter()
        .map(|(key, cell)| {
            let coord = key
                .iter()
                .zip(&group_cols)
                .map(|(&code, (_, projected))| projected.values[code as usize].clone())
                .collect();
            (Coord(coord), cell)
        })
        .collect())
}

/// Groups all facts by `dims`. Names may be base dimensions or hierarchy
/// levels attached to the schema.
pub fn build_cuboid<S: Scalar>(
    table: &Arc<FactTable<S>>,
    schema: &Arc<Schema>,
    dims: &[String],
    agg: &Aggregator,
) -> Result<Cuboid<S>, CubeError> {
    if dims.is_empty() {
        return Err(CubeError::EmptyDimensionSet);
    }
    let levels = resolve_levels(schema, dims)?;
    check_aggregator(schema, agg)?;
    let cells = aggregate_facts(table, &levels, &[], agg)?;
    Ok(Cuboid {
        levels,
        aggregator: agg.clone(),
        cells,
        table: Arc::clone(table),
        schema: Arc::clone(schema),
        filters: Vec::new(),
    })
}

/// Keeps the cells at `dim = value` and removes `dim` from the coordinates.
pub fn slice<S: Scalar>(cuboid: &Cuboid<S>, dim: &str, value: &str) -> Result<Cuboid<S>, CubeError> {
    let pos = cuboid.position(dim)?;
    let cells = cuboid
        .cells
        .iter()
        .filter(|(coord, _)| coord.0[pos] == value)
        .map(|(coord, cell)| (coord.without(pos), *cell))
        .collect();
    let mut levels = cuboid.levels.clone();
    let level = levels.remove(pos);
    let mut filters = cuboid.filters.clone();
    filters.push(Filter { level, values: BTreeSet::from([value.to_owned()]) });
    Ok(Cuboid { levels, cells, filters, ..cuboid.clone_shell() })
}

/// Keeps the cells whose `dim` coordinate is in `values`; `dim` stays.
pub fn dice<S: Scalar>(cuboid: &Cuboid<S>, dim: &str, values: &BTreeSet<String>) -> Result<Cuboid<S>, CubeError> {
    let pos = cuboid.position(dim)?;
    if values.is_empty() {
        return Err(CubeError::EmptyValueSet);
    }
    let cells = cuboid
        .cells
        .iter()
        .filter(|(coord, _)| values.contains(&coord.0[pos]))
        .map(|(coord, cell)| (coord.clone(), *cell))
        .collect();
    let mut filters = cuboid.filters.clone();
    filters.push(Filter { level: cuboid.levels[pos].clone(), values: values.clone() });
    Ok(Cuboid { levels: cuboid.levels.clone(), cells, filters, ..cuboid.clone_shell() })
}

/// Replaces `dim` by the hierarchy's parent level and merges the cells that
/// land on the same parent coordinate.
pub fn rollup<S: Scalar>(cuboid: &Cuboid<S>, dim: &str, hierarchy: &Arc<Hierarchy>) -> Result<Cuboid<S>, CubeError> {
    let pos = cuboid.position(dim)?;
    if hierarchy.child_dimension != dim {
        return Err(CubeError::HierarchyMismatch {
            dimension: dim.to_owned(),
            hierarchy: hierarchy.child_dimension.clone(),
        });
    }
    if cuboid.levels.iter().enumerate().any(|(i, l)| i != pos && l.name() == hierarchy.parent_name) {
        return Err(CubeError::DuplicateDimension(hierarchy.parent_name.clone()));
    }
    let missing: BTreeSet<String> = cuboid
        .cells
        .keys()
        .filter(|c| hierarchy.parent_of(&c.0[pos]).is_none())
        .map(|c| c.0[pos].clone())
        .collect();
    if !missing.is_empty() {
        return Err(CubeError::IncompleteMapping(missing.into_iter().collect()));
    }
    let mut cells: BTreeMap<Coord, Cell<S>> = BTreeMap::new();
    for (coord, cell) in &cuboid.cells {
        let mut parent = coord.clone();
        parent.0[pos] = hierarchy.parent_of(&coord.0[pos]).expect("checked above").to_owned();
        match cells.get_mut(&parent) {
            Some(existing) => existing.merge(cell),
            None => {
                cells.insert(parent, *cell);
            }
        }
    }
    let mut levels = cuboid.levels.clone();
    levels[pos] = levels[pos].rolled_up(Arc::clone(hierarchy));
    Ok(Cuboid { levels, cells, filters: cuboid.filters.clone(), ..cuboid.clone_shell() })
}

/// Undoes the roll-up that produced `parent_dim`, recomputing from the facts
/// with every recorded filter still applied.
pub fn drilldown<S: Scalar>(
    cuboid: &Cuboid<S>,
    parent_dim: &str,
    hierarchy: &Hierarchy,
) -> Result<Cuboid<S>, CubeError> {
    let pos = cuboid.position(parent_dim)?;
    let (finer, top) =
        cuboid.levels[pos].drilled_down().ok_or_else(|| CubeError::NoFinerLevel(parent_dim.to_owned()))?;
    if *top != *hierarchy {
        return Err(CubeError::HierarchyMismatch {
            dimension: parent_dim.to_owned(),
            hierarchy: hierarchy.parent_name.clone(),
        });
    }
    if cuboid.levels.iter().enumerate().any(|(i, l)| i != pos && l.name() == finer.name()) {
        return Err(CubeError::DuplicateDimension(finer.name().to_owned()));
    }
    let mut levels = cuboid.levels.clone();
    levels[pos] = finer;
    let cells = aggregate_facts(&cuboid.table, &levels, &cuboid.filters, &cuboid.aggregator)?;
    Ok(Cuboid { levels, cells, filters: cuboid.filters.clone(), ..cuboid.clone_shell() })
}

impl<S> Cuboid<S> {
    fn clone_shell(&self) -> Cuboid<S> {
        Cuboid {
            levels: Vec::new(),
            aggregator: self.aggregator.clone(),
            cells: BTreeMap::new(),
            table: Arc::clone(&self.table),
            schema: Arc::clone(&self.schema),
            filters: Vec::new(),
        }
    }
}
