//! Fact tables, user-defined schemas and roll-up hierarchies.
//!
//! A [`FactTable`] is built once by [`ingest_csv`] and never mutated. The
//! user then designates dimension and measure columns with
//! [`define_schema`] and may attach child-to-parent value maps with
//! [`Schema::attach_hierarchy`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Dimension,
    Measure,
}

/// Dictionary-encoded categorical column. Codes index into `dictionary`,
/// which lists values in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionColumn {
    dictionary: Vec<String>,
    codes: Vec<u32>,
}

impl DimensionColumn {
    fn from_cells(cells: Vec<String>) -> Self {
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut dictionary = Vec::new();
        let mut codes = Vec::with_capacity(cells.len());
        for cell in cells {
            let next = dictionary.len() as u32;
            let code = *index.entry(cell).or_insert_with_key(|key| {
                dictionary.push(key.clone());
                next
            });
            codes.push(code);
        }
        Self { dictionary, codes }
    }

    pub fn dictionary(&self) -> &[String] {
        &self.dictionary
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn value(&self, row: usize) -> &str {
        &self.dictionary[self.codes[row] as usize]
    }

    pub fn distinct_count(&self) -> usize {
        self.dictionary.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData<S> {
    Dimension(DimensionColumn),
    Measure(Vec<S>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column<S> {
    name: String,
    data: ColumnData<S>,
}

impl<S> Column<S> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Dimension(_) => ColumnKind::Dimension,
            ColumnData::Measure(_) => ColumnKind::Measure,
        }
    }

    pub fn data(&self) -> &ColumnData<S> {
        &self.data
    }
}

/// Immutable columnar store of facts.
#[derive(Debug, Clone, PartialEq)]
pub struct FactTable<S> {
    columns: Vec<Column<S>>,
    row_count: usize,
}

impl<S: Scalar> FactTable<S> {
    /// Builds a table from already-typed columns. Used by generators and
    /// tests; CSV input goes through [`ingest_csv`].
    pub fn from_columns(
        dimensions: Vec<(String, Vec<String>)>,
        measures: Vec<(String, Vec<S>)>,
    ) -> Result<Self, IngestError> {
        let row_count = dimensions
            .first()
            .map(|(_, v)| v.len())
            .or_else(|| measures.first().map(|(_, v)| v.len()))
            .ok_or(IngestError::EmptyInput)?;
        let mut seen = BTreeSet::new();
        let mut columns = Vec::with_capacity(dimensions.len() + measures.len());
        for (name, cells) in dimensions {
            if cells.len() != row_count {
                return Err(IngestError::ColumnLength { column: name, expected: row_count, found: cells.len() });
            }
            if !seen.insert(name.clone()) {
                return Err(IngestError::DuplicateColumnName(name));
            }
            columns.push(Column { name, data: ColumnData::Dimension(DimensionColumn::from_cells(cells)) });
        }
        for (name, values) in measures {
            if values.len() != row_count {
                return Err(IngestError::ColumnLength { column: name, expected: row_count, found: values.len() });
            }
            if !seen.insert(name.clone()) {
                return Err(IngestError::DuplicateColumnName(name));
            }
            columns.push(Column { name, data: ColumnData::Measure(values) });
        }
        Ok(Self { columns, row_count })
    }
}

impl<S> FactTable<S> {
    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column<S>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column<S>> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn dimension(&self, name: &str) -> Option<&DimensionColumn> {
        match self.column(name).map(|c| &c.data) {
            Some(ColumnData::Dimension(d)) => Some(d),
            _ => None,
        }
    }

    pub fn measure(&self, name: &str) -> Option<&[S]> {
        match self.column(name).map(|c| &c.data) {
            Some(ColumnData::Measure(m)) => Some(m),
            _ => None,
        }
    }

    pub fn names_of_kind(&self, kind: ColumnKind) -> Vec<String> {
        self.columns.iter().filter(|c| c.kind() == kind).map(|c| c.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOptions {
    pub delimiter: u8,
    pub header_row: bool,
    /// Forces the kind of individual columns, bypassing inference.
    pub kind_overrides: BTreeMap<String, ColumnKind>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { delimiter: b',', header_row: true, kind_overrides: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("duplicate column name `{0}`")]
    DuplicateColumnName(String),
    #[error("measure column `{column}` is missing a value at row {row}")]
    MissingMeasure { row: usize, column: String },
    #[error("measure column `{column}` has non-numeric value `{value}` at row {row}")]
    InvalidMeasure { row: usize, column: String, value: String },
    #[error("kind override names unknown column `{0}`")]
    UnknownOverride(String),
    #[error("column `{column}` has {found} cells, expected {expected}")]
    ColumnLength { column: String, expected: usize, found: usize },
    #[error("malformed CSV: {0}")]
    Csv(String),
}

/// Parses delimited text into a fact table.
///
/// Rows are numbered from 1, counting data rows only. A column whose every
/// cell parses as a finite number becomes a measure, anything else a
/// dimension; `kind_overrides` wins over inference. Empty dimension cells
/// are kept as the empty string, while an empty measure cell rejects the file.
pub fn ingest_csv<S: Scalar>(bytes: &[u8], options: &IngestOptions) -> Result<FactTable<S>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(options.delimiter)
        .from_reader(bytes);

    let mut records = Vec::new();
    for record in reader.records() {
        records.push(record.map_err(|e| IngestError::Csv(e.to_string()))?);
    }
    let mut rows = records.into_iter();

    let header: Vec<String> = if options.header_row {
        match rows.next() {
            Some(h) => h.iter().map(str::to_owned).collect(),
            None => return Err(IngestError::EmptyInput),
        }
    } else {
        Vec::new()
    };
    let data: Vec<csv::StringRecord> = rows.collect();
    if data.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let width = if options.header_row { header.len() } else { data[0].len() };
    let names: Vec<String> =
        if options.header_row { header } else { (1..=width).map(|i| format!("c{i}")).collect() };

    let mut seen = BTreeSet::new();
    for name in &names {
        if !seen.insert(name.as_str()) {
            return Err(IngestError::DuplicateColumnName(name.clone()));
        }
    }
    if let Some(unknown) = options.kind_overrides.keys().find(|k| !seen.contains(k.as_str())) {
        return Err(IngestError::UnknownOverride(unknown.clone()));
    }
    for (i, record) in data.iter().enumerate() {
        if record.len() != width {
            return Err(IngestError::RaggedRows { row: i + 1, expected: width, found: record.len() });
        }
    }

    let mut columns = Vec::with_capacity(width);
    for (j, name) in names.into_iter().enumerate() {
        let cells: Vec<&str> = data.iter().map(|r| &r[j]).collect();
        let kind = match options.kind_overrides.get(&name) {
            Some(kind) => *kind,
            None if cells.iter().all(|c| S::parse_decimal(c).is_some()) => ColumnKind::Measure,
            None => ColumnKind::Dimension,
        };
        let data = match kind {
            ColumnKind::Dimension => {
                ColumnData::Dimension(DimensionColumn::from_cells(cells.iter().map(|c| (*c).to_owned()).collect()))
            }
            ColumnKind::Measure => {
                let mut values = Vec::with_capacity(cells.len());
                for (i, cell) in cells.iter().enumerate() {
                    if cell.trim().is_empty() {
                        return Err(IngestError::MissingMeasure { row: i + 1, column: name });
                    }
                    match S::parse_decimal(cell) {
                        Some(v) => values.push(v),
                        None => {
                            return Err(IngestError::InvalidMeasure {
                                row: i + 1,
                                column: name,
                                value: (*cell).to_owned(),
                            })
                        }
                    }
                }
                ColumnData::Measure(values)
            }
        };
        columns.push(Column { name, data });
    }
    Ok(FactTable { columns, row_count: data.len() })
}

/// Child-to-parent map over attribute values, e.g. city to country.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hierarchy {
    pub child_dimension: String,
    pub parent_name: String,
    pub mapping: BTreeMap<String, String>,
}

impl Hierarchy {
    pub fn parent_of(&self, value: &str) -> Option<&str> {
        self.mapping.get(value).map(String::as_str)
    }
}

/// Reads a two-column `child_value,parent_value` file into a value map.
/// A child listed twice with different parents is rejected.
pub fn hierarchy_mapping_from_csv(bytes: &[u8], delimiter: u8) -> Result<BTreeMap<String, String>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .from_reader(bytes);
    let mut mapping = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| IngestError::Csv(e.to_string()))?;
        if record.len() != 2 {
            return Err(IngestError::RaggedRows { row: i + 1, expected: 2, found: record.len() });
        }
        let (child, parent) = (record[0].to_owned(), record[1].to_owned());
        if let Some(previous) = mapping.get(&child) {
            if previous != &parent {
                return Err(IngestError::Csv(format!(
                    "row {}: `{child}` mapped to both `{previous}` and `{parent}`",
                    i + 1
                )));
            }
        }
        mapping.insert(child, parent);
    }
    if mapping.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    Ok(mapping)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("columns used as both dimension and measure: {0:?}")]
    OverlappingRoles(Vec<String>),
    #[error("a schema needs at least one dimension")]
    EmptyDimensionSet,
    #[error("a schema needs at least one measure")]
    EmptyMeasureSet,
    #[error("column `{0}` is listed twice")]
    DuplicateName(String),
    #[error("column `{0}` holds numbers; ingest it as a dimension to group by it")]
    NotADimension(String),
    #[error("column `{0}` is not numeric")]
    NotAMeasure(String),
    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),
    #[error("mapping does not cover values {0:?}")]
    IncompleteMapping(Vec<String>),
    #[error("name `{0}` is already used by a column or hierarchy level")]
    ParentNameConflict(String),
}

/// Dimension/measure designation plus attached hierarchies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    dimensions: Vec<String>,
    measures: Vec<String>,
    hierarchies: Vec<Arc<Hierarchy>>,
}

pub fn define_schema<S>(table: &FactTable<S>, dims: &[String], measures: &[String]) -> Result<Schema, SchemaError> {
    if dims.is_empty() {
        return Err(SchemaError::EmptyDimensionSet);
    }
    if measures.is_empty() {
        return Err(SchemaError::EmptyMeasureSet);
    }
    for name in dims.iter().chain(measures) {
        if table.column(name).is_none() {
            return Err(SchemaError::UnknownColumn(name.clone()));
        }
    }
    let overlap: Vec<String> = dims.iter().filter(|d| measures.contains(d)).cloned().collect();
    if !overlap.is_empty() {
        return Err(SchemaError::OverlappingRoles(overlap));
    }
    for list in [dims, measures] {
        let mut seen = BTreeSet::new();
        if let Some(dup) = list.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(SchemaError::DuplicateName(dup.clone()));
        }
    }
    if let Some(d) = dims.iter().find(|d| table.dimension(d).is_none()) {
        return Err(SchemaError::NotADimension(d.clone()));
    }
    if let Some(m) = measures.iter().find(|m| table.measure(m).is_none()) {
        return Err(SchemaError::NotAMeasure(m.clone()));
    }
    Ok(Schema { dimensions: dims.to_vec(), measures: measures.to_vec(), hierarchies: Vec::new() })
}

impl Schema {
    pub fn dimensions(&self) -> &[String] {
        &self.dimensions
    }

    pub fn measures(&self) -> &[String] {
        &self.measures
    }

    pub fn hierarchies(&self) -> &[Arc<Hierarchy>] {
        &self.hierarchies
    }

    pub fn hierarchy_for(&self, child: &str, parent_name: &str) -> Option<&Arc<Hierarchy>> {
        self.hierarchies.iter().find(|h| h.child_dimension == child && h.parent_name == parent_name)
    }

    /// Returns a new schema with the hierarchy appended. `child` may be a base
    /// dimension or the parent level of an already attached hierarchy, which
    /// gives multi-level roll-ups (city, country, continent).
    pub fn attach_hierarchy<S>(
        &self,
        table: &FactTable<S>,
        child: &str,
        parent_name: &str,
        mapping: BTreeMap<String, String>,
    ) -> Result<Schema, SchemaError> {
        let child_level = self.resolve_level(child).ok_or_else(|| SchemaError::UnknownDimension(child.to_owned()))?;
        if self.resolve_level(parent_name).is_some()
            || table.column(parent_name).is_some()
            || self.measures.iter().any(|m| m == parent_name)
        {
            return Err(SchemaError::ParentNameConflict(parent_name.to_owned()));
        }
        let values = child_level.distinct_values(table).ok_or_else(|| SchemaError::UnknownDimension(child.to_owned()))?;
        let missing: Vec<String> = values.into_iter().filter(|v| !mapping.contains_key(v)).collect();
        if !missing.is_empty() {
            return Err(SchemaError::IncompleteMapping(missing));
        }
        let mut next = self.clone();
        next.hierarchies.push(Arc::new(Hierarchy {
            child_dimension: child.to_owned(),
            parent_name: parent_name.to_owned(),
            mapping,
        }));
        Ok(next)
    }

    /// Resolves a dimension name to its lineage: a base dimension, or a
    /// hierarchy level reached through one or more attached hierarchies.
    pub fn resolve_level(&self, name: &str) -> Option<Level> {
        if self.dimensions.iter().any(|d| d == name) {
            return Some(Level::base(name));
        }
        let hierarchy = self.hierarchies.iter().find(|h| h.parent_name == name)?;
        let mut level = self.resolve_level(&hierarchy.child_dimension)?;
        level.path.push(Arc::clone(hierarchy));
        Some(level)
    }

    /// Every name a query may group or filter by.
    pub fn level_names(&self) -> Vec<String> {
        self.dimensions.iter().cloned().chain(self.hierarchies.iter().map(|h| h.parent_name.clone())).collect()
    }
}

/// A dimension at some granularity: a base column plus the hierarchies
/// applied on top of it, innermost first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Level {
    base: String,
    path: Vec<Arc<Hierarchy>>,
}

impl Level {
    pub fn base(name: &str) -> Self {
        Self { base: name.to_owned(), path: Vec::new() }
    }

    pub fn base_name(&self) -> &str {
        &self.base
    }

    pub fn name(&self) -> &str {
        self.path.last().map_or(self.base.as_str(), |h| h.parent_name.as_str())
    }

    pub fn path(&self) -> &[Arc<Hierarchy>] {
        &self.path
    }

    pub fn is_base(&self) -> bool {
        self.path.is_empty()
    }

    pub fn rolled_up(&self, hierarchy: Arc<Hierarchy>) -> Self {
        let mut next = self.clone();
        next.path.push(hierarchy);
        next
    }

    /// Drops the outermost hierarchy, returning the finer level.
    pub fn drilled_down(&self) -> Option<(Self, Arc<Hierarchy>)> {
        let mut next = self.clone();
        let top = next.path.pop()?;
        Some((next, top))
    }

    /// Maps a base attribute value up to this level. `None` when some
    /// hierarchy on the path does not cover the value.
    pub fn map_value<'a>(&'a self, base_value: &'a str) -> Option<&'a str> {
        let mut value = base_value;
        for h in &self.path {
            value = h.parent_of(value)?;
        }
        Some(value)
    }

    /// Distinct values of this level over the whole table, sorted.
    pub fn distinct_values<S>(&self, table: &FactTable<S>) -> Option<BTreeSet<String>> {
        let column = table.dimension(&self.base)?;
        Some(column.dictionary().iter().filter_map(|v| self.map_value(v)).map(str::to_owned).collect())
    }

    /// Precomputes, for every base dictionary code, the value of this level.
    pub fn project<S>(&self, table: &FactTable<S>) -> Option<ProjectedLevel> {
        let column = table.dimension(&self.base)?;
        let mut index: HashMap<&str, u32> = HashMap::new();
        let mut values: Vec<String> = Vec::new();
        let by_code = column
            .dictionary()
            .iter()
            .map(|v| {
                self.map_value(v).map(|mapped| {
                    *index.entry(mapped).or_insert_with(|| {
                        values.push(mapped.to_owned());
                        (values.len() - 1) as u32
                    })
                })
            })
            .collect();
        Some(ProjectedLevel { values, by_code })
    }
}

/// A level evaluated against one table's dictionary.
#[derive(Debug, Clone)]
pub struct ProjectedLevel {
    pub values: Vec<String>,
    pub by_code: Vec<Option<u32>>,
}
