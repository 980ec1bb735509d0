//! Offline counterparts of the service calls: load a CSV, define its schema
//! and run a cloud query without a server.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use serde::{Deserialize, Serialize};
use tagcube::{
    define_schema, hierarchy_mapping_from_csv, ingest_csv, Aggregator, ColumnKind, FactTable, FilterSpec,
    IngestOptions, Schema, SimilarityKind,
};
use tagcube_service::pipeline::{build_iceberg, execute};
use tagcube_service::{CloudBody, CloudQuery, HintedItem, LayoutSpec, Limits, Rollup};
use thiserror::Error;

/// Failures split by exit code: bad input is 2, unreadable files are 1.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io(_) => 1,
        }
    }

    fn invalid(e: impl std::fmt::Display) -> Self {
        CliError::Invalid(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// How to read a dataset and which columns play which role.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DataOpts {
    /// Field delimiter.
    #[arg(long)]
    pub delimiter: Option<char>,
    /// The first line is data, not column names (columns become col1, col2, ...).
    #[arg(long)]
    pub no_header: bool,
    /// Dimension columns; forces their kind and restricts the schema to them.
    #[arg(long = "dimension", value_name = "COLUMN")]
    pub dimensions: Vec<String>,
    /// Measure columns; forces their kind and restricts the schema to them.
    #[arg(long = "measure", value_name = "COLUMN")]
    pub measures: Vec<String>,
    /// Hierarchy as CHILD:PARENT=mapping.csv, the CSV holding child,parent pairs.
    #[arg(long = "hierarchy", value_name = "CHILD:PARENT=FILE")]
    pub hierarchies: Vec<String>,
}

impl DataOpts {
    /// Fields left unset here are taken from `fallback`.
    pub fn or(self, fallback: DataOpts) -> DataOpts {
        DataOpts {
            delimiter: self.delimiter.or(fallback.delimiter),
            no_header: self.no_header || fallback.no_header,
            dimensions: or_vec(self.dimensions, fallback.dimensions),
            measures: or_vec(self.measures, fallback.measures),
            hierarchies: or_vec(self.hierarchies, fallback.hierarchies),
        }
    }

    pub fn ingest_options(&self) -> CliResult<IngestOptions> {
        let delimiter = match self.delimiter {
            None => b',',
            Some(c) if c.is_ascii() => c as u8,
            Some(c) => return Err(CliError::Invalid(format!("delimiter `{c}` is not a single-byte character"))),
        };
        let kind_overrides = self
            .dimensions
            .iter()
            .map(|c| (c.clone(), ColumnKind::Dimension))
            .chain(self.measures.iter().map(|c| (c.clone(), ColumnKind::Measure)))
            .collect();
        Ok(IngestOptions { delimiter, header_row: !self.no_header, kind_overrides })
    }

    pub fn load_table(&self, path: &Path) -> CliResult<FactTable<f64>> {
        let bytes = read(path)?;
        ingest_csv(&bytes, &self.ingest_options()?).map_err(CliError::invalid)
    }

    /// Schema over the listed columns, or every column of the matching kind
    /// when none are listed, with the hierarchies attached in order.
    pub fn schema(&self, table: &FactTable<f64>) -> CliResult<Schema> {
        let pick = |given: &[String], kind| {
            if given.is_empty() {
                table.names_of_kind(kind)
            } else {
                given.to_vec()
            }
        };
        let dims = pick(&self.dimensions, ColumnKind::Dimension);
        let measures = pick(&self.measures, ColumnKind::Measure);
        let mut schema = define_schema(table, &dims, &measures).map_err(CliError::invalid)?;
        for spec in &self.hierarchies {
            let (child, parent, file) = parse_hierarchy(spec)?;
            let mapping: BTreeMap<String, String> =
                hierarchy_mapping_from_csv(&read(&file)?, b',').map_err(CliError::invalid)?;
            schema = schema.attach_hierarchy(table, &child, &parent, mapping).map_err(CliError::invalid)?;
        }
        Ok(schema)
    }

    pub fn load(&self, path: &Path) -> CliResult<(Arc<FactTable<f64>>, Arc<Schema>)> {
        let table = self.load_table(path)?;
        let schema = self.schema(&table)?;
        Ok((Arc::new(table), Arc::new(schema)))
    }
}

fn parse_hierarchy(spec: &str) -> CliResult<(String, String, PathBuf)> {
    let bad = || CliError::Invalid(format!("hierarchy `{spec}`: expected CHILD:PARENT=FILE"));
    let (levels, file) = spec.split_once('=').ok_or_else(bad)?;
    let (child, parent) = levels.split_once(':').ok_or_else(bad)?;
    if child.is_empty() || parent.is_empty() || file.is_empty() {
        return Err(bad());
    }
    Ok((child.to_owned(), parent.to_owned(), PathBuf::from(file)))
}

fn or_vec<T>(v: Vec<T>, fallback: Vec<T>) -> Vec<T> {
    if v.is_empty() {
        fallback
    } else {
        v
    }
}

/// Query flags of the `cloud` command. A config file may set the same keys.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CloudOpts {
    /// Dimension or hierarchy level to group by; repeat for k-tags.
    #[arg(long = "group", value_name = "DIM")]
    pub group: Vec<String>,
    /// count, sum:M, avg:M, min:M or max:M.
    #[arg(long)]
    pub agg: Option<String>,
    /// Maximum number of tags.
    #[arg(long)]
    pub k: Option<usize>,
    /// slice:DIM=VALUE or dice:DIM=V1|V2|...
    #[arg(long = "filter", value_name = "OP:DIM=VALUES")]
    pub filter: Vec<String>,
    /// DIM:PARENT, replacing DIM in the grouping by the hierarchy level.
    #[arg(long = "rollup", value_name = "DIM:PARENT")]
    pub rollup: Vec<String>,
    /// Clustering dimension for the layout; repeatable.
    #[arg(long = "cluster", value_name = "DIM")]
    pub cluster: Vec<String>,
    /// cosine, tanimoto or jaccard.
    #[arg(long)]
    pub similarity: Option<String>,
    /// none, nn, pwmc:N or mc:N.
    #[arg(long)]
    pub layout: Option<String>,
    /// Answer from an iceberg of this many cells instead of every fact.
    #[arg(long)]
    pub iceberg_limit: Option<usize>,
    /// Base dimension of the iceberg; repeatable, defaults to every dimension.
    #[arg(long = "iceberg-dim", value_name = "DIM")]
    pub iceberg_dims: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Neighbours at least this similar are glued.
    #[arg(long)]
    pub glue: Option<f64>,
    #[arg(long)]
    pub font_min: Option<f64>,
    #[arg(long)]
    pub font_max: Option<f64>,
    /// Upper bound on k.
    #[arg(long)]
    pub max_tags: Option<usize>,
}

impl CloudOpts {
    pub fn or(self, f: CloudOpts) -> CloudOpts {
        CloudOpts {
            group: or_vec(self.group, f.group),
            agg: self.agg.or(f.agg),
            k: self.k.or(f.k),
            filter: or_vec(self.filter, f.filter),
            rollup: or_vec(self.rollup, f.rollup),
            cluster: or_vec(self.cluster, f.cluster),
            similarity: self.similarity.or(f.similarity),
            layout: self.layout.or(f.layout),
            iceberg_limit: self.iceberg_limit.or(f.iceberg_limit),
            iceberg_dims: or_vec(self.iceberg_dims, f.iceberg_dims),
            seed: self.seed.or(f.seed),
            glue: self.glue.or(f.glue),
            font_min: self.font_min.or(f.font_min),
            font_max: self.font_max.or(f.font_max),
            max_tags: self.max_tags.or(f.max_tags),
        }
    }

    pub fn limits(&self) -> Limits {
        let mut limits = Limits::default();
        if let Some(m) = self.max_tags {
            limits.max_tags = m;
        }
        limits
    }

    pub fn to_query(&self) -> CliResult<CloudQuery> {
        if self.group.is_empty() {
            return Err(CliError::Invalid("at least one --group dimension is required".into()));
        }
        let agg = parse_aggregator(self.agg.as_deref().unwrap_or("count"))?;
        let mut q = CloudQuery::new(self.group.iter().cloned(), agg);
        if let Some(k) = self.k {
            q.k = k;
        }
        q.filters = self.filter.iter().map(|f| parse_filter(f)).collect::<CliResult<_>>()?;
        q.rollups = self.rollup.iter().map(|r| parse_rollup(r)).collect::<CliResult<_>>()?;
        q.clustering_dims = self.cluster.clone();
        q.similarity = self.similarity.as_deref().map(parse_similarity).transpose()?;
        q.layout = match self.layout.as_deref() {
            None if q.clustering_dims.is_empty() => LayoutSpec::None,
            None => LayoutSpec::Nn,
            Some(s) => parse_layout(s)?,
        };
        q.iceberg_limit = self.iceberg_limit;
        q.iceberg_dims = (!self.iceberg_dims.is_empty()).then(|| self.iceberg_dims.clone());
        q.seed = self.seed.unwrap_or(0);
        if let Some(g) = self.glue {
            q.glue_threshold = g;
        }
        if let Some(m) = self.font_min {
            q.font.min = m;
        }
        if let Some(m) = self.font_max {
            q.font.max = m;
        }
        Ok(q)
    }
}

pub fn parse_aggregator(s: &str) -> CliResult<Aggregator> {
    let (name, measure) = match s.split_once(':') {
        Some((n, m)) if !m.is_empty() => (n, Some(m.to_owned())),
        Some(_) => return Err(CliError::Invalid(format!("aggregator `{s}` names no measure"))),
        None => (s, None),
    };
    let need = |m: Option<String>| m.ok_or_else(|| CliError::Invalid(format!("aggregator `{s}` needs `{s}:MEASURE`")));
    match name.to_ascii_lowercase().as_str() {
        "count" if measure.is_none() => Ok(Aggregator::Count),
        "sum" => Ok(Aggregator::Sum(need(measure)?)),
        "avg" | "average" => Ok(Aggregator::Average(need(measure)?)),
        "min" => Ok(Aggregator::Min(need(measure)?)),
        "max" => Ok(Aggregator::Max(need(measure)?)),
        _ => Err(CliError::Invalid(format!("unknown aggregator `{s}`"))),
    }
}

pub fn parse_filter(s: &str) -> CliResult<FilterSpec> {
    let bad = || CliError::Invalid(format!("filter `{s}`: expected slice:DIM=VALUE or dice:DIM=V1|V2"));
    let (op, rest) = s.split_once(':').ok_or_else(bad)?;
    let (dim, values) = rest.split_once('=').ok_or_else(bad)?;
    match op {
        "slice" => Ok(FilterSpec::slice(dim, values)),
        "dice" => Ok(FilterSpec::dice(dim, values.split('|'))),
        _ => Err(bad()),
    }
}

fn parse_rollup(s: &str) -> CliResult<Rollup> {
    let (dim, parent) =
        s.split_once(':').ok_or_else(|| CliError::Invalid(format!("roll-up `{s}`: expected DIM:PARENT")))?;
    Ok(Rollup { dim: dim.to_owned(), parent: parent.to_owned() })
}

pub fn parse_similarity(s: &str) -> CliResult<SimilarityKind> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| CliError::Invalid(format!("unknown similarity `{s}`")))
}

pub fn parse_layout(s: &str) -> CliResult<LayoutSpec> {
    let bad = || CliError::Invalid(format!("layout `{s}`: expected none, nn, pwmc:N or mc:N"));
    let (name, arg) = s.split_once(':').unwrap_or((s, ""));
    let count = || arg.parse::<usize>().map_err(|_| bad());
    match name {
        "none" if arg.is_empty() => Ok(LayoutSpec::None),
        "nn" if arg.is_empty() => Ok(LayoutSpec::Nn),
        "pwmc" => Ok(LayoutSpec::Pwmc { exchanges: count()? }),
        "mc" => Ok(LayoutSpec::Mc { iterations: count()? }),
        _ => Err(bad()),
    }
}

/// Runs a query end to end, building the iceberg it asks for.
pub fn run_cloud(
    table: &Arc<FactTable<f64>>,
    schema: &Arc<Schema>,
    query: &CloudQuery,
    limits: &Limits,
) -> CliResult<CloudBody> {
    tagcube_service::pipeline::validate(schema, query, limits).map_err(CliError::invalid)?;
    let ice = build_iceberg(table, schema, query).map_err(CliError::invalid)?;
    execute(table, schema, query, ice.as_ref(), limits).map_err(CliError::invalid)
}

/// One tag per line as `term<TAB>weight<TAB>size`, `~` between glued tags,
/// then the metrics.
pub fn render_text(body: &CloudBody) -> String {
    let mut out = String::new();
    for item in &body.items {
        match item {
            HintedItem::Tag { term, weight, display_size, .. } => {
                out.push_str(&format!("{term}\t{weight}\t{display_size:.1}\n"))
            }
            HintedItem::Glued => out.push_str("~\n"),
            HintedItem::Permutable => out.push_str("|\n"),
        }
    }
    let m = &body.metrics;
    let opt = |x: Option<f64>| x.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
    out.push_str(&format!(
        "tags {}  entropy {}  relative {}  mla {}{}\n",
        m.tag_count,
        opt(m.entropy),
        opt(m.relative_entropy),
        opt(m.mla_cost),
        if body.approximate { "  (approximate)" } else { "" }
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregators() {
        assert_eq!(parse_aggregator("count").unwrap(), Aggregator::Count);
        assert_eq!(parse_aggregator("SUM:profit").unwrap(), Aggregator::Sum("profit".into()));
        assert_eq!(parse_aggregator("avg:cost").unwrap(), Aggregator::Average("cost".into()));
        assert!(parse_aggregator("sum").is_err());
        assert!(parse_aggregator("count:x").is_err());
        assert!(parse_aggregator("median:x").is_err());
        assert!(parse_aggregator("max:").is_err());
    }

    #[test]
    fn filters_and_layouts() {
        assert_eq!(parse_filter("slice:location=Paris").unwrap(), FilterSpec::slice("location", "Paris"));
        assert_eq!(parse_filter("dice:time=March|June").unwrap(), FilterSpec::dice("time", ["March", "June"]));
        assert!(parse_filter("cut:a=b").is_err());
        assert!(parse_filter("slice:ab").is_err());
        assert_eq!(parse_layout("pwmc:100").unwrap(), LayoutSpec::Pwmc { exchanges: 100 });
        assert_eq!(parse_layout("nn").unwrap(), LayoutSpec::Nn);
        assert!(parse_layout("mc").is_err());
        assert_eq!(parse_similarity("Tanimoto").unwrap(), SimilarityKind::Tanimoto);
        assert!(parse_similarity("pearson").is_err());
        assert!(parse_hierarchy("location:Country=map.csv").is_ok());
        assert!(parse_hierarchy("location=map.csv").is_err());
    }

    #[test]
    fn flags_override_config() {
        let config: CloudOpts = toml::from_str("group = [\"time\"]\nk = 5\nagg = \"sum:profit\"\n").unwrap();
        let flags = CloudOpts { group: vec!["location".into()], ..Default::default() };
        let merged = flags.or(config);
        assert_eq!(merged.group, ["location"]);
        assert_eq!(merged.k, Some(5));
        let q = merged.to_query().unwrap();
        assert_eq!(q.aggregator, Aggregator::Sum("profit".into()));
        assert!(toml::from_str::<CloudOpts>("colour = 1").is_err());
    }

    #[test]
    fn clustering_implies_nn_layout() {
        let opts = CloudOpts { group: vec!["a".into()], cluster: vec!["b".into()], ..Default::default() };
        assert_eq!(opts.to_query().unwrap().layout, LayoutSpec::Nn);
        assert!(CloudOpts::default().to_query().is_err());
    }
}
