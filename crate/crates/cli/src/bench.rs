//! Benchmark harnesses: iceberg approximation quality and speed, and layout
//! heuristics compared against the weight-sorted order.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tagcube::{
    approx_cloud, exact_cloud, false_negative_index, false_positive_index, materialize_iceberg, mc_order, mla_cost,
    mla_gain, nn_order, pwmc_order, relative_entropy, relative_gain, similarity_matrix, Aggregator, CloudQuery,
    FactTable, LayoutOrder, NnStart, QueryError, Schema, SimilarityError, SimilarityKind, TagCloud, VectorSource,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("at least one repetition is required")]
    NoRepetitions,
}

/// Median wall time in seconds of `reps` runs, with the last result.
pub fn timed<T>(reps: usize, mut f: impl FnMut() -> T) -> (T, f64) {
    assert!(reps > 0);
    let mut times = Vec::with_capacity(reps);
    let mut out = None;
    for _ in 0..reps {
        let start = Instant::now();
        out = Some(f());
        times.push(start.elapsed().as_secs_f64());
    }
    (out.expect("reps > 0"), median(&mut times).expect("reps > 0"))
}

/// Median of a sample, averaging the middle pair for even lengths.
pub fn median(xs: &mut [f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let mid = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[mid] } else { (xs[mid - 1] + xs[mid]) / 2.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcebergBenchConfig {
    /// Base dimensions of the cube; each is displayed in turn.
    pub dims: Vec<String>,
    pub limits: Vec<usize>,
    pub sizes: Vec<usize>,
    pub aggregator: Aggregator,
    pub reps: usize,
}

impl IcebergBenchConfig {
    pub const DEFAULT_LIMITS: [usize; 5] = [150, 600, 1200, 4800, 19600];
    pub const DEFAULT_SIZES: [usize; 4] = [50, 100, 150, 200];

    pub fn new(dims: Vec<String>) -> Self {
        Self {
            dims,
            limits: Self::DEFAULT_LIMITS.to_vec(),
            sizes: Self::DEFAULT_SIZES.to_vec(),
            aggregator: Aggregator::Count,
            reps: 3,
        }
    }
}

/// One report line. Timings are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcebergRow {
    pub dim: String,
    pub limit: usize,
    pub size: usize,
    pub approx_tags: usize,
    pub exact_tags: usize,
    /// Of the approximate cloud; empty for clouds of fewer than two tags.
    pub relative_entropy: Option<f64>,
    pub fp_index: Option<f64>,
    pub fn_index: Option<f64>,
    pub t_exact: f64,
    pub t_iceberg: f64,
    pub relative_gain: Option<f64>,
}

/// A report line together with the two clouds it was computed from.
#[derive(Debug, Clone)]
pub struct IcebergRun {
    pub row: IcebergRow,
    pub approx: TagCloud<f64>,
    pub exact: TagCloud<f64>,
}

/// Quality and timing of iceberg clouds against exact ones for every
/// (displayed dimension, limit, size). Icebergs are materialized once per
/// limit, outside the timed region. Runs sequentially so timings do not
/// compete for cores.
pub fn bench_iceberg(
    table: &Arc<FactTable<f64>>,
    schema: &Arc<Schema>,
    cfg: &IcebergBenchConfig,
) -> Result<Vec<IcebergRun>, BenchError> {
    if cfg.reps == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let icebergs = cfg
        .limits
        .iter()
        .map(|&limit| materialize_iceberg(table, schema, &cfg.dims, &cfg.aggregator, limit))
        .collect::<Result<Vec<_>, _>>()?;

    let mut runs = Vec::new();
    for dim in &cfg.dims {
        for &size in &cfg.sizes {
            let query = CloudQuery::group_by([dim.as_str()], size);
            let (exact, t_exact) = timed(cfg.reps, || exact_cloud(table, schema, &cfg.aggregator, &query));
            let exact = exact?;
            for (ice, &limit) in icebergs.iter().zip(&cfg.limits) {
                let (approx, t_iceberg) = timed(cfg.reps, || approx_cloud(ice, &query));
                let approx = approx?;
                let row = IcebergRow {
                    dim: dim.clone(),
                    limit,
                    size,
                    approx_tags: approx.len(),
                    exact_tags: exact.len(),
                    relative_entropy: relative_entropy(&approx).ok(),
                    fp_index: false_positive_index(&approx, &exact).ok(),
                    fn_index: false_negative_index(&approx, &exact).ok(),
                    t_exact,
                    t_iceberg,
                    relative_gain: relative_gain(t_exact, t_iceberg).ok(),
                };
                runs.push(IcebergRun { row, approx, exact: exact.clone() });
            }
        }
    }
    runs.sort_by(|a, b| {
        let key = |r: &IcebergRow| (cfg.dims.iter().position(|d| *d == r.dim), r.limit, r.size);
        key(&a.row).cmp(&key(&b.row))
    });
    Ok(runs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heuristic {
    Nn,
    Pwmc(usize),
    Mc(usize),
}

impl Heuristic {
    /// Orders the matrix from the greedy chain started at the heaviest tag.
    pub fn run(self, m: &tagcube::SimilarityMatrix<f64>, seed: u64) -> LayoutOrder {
        let start = nn_order(m, NnStart::Heaviest);
        match self {
            Heuristic::Nn => start,
            Heuristic::Pwmc(n) => pwmc_order(&start, m, n, seed).expect("same size"),
            Heuristic::Mc(n) => mc_order(&start, m, n, seed).expect("same size"),
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Heuristic::Nn => write!(f, "nn"),
            Heuristic::Pwmc(n) => write!(f, "pwmc:{n}"),
            Heuristic::Mc(n) => write!(f, "mc:{n}"),
        }
    }
}

impl FromStr for Heuristic {
    type Err = String;

    /// `nn`, `pwmc:<exchanges>` or `mc:<iterations>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let count = || arg.parse::<usize>().map_err(|_| format!("`{s}`: expected {name}:<count>"));
        match name {
            "nn" if arg.is_empty() => Ok(Heuristic::Nn),
            "pwmc" => Ok(Heuristic::Pwmc(count()?)),
            "mc" => Ok(Heuristic::Mc(count()?)),
            _ => Err(format!("unknown heuristic `{s}`")),
        }
    }
}

impl Serialize for Heuristic {
    fn serialize<Se: serde::Serializer>(&self, s: Se) -> Result<Se::Ok, Se::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Heuristic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutBenchConfig {
    /// Dimensions displayed as 1-tag clouds.
    pub display_dims: Vec<String>,
    /// Candidate clustering dimensions; each display dimension is paired with
    /// every other one.
    pub clustering_dims: Vec<String>,
    /// Base dimensions of the shared iceberg.
    pub iceberg_dims: Vec<String>,
    pub measures: Vec<SimilarityKind>,
    pub heuristics: Vec<Heuristic>,
    pub aggregator: Aggregator,
    pub limit: usize,
    pub k: usize,
    pub seed: u64,
    pub reps: usize,
}

impl LayoutBenchConfig {
    /// Every schema dimension displayed, clustered and in the iceberg, with
    /// cosine and Tanimoto, NN, PWMC at 10/100/1000 exchanges and MC at 1000.
    pub fn for_schema(schema: &Schema) -> Self {
        let dims = schema.dimensions().to_vec();
        Self {
            display_dims: dims.clone(),
            clustering_dims: dims.clone(),
            iceberg_dims: dims,
            measures: vec![SimilarityKind::Cosine, SimilarityKind::Tanimoto],
            heuristics: vec![
                Heuristic::Nn,
                Heuristic::Pwmc(10),
                Heuristic::Pwmc(100),
                Heuristic::Pwmc(1000),
                Heuristic::Mc(1000),
            ],
            aggregator: Aggregator::Count,
            limit: 150,
            k: tagcube::DEFAULT_MAX_TAGS,
            seed: 0,
            reps: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRow {
    pub display: String,
    pub clustering: String,
    pub measure: SimilarityKind,
    pub heuristic: Heuristic,
    pub tags: usize,
    /// Cost of the weight-sorted order.
    pub identity_cost: f64,
    pub cost: f64,
    pub gain: f64,
    pub time_s: f64,
}

/// Runs every heuristic on every (display, clustering, measure) triple.
/// Triples run in parallel; rows come back sorted by configuration order.
pub fn bench_layout(
    table: &Arc<FactTable<f64>>,
    schema: &Arc<Schema>,
    cfg: &LayoutBenchConfig,
) -> Result<Vec<LayoutRow>, BenchError> {
    if cfg.reps == 0 {
        return Err(BenchError::NoRepetitions);
    }
    let ice = materialize_iceberg(table, schema, &cfg.iceberg_dims, &cfg.aggregator, cfg.limit)?;
    let mut jobs = Vec::new();
    for display in &cfg.display_dims {
        for clustering in cfg.clustering_dims.iter().filter(|c| *c != display) {
            for &measure in &cfg.measures {
                jobs.push((display, clustering, measure));
            }
        }
    }
    let per_job: Vec<Vec<LayoutRow>> = jobs
        .par_iter()
        .map(|&(display, clustering, measure)| {
            let cloud = approx_cloud(&ice, &CloudQuery::group_by([display.as_str()], cfg.k))?;
            let m = similarity_matrix(
                VectorSource::Iceberg(&ice),
                cloud.tags(),
                std::slice::from_ref(display),
                std::slice::from_ref(clustering),
                &[],
                measure,
            )?;
            let identity_cost = mla_cost(&LayoutOrder::identity(m.len()), &m).expect("same size");
            Ok(cfg
                .heuristics
                .iter()
                .map(|&h| {
                    let (order, time_s) = timed(cfg.reps, || h.run(&m, cfg.seed));
                    let cost = mla_cost(&order, &m).expect("same size");
                    LayoutRow {
                        display: display.clone(),
                        clustering: clustering.clone(),
                        measure,
                        heuristic: h,
                        tags: m.len(),
                        identity_cost,
                        cost,
                        gain: mla_gain(identity_cost, cost),
                        time_s,
                    }
                })
                .collect())
        })
        .collect::<Result<_, BenchError>>()?;
    Ok(per_job.into_iter().flatten().collect())
}

/// One line of the summary: how many clouds reached each gain threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub measure: SimilarityKind,
    pub heuristic: Heuristic,
    pub clouds: usize,
    pub gain_gt_0: usize,
    pub gain_gt_30: usize,
    pub gain_gt_70: usize,
    pub gain_gt_90: usize,
    pub mean_time_s: f64,
    /// Mean time relative to NN on the same measure.
    pub time_vs_nn: Option<f64>,
}

pub fn summarize_layout(rows: &[LayoutRow]) -> Vec<LayoutSummary> {
    let mut keys: Vec<(SimilarityKind, Heuristic)> = rows.iter().map(|r| (r.measure, r.heuristic)).collect();
    keys.sort_by_key(|&(m, h)| (m as u8, h));
    keys.dedup();
    let mean_time = |m: SimilarityKind, h: Heuristic| {
        let ts: Vec<f64> = rows.iter().filter(|r| r.measure == m && r.heuristic == h).map(|r| r.time_s).collect();
        (!ts.is_empty()).then(|| ts.iter().sum::<f64>() / ts.len() as f64)
    };
    keys.into_iter()
        .map(|(measure, heuristic)| {
            let gains: Vec<f64> =
                rows.iter().filter(|r| r.measure == measure && r.heuristic == heuristic).map(|r| r.gain).collect();
            let above = |t: f64| gains.iter().filter(|&&g| g > t).count();
            let mean_time_s = mean_time(measure, heuristic).unwrap_or(0.0);
            let time_vs_nn = mean_time(measure, Heuristic::Nn).filter(|&nn| nn > 0.0).map(|nn| mean_time_s / nn);
            LayoutSummary {
                measure,
                heuristic,
                clouds: gains.len(),
                gain_gt_0: above(0.0),
                gain_gt_30: above(0.3),
                gain_gt_70: above(0.7),
                gain_gt_90: above(0.9),
                mean_time_s,
                time_vs_nn,
            }
        })
        .collect()
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
