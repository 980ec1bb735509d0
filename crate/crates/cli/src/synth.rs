//! Zipf-distributed synthetic fact tables for the benchmark harnesses.
//!
//! Dimension `i` (1-based) is named `dim{i}` and takes values `d{i}_v{r}`,
//! where rank `r` runs from 1 to the cardinality and rank 1 is the most
//! frequent. Every row also carries a `count` measure fixed at 1.

use std::io::Write;

use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Zipf;
use serde::{Deserialize, Serialize};
use tagcube::FactTable;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZipfSpec {
    pub dims: usize,
    /// One entry per dimension.
    pub cardinalities: Vec<usize>,
    pub rows: usize,
    /// Zipf exponent; 0 draws uniformly.
    pub skew: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("at least one dimension is required")]
    NoDimensions,
    #[error("{given} cardinalities given for {dims} dimensions")]
    CardinalityCount { dims: usize, given: usize },
    #[error("cardinalities must be at least 1")]
    ZeroCardinality,
    #[error("rows must be at least 1")]
    NoRows,
    #[error("skew must be a finite number >= 0, got {0}")]
    InvalidSkew(f64),
}

impl ZipfSpec {
    /// Same cardinality on every dimension.
    pub fn uniform(dims: usize, cardinality: usize, rows: usize, skew: f64, seed: u64) -> Self {
        Self { dims, cardinalities: vec![cardinality; dims], rows, skew, seed }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.dims == 0 {
            return Err(SpecError::NoDimensions);
        }
        if self.cardinalities.len() != self.dims {
            return Err(SpecError::CardinalityCount { dims: self.dims, given: self.cardinalities.len() });
        }
        if self.cardinalities.contains(&0) {
            return Err(SpecError::ZeroCardinality);
        }
        if self.rows == 0 {
            return Err(SpecError::NoRows);
        }
        if !(self.skew.is_finite() && self.skew >= 0.0) {
            return Err(SpecError::InvalidSkew(self.skew));
        }
        Ok(())
    }

    pub fn dim_names(&self) -> Vec<String> {
        (1..=self.dims).map(|i| format!("dim{i}")).collect()
    }
}

pub const COUNT_COLUMN: &str = "count";

/// Draws the value ranks (1-based) of every dimension, row by row.
fn ranks(spec: &ZipfSpec) -> Result<Vec<Vec<u32>>, SpecError> {
    spec.validate()?;
    let dists: Vec<Zipf<f64>> = spec
        .cardinalities
        .iter()
        .map(|&c| Zipf::new(c as f64, spec.skew).expect("validated parameters"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cols = vec![Vec::with_capacity(spec.rows); spec.dims];
    for _ in 0..spec.rows {
        for (col, dist) in cols.iter_mut().zip(&dists) {
            col.push(dist.sample(&mut rng) as u32);
        }
    }
    Ok(cols)
}

fn value(dim: usize, rank: u32) -> String {
    format!("d{}_v{rank}", dim + 1)
}

/// Generates the table in memory.
pub fn generate_table(spec: &ZipfSpec) -> Result<FactTable<f64>, SpecError> {
    let cols = ranks(spec)?;
    let dims = spec
        .dim_names()
        .into_iter()
        .zip(cols)
        .enumerate()
        .map(|(d, (name, ranks))| (name, ranks.into_iter().map(|r| value(d, r)).collect()))
        .collect();
    let count = vec![(COUNT_COLUMN.to_owned(), vec![1.0; spec.rows])];
    Ok(FactTable::from_columns(dims, count).expect("columns of equal length"))
}

/// Writes the table as CSV with a header row.
pub fn write_csv<W: Write>(spec: &ZipfSpec, out: W) -> anyhow::Result<()> {
    let cols = ranks(spec)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = spec.dim_names();
    header.push(COUNT_COLUMN.to_owned());
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(spec.dims + 1);
    for row in 0..spec.rows {
        record.clear();
        record.extend(cols.iter().enumerate().map(|(d, c)| value(d, c[row])));
        record.push("1".to_owned());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
