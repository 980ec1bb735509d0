//! Library side of the `tagcube` command: synthetic data, benchmark
//! harnesses and the offline query path.

pub mod bench;
pub mod offline;
pub mod synth;

pub use bench::{
    bench_iceberg, bench_layout, summarize_layout, Heuristic, IcebergBenchConfig, IcebergRow, IcebergRun,
    LayoutBenchConfig, LayoutRow, LayoutSummary,
};
pub use offline::{render_text, run_cloud, CliError, CloudOpts, DataOpts};
pub use synth::{generate_table, ZipfSpec};
