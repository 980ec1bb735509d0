use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use tagcube::ColumnData;
use tagcube_cli::bench::{self, IcebergBenchConfig, LayoutBenchConfig};
use tagcube_cli::offline::{parse_aggregator, parse_similarity, CliError, CliResult};
use tagcube_cli::{render_text, run_cloud, CloudOpts, DataOpts, Heuristic, ZipfSpec};

#[derive(Debug, Parser)]
#[command(name = "tagcube", version, about = "OLAP tag clouds from CSV fact tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a CSV file and describe its columns.
    Ingest {
        file: PathBuf,
        #[command(flatten)]
        data: DataOpts,
    },
    /// Check a schema and list the levels a query can group by.
    Schema {
        file: PathBuf,
        #[command(flatten)]
        data: DataOpts,
    },
    /// Compute a tag cloud.
    Cloud {
        file: PathBuf,
        #[command(flatten)]
        data: DataOpts,
        #[command(flatten)]
        query: CloudOpts,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// TOML file with the same keys as the flags; flags win.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a Zipf-distributed synthetic fact table as CSV.
    Gen {
        #[arg(long, default_value_t = 4)]
        dims: usize,
        /// Cardinality of every dimension.
        #[arg(long, default_value_t = 100, conflicts_with = "cardinalities")]
        cardinality: usize,
        /// Per-dimension cardinalities, comma separated.
        #[arg(long, value_delimiter = ',')]
        cardinalities: Vec<usize>,
        #[arg(long, default_value_t = 100_000)]
        rows: usize,
        #[arg(long, default_value_t = 1.2)]
        skew: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare iceberg clouds with exact ones over a grid of limits and sizes.
    BenchIceberg {
        file: PathBuf,
        #[command(flatten)]
        data: DataOpts,
        /// Cube dimensions, comma separated; each is displayed in turn.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<String>,
        #[arg(long, value_delimiter = ',', default_values_t = IcebergBenchConfig::DEFAULT_LIMITS)]
        limits: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = IcebergBenchConfig::DEFAULT_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value = "count")]
        agg: String,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Report path; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write both clouds of every row as JSON lines.
        #[arg(long)]
        clouds: Option<PathBuf>,
    },
    /// Run the layout heuristics on every 1-tag cloud and clustering dimension.
    BenchLayout {
        file: PathBuf,
        #[command(flatten)]
        data: DataOpts,
        /// Displayed dimensions; defaults to every schema dimension.
        #[arg(long, value_delimiter = ',')]
        display: Vec<String>,
        /// Clustering dimensions; defaults to every schema dimension.
        #[arg(long, value_delimiter = ',')]
        clustering: Vec<String>,
        /// Similarity measures, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "cosine,tanimoto")]
        similarities: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "nn,pwmc:10,pwmc:100,pwmc:1000,mc:1000")]
        heuristics: Vec<Heuristic>,
        #[arg(long, default_value_t = 150)]
        limit: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Per-run report; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Gain-threshold summary; printed to standard error when absent.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Serve the JSON API (and optionally the web UI).
    Serve {
        #[arg(long)]
        addr: Option<std::net::SocketAddr>,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long)]
        max_tags: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_err(e: anyhow::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn print_json(value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Ingest { file, data } => {
            let table = data.load_table(&file)?;
            let columns: Vec<_> = table
                .columns()
                .iter()
                .map(|c| match c.data() {
                    ColumnData::Dimension(d) => {
                        json!({"name": c.name(), "kind": "dimension", "distinct_values": d.distinct_count()})
                    }
                    ColumnData::Measure(_) => json!({"name": c.name(), "kind": "measure"}),
                })
                .collect();
            print_json(&json!({"rows": table.row_count(), "columns": columns}))
        }
        Command::Schema { file, data } => {
            let (table, schema) = data.load(&file)?;
            let levels: Vec<_> = schema
                .level_names()
                .into_iter()
                .map(|name| {
                    let n = schema.resolve_level(&name).and_then(|l| l.distinct_values(&table)).map(|v| v.len());
                    json!({"name": name, "distinct_values": n})
                })
                .collect();
            print_json(&json!({"dimensions": schema.dimensions(), "measures": schema.measures(), "levels": levels}))
        }
        Command::Cloud { file, data, query, format, config } => {
            let (data, query) = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
                    let cfg: ConfigFile =
                        toml::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
                    (data.or(cfg.data), query.or(cfg.query))
                }
                None => (data, query),
            };
            let (table, schema) = data.load(&file)?;
            let body = run_cloud(&table, &schema, &query.to_query()?, &query.limits())?;
            for w in &body.warnings {
                eprintln!("warning: {w}");
            }
            match format {
                Format::Json => print_json(&body),
                Format::Text => {
                    print!("{}", render_text(&body));
                    Ok(())
                }
            }
        }
        Command::Gen { dims, cardinality, cardinalities, rows, skew, seed, out } => {
            let cardinalities = if cardinalities.is_empty() { vec![cardinality; dims] } else { cardinalities };
            let spec = ZipfSpec { dims, cardinalities, rows, skew, seed };
            spec.validate().map_err(|e| CliError::Invalid(e.to_string()))?;
            tagcube_cli::synth::write_csv(&spec, output(out.as_deref())?).map_err(write_err)
        }
        Command::BenchIceberg { file, data, dims, limits, sizes, agg, reps, out, clouds } => {
            let (table, schema) = data.load(&file)?;
            let cfg = IcebergBenchConfig { dims, limits, sizes, aggregator: parse_aggregator(&agg)?, reps };
            let runs = bench::bench_iceberg(&table, &schema, &cfg).map_err(|e| CliError::Invalid(e.to_string()))?;
            let rows: Vec<_> = runs.iter().map(|r| r.row.clone()).collect();
            bench::write_csv(&rows, output(out.as_deref())?).map_err(write_err)?;
            if let Some(path) = clouds {
                let mut w = output(Some(&path))?;
                for r in &runs {
                    let line = json!({
                        "dim": r.row.dim, "limit": r.row.limit, "size": r.row.size,
                        "approx": r.approx.tags(), "exact": r.exact.tags(),
                    });
                    writeln!(w, "{line}").map_err(|e| io_err(&path, e))?;
                }
            }
            Ok(())
        }
        Command::BenchLayout {
            file,
            data,
            display,
            clustering,
            similarities,
            heuristics,
            limit,
            seed,
            reps,
            out,
            summary,
        } => {
            let (table, schema) = data.load(&file)?;
            let mut cfg = LayoutBenchConfig::for_schema(&schema);
            if !display.is_empty() {
                cfg.display_dims = display;
            }
            if !clustering.is_empty() {
                cfg.clustering_dims = clustering;
            }
            cfg.measures = similarities.iter().map(|m| parse_similarity(m)).collect::<CliResult<_>>()?;
            cfg.heuristics = heuristics;
            cfg.limit = limit;
            cfg.seed = seed;
            cfg.reps = reps;
            let rows = bench::bench_layout(&table, &schema, &cfg).map_err(|e| CliError::Invalid(e.to_string()))?;
            bench::write_csv(&rows, output(out.as_deref())?).map_err(write_err)?;
            let lines = bench::summarize_layout(&rows);
            match summary {
                Some(path) => bench::write_csv(&lines, output(Some(&path))?).map_err(write_err),
                None => bench::write_csv(&lines, io::stderr().lock()).map_err(write_err),
            }
        }
        Command::Serve { addr, ui_dir, max_tags } => {
            tracing_subscriber::fmt().with_writer(io::stderr).init();
            let mut config = tagcube_service::ServerConfig::from_env().map_err(CliError::Invalid)?;
            if let Some(a) = addr {
                config.addr = a;
            }
            if ui_dir.is_some() {
                config.ui_dir = ui_dir;
            }
            if let Some(m) = max_tags {
                config.limits.max_tags = m;
            }
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
            rt.block_on(tagcube_service::serve(config)).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// Config file for `cloud`: data and query keys side by side.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    #[serde(flatten)]
    data: DataOpts,
    #[serde(flatten)]
    query: CloudOpts,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
