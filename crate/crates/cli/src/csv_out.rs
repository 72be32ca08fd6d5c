//! Experiment rows and RFC 4180 CSV output.

use std::io::{self, Write};

pub const HEADER: &str = "algorithm,dataset,memory_bytes,pool_config,failure_strategy,\
metric_name,metric_value,seed,throughput_mops,runtime_ns";

/// One benchmark result: a single (algorithm, memory point, seed, metric)
/// combination.
#[derive(Debug, Clone)]
pub struct ExperimentRow {
    pub algorithm: String,
    pub dataset: String,
    pub memory_bytes: usize,
    pub pool_config: String,
    pub failure_strategy: String,
    pub metric_name: String,
    pub metric_value: f64,
    pub seed: u64,
    pub throughput_mops: f64,
    pub runtime_ns: u128,
}

/// Quotes a field when RFC 4180 requires it (commas, quotes, newlines).
pub fn escape_field(field: &str) -> String {
    if field.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub struct CsvSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{HEADER}")?;
        Ok(Self { out })
    }

    pub fn write(&mut self, row: &ExperimentRow) -> io::Result<()> {
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{}",
            escape_field(&row.algorithm),
            escape_field(&row.dataset),
            row.memory_bytes,
            escape_field(&row.pool_config),
            escape_field(&row.failure_strategy),
            escape_field(&row.metric_name),
            row.metric_value,
            row.seed,
            row.throughput_mops,
            row.runtime_ns,
        )
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}
