//! Subcommand implementations.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use counterpools::histogram::PooledCuckooTable;
use counterpools::pool::{presets, OffsetTable, PoolConfig};
use counterpools::sketch::{Baseline32Sketch, FailureStrategy, FrequencyEstimator, PooledSketch};
use counterpools::snb::{table_dir_from_env, SnbTable};
use counterpools::workload::{
    generate_zipf, measure_throughput, read_trace, read_trace_csv, write_trace, MetricsAccumulator,
    ZipfSpec,
};

use crate::csv_out::{CsvSink, ExperimentRow};
use crate::params::{usage, DatasetSpec, MetricSpec, Variant};
use crate::{Algo, BenchHistogramArgs, BenchSketchArgs, GenTraceArgs, TablesArgs};

fn open_sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load_trace_file(path: &Path) -> Result<Vec<u64>> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let keys: Result<Vec<u64>, _> = if is_csv {
        read_trace_csv(path)?.collect()
    } else {
        read_trace(path)?.collect()
    };
    keys.with_context(|| format!("reading {}", path.display()))
}

/// Materializes the dataset for one seed. Traces ignore the seed (it still
/// seeds the data structures); Zipf streams are generated from it.
fn load_stream(
    dataset: &DatasetSpec,
    universe: u64,
    seed: u64,
    trace_cache: &mut Option<Arc<Vec<u64>>>,
) -> Result<Arc<Vec<u64>>> {
    match dataset {
        DatasetSpec::Zipf { alpha, length } => {
            let gen = generate_zipf(ZipfSpec {
                alpha: *alpha,
                universe,
                length: *length,
                seed,
            })?;
            Ok(Arc::new(gen.collect()))
        }
        DatasetSpec::Trace { path } => {
            if trace_cache.is_none() {
                *trace_cache = Some(Arc::new(load_trace_file(path)?));
            }
            Ok(trace_cache.clone().unwrap())
        }
    }
}

pub fn gen_trace(args: &GenTraceArgs) -> Result<()> {
    let keys: Vec<u64> = match (&args.from, args.alpha) {
        (Some(path), None) => load_trace_file(path)?,
        (None, Some(alpha)) => {
            let count = args
                .count
                .ok_or_else(|| usage("--count is required with --alpha"))?;
            generate_zipf(ZipfSpec {
                alpha,
                universe: args.universe,
                length: count,
                seed: args.seed,
            })?
            .collect()
        }
        _ => return Err(usage("exactly one of --alpha or --from is required")),
    };
    let file =
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_trace(BufWriter::new(file), &keys)?;
    eprintln!("wrote {} keys to {}", keys.len(), args.out.display());
    Ok(())
}

enum Estimator {
    Pooled(PooledSketch),
    Baseline(Baseline32Sketch),
}

impl Estimator {
    fn build(
        variant: Variant,
        budget: usize,
        rows: usize,
        table: &Arc<OffsetTable>,
        strategy: FailureStrategy,
        seed: u64,
    ) -> Result<Self> {
        Ok(match variant {
            Variant::Pooled => Estimator::Pooled(
                PooledSketch::with_memory(budget, rows, Arc::clone(table), strategy, seed)
                    .map_err(|e| usage(e.to_string()))?,
            ),
            Variant::Baseline32 => Estimator::Baseline(
                Baseline32Sketch::with_memory(budget, rows, seed)
                    .map_err(|e| usage(e.to_string()))?,
            ),
        })
    }

    fn add(&mut self, algo: Algo, key: u64) {
        match (self, algo) {
            (Estimator::Pooled(s), Algo::Cm) => s.update(key, 1),
            (Estimator::Pooled(s), Algo::Cu) => s.conservative_update(key, 1),
            (Estimator::Baseline(s), Algo::Cm) => s.update(key, 1),
            (Estimator::Baseline(s), Algo::Cu) => s.conservative_update(key, 1),
        }
    }

    fn query(&self, key: u64) -> u64 {
        match self {
            Estimator::Pooled(s) => s.query(key),
            Estimator::Baseline(s) => s.query(key),
        }
    }

    fn memory_bytes(&self) -> usize {
        match self {
            Estimator::Pooled(s) => s.memory_bytes(),
            Estimator::Baseline(s) => s.memory_bytes(),
        }
    }
}

pub fn bench_sketch(args: &BenchSketchArgs) -> Result<()> {
    let dataset: DatasetSpec = args.dataset.parse().map_err(usage)?;
    let metric: MetricSpec = args.metric.parse().map_err(usage)?;
    let variant: Variant = args.variant.parse().map_err(usage)?;
    let pool_config: PoolConfig = args
        .pool_config
        .parse()
        .map_err(|e| usage(format!("{e}")))?;
    let strategy: FailureStrategy = args.failure.parse().map_err(|e| usage(format!("{e}")))?;
    let memories = crate::params::parse_memory_list(&args.memory_bytes).map_err(usage)?;
    let seeds = crate::params::parse_seed_list(&args.seeds).map_err(usage)?;
    if args.rows == 0 {
        return Err(usage("--rows must be at least 1"));
    }
    if args.reps == 0 {
        return Err(usage("--reps must be at least 1"));
    }

    let table = Arc::new(OffsetTable::cached_from_env(pool_config)?);
    let mut sink = CsvSink::new(open_sink(&args.out)?)?;
    let mut trace_cache = None;

    let algo_name = match args.algo {
        Algo::Cm => "cm",
        Algo::Cu => "cu",
    };
    let (config_name, strategy_name) = match variant {
        Variant::Pooled => (pool_config.to_string(), strategy.to_string()),
        Variant::Baseline32 => ("fixed32".to_string(), "-".to_string()),
    };

    for &seed in &seeds {
        let stream = load_stream(&dataset, args.zipf_universe, seed, &mut trace_cache)?;
        for &budget in &memories {
            let mut row = ExperimentRow {
                algorithm: algo_name.to_string(),
                dataset: dataset.to_string(),
                memory_bytes: 0,
                pool_config: config_name.clone(),
                failure_strategy: strategy_name.clone(),
                metric_name: String::new(),
                metric_value: f64::NAN,
                seed,
                throughput_mops: 0.0,
                runtime_ns: 0,
            };
            match metric {
                MetricSpec::Nrmse => {
                    let mut est =
                        Estimator::build(variant, budget, args.rows, &table, strategy, seed)?;
                    let mut acc = MetricsAccumulator::new();
                    let start = Instant::now();
                    for &key in stream.iter() {
                        est.add(args.algo, key);
                        acc.observe(key, est.query(key));
                    }
                    let elapsed = start.elapsed();
                    row.memory_bytes = est.memory_bytes();
                    row.metric_name = "nrmse".into();
                    row.metric_value = acc.nrmse()?;
                    row.runtime_ns = elapsed.as_nanos();
                    row.throughput_mops =
                        stream.len() as f64 / elapsed.as_secs_f64().max(1e-9) / 1e6;
                }
                MetricSpec::Are { theta } => {
                    let mut est =
                        Estimator::build(variant, budget, args.rows, &table, strategy, seed)?;
                    let mut acc = MetricsAccumulator::new();
                    let start = Instant::now();
                    for &key in stream.iter() {
                        est.add(args.algo, key);
                    }
                    let elapsed = start.elapsed();
                    for &key in stream.iter() {
                        acc.observe(key, 0);
                    }
                    row.memory_bytes = est.memory_bytes();
                    row.metric_name = format!("are:{theta}");
                    row.metric_value = acc
                        .heavy_hitter_are(theta, |key| est.query(key))
                        .unwrap_or(f64::NAN);
                    row.runtime_ns = elapsed.as_nanos();
                    row.throughput_mops =
                        stream.len() as f64 / elapsed.as_secs_f64().max(1e-9) / 1e6;
                }
                MetricSpec::Throughput => {
                    // Surface sizing problems before the timing loop.
                    let probe =
                        Estimator::build(variant, budget, args.rows, &table, strategy, seed)?;
                    let memory_bytes = probe.memory_bytes();
                    drop(probe);
                    let throughput = measure_throughput(
                        || {
                            let mut est = Estimator::build(
                                variant, budget, args.rows, &table, strategy, seed,
                            )
                            .expect("an identical build just succeeded");
                            for &key in stream.iter() {
                                est.add(args.algo, key);
                            }
                            stream.len() as u64
                        },
                        args.reps,
                    );
                    row.memory_bytes = memory_bytes;
                    row.metric_name = "throughput_mops".into();
                    row.metric_value = throughput.mops_mean;
                    row.throughput_mops = throughput.mops_mean;
                    row.runtime_ns = throughput.total_ns;
                }
            }
            sink.write(&row)?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn bench_histogram(args: &BenchHistogramArgs) -> Result<()> {
    let dataset: DatasetSpec = args.dataset.parse().map_err(usage)?;
    let pool_config: PoolConfig = args
        .pool_config
        .parse()
        .map_err(|e| usage(format!("{e}")))?;
    let exps = crate::params::parse_exp_list(&args.buckets_exp).map_err(usage)?;
    let seeds = crate::params::parse_seed_list(&args.seeds).map_err(usage)?;

    let table = Arc::new(OffsetTable::cached_from_env(pool_config)?);
    let mut sink = CsvSink::new(open_sink(&args.out)?)?;
    let mut trace_cache = None;

    for &seed in &seeds {
        let stream = load_stream(&dataset, args.zipf_universe, seed, &mut trace_cache)?;
        if args.key_bits < 64 {
            if let Some(&bad) = stream.iter().find(|&&k| k >> args.key_bits != 0) {
                anyhow::bail!("key {bad} does not fit --key-bits {}", args.key_bits);
            }
        }
        for &buckets_exp in &exps {
            let mut t =
                PooledCuckooTable::new(buckets_exp, args.key_bits, Arc::clone(&table), seed)
                    .map_err(|e| usage(e.to_string()))?;
            t.set_max_kicks(args.max_kicks);
            let mut table_full = 0u64;
            let start = Instant::now();
            for &key in stream.iter() {
                if t.increment(key, 1).is_err() {
                    table_full += 1;
                }
            }
            let elapsed = start.elapsed();

            // Exactness against a hash map, for streams small enough to
            // recount.
            let exact = if stream.len() as u64 <= 10_000_000 {
                let mut oracle = std::collections::HashMap::new();
                for &key in stream.iter() {
                    *oracle.entry(key).or_insert(0u64) += 1;
                }
                let stored_match = t.len() == oracle.len()
                    && oracle.iter().all(|(&key, &count)| t.query(key) == count);
                (table_full == 0 && stored_match) as u64 as f64
            } else {
                f64::NAN
            };

            if let Some(dump) = &args.dump {
                let file =
                    File::create(dump).with_context(|| format!("creating {}", dump.display()))?;
                t.dump_csv(BufWriter::new(file))?;
            }

            let throughput = stream.len() as f64 / elapsed.as_secs_f64().max(1e-9) / 1e6;
            let base = ExperimentRow {
                algorithm: "pooled_cuckoo".into(),
                dataset: dataset.to_string(),
                memory_bytes: t.memory_bytes(),
                pool_config: pool_config.to_string(),
                failure_strategy: "migrate".into(),
                metric_name: String::new(),
                metric_value: 0.0,
                seed,
                throughput_mops: throughput,
                runtime_ns: elapsed.as_nanos(),
            };
            for (name, value) in [
                ("load_factor", t.load_factor()),
                ("exact", exact),
                ("table_full_count", table_full as f64),
                ("bits_per_entry", t.bits_per_entry()),
            ] {
                sink.write(&ExperimentRow {
                    metric_name: name.into(),
                    metric_value: value,
                    ..base.clone()
                })?;
            }
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn tables(args: &TablesArgs) -> Result<()> {
    let configs: Vec<PoolConfig> = if args.all_presets {
        presets().to_vec()
    } else if let Some(spec) = &args.pool_config {
        vec![spec.parse().map_err(|e| usage(format!("{e}")))?]
    } else {
        return Err(usage("pass --pool-config n,k,s,i or --all-presets"));
    };

    let cache_dir: Option<PathBuf> = if args.cache {
        match &args.cache_dir {
            Some(dir) => Some(dir.clone()),
            None => table_dir_from_env(),
        }
        .or_else(|| {
            eprintln!("--cache given but no --cache-dir or COUNTERPOOLS_TABLE_DIR; skipping");
            None
        })
    } else {
        None
    };

    let mut out = io::stdout().lock();
    for config in configs {
        let units = config.growth_units();
        let offsets = OffsetTable::cached(config, cache_dir.as_deref())?;
        let entries = offsets.entry_count();
        let config_bits = if entries <= 1 {
            1
        } else {
            64 - (entries - 1).leading_zeros()
        };
        let snb_table = SnbTable::cached(units, config.counters(), cache_dir.as_deref())?;
        writeln!(out, "pool config {config}: growth units {units}, configurations {entries} ({config_bits}-bit config words)")?;
        writeln!(
            out,
            "  offset table: {entries} entries, {} bytes serialized",
            offsets.serialized_len()
        )?;
        writeln!(
            out,
            "  ranking table: budget {units}, parts {}, {} bytes serialized",
            config.counters(),
            snb_table.serialized_len()
        )?;

        // Round-trip both tables through their file formats.
        let mut buf = Vec::new();
        offsets.write_to(&mut buf)?;
        let offsets_back = OffsetTable::read_from(&buf[..])?;
        let mut buf2 = Vec::new();
        offsets_back.write_to(&mut buf2)?;
        let mut snb_buf = Vec::new();
        snb_table.write_to(&mut snb_buf)?;
        let snb_back = SnbTable::read_from(&snb_buf[..])?;
        let ok = buf == buf2 && snb_back == snb_table;
        writeln!(out, "  round-trip: {}", if ok { "ok" } else { "MISMATCH" })?;
        anyhow::ensure!(ok, "serialization round-trip failed for {config}");

        if let Some(dir) = &cache_dir {
            writeln!(out, "  cached under {}", dir.display())?;
        }
    }
    Ok(())
}
