//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (run with `cargo test -p counterpools-cli --test
//! acceptance -- --nocapture` to see them as they go).

use std::collections::HashMap;
use std::panic::{catch_unwind, resume_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use counterpools::hashing::SplitMix64;
use counterpools::histogram::PooledCuckooTable;
use counterpools::pool::{presets, OffsetTable, PoolUpdateOutcome, PRESET_64_4_0_1};
use counterpools::sketch::{Baseline32Sketch, FailureStrategy, FrequencyEstimator, PooledSketch};
use counterpools::snb::{snb, ConfigNumber, SizePartition, SnbTable};
use counterpools::workload::{generate_zipf, MetricsAccumulator, ZipfSpec};
use counterpools_testkit::{enumerate_partitions, ModelOutcome, ModelPool};

fn criterion(number: u32, name: &str, budget: Duration, body: impl FnOnce()) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let elapsed = start.elapsed();
    let status = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("acceptance criterion {number:>2} {status} ({elapsed:.2?}): {name}");
    if let Err(panic) = outcome {
        resume_unwind(panic);
    }
    assert!(
        elapsed <= budget,
        "criterion {number} exceeded its {budget:?} budget: {elapsed:?}"
    );
}

fn zipf_stream(alpha: f64, length: u64, seed: u64) -> Vec<u64> {
    generate_zipf(ZipfSpec {
        alpha,
        universe: ZipfSpec::DEFAULT_UNIVERSE,
        length,
        seed,
    })
    .unwrap()
    .collect()
}

#[test]
fn c01_exact_constants() {
    let table = SnbTable::build(64, 5).unwrap();
    criterion(
        1,
        "exact ranking constants",
        Duration::from_millis(1),
        || {
            assert_eq!(snb(64, 5).unwrap(), 814_385);
            assert_eq!(snb(64, 4).unwrap(), 47_905);
            assert_eq!(snb(8, 4).unwrap(), 165);
            let partition = SizePartition::new(vec![26, 20, 8, 0, 10], 64).unwrap();
            let rank = table.encode(&partition).unwrap();
            assert_eq!(rank, ConfigNumber(711_909));
            let back = table.decode(rank, 64, 5).unwrap();
            assert_eq!(back, partition);
        },
    );
}

#[test]
fn c02_worked_increment_example() {
    let table = OffsetTable::build(PRESET_64_4_0_1).unwrap();
    criterion(2, "worked pool increment", Duration::from_millis(1), || {
        // Counter values (C0..C3) = (713, 0, 255, 616804), widths
        // leftmost-first (46, 8, 0, 10), configuration 46699.
        let mut pool = counterpools::pool::Pool {
            memory: (616_804u64 << 18) | (255 << 10) | 713,
            config: 46_699,
        };
        let widths = table.counter_widths(&pool);
        assert_eq!(widths.parts(), &[10, 0, 8, 46]);
        let outcome = table.increment(&mut pool, 2, 1).unwrap();
        assert_eq!(outcome, PoolUpdateOutcome::Resized);
        assert_eq!(pool.config, 46_509);
        assert_eq!(pool.memory, 0x4b_4b24_02c9);
        assert_eq!(table.counter_widths(&pool).parts(), &[10, 0, 9, 45]);
    });
}

#[test]
fn c03_bijection_suite() {
    criterion(
        3,
        "exhaustive bijection n<=12 k<=5",
        Duration::from_secs(5),
        || {
            let table = SnbTable::build(12, 5).unwrap();
            for n in 0..=12u64 {
                for k in 1..=5u32 {
                    let all = enumerate_partitions(n, k);
                    assert_eq!(all.len() as u64, snb(n, k as u64).unwrap());
                    let mut decoded = vec![0u64; k as usize];
                    for (rank, parts) in all.iter().enumerate() {
                        assert_eq!(
                            table.encode_parts(parts).unwrap(),
                            rank as u64,
                            "n={n} k={k} parts={parts:?}"
                        );
                        table.decode_parts(rank as u64, n, &mut decoded).unwrap();
                        assert_eq!(&decoded, parts);
                    }
                }
            }
        },
    );
}

#[test]
fn c04_pool_differential() {
    criterion(
        4,
        "10^6-op differential vs model",
        Duration::from_secs(30),
        || {
            let mut total_ops = 0u64;
            let mut total_failures = 0u64;
            for (idx, config) in presets().into_iter().enumerate() {
                let table = OffsetTable::build(config).unwrap();
                let mut pool = table.fresh_pool();
                let mut model = ModelPool::fresh(config);
                let mut rng = SplitMix64::new(0xACCE97 + idx as u64);
                let k = config.counters() as u64;
                for step in 0..250_000u64 {
                    let j = rng.next_below(k) as usize;
                    let value = model.value(j);
                    let weight: i64 = match rng.next_below(100) {
                        0..=59 => rng.next_below(16) as i64,
                        60..=79 => (1i64 << rng.next_below(50)) - 1,
                        80..=94 => {
                            if value == 0 {
                                1
                            } else {
                                -((rng.next_below(value.min(1 << 62)) + 1) as i64)
                            }
                        }
                        _ => 0,
                    };
                    let real = table.increment(&mut pool, j, weight).unwrap();
                    let model_out = model.increment(j, weight).unwrap();
                    let agree = matches!(
                        (real, model_out),
                        (PoolUpdateOutcome::InPlace, ModelOutcome::InPlace)
                            | (PoolUpdateOutcome::Resized, ModelOutcome::Resized)
                            | (PoolUpdateOutcome::PoolFailure, ModelOutcome::Failed)
                    );
                    assert!(
                        agree,
                        "{config} step {step}: {real:?} vs {model_out:?} (j={j}, w={weight})"
                    );
                    for slot in 0..k as usize {
                        assert_eq!(
                            table.read(&pool, slot).unwrap(),
                            model.value(slot),
                            "{config} step {step} counter {slot}"
                        );
                    }
                    total_ops += 1;
                    if real == PoolUpdateOutcome::PoolFailure {
                        total_failures += 1;
                        if rng.next_below(4) == 0 {
                            pool = table.fresh_pool();
                            model = ModelPool::fresh(config);
                        }
                    }
                }
            }
            assert!(total_ops >= 1_000_000);
            assert!(total_failures > 0, "the walk never exercised pool failure");
        },
    );
}

#[test]
fn c05_table_sizes() {
    criterion(
        5,
        "offset table entry count and size",
        Duration::from_secs(10),
        || {
            let table = OffsetTable::build(PRESET_64_4_0_1).unwrap();
            assert_eq!(table.entry_count(), 47_905);
            let mut buf = Vec::new();
            table.write_to(&mut buf).unwrap();
            assert_eq!(buf.len(), table.serialized_len());
            assert!(buf.len() <= 192_000, "serialized to {} bytes", buf.len());
            let reported = 187.0 * 1024.0;
            assert!(buf.len() as f64 <= reported * 1.03);
        },
    );
}

#[test]
fn c06_sketch_overestimation() {
    criterion(
        6,
        "overestimation across the matrix",
        Duration::from_secs(60),
        || {
            let table = Arc::new(OffsetTable::build(PRESET_64_4_0_1).unwrap());
            let strategies = [
                FailureStrategy::Ignore,
                FailureStrategy::Offload { fraction: 0.1 },
                FailureStrategy::Merge,
            ];
            for alpha in [0.6, 1.0, 1.4] {
                for seed in [1u64, 2, 3] {
                    let stream = zipf_stream(alpha, 100_000, seed);
                    for strategy in strategies {
                        for budget in [16 * 1024usize, 64 * 1024] {
                            for conservative in [false, true] {
                                let mut sk = PooledSketch::with_memory(
                                    budget,
                                    4,
                                    Arc::clone(&table),
                                    strategy,
                                    seed,
                                )
                                .unwrap();
                                let mut truth: HashMap<u64, u64> = HashMap::new();
                                for &key in &stream {
                                    if conservative {
                                        sk.conservative_update(key, 1);
                                    } else {
                                        sk.update(key, 1);
                                    }
                                    let t = truth.entry(key).or_insert(0);
                                    *t += 1;
                                    assert!(
                                        sk.query(key) >= *t,
                                        "alpha {alpha} seed {seed} {strategy} {budget}B \
                                     cu={conservative}: undercount on arrival"
                                    );
                                }
                                for (&key, &count) in &truth {
                                    assert!(sk.query(key) >= count, "final undercount for {key}");
                                }
                            }
                        }
                    }
                }
            }
        },
    );
}

/// Shared experiment for criteria 7 and 8: pooled versus fixed-width
/// baseline at equal memory, three seeds, five sizes.
struct TrendPoint {
    pooled_nrmse: f64,
    baseline_nrmse: f64,
    pooled_are: f64,
    baseline_are: f64,
}

struct TrendData {
    // per seed, per size
    points: Vec<Vec<TrendPoint>>,
}

const TREND_SIZES: [usize; 5] = [128 << 10, 256 << 10, 512 << 10, 768 << 10, 1 << 20];
const TREND_SEEDS: [u64; 3] = [1, 2, 3];
const TREND_LENGTH: u64 = 5_000_000;
const TREND_THETA: f64 = 1.0 / 4096.0; // 2^-12

fn run_trend_point<E: FrequencyEstimator>(est: &mut E, stream: &[u64]) -> (f64, f64) {
    let mut acc = MetricsAccumulator::new();
    for &key in stream {
        est.update(key, 1);
        acc.observe(key, est.query(key));
    }
    let nrmse = acc.nrmse().unwrap();
    let are = acc
        .heavy_hitter_are(TREND_THETA, |key| est.query(key))
        .expect("zipf 1.0 always has heavy hitters at 2^-12");
    (nrmse, are)
}

fn trend_data() -> &'static TrendData {
    static DATA: OnceLock<TrendData> = OnceLock::new();
    DATA.get_or_init(|| {
        let table = Arc::new(OffsetTable::build(PRESET_64_4_0_1).unwrap());
        let mut points = Vec::new();
        for &seed in &TREND_SEEDS {
            let stream = zipf_stream(1.0, TREND_LENGTH, seed);
            let mut per_size = Vec::new();
            for &budget in &TREND_SIZES {
                let mut pooled = PooledSketch::with_memory(
                    budget,
                    4,
                    Arc::clone(&table),
                    FailureStrategy::Merge,
                    seed,
                )
                .unwrap();
                let (pooled_nrmse, pooled_are) = run_trend_point(&mut pooled, &stream);
                let mut baseline = Baseline32Sketch::with_memory(budget, 4, seed).unwrap();
                let (baseline_nrmse, baseline_are) = run_trend_point(&mut baseline, &stream);
                per_size.push(TrendPoint {
                    pooled_nrmse,
                    baseline_nrmse,
                    pooled_are,
                    baseline_are,
                });
            }
            points.push(per_size);
        }
        TrendData { points }
    })
}

#[test]
fn c07_accuracy_trend() {
    criterion(
        7,
        "on-arrival NRMSE vs baseline",
        Duration::from_secs(600),
        || {
            let data = trend_data();
            for (seed_idx, per_size) in data.points.iter().enumerate() {
                let wins = per_size
                    .iter()
                    .filter(|p| p.pooled_nrmse <= p.baseline_nrmse)
                    .count();
                assert!(
                    wins >= 4,
                    "seed {}: pooled at or below baseline NRMSE at only {wins} of 5 sizes: {:?}",
                    TREND_SEEDS[seed_idx],
                    per_size
                        .iter()
                        .map(|p| (p.pooled_nrmse, p.baseline_nrmse))
                        .collect::<Vec<_>>()
                );
            }
        },
    );
}

#[test]
fn c08_heavy_hitter_trend() {
    criterion(
        8,
        "heavy-hitter ARE vs baseline",
        Duration::from_secs(600),
        || {
            let data = trend_data();
            for (seed_idx, per_size) in data.points.iter().enumerate() {
                let wins = per_size
                    .iter()
                    .filter(|p| p.pooled_are <= p.baseline_are)
                    .count();
                assert!(
                    wins >= 4,
                    "seed {}: pooled at or below baseline ARE at only {wins} of 5 sizes: {:?}",
                    TREND_SEEDS[seed_idx],
                    per_size
                        .iter()
                        .map(|p| (p.pooled_are, p.baseline_are))
                        .collect::<Vec<_>>()
                );
            }
        },
    );
}

#[test]
fn c09_histogram_exactness() {
    criterion(
        9,
        "exact histogram under zipf load",
        Duration::from_secs(60),
        || {
            let table = Arc::new(OffsetTable::build(PRESET_64_4_0_1).unwrap());
            let mut t = PooledCuckooTable::new(17, 32, Arc::clone(&table), 1).unwrap();
            assert_eq!(t.bits_per_entry(), 36.0);
            assert_eq!(t.bits_per_entry() / 8.0, 4.5);

            let stream = zipf_stream(1.0, 1_000_000, 7);
            let mut oracle: HashMap<u64, u64> = HashMap::new();
            for &key in &stream {
                t.increment(key, 1)
                    .expect("sized for at most 85% load: no table-full allowed");
                *oracle.entry(key).or_insert(0) += 1;
            }
            assert!(t.load_factor() <= 0.85, "load factor {}", t.load_factor());
            assert_eq!(t.len(), oracle.len());
            for (&key, &count) in &oracle {
                assert_eq!(t.query(key), count, "key {key}");
            }
        },
    );
}

#[test]
fn c10_cli_throughput_csv() {
    criterion(
        10,
        "CLI throughput CSV and stability",
        Duration::from_secs(120),
        || {
            let expected_header = "algorithm,dataset,memory_bytes,pool_config,failure_strategy,\
metric_name,metric_value,seed,throughput_mops,runtime_ns";
            let mut rates = Vec::new();
            for _ in 0..5 {
                let output = Command::new(env!("CARGO_BIN_EXE_counterpools"))
                    .args([
                        "bench-sketch",
                        "--algo",
                        "cm",
                        "--memory-bytes",
                        "64KB",
                        "--dataset",
                        "zipf:1.0:200000",
                        "--zipf-universe",
                        "65536",
                        "--metric",
                        "throughput",
                        "--reps",
                        "3",
                        "--seeds",
                        "9",
                    ])
                    .output()
                    .expect("binary runs");
                assert!(output.status.success(), "{output:?}");
                let text = String::from_utf8(output.stdout).unwrap();
                let mut lines = text.lines();
                assert_eq!(lines.next().unwrap(), expected_header);
                let row = lines.next().expect("one data row");
                let fields = parse_csv_row(row);
                assert_eq!(fields.len(), 10);
                assert_eq!(fields[0], "cm");
                assert_eq!(fields[3], "64,4,0,1");
                assert_eq!(fields[5], "throughput_mops");
                let _memory: usize = fields[2].parse().unwrap();
                let _seed: u64 = fields[7].parse().unwrap();
                let _runtime: u128 = fields[9].parse().unwrap();
                let mops: f64 = fields[8].parse().unwrap();
                assert!(mops > 0.0, "throughput must be nonzero");
                rates.push(mops);
            }
            let mean = rates.iter().sum::<f64>() / rates.len() as f64;
            let std = (rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / (rates.len() - 1) as f64)
                .sqrt();
            for &r in &rates {
                assert!(
                    (r - mean).abs() <= 3.0 * std || std == 0.0,
                    "rate {r} outside 3 sigma of {mean} +/- {std}"
                );
            }
        },
    );
}

/// Minimal RFC 4180 row parser for checking CLI output.
fn parse_csv_row(row: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut field = String::new();
    let mut chars = row.chars().peekable();
    let mut quoted = false;
    while let Some(c) = chars.next() {
        match c {
            '"' if field.is_empty() && !quoted => quoted = true,
            '"' if quoted => {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    field.push('"');
                } else {
                    quoted = false;
                }
            }
            ',' if !quoted => {
                fields.push(std::mem::take(&mut field));
            }
            c => field.push(c),
        }
    }
    fields.push(field);
    fields
}
