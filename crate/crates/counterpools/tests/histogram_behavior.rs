//! Histogram exactness with shadow-key verification.

use std::collections::HashMap;
use std::sync::Arc;

use counterpools::hashing::SplitMix64;
use counterpools::histogram::PooledCuckooTable;
use counterpools::pool::{OffsetTable, PRESET_64_4_0_1};
use counterpools::workload::{generate_zipf, ZipfSpec};
use counterpools_testkit::CountingOracle;

fn table() -> Arc<OffsetTable> {
    Arc::new(OffsetTable::build(PRESET_64_4_0_1).unwrap())
}

#[test]
fn zipf_stream_counts_exactly() {
    let mut t = PooledCuckooTable::new(12, 32, table(), 1).unwrap();
    let keys = generate_zipf(ZipfSpec {
        alpha: 1.0,
        universe: 1 << 14,
        length: 100_000,
        seed: 5,
    })
    .unwrap();
    let mut oracle = CountingOracle::new();
    for key in keys {
        t.increment(key, 1).expect("sized for this stream");
        oracle.record(key);
    }
    assert!(t.load_factor() < 0.85);
    assert_eq!(t.len(), oracle.counts().len());
    for (&key, &count) in oracle.counts() {
        assert_eq!(t.query(key), count);
    }
    assert!(oracle.verify_against_second_pass());
}

#[test]
fn every_slot_reconstructs_its_key() {
    // Shadow map: every key we inserted must be recoverable from its slot
    // alone, and nothing else may appear.
    let mut t = PooledCuckooTable::new(10, 40, table(), 9).unwrap();
    let mut shadow: HashMap<u64, u64> = HashMap::new();
    let mut g = SplitMix64::new(77);
    for _ in 0..3000 {
        let key = g.next_u64() & ((1 << 40) - 1);
        let w = 1 + g.next_below(100);
        t.increment(key, w).unwrap();
        *shadow.entry(key).or_insert(0) += w;
    }
    let mut seen = 0usize;
    for (_bucket, _slot, key, count) in t.entries() {
        assert_eq!(shadow.get(&key), Some(&count), "slot decoded to key {key}");
        seen += 1;
    }
    assert_eq!(seen, shadow.len());
}

#[test]
fn migration_preserves_counts_under_pressure() {
    // Small table, heavy keys: bit exhaustion forces constant migration.
    let mut t = PooledCuckooTable::new(5, 32, table(), 13).unwrap();
    let mut oracle = CountingOracle::new();
    let mut g = SplitMix64::new(31);
    for _ in 0..60_000 {
        let key = g.next_below(70);
        t.increment(key, 1).expect("70 keys fit 128 slots");
        oracle.record(key);
    }
    for (&key, &count) in oracle.counts() {
        assert_eq!(t.query(key), count);
    }
}

#[test]
fn load_factor_counts_distinct_inserts() {
    let mut t = PooledCuckooTable::new(6, 32, table(), 2).unwrap();
    assert_eq!(t.load_factor(), 0.0);
    for key in 0..100u64 {
        t.increment(key, 1).unwrap();
    }
    let slots = (t.buckets() * t.slots_per_bucket()) as f64;
    assert!((t.load_factor() - 100.0 / slots).abs() < 1e-12);
    assert_eq!(t.len(), 100);
}

#[test]
fn per_entry_costs_translate_to_load_factors() {
    // At a 10 bytes-per-flow budget, the load factor a scheme runs at is
    // its per-entry byte cost over 10: plain 8-byte entries run at 80%,
    // compressed-key fixed-counter entries (2 key + 4 value bytes) at 60%,
    // and pooled buckets at 4.5 bytes per entry at 45%.
    let t = PooledCuckooTable::new(17, 32, table(), 1).unwrap();
    let budget_per_flow: f64 = 10.0;
    let pooled = t.bits_per_entry() / 8.0;
    assert_eq!(pooled, 4.5);
    assert!((8.0 / budget_per_flow - 0.80).abs() < 1e-12);
    assert!((6.0 / budget_per_flow - 0.60).abs() < 1e-12);
    assert!((pooled / budget_per_flow - 0.45).abs() < 1e-12);
}

#[test]
fn weighted_increments_accumulate() {
    let mut t = PooledCuckooTable::new(4, 32, table(), 3).unwrap();
    t.increment(11, 5).unwrap();
    t.increment(11, 7).unwrap();
    assert_eq!(t.query(11), 12);
    assert_eq!(t.query(12), 0);
}
