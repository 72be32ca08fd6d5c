//! Pool operations checked value-for-value against the reference model.

use counterpools::hashing::SplitMix64;
use counterpools::pool::{presets, OffsetTable, Pool, PoolConfig, PoolUpdateOutcome};
use counterpools_testkit::{ModelOutcome, ModelPool};
use proptest::prelude::*;

fn outcomes_agree(real: PoolUpdateOutcome, model: ModelOutcome) -> bool {
    matches!(
        (real, model),
        (PoolUpdateOutcome::InPlace, ModelOutcome::InPlace)
            | (PoolUpdateOutcome::Resized, ModelOutcome::Resized)
            | (PoolUpdateOutcome::PoolFailure, ModelOutcome::Failed)
    )
}

/// Drives `ops` random increments through both implementations, asserting
/// equal values and identical failure timing after every step.
fn differential_run(config: PoolConfig, seed: u64, ops: u64) -> u64 {
    let table = OffsetTable::build(config).unwrap();
    let mut pool = table.fresh_pool();
    let mut model = ModelPool::fresh(config);
    let mut rng = SplitMix64::new(seed);
    let k = config.counters() as usize;
    let mut failures = 0u64;
    for step in 0..ops {
        let j = rng.next_below(k as u64) as usize;
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
        assert!(
            outcomes_agree(real, model_out),
            "{config} step {step}: counter {j} weight {weight}: {real:?} vs {model_out:?}"
        );
        if real == PoolUpdateOutcome::PoolFailure {
            failures += 1;
            // Occasionally reset so the walk explores fresh states.
            if rng.next_below(4) == 0 {
                pool = table.fresh_pool();
                model = ModelPool::fresh(config);
            }
        }
        for slot in 0..k {
            assert_eq!(
                table.read(&pool, slot).unwrap(),
                model.value(slot),
                "{config} step {step}: counter {slot} diverged"
            );
        }
        let widths = table.counter_widths(&pool);
        assert_eq!(widths.parts().iter().sum::<u64>(), config.bits() as u64);
    }
    failures
}

#[test]
fn default_preset_tracks_the_model() {
    let failures = differential_run(presets()[0], 11, 50_000);
    assert!(failures > 0, "the walk should have hit pool failures");
}

#[test]
fn all_presets_track_the_model() {
    for (idx, config) in presets().into_iter().enumerate() {
        differential_run(config, 1000 + idx as u64, 20_000);
    }
}

#[test]
fn canonical_widths_after_every_operation() {
    // Non-leftmost counters always sit at the minimal width covering their
    // value.
    let config = presets()[0];
    let table = OffsetTable::build(config).unwrap();
    let mut pool = table.fresh_pool();
    let mut rng = SplitMix64::new(5);
    for _ in 0..20_000 {
        let j = rng.next_below(4) as usize;
        let w = rng.next_below(1 << 12) as i64;
        let _ = table.increment(&mut pool, j, w).unwrap();
        let widths = table.counter_widths(&pool);
        for slot in 0..3usize {
            let value = table.read(&pool, slot).unwrap();
            let minimal = 64 - value.leading_zeros();
            assert_eq!(widths.parts()[slot], minimal as u64);
        }
    }
}

// Small proptest walk over every preset: the same sequence must produce
// the same values and the same failure steps in both implementations.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn short_walks_match_the_model(
        preset_idx in 0usize..4,
        steps in proptest::collection::vec((0u64..6, 0i64..(1 << 40)), 1..80)
    ) {
        let config = presets()[preset_idx];
        let table = OffsetTable::build(config).unwrap();
        let mut pool = table.fresh_pool();
        let mut model = ModelPool::fresh(config);
        let k = config.counters() as u64;
        for (j, w) in steps {
            let j = (j % k) as usize;
            let real = table.increment(&mut pool, j, w).unwrap();
            let model_out = model.increment(j, w).unwrap();
            prop_assert!(outcomes_agree(real, model_out));
            for slot in 0..k as usize {
                prop_assert_eq!(table.read(&pool, slot).unwrap(), model.value(slot));
            }
        }
    }
}

#[test]
fn pool_struct_round_trips_through_raw_parts() {
    // Array layers store memory and config words separately; splitting and
    // rejoining must not lose state.
    let table = OffsetTable::build(presets()[0]).unwrap();
    let mut pool = table.fresh_pool();
    table.increment(&mut pool, 1, 777).unwrap();
    let (mem, cfg) = (pool.memory, pool.config as u16);
    let rebuilt = Pool {
        memory: mem,
        config: cfg as u32,
    };
    assert_eq!(table.read(&rebuilt, 1).unwrap(), 777);
}
