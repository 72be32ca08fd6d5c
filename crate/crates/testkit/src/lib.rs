//! Reference models and oracles for the counterpools test suites.
//!
//! Everything here recomputes behavior from first principles, independently
//! of the code paths under test: partitions are enumerated rather than
//! unranked, pool state is modeled as plain integers with widths recomputed
//! from scratch, and counts are kept in hash maps. Tests compare the real
//! structures against these models.

use std::collections::HashMap;

use counterpools::pool::PoolConfig;

/// All k-part partitions of `n` in lexicographic order, by brute
/// enumeration.
pub fn enumerate_partitions(n: u64, k: u32) -> Vec<Vec<u64>> {
    fn rec(remaining: u64, parts_left: u32, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if parts_left == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=remaining {
            prefix.push(first);
            rec(remaining - first, parts_left - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if k >= 1 {
        rec(n, k, &mut Vec::new(), &mut out);
    }
    out
}

/// `snb(n, k)` by summation over first-part values rather than a binomial
/// formula.
pub fn slow_snb(n: u64, k: u32) -> u64 {
    if k == 0 {
        return u64::from(n == 0);
    }
    if k == 1 {
        return 1;
    }
    (0..=n).map(|first| slow_snb(n - first, k - 1)).sum()
}

/// What a pool operation did, by the model's reckoning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelOutcome {
    /// Applied without any width change.
    InPlace,
    /// Applied; the counter's canonical width changed.
    Resized,
    /// The widths the new values need exceed the pool. State unchanged.
    Failed,
}

/// Layout-independent reference pool: exact counter values plus a failure
/// predicate computed from canonical widths alone.
///
/// A value's canonical width is `s + i*m` for the minimal `m` covering it;
/// the last counter also permanently carries the remainder bits that do not
/// divide into growth units. An operation fails exactly when the canonical
/// widths of the prospective values no longer fit in `n` bits.
#[derive(Debug, Clone)]
pub struct ModelPool {
    config: PoolConfig,
    values: Vec<u64>,
}

impl ModelPool {
    pub fn fresh(config: PoolConfig) -> Self {
        Self {
            config,
            values: vec![0; config.counters() as usize],
        }
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn value(&self, j: usize) -> u64 {
        self.values[j]
    }

    fn canonical_width(&self, j: usize, value: u64) -> u64 {
        let cfg = &self.config;
        let bits = 64 - value.leading_zeros();
        let remainder = if j == cfg.counters() as usize - 1 {
            (cfg.bits() - cfg.counters() * cfg.start_bits()) % cfg.step_bits()
        } else {
            0
        };
        let base = cfg.start_bits() + remainder;
        let need = bits.saturating_sub(base);
        (base + need.div_ceil(cfg.step_bits()) * cfg.step_bits()) as u64
    }

    fn demand(&self, values: &[u64]) -> u64 {
        values
            .iter()
            .enumerate()
            .map(|(j, &v)| self.canonical_width(j, v))
            .sum()
    }

    /// Applies `weight` to counter `j` if the resulting canonical demand
    /// fits the pool; otherwise reports failure and changes nothing.
    /// Returns `None` when the operation is rejected outright (negative
    /// result), mirroring the real contract error.
    pub fn increment(&mut self, j: usize, weight: i64) -> Option<ModelOutcome> {
        let old = self.values[j];
        let new = old as i128 + weight as i128;
        if new < 0 {
            return None;
        }
        if new > u64::MAX as i128 {
            return Some(ModelOutcome::Failed);
        }
        let new = new as u64;
        let mut prospective = self.values.clone();
        prospective[j] = new;
        if self.demand(&prospective) > self.config.bits() as u64 {
            return Some(ModelOutcome::Failed);
        }
        let resized = self.canonical_width(j, new) != self.canonical_width(j, old)
            && j != self.config.counters() as usize - 1;
        self.values = prospective;
        Some(if resized {
            ModelOutcome::Resized
        } else {
            ModelOutcome::InPlace
        })
    }
}

/// Exact frequency oracle with a second, independently coded counting path
/// for self-checks.
#[derive(Debug, Default)]
pub struct CountingOracle {
    counts: HashMap<u64, u64>,
    log: Vec<u64>,
}

impl CountingOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, key: u64) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.log.push(key);
    }

    pub fn count(&self, key: u64) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &HashMap<u64, u64> {
        &self.counts
    }

    /// Recounts the log by sorting and run-length encoding, and checks the
    /// result against the hash map.
    pub fn verify_against_second_pass(&self) -> bool {
        let mut sorted = self.log.clone();
        sorted.sort_unstable();
        let mut recount: HashMap<u64, u64> = HashMap::new();
        let mut idx = 0;
        while idx < sorted.len() {
            let key = sorted[idx];
            let mut run = 0u64;
            while idx < sorted.len() && sorted[idx] == key {
                run += 1;
                idx += 1;
            }
            recount.insert(key, run);
        }
        recount == self.counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use counterpools::pool::PRESET_64_4_0_1;

    #[test]
    fn enumeration_counts_match_slow_snb() {
        for n in 0..8u64 {
            for k in 1..5u32 {
                assert_eq!(enumerate_partitions(n, k).len() as u64, slow_snb(n, k));
            }
        }
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let all = enumerate_partitions(5, 3);
        for pair in all.windows(2) {
            assert!(pair[0] < pair[1]);
        }
    }

    #[test]
    fn model_fails_when_demand_exceeds_the_pool() {
        let mut m = ModelPool::fresh(PRESET_64_4_0_1);
        assert_eq!(m.increment(0, (1 << 40) - 1), Some(ModelOutcome::Resized));
        assert_eq!(m.increment(1, (1 << 23) - 1), Some(ModelOutcome::Resized));
        // 40 + 23 bits used; exactly one bit left.
        assert_eq!(m.increment(2, 7), Some(ModelOutcome::Failed));
        assert_eq!(m.value(2), 0);
        assert_eq!(m.increment(2, 1), Some(ModelOutcome::Resized));
        assert_eq!(m.increment(2, 1), Some(ModelOutcome::Failed));
        assert_eq!(m.increment(0, -100), Some(ModelOutcome::InPlace));
        assert_eq!(m.increment(0, i64::MIN), None);
    }

    #[test]
    fn oracle_double_pass_agrees() {
        let mut o = CountingOracle::new();
        for key in [5u64, 5, 1, 9, 5, 1] {
            o.record(key);
        }
        assert!(o.verify_against_second_pass());
        assert_eq!(o.count(5), 3);
        assert_eq!(o.count(2), 0);
    }
}
