//! Count-Min and Conservative-Update sketches over pool arrays.
//!
//! Each row is an array of pools; a key hashes to one global counter index
//! per row (`pool = index / k`, `slot = index % k`). Estimates are the
//! minimum over rows and never undercount. When a pool fails, one of three
//! recovery strategies applies:
//!
//! * **Ignore** drops the pool; its row no longer contributes to estimates
//!   for keys landing there.
//! * **Offload** freezes the pool and routes its counters' updates into a
//!   small secondary array of fixed 32-bit counters, keyed by the global
//!   counter index; estimates add the frozen value and the secondary's.
//! * **Merge** rebuilds the pool as `ceil(k/2)` fixed equal-width counters,
//!   each starting at the sum of its constituent pair, escalating to one
//!   64-bit counter if a sum does not fit.
//!
//! A fixed-width 32-bit sketch ([`Baseline32Sketch`]) is provided for
//! equal-memory comparisons.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::hashing::{hash_key, SplitMix64};
use crate::pool::{OffsetTable, PoolUpdateOutcome};

/// Bits charged per pool for its configuration word at the array level.
pub const CONFIG_BITS: u32 = 16;
/// Side bits charged per pool: the failed flag and the merged-mode marker.
pub const FLAG_BITS: u32 = 2;

/// Common surface for the pooled sketch and the fixed-width baseline.
///
/// Weights are positive and at most `i64::MAX` (updates panic beyond
/// that); zero-weight updates are no-ops.
pub trait FrequencyEstimator {
    /// Count-Min update: add `weight` to the key's counter in every row.
    fn update(&mut self, key: u64, weight: u64);
    /// Conservative update: raise each row's counter for the key to
    /// `max(current, query(key) + weight)`.
    fn conservative_update(&mut self, key: u64, weight: u64);
    /// Point estimate; at least the key's true total weight.
    fn query(&self, key: u64) -> u64;
    /// Bytes of counter storage this estimator accounts for.
    fn memory_bytes(&self) -> usize;
}

/// What to do with a pool whose counters no longer fit its bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FailureStrategy {
    /// Stop reading and writing the pool entirely.
    Ignore,
    /// Freeze the pool and divert its traffic to a secondary sketch sized
    /// to this fraction of primary memory.
    Offload { fraction: f64 },
    /// Collapse the pool into fewer fixed-width counters.
    Merge,
}

impl FailureStrategy {
    pub const DEFAULT_OFFLOAD_FRACTION: f64 = 0.10;
}

impl fmt::Display for FailureStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureStrategy::Ignore => write!(f, "ignore"),
            FailureStrategy::Offload { fraction } => write!(f, "offload:{fraction}"),
            FailureStrategy::Merge => write!(f, "merge"),
        }
    }
}

impl FromStr for FailureStrategy {
    type Err = SketchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ignore" => Ok(FailureStrategy::Ignore),
            "merge" => Ok(FailureStrategy::Merge),
            "offload" => Ok(FailureStrategy::Offload {
                fraction: Self::DEFAULT_OFFLOAD_FRACTION,
            }),
            other => {
                if let Some(frac) = other.strip_prefix("offload:") {
                    let fraction: f64 = frac
                        .parse()
                        .map_err(|_| SketchError::InvalidParam("bad offload fraction"))?;
                    if !(fraction > 0.0 && fraction < 1.0) {
                        return Err(SketchError::InvalidParam(
                            "offload fraction must be in (0, 1)",
                        ));
                    }
                    Ok(FailureStrategy::Offload { fraction })
                } else {
                    Err(SketchError::InvalidParam(
                        "strategy must be ignore, offload[:frac], or merge",
                    ))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SketchError {
    InvalidParam(&'static str),
    /// The memory budget cannot hold even one pool per row.
    BudgetTooSmall {
        budget_bytes: usize,
    },
    /// The pool family has too many configurations for 16-bit storage.
    ConfigTooWide {
        entries: u64,
    },
}

impl fmt::Display for SketchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SketchError::InvalidParam(why) => write!(f, "{why}"),
            SketchError::BudgetTooSmall { budget_bytes } => {
                write!(f, "{budget_bytes} bytes cannot hold one pool per row")
            }
            SketchError::ConfigTooWide { entries } => {
                write!(f, "{entries} configurations exceed 16-bit storage")
            }
        }
    }
}

impl std::error::Error for SketchError {}

struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    fn new(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
        }
    }

    #[inline]
    fn get(&self, idx: usize) -> bool {
        self.words[idx / 64] >> (idx % 64) & 1 != 0
    }

    #[inline]
    fn set(&mut self, idx: usize) {
        self.words[idx / 64] |= 1 << (idx % 64);
    }
}

struct SecondarySketch {
    counters: Vec<u32>,
    seed: u64,
}

impl SecondarySketch {
    #[inline]
    fn index(&self, row: usize, counter_index: u64) -> usize {
        let key = (row as u64) << 56 ^ counter_index;
        (hash_key(key, self.seed) % self.counters.len() as u64) as usize
    }

    fn add(&mut self, row: usize, counter_index: u64, weight: u64) {
        let idx = self.index(row, counter_index);
        let add = weight.min(u32::MAX as u64) as u32;
        self.counters[idx] = self.counters[idx].saturating_add(add);
    }

    fn estimate(&self, row: usize, counter_index: u64) -> u64 {
        self.counters[self.index(row, counter_index)] as u64
    }
}

/// Count-Min/Conservative-Update sketch whose counter arrays are pools.
pub struct PooledSketch {
    table: Arc<OffsetTable>,
    rows: usize,
    pools_per_row: usize,
    memories: Vec<u64>,
    configs: Vec<u16>,
    failed: BitSet,
    merged: BitSet,
    row_seeds: Vec<u64>,
    strategy: FailureStrategy,
    secondary: Option<SecondarySketch>,
    pool_failures: u64,
}

impl PooledSketch {
    /// Builds a sketch with an explicit shape.
    pub fn new(
        table: Arc<OffsetTable>,
        rows: usize,
        pools_per_row: usize,
        strategy: FailureStrategy,
        seed: u64,
        secondary_counters: usize,
    ) -> Result<Self, SketchError> {
        if rows == 0 || pools_per_row == 0 {
            return Err(SketchError::InvalidParam("rows and pools must be nonzero"));
        }
        let entries = table.entry_count();
        if entries > 1 << CONFIG_BITS {
            return Err(SketchError::ConfigTooWide { entries });
        }
        if matches!(strategy, FailureStrategy::Offload { .. }) && secondary_counters == 0 {
            return Err(SketchError::InvalidParam(
                "offload needs at least one secondary counter",
            ));
        }
        let total = rows * pools_per_row;
        let fresh = table.fresh_pool();
        let mut seeder = SplitMix64::new(seed);
        let row_seeds = (0..rows).map(|_| seeder.next_u64()).collect();
        let secondary = match strategy {
            FailureStrategy::Offload { .. } => Some(SecondarySketch {
                counters: vec![0; secondary_counters],
                seed: seeder.next_u64(),
            }),
            _ => None,
        };
        Ok(Self {
            table,
            rows,
            pools_per_row,
            memories: vec![fresh.memory; total],
            configs: vec![fresh.config as u16; total],
            failed: BitSet::new(total),
            merged: BitSet::new(total),
            row_seeds,
            strategy,
            secondary,
            pool_failures: 0,
        })
    }

    /// Sizes the sketch to a total byte budget: pools plus configuration
    /// words plus the side flags, and under offload the secondary array.
    /// The realized footprint matches the budget to within one pool-row.
    pub fn with_memory(
        budget_bytes: usize,
        rows: usize,
        table: Arc<OffsetTable>,
        strategy: FailureStrategy,
        seed: u64,
    ) -> Result<Self, SketchError> {
        if rows == 0 {
            return Err(SketchError::InvalidParam("rows must be nonzero"));
        }
        let pool_bits = (table.config().bits() + CONFIG_BITS + FLAG_BITS) as usize;
        let primary_budget = match strategy {
            FailureStrategy::Offload { fraction } => {
                (budget_bytes as f64 / (1.0 + fraction)) as usize
            }
            _ => budget_bytes,
        };
        let pools_per_row = primary_budget * 8 / (rows * pool_bits);
        if pools_per_row == 0 {
            return Err(SketchError::BudgetTooSmall { budget_bytes });
        }
        let primary_bytes = (rows * pools_per_row * pool_bits).div_ceil(8);
        let secondary_counters = match strategy {
            FailureStrategy::Offload { .. } => (budget_bytes - primary_bytes) / 4,
            _ => 0,
        };
        Self::new(
            table,
            rows,
            pools_per_row,
            strategy,
            seed,
            secondary_counters,
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn pools_per_row(&self) -> usize {
        self.pools_per_row
    }

    pub fn strategy(&self) -> FailureStrategy {
        self.strategy
    }

    /// Pools that have failed so far (also counts pools later merged).
    pub fn pool_failures(&self) -> u64 {
        self.pool_failures
    }

    fn counters_per_row(&self) -> u64 {
        self.pools_per_row as u64 * self.table.config().counters() as u64
    }

    #[inline]
    fn locate(&self, row: usize, key: u64) -> (usize, usize, u64) {
        let counter_index = hash_key(key, self.row_seeds[row]) % self.counters_per_row();
        let k = self.table.config().counters() as u64;
        let pool = row * self.pools_per_row + (counter_index / k) as usize;
        (pool, (counter_index % k) as usize, counter_index)
    }

    fn merged_groups(&self) -> u32 {
        self.table.config().counters().div_ceil(2)
    }

    fn merged_field_bits(&self) -> u32 {
        64 / self.merged_groups()
    }

    #[inline]
    fn merged_field(&self, memory: u64, slot: usize) -> u64 {
        let bits = self.merged_field_bits();
        let group = (slot / 2) as u32;
        memory.unbounded_shr(group * bits) & u64::MAX.unbounded_shr(64 - bits)
    }

    /// Collapses pool values into merged groups: counters (0,1) feed group
    /// 0, (2,3) group 1, and so on; an odd last counter gets its own group.
    fn group_sums(values: &[u64]) -> Vec<u64> {
        values
            .chunks(2)
            .map(|pair| pair.iter().fold(0u64, |a, &b| a.saturating_add(b)))
            .collect()
    }

    /// Converts a failed pool per the strategy. Under merge the pool word
    /// is rebuilt; fully merged pools carry both side bits.
    fn fail_pool(&mut self, pool: usize) {
        self.pool_failures += 1;
        match self.strategy {
            FailureStrategy::Ignore | FailureStrategy::Offload { .. } => {
                self.failed.set(pool);
            }
            FailureStrategy::Merge => {
                let k = self.table.config().counters() as usize;
                let values: Vec<u64> = (0..k)
                    .map(|j| {
                        self.table
                            .read_at(self.memories[pool], self.configs[pool] as u32, j)
                    })
                    .collect();
                let sums = Self::group_sums(&values);
                let bits = self.merged_field_bits();
                let fits = sums.iter().all(|&s| s.unbounded_shr(bits) == 0);
                if fits {
                    let mut word = 0u64;
                    for (g, &s) in sums.iter().enumerate() {
                        word |= s.unbounded_shl(g as u32 * bits);
                    }
                    self.memories[pool] = word;
                    self.merged.set(pool);
                } else {
                    let total = sums.iter().fold(0u64, |a, &b| a.saturating_add(b));
                    self.memories[pool] = total;
                    self.merged.set(pool);
                    self.failed.set(pool);
                }
            }
        }
    }

    fn merged_add(&mut self, pool: usize, slot: usize, weight: u64) {
        if self.failed.get(pool) {
            self.memories[pool] = self.memories[pool].saturating_add(weight);
            return;
        }
        let bits = self.merged_field_bits();
        let group = (slot / 2) as u32;
        let current = self.merged_field(self.memories[pool], slot);
        let new = current as u128 + weight as u128;
        if new.unbounded_shr(bits) == 0 {
            let mask = u64::MAX
                .unbounded_shr(64 - bits)
                .unbounded_shl(group * bits);
            self.memories[pool] =
                (self.memories[pool] & !mask) | (new as u64).unbounded_shl(group * bits);
        } else {
            // Second-level merge: one 64-bit counter for the whole pool.
            let groups = self.merged_groups() as usize;
            let total = (0..groups)
                .map(|g| self.merged_field(self.memories[pool], g * 2))
                .fold(0u64, |a, b| a.saturating_add(b));
            self.memories[pool] = total.saturating_add(weight);
            self.failed.set(pool);
        }
    }

    /// The row's contribution to the key's estimate, or `None` when the row
    /// is skipped (ignored pool).
    #[inline]
    fn row_value(&self, row: usize, key: u64) -> Option<u64> {
        let (pool, slot, counter_index) = self.locate(row, key);
        if self.merged.get(pool) {
            if self.failed.get(pool) {
                return Some(self.memories[pool]);
            }
            return Some(self.merged_field(self.memories[pool], slot));
        }
        if self.failed.get(pool) {
            return match self.strategy {
                FailureStrategy::Ignore => None,
                FailureStrategy::Offload { .. } => {
                    let frozen =
                        self.table
                            .read_at(self.memories[pool], self.configs[pool] as u32, slot);
                    let secondary = self
                        .secondary
                        .as_ref()
                        .map(|s| s.estimate(row, counter_index))
                        .unwrap_or(0);
                    Some(frozen.saturating_add(secondary))
                }
                FailureStrategy::Merge => unreachable!("merge sets the merged bit"),
            };
        }
        Some(
            self.table
                .read_at(self.memories[pool], self.configs[pool] as u32, slot),
        )
    }

    /// Adds `weight` to the row's counter for the key, applying the failure
    /// strategy and retrying against the recovered representation.
    fn row_add(&mut self, row: usize, key: u64, weight: u64) {
        let (pool, slot, counter_index) = self.locate(row, key);
        if self.merged.get(pool) {
            self.merged_add(pool, slot, weight);
            return;
        }
        if self.failed.get(pool) {
            match self.strategy {
                FailureStrategy::Ignore => {}
                FailureStrategy::Offload { .. } => {
                    if let Some(sec) = self.secondary.as_mut() {
                        sec.add(row, counter_index, weight);
                    }
                }
                FailureStrategy::Merge => unreachable!("merge sets the merged bit"),
            }
            return;
        }
        let mut config = self.configs[pool] as u32;
        let outcome =
            self.table
                .increment_at(&mut self.memories[pool], &mut config, slot, weight as i64);
        self.configs[pool] = config as u16;
        if outcome == PoolUpdateOutcome::PoolFailure {
            self.fail_pool(pool);
            // Replay against the post-recovery representation; recovered
            // paths cannot fail again.
            self.row_add(row, key, weight);
        }
    }
}

impl FrequencyEstimator for PooledSketch {
    fn update(&mut self, key: u64, weight: u64) {
        assert!(weight <= i64::MAX as u64, "weight exceeds i64::MAX");
        if weight == 0 {
            return;
        }
        for row in 0..self.rows {
            self.row_add(row, key, weight);
        }
    }

    fn conservative_update(&mut self, key: u64, weight: u64) {
        assert!(weight <= i64::MAX as u64, "weight exceeds i64::MAX");
        if weight == 0 {
            return;
        }
        let target = self.query(key).saturating_add(weight);
        for row in 0..self.rows {
            // A recovery while raising can change the representation (and
            // its value), so re-read until the row meets the target.
            for _ in 0..4 {
                let Some(current) = self.row_value(row, key) else {
                    break;
                };
                if current >= target {
                    break;
                }
                self.row_add(row, key, (target - current).min(i64::MAX as u64));
            }
        }
    }

    fn query(&self, key: u64) -> u64 {
        let mut best = u64::MAX;
        for row in 0..self.rows {
            if let Some(v) = self.row_value(row, key) {
                best = best.min(v);
            }
        }
        best
    }

    fn memory_bytes(&self) -> usize {
        let pool_bits = (self.table.config().bits() + CONFIG_BITS + FLAG_BITS) as usize;
        let primary = (self.rows * self.pools_per_row * pool_bits).div_ceil(8);
        let secondary = self
            .secondary
            .as_ref()
            .map(|s| s.counters.len() * 4)
            .unwrap_or(0);
        primary + secondary
    }
}

/// Count-Min/Conservative-Update sketch over plain 32-bit counters.
pub struct Baseline32Sketch {
    rows: usize,
    width: usize,
    counters: Vec<u32>,
    row_seeds: Vec<u64>,
}

impl Baseline32Sketch {
    pub fn new(rows: usize, width: usize, seed: u64) -> Result<Self, SketchError> {
        if rows == 0 || width == 0 {
            return Err(SketchError::InvalidParam("rows and width must be nonzero"));
        }
        let mut seeder = SplitMix64::new(seed);
        Ok(Self {
            rows,
            width,
            counters: vec![0; rows * width],
            row_seeds: (0..rows).map(|_| seeder.next_u64()).collect(),
        })
    }

    /// Sizes the sketch to a byte budget at four bytes per counter.
    pub fn with_memory(budget_bytes: usize, rows: usize, seed: u64) -> Result<Self, SketchError> {
        if rows == 0 {
            return Err(SketchError::InvalidParam("rows must be nonzero"));
        }
        let width = budget_bytes / 4 / rows;
        if width == 0 {
            return Err(SketchError::BudgetTooSmall { budget_bytes });
        }
        Self::new(rows, width, seed)
    }

    #[inline]
    fn cell(&self, row: usize, key: u64) -> usize {
        row * self.width + (hash_key(key, self.row_seeds[row]) % self.width as u64) as usize
    }
}

impl FrequencyEstimator for Baseline32Sketch {
    fn update(&mut self, key: u64, weight: u64) {
        let add = weight.min(u32::MAX as u64) as u32;
        for row in 0..self.rows {
            let cell = self.cell(row, key);
            self.counters[cell] = self.counters[cell].saturating_add(add);
        }
    }

    fn conservative_update(&mut self, key: u64, weight: u64) {
        let target = self.query(key).saturating_add(weight).min(u32::MAX as u64) as u32;
        for row in 0..self.rows {
            let cell = self.cell(row, key);
            self.counters[cell] = self.counters[cell].max(target);
        }
    }

    fn query(&self, key: u64) -> u64 {
        (0..self.rows)
            .map(|row| self.counters[self.cell(row, key)] as u64)
            .min()
            .unwrap_or(0)
    }

    fn memory_bytes(&self) -> usize {
        self.counters.len() * 4
    }
}
