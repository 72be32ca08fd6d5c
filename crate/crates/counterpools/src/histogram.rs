//! Exact frequency histogram: a cuckoo hash table whose buckets are pools.
//!
//! Keys are mixed through an invertible permutation; the top `b` bits pick
//! the primary bucket and the low `u - b` bits are stored as the
//! fingerprint, together with one flag bit recording whether the entry sits
//! in its primary or alternate bucket. Every occupied slot therefore
//! reconstructs its key exactly, and counts are exact.
//!
//! A bucket is one pool: slot `j`'s count lives in pool counter `j`. When a
//! count needs bits its pool cannot grant, or a bucket has no free slot,
//! entries migrate to their alternate buckets (a kick chain), carrying
//! their fingerprints and counts. Chains longer than the kick bound report
//! the in-flight entry back to the caller and leave the table valid.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use crate::hashing::{hash_key, SplitMix64};
use crate::pool::{OffsetTable, PoolUpdateOutcome};
use crate::sketch::CONFIG_BITS;

/// Default bound on displacements per operation.
pub const DEFAULT_MAX_KICKS: u32 = 500;

/// An eviction chain exceeded the kick bound. The entry that was in flight
/// is reported back; the table itself remains valid without it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableFull {
    pub key: u64,
    pub count: u64,
}

impl fmt::Display for TableFull {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "table full: key {} with count {} could not be placed",
            self.key, self.count
        )
    }
}

impl std::error::Error for TableFull {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HistogramError {
    InvalidParam(&'static str),
    ConfigTooWide { entries: u64 },
}

impl fmt::Display for HistogramError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistogramError::InvalidParam(why) => write!(f, "{why}"),
            HistogramError::ConfigTooWide { entries } => {
                write!(f, "{entries} configurations exceed 16-bit storage")
            }
        }
    }
}

impl std::error::Error for HistogramError {}

/// Invertible mixing of `width`-bit keys: two multiply-xorshift rounds with
/// odd multipliers, all modulo `2^width`. The xorshift distance is at least
/// half the width, which makes each xorshift its own inverse.
#[derive(Debug, Clone)]
pub struct KeyPermutation {
    width: u32,
    mask: u64,
    shift: u32,
    m1: u64,
    m2: u64,
    m1_inv: u64,
    m2_inv: u64,
}

impl KeyPermutation {
    pub fn new(width: u32, seed: u64) -> Self {
        assert!((1..=64).contains(&width));
        let mask = u64::MAX.unbounded_shr(64 - width);
        let mut g = SplitMix64::new(seed);
        let m1 = (g.next_u64() | 1) & mask;
        let m2 = (g.next_u64() | 1) & mask;
        Self {
            width,
            mask,
            shift: width.div_ceil(2),
            m1,
            m2,
            m1_inv: inverse_pow2(m1) & mask,
            m2_inv: inverse_pow2(m2) & mask,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn forward(&self, key: u64) -> u64 {
        debug_assert!(key <= self.mask);
        let mut x = key.wrapping_mul(self.m1) & self.mask;
        x ^= x >> self.shift;
        x = x.wrapping_mul(self.m2) & self.mask;
        x ^= x >> self.shift;
        x
    }

    #[inline]
    pub fn inverse(&self, mixed: u64) -> u64 {
        let mut x = mixed ^ (mixed >> self.shift);
        x = x.wrapping_mul(self.m2_inv) & self.mask;
        x ^= x >> self.shift;
        x.wrapping_mul(self.m1_inv) & self.mask
    }
}

/// Multiplicative inverse of an odd number modulo 2^64 (Newton iteration).
fn inverse_pow2(odd: u64) -> u64 {
    debug_assert!(odd & 1 == 1);
    let mut inv = odd; // correct to 3 bits
    for _ in 0..5 {
        inv = inv.wrapping_mul(2u64.wrapping_sub(odd.wrapping_mul(inv)));
    }
    debug_assert_eq!(odd.wrapping_mul(inv), 1);
    inv
}

/// An entry temporarily out of the table during a kick chain.
#[derive(Debug, Clone, Copy)]
struct Flying {
    fingerprint: u64,
    primary: u64,
    count: u64,
}

/// Exact histogram over pooled cuckoo buckets.
pub struct PooledCuckooTable {
    table: Arc<OffsetTable>,
    bucket_exp: u32,
    key_bits: u32,
    fingerprint_bits: u32,
    memories: Vec<u64>,
    configs: Vec<u16>,
    /// Per slot: fingerprint shifted left one, flag in bit 0.
    slots: Vec<u64>,
    /// One bit per slot of each bucket; k <= 8 for the supported presets.
    occupancy: Vec<u8>,
    permutation: KeyPermutation,
    displacement_seed: u64,
    rng: SplitMix64,
    max_kicks: u32,
    len: usize,
    last_placed: Option<(u64, usize)>,
}

impl PooledCuckooTable {
    /// A table of `2^bucket_exp` buckets for keys below `2^key_bits`.
    pub fn new(
        bucket_exp: u32,
        key_bits: u32,
        table: Arc<OffsetTable>,
        seed: u64,
    ) -> Result<Self, HistogramError> {
        if !(1..=30).contains(&bucket_exp) {
            return Err(HistogramError::InvalidParam(
                "bucket exponent must be 1..=30",
            ));
        }
        if !(1..=64).contains(&key_bits) || key_bits <= bucket_exp {
            return Err(HistogramError::InvalidParam(
                "key width must exceed the bucket exponent",
            ));
        }
        let k = table.config().counters();
        if k > 8 {
            return Err(HistogramError::InvalidParam(
                "bucket occupancy supports at most 8 counters per pool",
            ));
        }
        let entries = table.entry_count();
        if entries > 1 << CONFIG_BITS {
            return Err(HistogramError::ConfigTooWide { entries });
        }
        let buckets = 1usize << bucket_exp;
        let fresh = table.fresh_pool();
        let mut g = SplitMix64::new(seed);
        let permutation = KeyPermutation::new(key_bits, g.next_u64());
        let displacement_seed = g.next_u64();
        let rng = SplitMix64::new(g.next_u64());
        Ok(Self {
            table,
            bucket_exp,
            key_bits,
            fingerprint_bits: key_bits - bucket_exp,
            memories: vec![fresh.memory; buckets],
            configs: vec![fresh.config as u16; buckets],
            slots: vec![0; buckets * k as usize],
            occupancy: vec![0; buckets],
            permutation,
            displacement_seed,
            rng,
            max_kicks: DEFAULT_MAX_KICKS,
            len: 0,
            last_placed: None,
        })
    }

    pub fn set_max_kicks(&mut self, max_kicks: u32) {
        self.max_kicks = max_kicks.max(1);
    }

    pub fn buckets(&self) -> usize {
        self.memories.len()
    }

    pub fn slots_per_bucket(&self) -> usize {
        self.table.config().counters() as usize
    }

    /// Occupied entries.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Occupied slots over allocated slots.
    pub fn load_factor(&self) -> f64 {
        self.len as f64 / (self.buckets() * self.slots_per_bucket()) as f64
    }

    /// Storage charged per entry slot: fingerprint plus flag, and the
    /// slot's share of the pool word and configuration number.
    pub fn bits_per_entry(&self) -> f64 {
        let cfg = self.table.config();
        (self.fingerprint_bits + 1) as f64
            + (cfg.bits() + CONFIG_BITS) as f64 / cfg.counters() as f64
    }

    /// Total structural bytes, including the occupancy bitmaps.
    pub fn memory_bytes(&self) -> usize {
        let cfg = self.table.config();
        let per_bucket_bits = cfg.bits() as usize
            + CONFIG_BITS as usize
            + self.slots_per_bucket() * (self.fingerprint_bits as usize + 1)
            + self.slots_per_bucket();
        (self.buckets() * per_bucket_bits).div_ceil(8)
    }

    #[inline]
    fn bucket_mask(&self) -> u64 {
        (1u64 << self.bucket_exp) - 1
    }

    #[inline]
    fn fingerprint_mask(&self) -> u64 {
        u64::MAX.unbounded_shr(64 - self.fingerprint_bits)
    }

    /// The partner of `bucket` under this fingerprint. Forcing the
    /// displacement odd keeps the partner distinct; XOR makes it an
    /// involution.
    #[inline]
    fn alternate(&self, bucket: u64, fingerprint: u64) -> u64 {
        let h = (hash_key(fingerprint, self.displacement_seed) | 1) & self.bucket_mask();
        bucket ^ h
    }

    #[inline]
    fn locate(&self, key: u64) -> (u64, u64, u64) {
        debug_assert!(self.key_bits == 64 || key < (1u64 << self.key_bits));
        let mixed = self.permutation.forward(key);
        let fingerprint = mixed & self.fingerprint_mask();
        let primary = mixed >> self.fingerprint_bits;
        let alternate = self.alternate(primary, fingerprint);
        (fingerprint, primary, alternate)
    }

    #[inline]
    fn slot_word(&self, bucket: u64, slot: usize) -> u64 {
        self.slots[bucket as usize * self.slots_per_bucket() + slot]
    }

    #[inline]
    fn occupied(&self, bucket: u64, slot: usize) -> bool {
        self.occupancy[bucket as usize] >> slot & 1 != 0
    }

    fn find_slot(&self, bucket: u64, fingerprint: u64, flag: u64) -> Option<usize> {
        let want = fingerprint << 1 | flag;
        (0..self.slots_per_bucket())
            .find(|&j| self.occupied(bucket, j) && self.slot_word(bucket, j) == want)
    }

    fn pool_count(&self, bucket: u64, slot: usize) -> u64 {
        self.table.read_at(
            self.memories[bucket as usize],
            self.configs[bucket as usize] as u32,
            slot,
        )
    }

    fn pool_increment(&mut self, bucket: u64, slot: usize, weight: i64) -> PoolUpdateOutcome {
        let b = bucket as usize;
        let mut config = self.configs[b] as u32;
        let outcome = self
            .table
            .increment_at(&mut self.memories[b], &mut config, slot, weight);
        self.configs[b] = config as u16;
        outcome
    }

    /// Exact count of `key`, zero when absent. No state change.
    pub fn query(&self, key: u64) -> u64 {
        let (fingerprint, primary, alternate) = self.locate(key);
        if let Some(slot) = self.find_slot(primary, fingerprint, 0) {
            return self.pool_count(primary, slot);
        }
        if let Some(slot) = self.find_slot(alternate, fingerprint, 1) {
            return self.pool_count(alternate, slot);
        }
        0
    }

    /// Adds `weight` to the key's count, allocating the entry on first
    /// sight. Migrates entries between their candidate buckets when slots
    /// or bits run out; fails only when a chain exceeds the kick bound.
    pub fn increment(&mut self, key: u64, weight: u64) -> Result<(), TableFull> {
        assert!(
            self.key_bits == 64 || key < (1u64 << self.key_bits),
            "key exceeds the table's key width"
        );
        assert!(
            weight >= 1 && weight <= i64::MAX as u64,
            "weight must be in 1..=i64::MAX"
        );
        let (fingerprint, primary, alternate) = self.locate(key);

        for (bucket, flag) in [(primary, 0u64), (alternate, 1)] {
            if let Some(slot) = self.find_slot(bucket, fingerprint, flag) {
                if self.pool_increment(bucket, slot, weight as i64)
                    != PoolUpdateOutcome::PoolFailure
                {
                    return Ok(());
                }
                // The pool cannot grant the bits: take the entry out and
                // re-settle it with its new count, starting from its
                // current bucket.
                let count = self.pool_count(bucket, slot);
                self.remove(bucket, slot, count);
                let fly = Flying {
                    fingerprint,
                    primary,
                    count: count + weight,
                };
                return self.settle(fly, bucket);
            }
        }

        let fly = Flying {
            fingerprint,
            primary,
            count: weight,
        };
        self.settle(fly, primary)
    }

    /// Random-walk placement with a single in-flight entry. Each loop turn
    /// either places the entry, swaps it with a victim whose removal makes
    /// it fit (the victim then flies to its partner bucket), or redirects
    /// the entry to its own partner. Every turn consumes one kick.
    fn settle(&mut self, fly: Flying, start: u64) -> Result<(), TableFull> {
        let mut fly = fly;
        let mut bucket = start;
        self.last_placed = None;
        // Entry straight into either candidate bucket costs no kicks.
        if self.try_place(bucket, &fly) {
            return Ok(());
        }
        let other = self.other_bucket(&fly, bucket);
        if self.try_place(other, &fly) {
            return Ok(());
        }
        for _ in 0..self.max_kicks {
            match self.swap_with_victim(bucket, fly) {
                Some(victim) => {
                    fly = victim.0;
                    bucket = victim.1;
                    if self.try_place(bucket, &fly) {
                        return Ok(());
                    }
                }
                None => {
                    bucket = self.other_bucket(&fly, bucket);
                    if self.try_place(bucket, &fly) {
                        return Ok(());
                    }
                }
            }
        }
        let key = self
            .permutation
            .inverse(fly.primary << self.fingerprint_bits | fly.fingerprint);
        Err(TableFull {
            key,
            count: fly.count,
        })
    }

    fn other_bucket(&self, fly: &Flying, bucket: u64) -> u64 {
        let alt = self.alternate(fly.primary, fly.fingerprint);
        if bucket == fly.primary {
            alt
        } else {
            fly.primary
        }
    }

    /// Puts the flying entry into a free slot of `bucket` if some free slot
    /// can also hold its count.
    fn try_place(&mut self, bucket: u64, fly: &Flying) -> bool {
        let k = self.slots_per_bucket();
        for slot in 0..k {
            if self.occupied(bucket, slot) {
                continue;
            }
            if self.pool_increment(bucket, slot, fly.count as i64) != PoolUpdateOutcome::PoolFailure
            {
                let flag = if bucket == fly.primary { 0 } else { 1 };
                let b = bucket as usize;
                self.slots[b * k + slot] = fly.fingerprint << 1 | flag;
                self.occupancy[b] |= 1 << slot;
                self.len += 1;
                self.last_placed = Some((bucket, slot));
                return true;
            }
        }
        false
    }

    fn remove(&mut self, bucket: u64, slot: usize, count: u64) {
        let outcome = self.pool_increment(bucket, slot, -(count as i64));
        debug_assert_ne!(outcome, PoolUpdateOutcome::PoolFailure);
        let k = self.slots_per_bucket();
        let b = bucket as usize;
        self.occupancy[b] &= !(1 << slot);
        self.slots[b * k + slot] = 0;
        self.len -= 1;
    }

    /// Looks for a victim in `bucket` whose removal lets `fly` be placed.
    /// On success the swap has happened and the victim (now flying toward
    /// its partner bucket) is returned. Victims are scanned from a random
    /// start, skipping the slot placed by the previous chain step.
    fn swap_with_victim(&mut self, bucket: u64, fly: Flying) -> Option<(Flying, u64)> {
        let k = self.slots_per_bucket();
        let start = self.rng.next_below(k as u64) as usize;
        for probe in 0..k {
            let slot = (start + probe) % k;
            if !self.occupied(bucket, slot) {
                continue;
            }
            if self.last_placed == Some((bucket, slot)) {
                continue;
            }
            let word = self.slot_word(bucket, slot);
            let victim_fp = word >> 1;
            let victim_flag = word & 1;
            let count = self.pool_count(bucket, slot);
            self.remove(bucket, slot, count);
            if self.try_place(bucket, &fly) {
                let victim_primary = if victim_flag == 0 {
                    bucket
                } else {
                    self.alternate(bucket, victim_fp)
                };
                let victim = Flying {
                    fingerprint: victim_fp,
                    primary: victim_primary,
                    count,
                };
                let target = if victim_flag == 0 {
                    self.alternate(bucket, victim_fp)
                } else {
                    victim_primary
                };
                return Some((victim, target));
            }
            // Removing this victim was not enough; put it back unchanged.
            let restored = self.pool_increment(bucket, slot, count as i64);
            debug_assert_ne!(restored, PoolUpdateOutcome::PoolFailure);
            let b = bucket as usize;
            self.occupancy[b] |= 1 << slot;
            self.slots[b * k + slot] = word;
            self.len += 1;
        }
        None
    }

    /// Iterates all stored entries as `(bucket, slot, key, count)`.
    pub fn entries(&self) -> impl Iterator<Item = (u64, usize, u64, u64)> + '_ {
        let k = self.slots_per_bucket();
        (0..self.buckets() as u64).flat_map(move |bucket| {
            (0..k).filter_map(move |slot| {
                if !self.occupied(bucket, slot) {
                    return None;
                }
                let word = self.slot_word(bucket, slot);
                let fingerprint = word >> 1;
                let flag = word & 1;
                let primary = if flag == 0 {
                    bucket
                } else {
                    self.alternate(bucket, fingerprint)
                };
                let key = self
                    .permutation
                    .inverse(primary << self.fingerprint_bits | fingerprint);
                Some((bucket, slot, key, self.pool_count(bucket, slot)))
            })
        })
    }

    /// Debug dump: CSV of `bucket,slot,key,count`.
    pub fn dump_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bucket,slot,key,count")?;
        for (bucket, slot, key, count) in self.entries() {
            writeln!(w, "{bucket},{slot},{key},{count}")?;
        }
        Ok(())
    }
}
