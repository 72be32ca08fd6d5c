//! Fixed-size memory pools shared by variable-width counters.
//!
//! A pool is one `n`-bit block holding `k` counters plus a configuration
//! number that ranks the current width split. Counter `j` occupies
//! `width_j` bits starting at a per-configuration offset, with counter 0 in
//! the least-significant bits. Counter `k - 1` (the *leftmost* counter, in
//! the most-significant bits) absorbs every unallocated bit, so widths
//! always sum to exactly `n` and only `snb(B, k)` configurations exist,
//! where `B = (n - k*s) / i` is the number of `i`-bit growth units.
//!
//! Reads and in-place updates are constant time through an [`OffsetTable`]
//! that maps each configuration number to the `k` bit offsets. Growing a
//! counter takes units from the leftmost counter and re-ranks the widths
//! (O(k)); when the leftmost cannot spare enough units the pool *fails* and
//! is left untouched, which the caller resolves (see the sketch and
//! histogram layers).

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::snb::{table_dir_from_env, SizePartition, SnbError, SnbTable};

const OFFSET_MAGIC: [u8; 4] = *b"CPLT";

/// Largest offset table we are willing to materialize.
pub const MAX_TABLE_ENTRIES: u64 = 1 << 24;

/// Errors from pool configuration and counter operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PoolError {
    InvalidConfig(&'static str),
    /// The configuration family has more rankings than we will tabulate.
    TableTooLarge {
        entries: u64,
        limit: u64,
    },
    IndexOutOfRange {
        index: usize,
        counters: u32,
    },
    /// An increment would drive the counter below zero.
    NegativeCounter {
        index: usize,
        value: i128,
    },
    Snb(SnbError),
    Cache(String),
}

impl fmt::Display for PoolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PoolError::InvalidConfig(why) => write!(f, "invalid pool config: {why}"),
            PoolError::TableTooLarge { entries, limit } => {
                write!(
                    f,
                    "offset table would need {entries} entries (limit {limit})"
                )
            }
            PoolError::IndexOutOfRange { index, counters } => {
                write!(
                    f,
                    "counter index {index} out of range for {counters} counters"
                )
            }
            PoolError::NegativeCounter { index, value } => {
                write!(f, "counter {index} would become negative ({value})")
            }
            PoolError::Snb(e) => write!(f, "{e}"),
            PoolError::Cache(why) => write!(f, "table cache: {why}"),
        }
    }
}

impl std::error::Error for PoolError {}

impl From<SnbError> for PoolError {
    fn from(e: SnbError) -> Self {
        PoolError::Snb(e)
    }
}

/// The `(n, k, s, i)` tuple governing a pool family: pool width in bits,
/// counters per pool, starting width per counter, and growth granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PoolConfig {
    n: u32,
    k: u32,
    s: u32,
    i: u32,
}

/// The configuration evaluated throughout: four counters sharing one word.
pub const PRESET_64_4_0_1: PoolConfig = PoolConfig {
    n: 64,
    k: 4,
    s: 0,
    i: 1,
};
pub const PRESET_64_5_8_4: PoolConfig = PoolConfig {
    n: 64,
    k: 5,
    s: 8,
    i: 4,
};
pub const PRESET_64_6_7_4: PoolConfig = PoolConfig {
    n: 64,
    k: 6,
    s: 7,
    i: 4,
};
pub const PRESET_64_4_12_2: PoolConfig = PoolConfig {
    n: 64,
    k: 4,
    s: 12,
    i: 2,
};

/// The shipped pool configurations, default first.
pub fn presets() -> [PoolConfig; 4] {
    [
        PRESET_64_4_0_1,
        PRESET_64_5_8_4,
        PRESET_64_6_7_4,
        PRESET_64_4_12_2,
    ]
}

impl PoolConfig {
    pub fn new(n: u32, k: u32, s: u32, i: u32) -> Result<Self, PoolError> {
        if n == 0 || n > 64 {
            return Err(PoolError::InvalidConfig("pool width must be 1..=64 bits"));
        }
        if k == 0 || k > 64 {
            return Err(PoolError::InvalidConfig("counters per pool must be 1..=64"));
        }
        if i == 0 {
            return Err(PoolError::InvalidConfig(
                "growth step must be at least 1 bit",
            ));
        }
        if (k as u64) * (s as u64) > n as u64 {
            return Err(PoolError::InvalidConfig("starting widths exceed the pool"));
        }
        Ok(Self { n, k, s, i })
    }

    pub fn bits(&self) -> u32 {
        self.n
    }

    pub fn counters(&self) -> u32 {
        self.k
    }

    pub fn start_bits(&self) -> u32 {
        self.s
    }

    pub fn step_bits(&self) -> u32 {
        self.i
    }

    /// Number of `i`-bit growth units the pool can hand out.
    pub fn growth_units(&self) -> u32 {
        (self.n - self.k * self.s) / self.i
    }

    /// Bits left over after carving the pool into starts and growth units;
    /// they live permanently inside the leftmost counter.
    pub fn slack_remainder(&self) -> u32 {
        (self.n - self.k * self.s) % self.i
    }

    /// Number of width configurations, `snb(growth_units, k)`.
    pub fn config_count(&self) -> Result<u64, SnbError> {
        crate::snb::snb(self.growth_units() as u64, self.k as u64)
    }

    /// Minimal growth-unit count so that `value` fits a non-leftmost
    /// counter: the smallest `m` with `value < 2^(s + i*m)`.
    #[inline]
    pub fn units_for(&self, value: u128) -> u32 {
        let bits = 128 - value.leading_zeros();
        let need = bits.saturating_sub(self.s);
        need.div_ceil(self.i)
    }

    /// Same as [`units_for`](Self::units_for) but for the leftmost counter,
    /// whose width also carries the slack remainder.
    #[inline]
    pub fn leftmost_units_for(&self, value: u128) -> u32 {
        let bits = 128 - value.leading_zeros();
        let need = bits.saturating_sub(self.s + self.slack_remainder());
        need.div_ceil(self.i)
    }
}

impl fmt::Display for PoolConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.n, self.k, self.s, self.i)
    }
}

impl FromStr for PoolConfig {
    type Err = PoolError;

    /// Parses `"n,k,s,i"`, e.g. `"64,4,0,1"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = s.split(',').collect();
        if fields.len() != 4 {
            return Err(PoolError::InvalidConfig("expected four fields n,k,s,i"));
        }
        let mut vals = [0u32; 4];
        for (slot, field) in vals.iter_mut().zip(&fields) {
            *slot = field
                .trim()
                .parse()
                .map_err(|_| PoolError::InvalidConfig("fields must be small integers"))?;
        }
        PoolConfig::new(vals[0], vals[1], vals[2], vals[3])
    }
}

/// One pool: the bit block plus its configuration number. At the array
/// level the two live in separate parallel arrays (a 64-bit word and a
/// 16-bit configuration for the shipped presets); this struct is the unit
/// the operations work on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub memory: u64,
    pub config: u32,
}

/// Outcome of an increment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolUpdateOutcome {
    /// The new value fits the counter's current width.
    InPlace,
    /// Widths changed; bits moved between the counter and the leftmost.
    Resized,
    /// The leftmost counter cannot spare enough bits. Pool unchanged.
    PoolFailure,
}

/// Per-configuration bit offsets, one entry per configuration number.
///
/// Entry `c` holds the offsets of each counter's least-significant bit for
/// the width split ranked `c`, plus the sentinel offset `n` so the last
/// counter needs no special case.
pub struct OffsetTable {
    config: PoolConfig,
    entries: u64,
    /// Stride `k + 1`: `k` offsets then the sentinel `n`.
    offsets: Vec<u8>,
    snb: SnbTable,
}

impl OffsetTable {
    /// Builds the table by unranking every configuration number into growth
    /// units, converting to widths, and prefix-summing from counter 0.
    pub fn build(config: PoolConfig) -> Result<Self, PoolError> {
        let entries = config.config_count()?;
        if entries > MAX_TABLE_ENTRIES {
            return Err(PoolError::TableTooLarge {
                entries,
                limit: MAX_TABLE_ENTRIES,
            });
        }
        let budget = config.growth_units();
        let k = config.k as usize;
        let snb = SnbTable::build(budget, config.k)?;
        let mut offsets = vec![0u8; entries as usize * (k + 1)];
        let mut units = vec![0u64; k];
        for c in 0..entries {
            // Units are ranked leftmost-first: units[0] belongs to counter
            // k-1 and units[k-1] to counter 0.
            snb.decode_parts(c, budget as u64, &mut units)?;
            let row = &mut offsets[c as usize * (k + 1)..(c as usize + 1) * (k + 1)];
            let mut offset = 0u32;
            for j in 0..k {
                row[j] = offset as u8;
                let width = if j == k - 1 {
                    config.s + config.i * units[0] as u32 + config.slack_remainder()
                } else {
                    config.s + config.i * units[k - 1 - j] as u32
                };
                offset += width;
            }
            debug_assert_eq!(offset, config.n);
            row[k] = config.n as u8;
        }
        Ok(Self {
            config,
            entries,
            offsets,
            snb,
        })
    }

    pub fn config(&self) -> PoolConfig {
        self.config
    }

    pub fn entry_count(&self) -> u64 {
        self.entries
    }

    /// The `k` offsets plus the sentinel `n` for configuration `c`.
    pub fn offsets(&self, c: u32) -> &[u8] {
        let k = self.config.k as usize;
        &self.offsets[c as usize * (k + 1)..(c as usize + 1) * (k + 1)]
    }

    /// A pool with every counter at zero: all growth units sit in the
    /// leftmost counter, which is the lexicographically largest (and
    /// therefore highest-ranked) configuration.
    pub fn fresh_pool(&self) -> Pool {
        Pool {
            memory: 0,
            config: (self.entries - 1) as u32,
        }
    }

    #[inline]
    fn mask(width: u32) -> u64 {
        u64::MAX.unbounded_shr(64 - width)
    }

    /// Value of counter `j`: shift to its offset and mask to its width.
    /// Constant time, no state change.
    pub fn read(&self, pool: &Pool, j: usize) -> Result<u64, PoolError> {
        if j >= self.config.k as usize {
            return Err(PoolError::IndexOutOfRange {
                index: j,
                counters: self.config.k,
            });
        }
        Ok(self.read_at(pool.memory, pool.config, j))
    }

    #[inline]
    pub(crate) fn read_at(&self, memory: u64, config: u32, j: usize) -> u64 {
        let k = self.config.k as usize;
        debug_assert!(j < k);
        let base = config as usize * (k + 1);
        let offset = self.offsets[base + j] as u32;
        let width = self.offsets[base + j + 1] as u32 - offset;
        memory.unbounded_shr(offset) & Self::mask(width)
    }

    /// Adds `weight` (possibly negative) to counter `j`.
    ///
    /// If the new value keeps the counter's canonical width the update is
    /// in place. Otherwise the counter is resized to the minimal width
    /// `s + i*m` holding the new value, taking bits from (or returning bits
    /// to) the leftmost counter, splicing the block, and re-ranking the
    /// widths. Returns [`PoolUpdateOutcome::PoolFailure`] and leaves the
    /// pool untouched when the leftmost counter cannot spare the bits.
    /// Incrementing the leftmost counter itself only checks against its own
    /// width, since it already owns all slack.
    pub fn increment(
        &self,
        pool: &mut Pool,
        j: usize,
        weight: i64,
    ) -> Result<PoolUpdateOutcome, PoolError> {
        let k = self.config.k as usize;
        if j >= k {
            return Err(PoolError::IndexOutOfRange {
                index: j,
                counters: self.config.k,
            });
        }
        let value = self.read_at(pool.memory, pool.config, j);
        let new_value = value as i128 + weight as i128;
        if new_value < 0 {
            return Err(PoolError::NegativeCounter {
                index: j,
                value: new_value,
            });
        }
        let mut memory = pool.memory;
        let mut config = pool.config;
        let outcome = self.apply(&mut memory, &mut config, j, new_value as u128);
        pool.memory = memory;
        pool.config = config;
        Ok(outcome)
    }

    /// Increment without the public precondition checks, for hot paths that
    /// already guarantee them. `config` is read and written in place so
    /// array layers can keep narrow configuration words.
    #[inline]
    pub(crate) fn increment_at(
        &self,
        memory: &mut u64,
        config: &mut u32,
        j: usize,
        weight: i64,
    ) -> PoolUpdateOutcome {
        let value = self.read_at(*memory, *config, j);
        let new_value = value as i128 + weight as i128;
        debug_assert!(new_value >= 0);
        self.apply(memory, config, j, new_value as u128)
    }

    fn apply(
        &self,
        memory: &mut u64,
        config: &mut u32,
        j: usize,
        new_value: u128,
    ) -> PoolUpdateOutcome {
        let cfg = self.config;
        let k = cfg.k as usize;
        let base = *config as usize * (k + 1);
        let offset = self.offsets[base + j] as u32;
        let next_offset = self.offsets[base + j + 1] as u32;
        let width = next_offset - offset;

        if j == k - 1 {
            // Leftmost counter: it owns the slack, so the only question is
            // whether the new value fits its current width.
            if new_value.unbounded_shr(width) != 0 {
                return PoolUpdateOutcome::PoolFailure;
            }
            *memory = (new_value as u64).unbounded_shl(offset) | (*memory & Self::mask(offset));
            return PoolUpdateOutcome::InPlace;
        }

        let new_units = cfg.units_for(new_value);
        let new_width = cfg.s + cfg.i * new_units;
        if new_width == width {
            let cleared = *memory & !Self::mask(width).unbounded_shl(offset);
            *memory = (new_value as u64).unbounded_shl(offset) | cleared;
            return PoolUpdateOutcome::InPlace;
        }

        // Resize: the leftmost counter donates or receives growth units.
        let lc_offset = self.offsets[base + k - 1] as u32;
        let lc_width = cfg.n - lc_offset;
        let lc_value = memory.unbounded_shr(lc_offset) & Self::mask(lc_width);
        let lc_units = (lc_width - cfg.s - cfg.slack_remainder()) / cfg.i;
        let lc_needed_units = cfg.leftmost_units_for(lc_value as u128);
        let free_units = lc_units - lc_needed_units;
        let cur_units = (width - cfg.s) / cfg.i;
        let grown_units = new_units as i64 - cur_units as i64;
        if grown_units > free_units as i64 {
            return PoolUpdateOutcome::PoolFailure;
        }

        // Splice: bits below the counter, the new value, then everything
        // above shifted to the counter's new end.
        let low = *memory & Self::mask(offset);
        let mid = (new_value as u64).unbounded_shl(offset);
        let new_next = offset + new_width;
        let high = memory.unbounded_shr(next_offset).unbounded_shl(new_next);
        *memory = high | mid | low;

        // Re-rank the widths (leftmost-first growth units).
        let mut units = [0u64; 64];
        for (idx, unit) in units[..k].iter_mut().enumerate() {
            let counter = k - 1 - idx;
            *unit = if counter == j {
                new_units as u64
            } else if counter == k - 1 {
                (lc_units as i64 - grown_units) as u64
            } else {
                let o = self.offsets[base + counter] as u32;
                let w = self.offsets[base + counter + 1] as u32 - o;
                ((w - cfg.s) / cfg.i) as u64
            };
        }
        let rank = self
            .snb
            .encode_parts(&units[..k])
            .expect("widths always re-rank within the table");
        *config = rank as u32;
        PoolUpdateOutcome::Resized
    }

    /// Counter widths under the pool's current configuration, in counter
    /// order (counter 0 first). They always sum to `n`.
    pub fn counter_widths(&self, pool: &Pool) -> SizePartition {
        let k = self.config.k as usize;
        let row = self.offsets(pool.config);
        let widths: Vec<u64> = (0..k).map(|j| (row[j + 1] - row[j]) as u64).collect();
        SizePartition::new(widths, self.config.n as u64)
            .expect("offset rows always sum to the pool width")
    }

    /// Bits the leftmost counter can currently donate: its width minus what
    /// its value needs, rounded down to whole growth units.
    pub fn free_bits(&self, pool: &Pool) -> u32 {
        let cfg = self.config;
        let k = cfg.k as usize;
        let row = self.offsets(pool.config);
        let lc_offset = row[k - 1] as u32;
        let lc_width = cfg.n - lc_offset;
        let lc_value = pool.memory.unbounded_shr(lc_offset) & Self::mask(lc_width);
        let lc_units = (lc_width - cfg.s - cfg.slack_remainder()) / cfg.i;
        let needed = cfg.leftmost_units_for(lc_value as u128);
        cfg.i * (lc_units - needed)
    }

    fn bits_per_offset(&self) -> u32 {
        let max_offset = self.config.n - self.config.s - self.config.slack_remainder();
        (32 - max_offset.leading_zeros()).max(1)
    }

    fn entry_word_bytes(&self) -> usize {
        if self.config.k * self.bits_per_offset() <= 32 {
            4
        } else {
            8
        }
    }

    /// Serialized byte size (header plus packed entries).
    pub fn serialized_len(&self) -> usize {
        12 + self.entries as usize * self.entry_word_bytes()
    }

    /// Writes the table: magic `CPLT`, the pool config as four 16-bit
    /// little-endian fields, then one little-endian word per entry with the
    /// `k` offsets packed at the minimal per-offset bit width (6 bits for
    /// the shipped presets with a starting width, 7 when counters start at
    /// zero bits and an offset can reach `n`).
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&OFFSET_MAGIC)?;
        for field in [self.config.n, self.config.k, self.config.s, self.config.i] {
            w.write_all(&(field as u16).to_le_bytes())?;
        }
        let bpo = self.bits_per_offset();
        let word_bytes = self.entry_word_bytes();
        let k = self.config.k as usize;
        let mut buf = Vec::with_capacity(self.entries as usize * word_bytes);
        for c in 0..self.entries {
            let row = self.offsets(c as u32);
            let mut word = 0u64;
            for (j, &offset) in row[..k].iter().enumerate() {
                word |= (offset as u64) << (j as u32 * bpo);
            }
            buf.extend_from_slice(&word.to_le_bytes()[..word_bytes]);
        }
        w.write_all(&buf)
    }

    pub fn read_from<R: Read>(mut r: R) -> io::Result<Self> {
        let mut header = [0u8; 12];
        r.read_exact(&mut header)?;
        if header[..4] != OFFSET_MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad CPLT magic"));
        }
        let field = |i: usize| u16::from_le_bytes([header[4 + 2 * i], header[5 + 2 * i]]) as u32;
        let config = PoolConfig::new(field(0), field(1), field(2), field(3))
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        // Rebuilding and verifying against the file also restores the
        // ranking table, which the file does not carry.
        let built = Self::build(config)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        let word_bytes = built.entry_word_bytes();
        let bpo = built.bits_per_offset();
        let k = config.k as usize;
        let mut raw = vec![0u8; built.entries as usize * word_bytes];
        r.read_exact(&mut raw)?;
        let offset_mask = (1u64 << bpo) - 1;
        for (c, chunk) in raw.chunks_exact(word_bytes).enumerate() {
            let mut word_bytes_full = [0u8; 8];
            word_bytes_full[..word_bytes].copy_from_slice(chunk);
            let word = u64::from_le_bytes(word_bytes_full);
            let row = built.offsets(c as u32);
            for (j, &offset) in row[..k].iter().enumerate() {
                let stored = (word >> (j as u32 * bpo)) & offset_mask;
                if stored != offset as u64 {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        format!("entry {c} offset {j} mismatch"),
                    ));
                }
            }
        }
        Ok(built)
    }

    /// Loads from a cache file in `dir` if present, otherwise builds and
    /// writes one. With `dir = None`, builds in memory.
    pub fn cached(config: PoolConfig, dir: Option<&Path>) -> Result<Self, PoolError> {
        let Some(dir) = dir else {
            return Self::build(config);
        };
        let path = dir.join(format!(
            "offsets_{}_{}_{}_{}.cplt",
            config.n, config.k, config.s, config.i
        ));
        if path.exists() {
            let file = fs::File::open(&path)
                .map_err(|e| PoolError::Cache(format!("{}: {e}", path.display())))?;
            return Self::read_from(io::BufReader::new(file))
                .map_err(|e| PoolError::Cache(format!("{}: {e}", path.display())));
        }
        let table = Self::build(config)?;
        fs::create_dir_all(dir).map_err(|e| PoolError::Cache(format!("{}: {e}", dir.display())))?;
        let file = fs::File::create(&path)
            .map_err(|e| PoolError::Cache(format!("{}: {e}", path.display())))?;
        table
            .write_to(io::BufWriter::new(file))
            .map_err(|e| PoolError::Cache(format!("{}: {e}", path.display())))?;
        Ok(table)
    }

    /// [`cached`](Self::cached) with the directory taken from
    /// `COUNTERPOOLS_TABLE_DIR`; absence means build in memory.
    pub fn cached_from_env(config: PoolConfig) -> Result<Self, PoolError> {
        Self::cached(config, table_dir_from_env().as_deref())
    }
}

impl fmt::Debug for OffsetTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OffsetTable")
            .field("config", &self.config)
            .field("entries", &self.entries)
            .finish()
    }
}
