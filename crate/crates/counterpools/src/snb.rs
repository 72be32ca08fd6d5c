//! Stars-and-bars ranking and unranking of size partitions.
//!
//! A *k-partition of n* is a list of `k` non-negative integers summing to
//! exactly `n`. There are `snb(n, k) = C(n + k - 1, k - 1)` of them, and this
//! module maps each one to its rank in the lexicographic ordering of all
//! such partitions (and back). The rank is what the pool layer stores as a
//! configuration number.
//!
//! Ranking sums, for each position, the number of partitions whose entry at
//! that position is smaller than the given one. Those prefix sums are
//! precomputed in an [`SnbTable`], which makes ranking O(k) and unranking
//! O(n + k).

use std::fmt;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

/// Environment variable naming a directory for table cache files.
pub const TABLE_DIR_ENV: &str = "COUNTERPOOLS_TABLE_DIR";

const SNB_MAGIC: [u8; 4] = *b"SNBT";
const SNB_VERSION: u8 = 1;

/// Errors from partition ranking and table construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SnbError {
    /// `snb(n, k)` does not fit in 64 bits (or an intermediate product
    /// overflowed while computing it).
    RangeOverflow { n: u64, k: u64 },
    /// `k = 0` was requested; partitions need at least one part.
    ZeroParts,
    /// A partition violated its invariants (empty, or wrong sum).
    InvalidPartition(&'static str),
    /// Arguments exceed the dimensions the table was built for.
    OutOfTableRange { n: u64, k: u64 },
    /// A configuration number is not below `snb(n, k)`.
    ConfigOutOfRange { value: u64, limit: u64 },
    /// Reading or writing a cache file failed.
    Cache(String),
}

impl fmt::Display for SnbError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SnbError::RangeOverflow { n, k } => {
                write!(f, "snb({n}, {k}) exceeds the 64-bit range")
            }
            SnbError::ZeroParts => write!(f, "partitions need at least one part"),
            SnbError::InvalidPartition(why) => write!(f, "invalid partition: {why}"),
            SnbError::OutOfTableRange { n, k } => {
                write!(f, "arguments ({n}, {k}) exceed the table dimensions")
            }
            SnbError::ConfigOutOfRange { value, limit } => {
                write!(f, "configuration number {value} is not below {limit}")
            }
            SnbError::Cache(why) => write!(f, "table cache: {why}"),
        }
    }
}

impl std::error::Error for SnbError {}

/// Number of ways to place `n` identical balls into `k` distinguishable
/// bins, i.e. `C(n + k - 1, k - 1)`.
///
/// Returns an error if the count (or an intermediate product) overflows
/// 64 bits. `k` must be at least 1.
pub fn snb(n: u64, k: u64) -> Result<u64, SnbError> {
    if k == 0 {
        return Err(SnbError::ZeroParts);
    }
    n.checked_add(k - 1)
        .and_then(|total| binomial(total, k - 1))
        .ok_or(SnbError::RangeOverflow { n, k })
}

/// `snb` extended with the empty-bin convention used while building tables:
/// zero bins hold the empty sum and nothing else.
fn snb_or_zero(n: u64, k: u64) -> Result<u64, SnbError> {
    if k == 0 {
        return Ok(if n == 0 { 1 } else { 0 });
    }
    snb(n, k)
}

fn binomial(n: u64, mut r: u64) -> Option<u64> {
    if r > n {
        return Some(0);
    }
    r = r.min(n - r);
    let mut acc: u64 = 1;
    for step in 1..=r {
        // acc holds C(n, step - 1); the product below is divisible by step.
        acc = acc.checked_mul(n - r + step)? / step;
    }
    Some(acc)
}

/// A list of `k` non-negative parts summing to exactly `budget`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizePartition {
    parts: Vec<u64>,
    budget: u64,
}

impl SizePartition {
    /// Validates the partition invariants: at least one part, and the parts
    /// sum to `budget` exactly. Callers model slack as an explicit part.
    pub fn new(parts: Vec<u64>, budget: u64) -> Result<Self, SnbError> {
        if parts.is_empty() {
            return Err(SnbError::InvalidPartition("no parts"));
        }
        let mut sum: u64 = 0;
        for &p in &parts {
            sum = sum
                .checked_add(p)
                .ok_or(SnbError::InvalidPartition("part sum overflows"))?;
        }
        if sum != budget {
            return Err(SnbError::InvalidPartition("parts do not sum to the budget"));
        }
        Ok(Self { parts, budget })
    }

    pub fn parts(&self) -> &[u64] {
        &self.parts
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn into_parts(self) -> Vec<u64> {
        self.parts
    }
}

/// Rank of a partition among all partitions of the same `(budget, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigNumber(pub u64);

impl fmt::Display for ConfigNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Precomputed prefix sums of stars-and-bars counts.
///
/// `get(a, b, c)` is the number of `(b + 1)`-partitions of `a` whose first
/// part is smaller than `c`, i.e. the sum of `snb(a - j, b)` over `j < c`.
/// `b` is the number of bins *remaining after the first part is removed*,
/// which is exactly how ranking and unranking consume it. Entries exist for
/// `a <= n`, `1 <= b <= k`, `c <= a + 1`; the `c = a + 1` entry equals
/// `snb(a, b + 1)` and lets the unranking scan run without a bounds branch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnbTable {
    n: u32,
    k: u32,
    data: Vec<u64>,
}

impl SnbTable {
    /// Builds the table for budgets up to `n` and partitions of up to `k`
    /// parts. Size is O(n^2 * k) entries; construction is an offline cost.
    pub fn build(n: u32, k: u32) -> Result<Self, SnbError> {
        if k == 0 {
            return Err(SnbError::ZeroParts);
        }
        let mut data = vec![0u64; Self::len_for(n, k)];
        for a in 0..=n as u64 {
            for b in 1..=k as u64 {
                let base = Self::index(k, a as u32, b as u32, 0);
                // data[base] is the empty sum, already 0.
                let mut acc = 0u64;
                for c in 1..=(a + 1) {
                    let term = snb_or_zero(a - (c - 1), b)?;
                    acc = acc
                        .checked_add(term)
                        .ok_or(SnbError::RangeOverflow { n: a, k: b + 1 })?;
                    data[base + c as usize] = acc;
                }
            }
        }
        Ok(Self { n, k, data })
    }

    fn len_for(n: u32, k: u32) -> usize {
        let n = n as usize;
        let k = k as usize;
        // Per budget a there are k rows of (a + 2) entries.
        k * ((n + 1) * (n + 2) / 2 + (n + 1))
    }

    #[inline]
    fn index(k: u32, a: u32, b: u32, c: u32) -> usize {
        debug_assert!(b >= 1);
        let (a, b, c, k) = (a as usize, b as usize, c as usize, k as usize);
        debug_assert!(c <= a + 1);
        k * (a * (a + 3) / 2) + (b - 1) * (a + 2) + c
    }

    /// Number of partitions of `a` into `b + 1` parts whose first part is
    /// below `c`. Panics if the indices exceed the table dimensions.
    #[inline]
    pub fn get(&self, a: u64, b: u32, c: u64) -> u64 {
        assert!(a <= self.n as u64 && b >= 1 && b <= self.k && c <= a + 1);
        self.data[Self::index(self.k, a as u32, b, c as u32)]
    }

    pub fn max_budget(&self) -> u32 {
        self.n
    }

    pub fn max_parts(&self) -> u32 {
        self.k
    }

    /// Lexicographic rank of `partition`, in O(k) table lookups.
    pub fn encode(&self, partition: &SizePartition) -> Result<ConfigNumber, SnbError> {
        self.encode_parts(partition.parts()).map(ConfigNumber)
    }

    /// Slice form of [`encode`](Self::encode); validates that the parts fit
    /// the table dimensions. The sum of `parts` is the budget.
    pub fn encode_parts(&self, parts: &[u64]) -> Result<u64, SnbError> {
        if parts.is_empty() {
            return Err(SnbError::InvalidPartition("no parts"));
        }
        let mut budget: u64 = 0;
        for &p in parts {
            budget = budget
                .checked_add(p)
                .ok_or(SnbError::InvalidPartition("part sum overflows"))?;
        }
        if budget > self.n as u64 || parts.len() as u32 > self.k {
            return Err(SnbError::OutOfTableRange {
                n: budget,
                k: parts.len() as u64,
            });
        }
        let mut rank = 0u64;
        let mut remaining = budget;
        let k = parts.len();
        for (level, &part) in parts[..k - 1].iter().enumerate() {
            let bins_left = (k - 1 - level) as u32;
            rank += self.get(remaining, bins_left, part);
            remaining -= part;
        }
        Ok(rank)
    }

    /// Inverse of [`encode`](Self::encode): reconstructs the partition of
    /// `budget` into `parts` parts with rank `config`.
    pub fn decode(
        &self,
        config: ConfigNumber,
        budget: u64,
        parts: u32,
    ) -> Result<SizePartition, SnbError> {
        let mut out = vec![0u64; parts as usize];
        self.decode_parts(config.0, budget, &mut out)?;
        Ok(SizePartition { parts: out, budget })
    }

    /// Slice form of [`decode`](Self::decode); fills `out` (whose length is
    /// the part count) without allocating. Runs in O(budget + k): the scan
    /// for each leading part shrinks the remaining budget by what it found.
    pub fn decode_parts(&self, config: u64, budget: u64, out: &mut [u64]) -> Result<(), SnbError> {
        let k = out.len() as u32;
        if k == 0 {
            return Err(SnbError::ZeroParts);
        }
        if budget > self.n as u64 || k > self.k {
            return Err(SnbError::OutOfTableRange {
                n: budget,
                k: k as u64,
            });
        }
        let limit = if k == 1 {
            1
        } else {
            self.get(budget, k - 1, budget + 1)
        };
        if config >= limit {
            return Err(SnbError::ConfigOutOfRange {
                value: config,
                limit,
            });
        }
        let mut rank = config;
        let mut remaining = budget;
        let (leading, last) = out.split_at_mut((k - 1) as usize);
        for (level, slot) in leading.iter_mut().enumerate() {
            let bins_left = k - 1 - level as u32;
            let mut first = 0u64;
            while self.get(remaining, bins_left, first + 1) <= rank {
                first += 1;
            }
            rank -= self.get(remaining, bins_left, first);
            *slot = first;
            remaining -= first;
        }
        last[0] = remaining;
        debug_assert_eq!(rank, 0);
        Ok(())
    }

    /// Serialized byte size (header plus entries).
    pub fn serialized_len(&self) -> usize {
        9 + self.data.len() * 8
    }

    /// Writes the table: magic `SNBT`, version byte, `n` and `k` as 16-bit
    /// little-endian, then all entries row-major as 64-bit little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&SNB_MAGIC)?;
        w.write_all(&[SNB_VERSION])?;
        w.write_all(&(self.n as u16).to_le_bytes())?;
        w.write_all(&(self.k as u16).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for &v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    /// Reads a table back, verifying every entry against a fresh build
    /// (construction is cheap; a corrupt cache must never rank silently
    /// wrong).
    pub fn read_from<R: Read>(mut r: R) -> io::Result<Self> {
        let mut header = [0u8; 9];
        r.read_exact(&mut header)?;
        if header[..4] != SNB_MAGIC {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "bad SNBT magic"));
        }
        if header[4] != SNB_VERSION {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "unsupported SNBT version",
            ));
        }
        let n = u16::from_le_bytes([header[5], header[6]]) as u32;
        let k = u16::from_le_bytes([header[7], header[8]]) as u32;
        let len = Self::len_for(n, k);
        let mut raw = vec![0u8; len * 8];
        r.read_exact(&mut raw)?;
        let data: Vec<u64> = raw
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let built = Self::build(n, k)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
        if built.data != data {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "SNBT entries do not match their definition",
            ));
        }
        Ok(built)
    }

    /// Loads the table from `dir` if a cache file exists there, otherwise
    /// builds it and writes the cache. With `dir = None`, builds in memory.
    pub fn cached(n: u32, k: u32, dir: Option<&Path>) -> Result<Self, SnbError> {
        let Some(dir) = dir else {
            return Self::build(n, k);
        };
        let path = dir.join(format!("snb_{n}_{k}.snbt"));
        if path.exists() {
            let file = fs::File::open(&path)
                .map_err(|e| SnbError::Cache(format!("{}: {e}", path.display())))?;
            return Self::read_from(io::BufReader::new(file))
                .map_err(|e| SnbError::Cache(format!("{}: {e}", path.display())));
        }
        let table = Self::build(n, k)?;
        fs::create_dir_all(dir).map_err(|e| SnbError::Cache(format!("{}: {e}", dir.display())))?;
        let file = fs::File::create(&path)
            .map_err(|e| SnbError::Cache(format!("{}: {e}", path.display())))?;
        table
            .write_to(io::BufWriter::new(file))
            .map_err(|e| SnbError::Cache(format!("{}: {e}", path.display())))?;
        Ok(table)
    }

    /// [`cached`](Self::cached) with the directory taken from
    /// `COUNTERPOOLS_TABLE_DIR`; absence means build in memory.
    pub fn cached_from_env(n: u32, k: u32) -> Result<Self, SnbError> {
        Self::cached(n, k, table_dir_from_env().as_deref())
    }
}

/// Reads `COUNTERPOOLS_TABLE_DIR`, if set and non-empty.
pub fn table_dir_from_env() -> Option<PathBuf> {
    match std::env::var_os(TABLE_DIR_ENV) {
        Some(v) if !v.is_empty() => Some(PathBuf::from(v)),
        _ => None,
    }
}
