//! Stream generation, trace files, and the evaluation metrics.
//!
//! Streams are sequences of 64-bit keys. Synthetic streams follow a Zipf
//! distribution sampled by inverse CDF over a precomputed rank table, so a
//! given seed always reproduces the same stream. Trace files round-trip
//! through a small binary format (or plain CSV, one decimal key per line).
//!
//! The error metrics follow the on-arrival protocol: for item `i` the
//! estimator is updated first, then its estimate is recorded against the
//! item's true count so far (inclusive). A perfect estimator therefore
//! scores exactly zero.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;
use std::time::Instant;

use crate::hashing::SplitMix64;

/// Largest rank table we are willing to precompute.
pub const MAX_UNIVERSE: u64 = 1 << 27;

const TRACE_MAGIC: [u8; 4] = *b"CPTR";
const TRACE_VERSION: u8 = 1;

#[derive(Debug)]
pub enum WorkloadError {
    InvalidParam(&'static str),
    UniverseTooLarge {
        universe: u64,
        limit: u64,
    },
    /// The stream had no items to finalize a metric over.
    EmptyStream,
    Io(io::Error),
    /// A trace file violated its format at the given byte offset.
    Format {
        offset: u64,
        what: String,
    },
}

impl fmt::Display for WorkloadError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadError::InvalidParam(why) => write!(f, "{why}"),
            WorkloadError::UniverseTooLarge { universe, limit } => {
                write!(
                    f,
                    "universe {universe} exceeds the tabulation limit {limit}"
                )
            }
            WorkloadError::EmptyStream => write!(f, "metric finalized over an empty stream"),
            WorkloadError::Io(e) => write!(f, "{e}"),
            WorkloadError::Format { offset, what } => {
                write!(f, "trace format error at byte {offset}: {what}")
            }
        }
    }
}

impl std::error::Error for WorkloadError {}

impl From<io::Error> for WorkloadError {
    fn from(e: io::Error) -> Self {
        WorkloadError::Io(e)
    }
}

/// Parameters of a synthetic Zipf stream: item probability is proportional
/// to `rank^-alpha` over `universe` ranks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfSpec {
    pub alpha: f64,
    pub universe: u64,
    pub length: u64,
    pub seed: u64,
}

impl ZipfSpec {
    /// The evaluation default: `2^24` ranks.
    pub const DEFAULT_UNIVERSE: u64 = 1 << 24;
}

/// Inverse-CDF Zipf sampler; yields exactly `length` keys, the hottest key
/// being 0.
pub struct ZipfGenerator {
    cdf: Vec<f64>,
    rng: SplitMix64,
    remaining: u64,
}

/// Builds the sampler for `spec`. The rank table costs 8 bytes per universe
/// element; universes past [`MAX_UNIVERSE`] are rejected.
pub fn generate_zipf(spec: ZipfSpec) -> Result<ZipfGenerator, WorkloadError> {
    if spec.alpha <= 0.0 || spec.alpha.is_nan() {
        return Err(WorkloadError::InvalidParam("alpha must be positive"));
    }
    if spec.universe == 0 {
        return Err(WorkloadError::InvalidParam("universe must be nonempty"));
    }
    if spec.universe > MAX_UNIVERSE {
        return Err(WorkloadError::UniverseTooLarge {
            universe: spec.universe,
            limit: MAX_UNIVERSE,
        });
    }
    let mut cdf = Vec::with_capacity(spec.universe as usize);
    let mut total = 0.0f64;
    for rank in 0..spec.universe {
        total += ((rank + 1) as f64).powf(-spec.alpha);
        cdf.push(total);
    }
    for c in cdf.iter_mut() {
        *c /= total;
    }
    if let Some(last) = cdf.last_mut() {
        *last = 1.0;
    }
    Ok(ZipfGenerator {
        cdf,
        rng: SplitMix64::new(spec.seed),
        remaining: spec.length,
    })
}

impl Iterator for ZipfGenerator {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let u = self.rng.next_f64();
        let rank = self.cdf.partition_point(|&c| c <= u);
        Some(rank.min(self.cdf.len() - 1) as u64)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining as usize, Some(self.remaining as usize))
    }
}

/// Writes a binary trace: magic `CPTR`, a version byte, the key count as
/// 64-bit little-endian, then the keys as 64-bit little-endian.
pub fn write_trace<W: Write>(mut w: W, keys: &[u64]) -> io::Result<()> {
    w.write_all(&TRACE_MAGIC)?;
    w.write_all(&[TRACE_VERSION])?;
    w.write_all(&(keys.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * 1024);
    for chunk in keys.chunks(1024) {
        buf.clear();
        for &k in chunk {
            buf.extend_from_slice(&k.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Streaming reader over a binary trace; O(1) memory.
pub struct TraceReader<R> {
    inner: R,
    remaining: u64,
    offset: u64,
}

impl<R: Read> TraceReader<R> {
    pub fn new(mut inner: R) -> Result<Self, WorkloadError> {
        let mut header = [0u8; 13];
        inner.read_exact(&mut header).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                WorkloadError::Format {
                    offset: 0,
                    what: "truncated header".into(),
                }
            } else {
                WorkloadError::Io(e)
            }
        })?;
        if header[..4] != TRACE_MAGIC {
            return Err(WorkloadError::Format {
                offset: 0,
                what: format!("bad magic {:02x?}", &header[..4]),
            });
        }
        if header[4] != TRACE_VERSION {
            return Err(WorkloadError::Format {
                offset: 4,
                what: format!("unsupported version {}", header[4]),
            });
        }
        let remaining = u64::from_le_bytes(header[5..13].try_into().unwrap());
        Ok(Self {
            inner,
            remaining,
            offset: 13,
        })
    }

    pub fn remaining(&self) -> u64 {
        self.remaining
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<u64, WorkloadError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let mut buf = [0u8; 8];
        match self.inner.read_exact(&mut buf) {
            Ok(()) => {
                self.remaining -= 1;
                self.offset += 8;
                Some(Ok(u64::from_le_bytes(buf)))
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                self.remaining = 0;
                Some(Err(WorkloadError::Format {
                    offset: self.offset,
                    what: "truncated record".into(),
                }))
            }
            Err(e) => {
                self.remaining = 0;
                Some(Err(WorkloadError::Io(e)))
            }
        }
    }
}

/// Opens a binary trace file.
pub fn read_trace(path: &Path) -> Result<TraceReader<BufReader<File>>, WorkloadError> {
    TraceReader::new(BufReader::new(File::open(path)?))
}

/// Streaming reader over a CSV trace: one decimal key per line, no header.
pub struct CsvTraceReader<R> {
    lines: io::Lines<R>,
    line_no: u64,
}

impl<R: BufRead> CsvTraceReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            lines: inner.lines(),
            line_no: 0,
        }
    }
}

impl<R: BufRead> Iterator for CsvTraceReader<R> {
    type Item = Result<u64, WorkloadError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line_no += 1;
            match self.lines.next()? {
                Ok(line) => {
                    let line = line.trim();
                    if line.is_empty() {
                        continue;
                    }
                    return Some(line.parse::<u64>().map_err(|_| WorkloadError::Format {
                        offset: self.line_no,
                        what: format!("line {}: not a decimal key", self.line_no),
                    }));
                }
                Err(e) => return Some(Err(WorkloadError::Io(e))),
            }
        }
    }
}

/// Opens a CSV trace file.
pub fn read_trace_csv(path: &Path) -> Result<CsvTraceReader<BufReader<File>>, WorkloadError> {
    Ok(CsvTraceReader::new(BufReader::new(File::open(path)?)))
}

/// On-arrival error accumulator with an exact oracle.
///
/// Call [`observe`](Self::observe) once per stream item, after updating the
/// estimator; it counts the item into the oracle and accumulates the
/// squared error of the supplied estimate against the item's true count so
/// far.
#[derive(Debug, Default)]
pub struct MetricsAccumulator {
    items: u64,
    squared_error: u128,
    truth: HashMap<u64, u64>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, key: u64, estimate: u64) {
        let count = self.truth.entry(key).or_insert(0);
        *count += 1;
        self.items += 1;
        let diff = estimate.abs_diff(*count) as u128;
        self.squared_error = self.squared_error.saturating_add(diff * diff);
    }

    pub fn items(&self) -> u64 {
        self.items
    }

    pub fn distinct_keys(&self) -> usize {
        self.truth.len()
    }

    pub fn true_count(&self, key: u64) -> u64 {
        self.truth.get(&key).copied().unwrap_or(0)
    }

    pub fn true_counts(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.truth.iter().map(|(&k, &c)| (k, c))
    }

    /// `(1/n) * sqrt((1/n) * sum (f_i - est_i)^2)`; always in `[0, 1]` for
    /// on-arrival estimates.
    pub fn nrmse(&self) -> Result<f64, WorkloadError> {
        if self.items == 0 {
            return Err(WorkloadError::EmptyStream);
        }
        let n = self.items as f64;
        Ok((self.squared_error as f64 / n).sqrt() / n)
    }

    /// Average relative error over the heavy hitters: keys whose final true
    /// count reaches `theta` times the stream length. `None` when no key
    /// qualifies. Final estimates are taken through `estimate`.
    pub fn heavy_hitter_are<F: FnMut(u64) -> u64>(
        &self,
        theta: f64,
        mut estimate: F,
    ) -> Option<f64> {
        let threshold = theta * self.items as f64;
        let mut sum = 0.0f64;
        let mut hitters = 0u64;
        for (&key, &count) in &self.truth {
            if (count as f64) < threshold {
                continue;
            }
            hitters += 1;
            sum += estimate(key).abs_diff(count) as f64 / count as f64;
        }
        (hitters > 0).then(|| sum / hitters as f64)
    }
}

/// Throughput of a repeated run, in million operations per second.
#[derive(Debug, Clone, Copy)]
pub struct Throughput {
    pub mops_mean: f64,
    pub mops_std: f64,
    pub total_ns: u128,
}

/// Times `run` (which returns the operations it executed) over
/// `repetitions` passes after one untimed warmup pass.
pub fn measure_throughput<F: FnMut() -> u64>(mut run: F, repetitions: usize) -> Throughput {
    assert!(repetitions >= 1);
    run(); // warmup
    let mut rates = Vec::with_capacity(repetitions);
    let mut total_ns = 0u128;
    for _ in 0..repetitions {
        let start = Instant::now();
        let ops = run();
        let elapsed = start.elapsed();
        total_ns += elapsed.as_nanos();
        let secs = elapsed.as_secs_f64().max(1e-9);
        rates.push(ops as f64 / secs / 1e6);
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let var = if rates.len() > 1 {
        rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (rates.len() - 1) as f64
    } else {
        0.0
    };
    Throughput {
        mops_mean: mean,
        mops_std: var.sqrt(),
        total_ns,
    }
}
