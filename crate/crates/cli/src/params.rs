//! Flag value parsing: datasets, metrics, memory sizes, seed lists.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

/// A flag combination error; exits with the usage code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// `zipf:alpha:length` or `trace:path`.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Zipf { alpha: f64, length: u64 },
    Trace { path: PathBuf },
}

impl FromStr for DatasetSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("zipf:") {
            let (alpha, length) = rest
                .split_once(':')
                .ok_or("zipf dataset needs zipf:alpha:length")?;
            let alpha: f64 = alpha.parse().map_err(|_| "bad zipf alpha")?;
            let length: u64 = length.parse().map_err(|_| "bad zipf length")?;
            if alpha <= 0.0 || alpha.is_nan() {
                return Err("zipf alpha must be positive".into());
            }
            Ok(DatasetSpec::Zipf { alpha, length })
        } else if let Some(path) = s.strip_prefix("trace:") {
            Ok(DatasetSpec::Trace { path: path.into() })
        } else {
            Err("dataset must be zipf:alpha:length or trace:path".into())
        }
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Zipf { alpha, length } => write!(f, "zipf:{alpha}:{length}"),
            DatasetSpec::Trace { path } => write!(f, "trace:{}", path.display()),
        }
    }
}

/// `nrmse`, `are:theta` (decimal or `2^-k`), or `throughput`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricSpec {
    Nrmse,
    Are { theta: f64 },
    Throughput,
}

impl FromStr for MetricSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nrmse" => Ok(MetricSpec::Nrmse),
            "throughput" => Ok(MetricSpec::Throughput),
            other => {
                let theta = other
                    .strip_prefix("are:")
                    .ok_or("metric must be nrmse, are:theta, or throughput")?;
                let theta = parse_theta(theta)?;
                if !(theta > 0.0 && theta < 1.0) {
                    return Err("heavy-hitter theta must be in (0, 1)".into());
                }
                Ok(MetricSpec::Are { theta })
            }
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricSpec::Nrmse => write!(f, "nrmse"),
            MetricSpec::Are { theta } => write!(f, "are:{theta}"),
            MetricSpec::Throughput => write!(f, "throughput"),
        }
    }
}

fn parse_theta(s: &str) -> Result<f64, String> {
    if let Some(exp) = s.strip_prefix("2^-") {
        let exp: u32 = exp.parse().map_err(|_| "bad 2^-k exponent")?;
        if exp >= 64 {
            return Err("2^-k exponent too large".into());
        }
        Ok(1.0 / (1u64 << exp) as f64)
    } else {
        s.parse().map_err(|_| "bad theta".into())
    }
}

/// `pooled` or `baseline32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Pooled,
    Baseline32,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pooled" => Ok(Variant::Pooled),
            "baseline32" => Ok(Variant::Baseline32),
            _ => Err("variant must be pooled or baseline32".into()),
        }
    }
}

/// Byte size with an optional `KB`/`MB`/`K`/`M` suffix (binary units).
pub fn parse_memory(s: &str) -> Result<usize, String> {
    let s = s.trim();
    let (digits, mult) = if let Some(d) = s
        .strip_suffix("MB")
        .or_else(|| s.strip_suffix("M"))
        .or_else(|| s.strip_suffix("MiB"))
    {
        (d, 1024 * 1024)
    } else if let Some(d) = s
        .strip_suffix("KB")
        .or_else(|| s.strip_suffix("K"))
        .or_else(|| s.strip_suffix("KiB"))
    {
        (d, 1024)
    } else if let Some(d) = s.strip_suffix("B") {
        (d, 1)
    } else {
        (s, 1)
    };
    let value: usize = digits
        .trim()
        .parse()
        .map_err(|_| format!("bad size {s:?}"))?;
    Ok(value * mult)
}

pub fn parse_memory_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(parse_memory).collect()
}

pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad seed {p:?}")))
        .collect()
}

pub fn parse_exp_list(s: &str) -> Result<Vec<u32>, String> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad exponent {p:?}")))
        .collect()
}
