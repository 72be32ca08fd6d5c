//! Variable-width counters packed into fixed-size memory pools.
//!
//! A *counter pool* is one machine word shared by a handful of counters
//! whose widths grow and shrink on demand. The width split is stored as a
//! single *configuration number*: the rank of the split among all feasible
//! splits, computed combinatorially. Lookup tables make reads constant time
//! and resizes cheap, so pool arrays slot in wherever fixed-width counter
//! arrays are used today at a fraction of the memory.
//!
//! The crate ships the encoding itself ([`mod@snb`]), the pool layer
//! ([`pool`]), and two applications: approximate frequency sketches over
//! pool arrays ([`sketch`]) and an exact cuckoo-hashed histogram whose
//! buckets are pools ([`histogram`]). The [`workload`] module provides Zipf
//! stream generation, trace files, and the evaluation metrics used by the
//! `counterpools-cli` benchmark harness.
//!
//! ```
//! use counterpools::pool::{OffsetTable, PRESET_64_4_0_1};
//!
//! let table = OffsetTable::build(PRESET_64_4_0_1).unwrap();
//! let mut pool = table.fresh_pool();
//! table.increment(&mut pool, 2, 1000).unwrap();
//! assert_eq!(table.read(&pool, 2).unwrap(), 1000);
//! assert_eq!(table.read(&pool, 0).unwrap(), 0);
//! ```

pub mod hashing;
pub mod histogram;
pub mod pool;
pub mod sketch;
pub mod snb;
pub mod workload;

pub use pool::{OffsetTable, Pool, PoolConfig, PoolUpdateOutcome};
pub use sketch::{Baseline32Sketch, FailureStrategy, FrequencyEstimator, PooledSketch};
pub use snb::{snb, ConfigNumber, SizePartition, SnbTable};
