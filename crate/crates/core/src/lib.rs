//! Core of the aging lab: metric time series, nonparametric trend statistics
//! (Mann-Kendall, Sen's slope and its rank-based confidence interval), the
//! degradation model of the synthetic targets, and the report engine.
//!
//! Everything in this crate is pure computation plus plain file I/O, so it
//! also builds for `wasm32-unknown-unknown`.

pub mod error;
pub mod metrics;
pub mod profile;
pub mod report;
pub mod series_io;
pub mod trend;

pub use error::{Error, Result};
pub use metrics::{MetricKind, MetricSample, RequestRecord, TimeSeries};
pub use profile::DegradationProfile;
pub use trend::{TrendResult, Verdict};
