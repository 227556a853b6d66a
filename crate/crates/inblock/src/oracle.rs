//! External data feeds: exchange rate, GDP index, inclusion-fee estimate.
//!
//! The registry prices allocations in fiat but collects fees in the ledger's
//! native coin, so it needs a trusted exchange rate; long-term fee stability
//! additionally indexes fiat prices to a GDP-style deflator, and an
//! inclusion-fee estimate is carried for cost reporting. All three arrive as
//! timestamped samples signed onto the chain by designated oracle accounts.
//! This module defines the sample type and two providers that produce them:
//! a static table for tests and a fixture reader that replays a recorded
//! feed from disk.

use crate::amount::Amount;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("no {0:?} sample available at time {1}")]
    NoSample(OracleKind, u64),
    #[error("latest {kind:?} sample is {age} s old, exceeding the {max_age} s limit")]
    StaleSample { kind: OracleKind, age: u64, max_age: u64 },
    #[error("fixture malformed at line {line}: {reason}")]
    MalformedFixture { line: usize, reason: String },
    #[error("sample value must be positive, got {0}")]
    NonPositiveValue(Amount),
    #[error("sample timestamps must be strictly increasing per kind")]
    OutOfOrder,
}

/// What quantity a sample reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Fiat per native coin.
    ExchangeRate,
    /// Dimensionless deflator relative to the fee schedule's base index.
    GdpIndex,
    /// Estimated ledger inclusion fee per transaction, in fiat.
    TxFeeEstimate,
}

impl OracleKind {
    /// Stable single-byte tag used in canonical transaction encoding.
    pub fn tag(&self) -> u8 {
        match self {
            OracleKind::ExchangeRate => 0,
            OracleKind::GdpIndex => 1,
            OracleKind::TxFeeEstimate => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(OracleKind::ExchangeRate),
            1 => Some(OracleKind::GdpIndex),
            2 => Some(OracleKind::TxFeeEstimate),
            _ => None,
        }
    }
}

/// One timestamped oracle reading.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleSample {
    pub kind: OracleKind,
    pub value: Amount,
    /// When the reading was taken (registry time).
    pub as_of: u64,
    /// Which upstream series produced it (publisher id, exchange name, …).
    #[serde(default)]
    pub source_id: String,
}

impl OracleSample {
    pub fn new(
        kind: OracleKind,
        value: Amount,
        as_of: u64,
        source_id: &str,
    ) -> Result<Self, OracleError> {
        if !value.is_positive() {
            return Err(OracleError::NonPositiveValue(value));
        }
        Ok(OracleSample {
            kind,
            value,
            as_of,
            source_id: source_id.to_string(),
        })
    }
}

/// Anything that can answer "latest sample of this kind at or before t".
pub trait OracleProvider {
    fn sample_at(&self, kind: OracleKind, now: u64) -> Result<OracleSample, OracleError>;
}

/// Latest sample of `kind` not newer than `now`, rejected as stale when it is
/// older than `max_age` seconds (pass `None` to accept any age).
pub fn get_sample(
    provider: &dyn OracleProvider,
    kind: OracleKind,
    now: u64,
    max_age: Option<u64>,
) -> Result<OracleSample, OracleError> {
    let sample = provider.sample_at(kind, now)?;
    if let Some(max_age) = max_age {
        let age = now - sample.as_of;
        if age > max_age {
            return Err(OracleError::StaleSample { kind, age, max_age });
        }
    }
    Ok(sample)
}

/// Fixed table of samples; the simplest provider.
#[derive(Clone, Debug, Default)]
pub struct StaticProvider {
    samples: Vec<OracleSample>,
}

impl StaticProvider {
    pub fn new(mut samples: Vec<OracleSample>) -> Result<Self, OracleError> {
        samples.sort_by_key(|s| (s.kind, s.as_of));
        for pair in samples.windows(2) {
            if pair[0].kind == pair[1].kind && pair[0].as_of == pair[1].as_of {
                return Err(OracleError::OutOfOrder);
            }
        }
        Ok(StaticProvider { samples })
    }

    pub fn samples(&self) -> &[OracleSample] {
        &self.samples
    }
}

impl OracleProvider for StaticProvider {
    fn sample_at(&self, kind: OracleKind, now: u64) -> Result<OracleSample, OracleError> {
        self.samples
            .iter()
            .filter(|s| s.kind == kind && s.as_of <= now)
            .max_by_key(|s| s.as_of)
            .cloned()
            .ok_or(OracleError::NoSample(kind, now))
    }
}

/// Replays a recorded feed: one JSON object per line, e.g.
/// `{"kind":"exchange_rate","value":"200","as_of":1600000000,"source_id":"x"}`.
/// Lines starting with `#` and blank lines are skipped. Samples of the same
/// kind must have strictly increasing `as_of`.
#[derive(Clone, Debug)]
pub struct FixtureProvider {
    inner: StaticProvider,
}

impl std::str::FromStr for FixtureProvider {
    type Err = OracleError;

    fn from_str(text: &str) -> Result<Self, OracleError> {
        let mut samples = Vec::new();
        let mut last_per_kind: std::collections::BTreeMap<OracleKind, u64> = Default::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let sample: OracleSample =
                serde_json::from_str(line).map_err(|e| OracleError::MalformedFixture {
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            if !sample.value.is_positive() {
                return Err(OracleError::MalformedFixture {
                    line: idx + 1,
                    reason: format!("value must be positive, got {}", sample.value),
                });
            }
            if let Some(prev) = last_per_kind.get(&sample.kind) {
                if sample.as_of <= *prev {
                    return Err(OracleError::MalformedFixture {
                        line: idx + 1,
                        reason: "timestamps must be strictly increasing per kind".to_string(),
                    });
                }
            }
            last_per_kind.insert(sample.kind, sample.as_of);
            samples.push(sample);
        }
        Ok(FixtureProvider {
            inner: StaticProvider::new(samples)?,
        })
    }
}

impl FixtureProvider {
    pub fn from_path(path: &Path) -> Result<Self, OracleError> {
        let text = std::fs::read_to_string(path).map_err(|e| OracleError::MalformedFixture {
            line: 0,
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        text.parse()
    }

    /// All samples in feed order, for injecting into a simulation as
    /// transactions.
    pub fn samples(&self) -> &[OracleSample] {
        self.inner.samples()
    }
}

impl OracleProvider for FixtureProvider {
    fn sample_at(&self, kind: OracleKind, now: u64) -> Result<OracleSample, OracleError> {
        self.inner.sample_at(kind, now)
    }
}
