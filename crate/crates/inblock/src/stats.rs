//! Ingestion and analysis of registry delegation statistics files, plus the
//! economics arithmetic the analysis reports are built from: block-size
//! histograms, yearly-throughput requirements, whole-space acquisition
//! costs, and the position of a fee against the incumbent registries' fee
//! ranges.
//!
//! The input format is the standard pipe-separated "delegated-extended"
//! statistics file the regional registries publish: a version header,
//! per-registry summary lines, `#` comments, and one record per line
//! (`registry|country|af|start|value|date|status|opaque-id`, possibly with
//! trailing extension fields). For ipv6 rows the `value` column is the
//! prefix length — the format overloads this column, for ipv4 it is an
//! address count.

use crate::amount::Amount;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::net::Ipv6Addr;
use std::path::Path;
use thiserror::Error;

/// 365-day year, the convention behind the published per-second figure.
pub const SECONDS_PER_YEAR: u64 = 31_536_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("cannot read input: {0}")]
    UnreadableInput(String),
    #[error("no fee range is defined for /{0} blocks")]
    UnknownSize(u8),
}

/// Allocation state of a delegated block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelegationStatus {
    Allocated,
    Assigned,
    Available,
    Reserved,
}

impl DelegationStatus {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "allocated" => Some(DelegationStatus::Allocated),
            "assigned" => Some(DelegationStatus::Assigned),
            "available" => Some(DelegationStatus::Available),
            "reserved" => Some(DelegationStatus::Reserved),
            _ => None,
        }
    }

    fn as_str(&self) -> &'static str {
        match self {
            DelegationStatus::Allocated => "allocated",
            DelegationStatus::Assigned => "assigned",
            DelegationStatus::Available => "available",
            DelegationStatus::Reserved => "reserved",
        }
    }
}

impl fmt::Display for DelegationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One ipv6 delegation row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelegationStat {
    pub registry: String,
    pub country: String,
    /// Always "ipv6" for parsed records; other address families are
    /// filtered out, not errors.
    pub af: String,
    pub start: Ipv6Addr,
    pub prefix_length: u8,
    pub date: String,
    pub status: DelegationStatus,
    pub opaque_id: String,
}

impl DelegationStat {
    /// The record back in file form: the eight canonical fields, pipe
    /// separated. Re-serializing a parsed record reproduces its input line
    /// exactly (minus any trailing extension fields).
    pub fn to_line(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{}",
            self.registry,
            self.country,
            self.af,
            self.start,
            self.prefix_length,
            self.date,
            self.status,
            self.opaque_id
        )
    }
}

/// A non-fatal parsing anomaly, pointing at its input line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based line number in the input.
    pub line: usize,
    pub reason: String,
}

/// What a parse pass produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParseOutcome {
    /// ipv6 rows with status allocated or assigned, in input order.
    pub records: Vec<DelegationStat>,
    /// Malformed lines; never fatal.
    pub diagnostics: Vec<Diagnostic>,
    /// Well-formed rows excluded by the af/status filter, plus headers,
    /// summaries, and comments.
    pub skipped: u64,
}

/// Parses a delegated-extended statistics stream, keeping ipv6 rows with
/// status `allocated` or `assigned`. Header, summary, and comment lines are
/// skipped; malformed lines become [`Diagnostic`]s.
pub fn parse_delegated_extended(input: &str) -> ParseOutcome {
    let mut outcome = ParseOutcome::default();
    for (index, raw) in input.lines().enumerate() {
        let number = index + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            outcome.skipped += 1;
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        // Version header: starts with a bare format number.
        if index == 0 && fields.first().is_some_and(|f| f.parse::<u32>().is_ok()) {
            outcome.skipped += 1;
            continue;
        }
        // Summary lines end in the literal "summary".
        if fields.last() == Some(&"summary") {
            outcome.skipped += 1;
            continue;
        }
        if fields.len() < 8 {
            outcome.diagnostics.push(Diagnostic {
                line: number,
                reason: format!("expected at least 8 fields, found {}", fields.len()),
            });
            continue;
        }
        let af = fields[2];
        if af != "ipv6" {
            outcome.skipped += 1;
            continue;
        }
        let Some(status) = DelegationStatus::parse(fields[6]) else {
            outcome.diagnostics.push(Diagnostic {
                line: number,
                reason: format!("unknown status \"{}\"", fields[6]),
            });
            continue;
        };
        if !matches!(
            status,
            DelegationStatus::Allocated | DelegationStatus::Assigned
        ) {
            outcome.skipped += 1;
            continue;
        }
        let start: Ipv6Addr = match fields[3].parse() {
            Ok(addr) => addr,
            Err(_) => {
                outcome.diagnostics.push(Diagnostic {
                    line: number,
                    reason: format!("\"{}\" is not an IPv6 address", fields[3]),
                });
                continue;
            }
        };
        let prefix_length: u8 = match fields[4].parse() {
            Ok(len) if (1..=128).contains(&len) => len,
            _ => {
                outcome.diagnostics.push(Diagnostic {
                    line: number,
                    reason: format!(
                        "\"{}\" is not a prefix length in 1..=128 (for ipv6 rows this column is the prefix length)",
                        fields[4]
                    ),
                });
                continue;
            }
        };
        outcome.records.push(DelegationStat {
            registry: fields[0].to_string(),
            country: fields[1].to_string(),
            af: af.to_string(),
            start,
            prefix_length,
            date: fields[5].to_string(),
            status,
            opaque_id: fields[7].to_string(),
        });
    }
    outcome
}

/// [`parse_delegated_extended`] over a file; only I/O failure is an error.
pub fn read_delegated_extended(path: &Path) -> Result<ParseOutcome, StatsError> {
    let input = std::fs::read_to_string(path)
        .map_err(|e| StatsError::UnreadableInput(format!("{}: {e}", path.display())))?;
    Ok(parse_delegated_extended(&input))
}

/// Exact histogram of records by prefix length.
pub fn size_distribution(records: &[DelegationStat]) -> BTreeMap<u8, u64> {
    let mut histogram = BTreeMap::new();
    for record in records {
        *histogram.entry(record.prefix_length).or_insert(0) += 1;
    }
    histogram
}

/// How many blocks are larger (shorter prefix) than `length`.
pub fn count_shorter_than(distribution: &BTreeMap<u8, u64>, length: u8) -> u64 {
    distribution
        .range(..length)
        .map(|(_, count)| *count)
        .sum()
}

/// Transactions per second needed to sustain `yearly_tx` transactions over
/// a 365-day year. Exact rational; show two significant figures to compare
/// with published estimates.
pub fn throughput_requirement(yearly_tx: u64) -> Amount {
    Amount::ratio(yearly_tx as i64, SECONDS_PER_YEAR as i64)
}

/// Cost of buying every block of a space of `space_length`, at `fee_per_unit`
/// per smallest sellable block (/32 units for the published arguments):
/// fee × 2^(32 − space_length). `space_length` must be at most 32.
pub fn whole_space_cost(fee_per_unit: &Amount, space_length: u8) -> Amount {
    assert!(
        space_length <= 32,
        "whole-space cost is defined for spaces of /32 units (length ≤ 32)"
    );
    fee_per_unit.scale_pow2(32 - u32::from(space_length))
}

/// A per-size fee interval charged by the incumbent registries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeRange {
    pub min: Amount,
    pub max: Amount,
}

/// The vendored yearly-fee ranges: /32 blocks run $1000–$2500 across
/// registries, /48 blocks $100–$800.
pub fn rir_fee_ranges() -> BTreeMap<u8, FeeRange> {
    BTreeMap::from([
        (
            32,
            FeeRange {
                min: Amount::from_u64(1000),
                max: Amount::from_u64(2500),
            },
        ),
        (
            48,
            FeeRange {
                min: Amount::from_u64(100),
                max: Amount::from_u64(800),
            },
        ),
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standing {
    BelowRange,
    WithinRange,
    AboveRange,
}

/// Where a fee sits against the incumbent range for its block size.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeePosition {
    pub length: u8,
    pub fee: Amount,
    pub range: FeeRange,
    pub standing: Standing,
}

/// Compares `fee` with the vendored registry fee range for /`length`
/// blocks. Range endpoints count as within.
pub fn fee_position(fee: &Amount, length: u8) -> Result<FeePosition, StatsError> {
    let range = rir_fee_ranges()
        .remove(&length)
        .ok_or(StatsError::UnknownSize(length))?;
    let standing = if *fee < range.min {
        Standing::BelowRange
    } else if *fee > range.max {
        Standing::AboveRange
    } else {
        Standing::WithinRange
    };
    Ok(FeePosition {
        length,
        fee: fee.clone(),
        range,
        standing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn amt(s: &str) -> Amount {
        s.parse().unwrap()
    }

    const DOCUMENTED_ROW: &str = "apnic|JP|ipv6|2001:200::|35|19990813|allocated|A-ID";

    #[test]
    fn documented_row_parses_to_one_record() {
        let outcome = parse_delegated_extended(DOCUMENTED_ROW);
        assert!(outcome.diagnostics.is_empty());
        assert_eq!(outcome.records.len(), 1);
        let record = &outcome.records[0];
        assert_eq!(record.registry, "apnic");
        assert_eq!(record.country, "JP");
        assert_eq!(record.start, "2001:200::".parse::<Ipv6Addr>().unwrap());
        assert_eq!(record.prefix_length, 35);
        assert_eq!(record.date, "19990813");
        assert_eq!(record.status, DelegationStatus::Allocated);
        assert_eq!(record.opaque_id, "A-ID");
        assert_eq!(record.to_line(), DOCUMENTED_ROW);
    }

    #[test]
    fn headers_comments_and_other_families_are_skipped() {
        let input = "\
2|nro|20180513|5|19830613|20180512|+0000
# a comment
apnic|*|ipv6|*|2|summary
arin|US|ipv4|192.0.2.0|1024|20050101|allocated|X-1
apnic|AU|asn|64500|1|20050101|assigned|X-2
ripencc|DE|ipv6|2001:db8::|32|20101010|allocated|K-1
ripencc|DE|ipv6|2001:db9::|32|20101010|available|K-2
ripencc|DE|ipv6|2001:dba::|32|20101010|reserved|K-3
";
        let outcome = parse_delegated_extended(input);
        assert!(outcome.diagnostics.is_empty());
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.records[0].opaque_id, "K-1");
        // header, comment, summary, ipv4, asn, available, reserved
        assert_eq!(outcome.skipped, 7);
    }

    #[test]
    fn malformed_lines_become_line_numbered_diagnostics() {
        let input = "\
apnic|JP|ipv6|2001:200::|35|19990813|allocated|A-1
apnic|JP|ipv6|not-an-address|35|19990813|allocated|A-2
apnic|JP|ipv6|2001:201::|0|19990813|allocated|A-3
apnic|JP|ipv6|2001:202::|129|19990813|allocated|A-4
apnic|JP|ipv6|2001:203::|banana|19990813|allocated|A-5
apnic|JP|ipv6|2001:204::|32|19990813|squatted|A-6
apnic|JP|ipv6|2001:205::
apnic|JP|ipv6|2001:206::|32|19990813|assigned|A-8
";
        let outcome = parse_delegated_extended(input);
        assert_eq!(outcome.records.len(), 2);
        assert_eq!(outcome.records[0].opaque_id, "A-1");
        assert_eq!(outcome.records[1].opaque_id, "A-8");
        let lines: Vec<usize> = outcome.diagnostics.iter().map(|d| d.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5, 6, 7]);
        assert!(outcome.diagnostics[0].reason.contains("not-an-address"));
        assert!(outcome.diagnostics[4].reason.contains("squatted"));
        assert!(outcome.diagnostics[5].reason.contains("8 fields"));
    }

    #[test]
    fn histogram_counts_exactly() {
        let input = "\
apnic|JP|ipv6|2001:200::|32|20100101|allocated|H-1
arin|US|ipv6|2600::|32|20100101|assigned|H-2
ripencc|DE|ipv6|2a00::|48|20100101|allocated|H-3
";
        let outcome = parse_delegated_extended(input);
        let histogram = size_distribution(&outcome.records);
        assert_eq!(histogram, BTreeMap::from([(32, 2), (48, 1)]));
        assert_eq!(histogram.values().sum::<u64>(), outcome.records.len() as u64);

        assert!(size_distribution(&[]).is_empty());
    }

    #[test]
    fn shorter_than_counts_strictly() {
        let histogram = BTreeMap::from([(20, 5), (28, 6), (29, 100), (32, 7)]);
        assert_eq!(count_shorter_than(&histogram, 29), 11);
        assert_eq!(count_shorter_than(&histogram, 20), 0);
        assert_eq!(count_shorter_than(&histogram, 33), 118);
    }

    #[test]
    fn vendored_fixture_reproduces_the_published_distribution() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/delegated-extended-fixture.txt");
        let outcome = read_delegated_extended(&path).unwrap();
        assert!(outcome.diagnostics.is_empty());
        let histogram = size_distribution(&outcome.records);
        assert_eq!(histogram[&32], 17_795);
        assert_eq!(histogram[&48], 6_283);
        assert_eq!(histogram[&29], 7_903);
        assert_eq!(count_shorter_than(&histogram, 29), 191);
        assert_eq!(
            histogram.values().sum::<u64>(),
            outcome.records.len() as u64
        );
    }

    #[test]
    fn parsed_records_reserialize_to_their_input_lines() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/delegated-extended-fixture.txt");
        let input = std::fs::read_to_string(&path).unwrap();
        let outcome = parse_delegated_extended(&input);
        let kept: Vec<&str> = input
            .lines()
            .filter(|l| {
                let f: Vec<&str> = l.split('|').collect();
                f.len() == 8 && f[2] == "ipv6" && matches!(f[6], "allocated" | "assigned")
            })
            .collect();
        assert_eq!(kept.len(), outcome.records.len());
        for (line, record) in kept.iter().zip(&outcome.records) {
            assert_eq!(&record.to_line(), line);
        }
    }

    #[test]
    fn throughput_matches_published_figures() {
        assert_eq!(throughput_requirement(58_700).format_sigfigs(2), "0.0019");
        assert_eq!(throughput_requirement(0), Amount::zero());
        assert_eq!(throughput_requirement(31_536_000).format_sigfigs(2), "1.0");
    }

    #[test]
    fn throughput_is_linear() {
        let one = throughput_requirement(12_345);
        let two = throughput_requirement(24_690);
        assert_eq!(one * Amount::from_u64(2), two);
    }

    #[test]
    fn whole_space_cost_figures() {
        let fee = amt("3000");
        assert_eq!(whole_space_cost(&fee, 20), amt("12288000"));
        assert_eq!(whole_space_cost(&fee, 32), amt("3000"));
        // The full unicast space: 2^32 /32-blocks. The published headline
        // says 12.6×10^12; the exact arithmetic gives 1.2885×10^13 — same
        // order, reported side by side in the analysis output.
        assert_eq!(whole_space_cost(&fee, 0), amt("12884901888000"));
    }

    #[test]
    #[should_panic(expected = "length ≤ 32")]
    fn whole_space_cost_rejects_sub_unit_spaces() {
        let _ = whole_space_cost(&amt("3000"), 33);
    }

    #[test]
    fn fee_positions_against_vendored_ranges() {
        let above = fee_position(&amt("3000"), 32).unwrap();
        assert_eq!(above.standing, Standing::AboveRange);
        assert_eq!(above.range.min, amt("1000"));
        assert_eq!(above.range.max, amt("2500"));

        assert_eq!(
            fee_position(&amt("300"), 48).unwrap().standing,
            Standing::WithinRange
        );
        assert_eq!(
            fee_position(&amt("50"), 48).unwrap().standing,
            Standing::BelowRange
        );
        // Endpoints are inside.
        assert_eq!(
            fee_position(&amt("1000"), 32).unwrap().standing,
            Standing::WithinRange
        );
        assert_eq!(
            fee_position(&amt("2500"), 32).unwrap().standing,
            Standing::WithinRange
        );
        assert_eq!(
            fee_position(&amt("999"), 32).unwrap().standing,
            Standing::BelowRange
        );

        assert_eq!(fee_position(&amt("10"), 33), Err(StatsError::UnknownSize(33)));
    }
}
