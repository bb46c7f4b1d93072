//! Partition files: one `label: bus, bus, ...` line per region. Labels run
//! `1..=K` without gaps (in any order); bus ids are separated by commas or
//! whitespace; `#` starts a comment.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use super::case_format::decode;
use super::Location;
use crate::opf::{OpfCase, Partition, PartitionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionParseErrorKind {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("expected `label: bus, ...`")]
    MissingColon,
    #[error("invalid region label `{0}`")]
    BadLabel(String),
    #[error("region label {0} used twice")]
    DuplicateLabel(usize),
    #[error("region labels must run 1..={max} without gaps; {missing} is missing")]
    LabelGap { missing: usize, max: usize },
    #[error("invalid bus id `{0}`")]
    BadBusId(String),
    #[error("region {0} lists no buses")]
    EmptyRegion(usize),
    #[error("bus {0} does not exist in the case")]
    UnknownBus(u32),
    #[error("bus {bus} already assigned to region {first}")]
    DuplicateAssignment { bus: u32, first: usize },
    #[error("partition file lists no regions")]
    NoRegions,
    #[error("{0}")]
    Invalid(PartitionError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct PartitionParseError {
    pub location: Option<Location>,
    pub kind: PartitionParseErrorKind,
}

impl fmt::Display for PartitionParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Some(loc) => write!(f, "{loc}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

fn at(line: usize, column: usize, kind: PartitionParseErrorKind) -> PartitionParseError {
    PartitionParseError {
        location: Some(Location { line, column }),
        kind,
    }
}

/// Column (1-based, in characters) of byte offset `byte` within `line`.
fn column_of(line: &str, byte: usize) -> usize {
    line[..byte].chars().count() + 1
}

pub fn parse_partition_bytes(bytes: &[u8], case: &OpfCase) -> Result<Partition, PartitionParseError> {
    let text = decode(bytes).map_err(|loc| PartitionParseError {
        location: Some(loc),
        kind: PartitionParseErrorKind::InvalidUtf8,
    })?;
    parse_partition(text, case)
}

/// Parses a partition file against `case`. Regions are indexed by label − 1.
pub fn parse_partition(text: &str, case: &OpfCase) -> Result<Partition, PartitionParseError> {
    use PartitionParseErrorKind as K;
    let known: std::collections::BTreeSet<u32> = case.buses.iter().map(|b| b.id).collect();
    let mut regions: BTreeMap<usize, (usize, Vec<u32>)> = BTreeMap::new();
    let mut owner: BTreeMap<u32, usize> = BTreeMap::new();

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        };
        if line.trim().is_empty() {
            continue;
        }
        let lead = line.len() - line.trim_start().len();
        let Some(colon) = line.find(':') else {
            return Err(at(line_no, column_of(line, lead), K::MissingColon));
        };
        let label_text = line[..colon].trim();
        let label = match label_text.parse::<usize>() {
            Ok(v) if v >= 1 => v,
            _ => return Err(at(line_no, column_of(line, lead), K::BadLabel(label_text.to_string()))),
        };
        if regions.contains_key(&label) {
            return Err(at(line_no, column_of(line, lead), K::DuplicateLabel(label)));
        }
        let mut members = Vec::new();
        let rest = &line[colon + 1..];
        let mut offset = colon + 1;
        for piece in rest.split(|c: char| c == ',' || c.is_whitespace()) {
            let start = offset;
            offset += piece.len() + 1;
            if piece.is_empty() {
                continue;
            }
            let column = column_of(line, start);
            let bus = piece
                .parse::<u32>()
                .map_err(|_| at(line_no, column, K::BadBusId(piece.to_string())))?;
            if !known.contains(&bus) {
                return Err(at(line_no, column, K::UnknownBus(bus)));
            }
            if let Some(&first) = owner.get(&bus) {
                return Err(at(line_no, column, K::DuplicateAssignment { bus, first }));
            }
            owner.insert(bus, label);
            members.push(bus);
        }
        if members.is_empty() {
            return Err(at(line_no, column_of(line, lead), K::EmptyRegion(label)));
        }
        regions.insert(label, (line_no, members));
    }

    let max = regions.keys().next_back().copied().ok_or(PartitionParseError {
        location: None,
        kind: K::NoRegions,
    })?;
    if let Some(missing) = (1..=max).find(|l| !regions.contains_key(l)) {
        return Err(PartitionParseError {
            location: None,
            kind: K::LabelGap { missing, max },
        });
    }
    let lines: Vec<usize> = regions.values().map(|(l, _)| *l).collect();
    let parts: Vec<Vec<u32>> = regions.into_values().map(|(_, m)| m).collect();
    Partition::new(case, parts).map_err(|e| {
        let location = match &e {
            PartitionError::DisconnectedRegion { region, .. } | PartitionError::EmptyRegion(region) => {
                lines.get(*region).map(|&line| Location { line, column: 1 })
            }
            _ => None,
        };
        PartitionParseError {
            location,
            kind: K::Invalid(e),
        }
    })
}

pub fn write_partition(partition: &Partition) -> String {
    let mut out = String::new();
    for (k, members) in partition.regions().iter().enumerate() {
        let ids: Vec<String> = members.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(out, "{}: {}", k + 1, ids.join(", "));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opf::fixtures;

    #[test]
    fn three_bus_two_regions() {
        let case = fixtures::three_bus_chain();
        let p = parse_partition("1: 1 \n 2: 2 3", &case).unwrap();
        assert_eq!(p.num_regions(), 2);
        let ties = p.tie_lines(&case);
        assert_eq!(ties.len(), 1);
        let br = &case.branches[ties[0]];
        assert_eq!((br.from, br.to), (1, 2));
    }

    #[test]
    fn omitted_bus_reported() {
        let case = fixtures::three_bus_chain();
        let err = parse_partition("1: 1\n2: 2", &case).unwrap_err();
        assert_eq!(err.to_string(), "bus 3 unassigned");
    }

    #[test]
    fn single_region_has_no_tie_lines() {
        let case = fixtures::case9();
        let p = parse_partition("1: 1,2,3,4,5,6,7,8,9", &case).unwrap();
        assert!(p.tie_lines(&case).is_empty());
    }

    #[test]
    fn located_diagnostics() {
        let case = fixtures::three_bus_chain();
        let check = |text: &str, line: usize, column: usize, needle: &str| {
            let err = parse_partition(text, &case).unwrap_err();
            assert_eq!(err.location, Some(Location { line, column }), "{err}");
            assert!(err.to_string().contains(needle), "{needle}: {err}");
        };
        check("1: 1\n2: 2, 1, 3", 2, 7, "already assigned to region 1");
        check("1: 1\n2: 2 7 3", 2, 6, "does not exist");
        check("1 1 2 3", 1, 1, "expected `label");
        check("x: 1 2 3", 1, 1, "invalid region label");
        check("1: 1\n1: 2 3", 2, 1, "used twice");
        check("1: 1 2 3\n2:", 2, 1, "lists no buses");
        check("1: 1 2 q", 1, 8, "invalid bus id");
        check("1: 1 3\n2: 2", 1, 1, "disconnected");
    }

    #[test]
    fn label_gap_rejected() {
        let case = fixtures::three_bus_chain();
        let err = parse_partition("1: 1\n3: 2 3", &case).unwrap_err();
        assert_eq!(err.kind, PartitionParseErrorKind::LabelGap { missing: 2, max: 3 });
    }

    #[test]
    fn labels_in_any_order_and_round_trip() {
        let case = fixtures::case9();
        let p = parse_partition("# regions\n3: 2, 8, 9\n1: 1, 4, 5\n2: 3,6,7\n", &case).unwrap();
        assert_eq!(p.regions(), fixtures::case9_regions().as_slice());
        assert_eq!(parse_partition(&write_partition(&p), &case).unwrap(), p);
    }
}
