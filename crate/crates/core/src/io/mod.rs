//! File formats: case and partition text files, JSONL traces and the
//! per-iteration results CSV.

pub mod case_format;
pub mod partition_format;
pub mod trace_format;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{EventTrace, ResultRow};
use crate::opf::{OpfCase, Partition};

pub use case_format::{parse_case, parse_case_bytes, write_case, CaseParseError, CaseParseErrorKind};
pub use partition_format::{
    parse_partition, parse_partition_bytes, write_partition, PartitionParseError,
    PartitionParseErrorKind,
};
pub use trace_format::{read_trace_str, write_trace_string, TraceParseError};

pub const RESULTS_HEADER: [&str; 5] = ["iter", "time_ms", "max_residue", "objective", "constraint_mismatch"];

/// 1-based line and character column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.column)
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Fs {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Case { path: PathBuf, source: CaseParseError },
    #[error("{path}: {source}")]
    Partition {
        path: PathBuf,
        source: PartitionParseError,
    },
    #[error("{path}: {source}")]
    Trace { path: PathBuf, source: TraceParseError },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    fs::read(path).map_err(|source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_case(path: &Path) -> Result<OpfCase, IoError> {
    parse_case_bytes(&read_bytes(path)?).map_err(|source| IoError::Case {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_partition(path: &Path, case: &OpfCase) -> Result<Partition, IoError> {
    parse_partition_bytes(&read_bytes(path)?, case).map_err(|source| IoError::Partition {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_trace(trace: &EventTrace, path: &Path) -> Result<(), IoError> {
    write_text(path, &write_trace_string(trace))
}

pub fn read_trace(path: &Path) -> Result<EventTrace, IoError> {
    let bytes = read_bytes(path)?;
    let text = case_format::decode(&bytes).map_err(|loc| IoError::Trace {
        path: path.to_path_buf(),
        source: TraceParseError {
            offset: bytes.len(),
            line: loc.line,
            message: "invalid UTF-8".into(),
        },
    })?;
    read_trace_str(text).map_err(|source| IoError::Trace {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<(), IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.time_ms.to_string(),
            r.max_residue.to_string(),
            r.objective.to_string(),
            r.constraint_mismatch.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| IoError::Fs {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().collect::<Result<Vec<ResultRow>, _>>().map_err(csv_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_csv_header_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let rows = vec![
            ResultRow {
                iter: 1,
                time_ms: 0.5,
                max_residue: 0.1,
                objective: 12.25,
                constraint_mismatch: 0.0,
            },
            ResultRow {
                iter: 2,
                time_ms: 1.0 / 3.0,
                max_residue: 1e-7,
                objective: -3.0,
                constraint_mismatch: 2e-9,
            },
        ];
        write_results(&rows, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "iter,time_ms,max_residue,objective,constraint_mismatch");
        assert_eq!(read_results(&path).unwrap(), rows);
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_case(Path::new("/nonexistent/case.txt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/case.txt"));
    }
}
