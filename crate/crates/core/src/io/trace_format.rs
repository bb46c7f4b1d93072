//! Newline-delimited JSON traces: a `header` record, one record per event,
//! then an `end` record with the final worker states.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Event, EventTrace, TraceFooter, TraceHeader, TRACE_FORMAT, TRACE_VERSION};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("byte {offset} (line {line}): {message}")]
pub struct TraceParseError {
    pub offset: usize,
    pub line: usize,
    pub message: String,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Frame {
    Header(TraceHeader),
    End(TraceFooter),
}

#[derive(Deserialize)]
struct KindOnly {
    kind: String,
}

pub fn write_trace_string(trace: &EventTrace) -> String {
    let mut out = String::new();
    let header = serde_json::to_string(&Frame::Header(trace.header.clone())).expect("header serializes");
    let _ = writeln!(out, "{header}");
    for e in &trace.events {
        let _ = writeln!(out, "{}", serde_json::to_string(e).expect("event serializes"));
    }
    if let Some(footer) = &trace.footer {
        let end = serde_json::to_string(&Frame::End(footer.clone())).expect("footer serializes");
        let _ = writeln!(out, "{end}");
    }
    out
}

/// Parses a trace. A footer is required once any event is present, so a file
/// cut at a line boundary is still reported as truncated.
pub fn read_trace_str(text: &str) -> Result<EventTrace, TraceParseError> {
    let mut header = None;
    let mut events = Vec::new();
    let mut footer: Option<TraceFooter> = None;
    let mut offset = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let start = offset;
        offset += line.len();
        let body = line.trim_end_matches(['\n', '\r']);
        let line_no = n + 1;
        let err = |column: usize, message: String| TraceParseError {
            offset: start + column.saturating_sub(1),
            line: line_no,
            message,
        };
        if body.trim().is_empty() {
            continue;
        }
        if footer.is_some() {
            return Err(err(1, "record after end record".into()));
        }
        let kind: KindOnly = serde_json::from_str(body).map_err(|e| err(e.column(), e.to_string()))?;
        match kind.kind.as_str() {
            "header" | "end" => {
                let frame: Frame = serde_json::from_str(body).map_err(|e| err(e.column(), e.to_string()))?;
                match frame {
                    Frame::Header(h) => {
                        if header.is_some() {
                            return Err(err(1, "duplicate header".into()));
                        }
                        if h.format != TRACE_FORMAT || h.version != TRACE_VERSION {
                            return Err(err(1, format!("unsupported trace format {} v{}", h.format, h.version)));
                        }
                        header = Some(h);
                    }
                    Frame::End(f) => {
                        if f.events != events.len() {
                            return Err(err(
                                1,
                                format!("end record counts {} events, file has {}", f.events, events.len()),
                            ));
                        }
                        footer = Some(f);
                    }
                }
            }
            _ => {
                if header.is_none() {
                    return Err(err(1, "event before header".into()));
                }
                let event: Event = serde_json::from_str(body).map_err(|e| err(e.column(), e.to_string()))?;
                events.push(event);
            }
        }
    }
    let header = header.ok_or_else(|| TraceParseError {
        offset: 0,
        line: 1,
        message: "missing header record".into(),
    })?;
    if footer.is_none() && !events.is_empty() {
        return Err(TraceParseError {
            offset: text.len(),
            line: text.lines().count() + 1,
            message: "missing end record (truncated trace?)".into(),
        });
    }
    Ok(EventTrace {
        header,
        events,
        footer,
    })
}
