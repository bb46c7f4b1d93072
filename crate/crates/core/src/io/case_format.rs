//! Text case files: a `BASEMVA` directive and `BUS`, `BRANCH`, `GEN`, `COST`
//! tables of whitespace-separated numbers. `#` starts a comment.
//!
//! ```text
//! BASEMVA 100
//! BUS
//! # id type Pd Qd Gs Bs Vm Va Vmax Vmin
//! 1 3 0 0 0 0 1.0 0 1.1 0.9
//! BRANCH
//! # from to r x b tap
//! GEN
//! # bus Pg Qg Qmax Qmin Vg Pmax Pmin
//! COST
//! # a b c   (one row per generator, cost = a·P² + b·P + c with P in MW)
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use super::Location;
use crate::opf::{Branch, Bus, BusType, CaseError, CostCoefficients, Generator, OpfCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Section {
    Bus,
    Branch,
    Gen,
    Cost,
}

impl Section {
    pub const ALL: [Section; 4] = [Section::Bus, Section::Branch, Section::Gen, Section::Cost];

    pub fn keyword(self) -> &'static str {
        match self {
            Section::Bus => "BUS",
            Section::Branch => "BRANCH",
            Section::Gen => "GEN",
            Section::Cost => "COST",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Section::Bus => 10,
            Section::Branch => 6,
            Section::Gen => 8,
            Section::Cost => 3,
        }
    }

    fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.keyword().eq_ignore_ascii_case(word))
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseParseErrorKind {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("unknown section `{0}`")]
    UnknownSection(String),
    #[error("section {0} declared twice")]
    DuplicateSection(Section),
    #[error("missing section {0}")]
    MissingSection(Section),
    #[error("data row outside any section")]
    RowOutsideSection,
    #[error("arity mismatch in {section}: expected {expected} columns, found {found}")]
    Arity {
        section: Section,
        expected: usize,
        found: usize,
    },
    #[error("invalid number `{0}`")]
    BadNumber(String),
    #[error("invalid integer `{0}`")]
    BadInteger(String),
    #[error("invalid bus type `{0}` (expected 1, 2 or 3)")]
    BadBusType(String),
    #[error("BASEMVA declared twice")]
    DuplicateBaseMva,
    #[error("missing BASEMVA")]
    MissingBaseMva,
    #[error("BASEMVA takes exactly one value")]
    BaseMvaArity,
    #[error("duplicate bus id {0}")]
    DuplicateBus(u32),
    #[error("dangling endpoint: bus {0} is not in BUS")]
    DanglingEndpoint(u32),
    #[error("generator at unknown bus {0}")]
    UnknownGeneratorBus(u32),
    #[error("{gens} generators but {costs} cost rows")]
    CostCount { gens: usize, costs: usize },
    #[error("{what} limits inverted ({lower} > {upper})")]
    InvertedLimits {
        what: &'static str,
        lower: f64,
        upper: f64,
    },
    #[error("{0}")]
    Invalid(CaseError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct CaseParseError {
    pub location: Option<Location>,
    pub kind: CaseParseErrorKind,
}

impl fmt::Display for CaseParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.location {
            Some(loc) => write!(f, "{loc}: {}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl CaseParseError {
    fn at(line: usize, column: usize, kind: CaseParseErrorKind) -> Self {
        Self {
            location: Some(Location { line, column }),
            kind,
        }
    }

    fn global(kind: CaseParseErrorKind) -> Self {
        Self {
            location: None,
            kind,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Token<'a> {
    pub(crate) text: &'a str,
    pub(crate) column: usize,
}

/// Splits a line into tokens with 1-based character columns, dropping comments.
pub(crate) fn tokenize(line: &str) -> Vec<Token<'_>> {
    let body = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    for (col, (byte, ch)) in body.char_indices().enumerate() {
        if ch.is_whitespace() {
            if let Some((b, c)) = start.take() {
                out.push(Token {
                    text: &body[b..byte],
                    column: c + 1,
                });
            }
        } else if start.is_none() {
            start = Some((byte, col));
        }
    }
    if let Some((b, c)) = start {
        out.push(Token {
            text: &body[b..],
            column: c + 1,
        });
    }
    out
}

struct Row<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
}

impl Row<'_> {
    fn number(&self, i: usize) -> Result<f64, CaseParseError> {
        let t = self.tokens[i];
        match t.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(CaseParseError::at(
                self.line,
                t.column,
                CaseParseErrorKind::BadNumber(t.text.to_string()),
            )),
        }
    }

    fn integer(&self, i: usize) -> Result<u32, CaseParseError> {
        let t = self.tokens[i];
        t.text.parse::<u32>().map_err(|_| {
            CaseParseError::at(self.line, t.column, CaseParseErrorKind::BadInteger(t.text.to_string()))
        })
    }

    fn loc(&self, i: usize) -> (usize, usize) {
        (self.line, self.tokens[i].column)
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<&str, Location> {
    std::str::from_utf8(bytes).map_err(|e| {
        let good = &bytes[..e.valid_up_to()];
        let line = good.iter().filter(|&&b| b == b'\n').count() + 1;
        let line_start = good.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
        let column = String::from_utf8_lossy(&good[line_start..]).chars().count() + 1;
        Location { line, column }
    })
}

pub fn parse_case_bytes(bytes: &[u8]) -> Result<OpfCase, CaseParseError> {
    let text = decode(bytes).map_err(|loc| CaseParseError {
        location: Some(loc),
        kind: CaseParseErrorKind::InvalidUtf8,
    })?;
    parse_case(text)
}

/// Parses and validates a case file.
pub fn parse_case(text: &str) -> Result<OpfCase, CaseParseError> {
    use CaseParseErrorKind as K;
    let mut base: Option<f64> = None;
    let mut current: Option<Section> = None;
    let mut headers: BTreeMap<Section, usize> = BTreeMap::new();
    let mut rows: BTreeMap<Section, Vec<Row<'_>>> = BTreeMap::new();

    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let tokens = tokenize(line);
        let Some(first) = tokens.first().copied() else {
            continue;
        };
        if first.text.eq_ignore_ascii_case("BASEMVA") {
            if tokens.len() != 2 {
                return Err(CaseParseError::at(line_no, first.column, K::BaseMvaArity));
            }
            if base.is_some() {
                return Err(CaseParseError::at(line_no, first.column, K::DuplicateBaseMva));
            }
            let row = Row {
                line: line_no,
                tokens,
            };
            let v = row.number(1)?;
            if v <= 0.0 {
                return Err(CaseParseError::at(line_no, row.tokens[1].column, K::Invalid(CaseError::BadBaseMva(v))));
            }
            base = Some(v);
            continue;
        }
        let numeric_start = first
            .text
            .chars()
            .next()
            .is_some_and(|c| c.is_ascii_digit() || matches!(c, '-' | '+' | '.'));
        if !numeric_start {
            let Some(section) = Section::from_keyword(first.text) else {
                return Err(CaseParseError::at(line_no, first.column, K::UnknownSection(first.text.to_string())));
            };
            if tokens.len() != 1 {
                let words: Vec<&str> = tokens.iter().map(|t| t.text).collect();
                return Err(CaseParseError::at(line_no, first.column, K::UnknownSection(words.join(" "))));
            }
            if headers.insert(section, line_no).is_some() {
                return Err(CaseParseError::at(line_no, first.column, K::DuplicateSection(section)));
            }
            current = Some(section);
            continue;
        }
        let Some(section) = current else {
            return Err(CaseParseError::at(line_no, first.column, K::RowOutsideSection));
        };
        if tokens.len() != section.arity() {
            let column = tokens.get(section.arity()).map_or(first.column, |t| t.column);
            return Err(CaseParseError::at(
                line_no,
                column,
                K::Arity {
                    section,
                    expected: section.arity(),
                    found: tokens.len(),
                },
            ));
        }
        rows.entry(section).or_default().push(Row {
            line: line_no,
            tokens,
        });
    }

    for section in Section::ALL {
        if !headers.contains_key(&section) {
            return Err(CaseParseError::global(K::MissingSection(section)));
        }
    }
    let base_mva = base.ok_or_else(|| CaseParseError::global(K::MissingBaseMva))?;
    let bus_rows = rows.remove(&Section::Bus).unwrap_or_default();
    let branch_rows = rows.remove(&Section::Branch).unwrap_or_default();
    let gen_rows = rows.remove(&Section::Gen).unwrap_or_default();
    let cost_rows = rows.remove(&Section::Cost).unwrap_or_default();

    let mut buses = Vec::with_capacity(bus_rows.len());
    let mut seen = BTreeMap::new();
    for row in &bus_rows {
        let id = row.integer(0)?;
        let code = row.integer(1).ok().and_then(|c| u8::try_from(c).ok());
        let kind = code.and_then(BusType::from_code).ok_or_else(|| {
            let (l, c) = row.loc(1);
            CaseParseError::at(l, c, K::BadBusType(row.tokens[1].text.to_string()))
        })?;
        if seen.insert(id, row.line).is_some() {
            let (l, c) = row.loc(0);
            return Err(CaseParseError::at(l, c, K::DuplicateBus(id)));
        }
        let bus = Bus {
            id,
            kind,
            pd: row.number(2)?,
            qd: row.number(3)?,
            gs: row.number(4)?,
            bs: row.number(5)?,
            vm: row.number(6)?,
            va_deg: row.number(7)?,
            vmax: row.number(8)?,
            vmin: row.number(9)?,
        };
        if bus.vmin > bus.vmax || bus.vmin <= 0.0 {
            let (l, c) = row.loc(9);
            return Err(CaseParseError::at(
                l,
                c,
                K::InvertedLimits {
                    what: "voltage",
                    lower: bus.vmin,
                    upper: bus.vmax,
                },
            ));
        }
        buses.push(bus);
    }

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in &branch_rows {
        let from = row.integer(0)?;
        let to = row.integer(1)?;
        for (i, bus) in [(0, from), (1, to)] {
            if !seen.contains_key(&bus) {
                let (l, c) = row.loc(i);
                return Err(CaseParseError::at(l, c, K::DanglingEndpoint(bus)));
            }
        }
        branches.push(Branch {
            from,
            to,
            r: row.number(2)?,
            x: row.number(3)?,
            b: row.number(4)?,
            tap: row.number(5)?,
        });
    }

    let mut generators = Vec::with_capacity(gen_rows.len());
    for row in &gen_rows {
        let bus = row.integer(0)?;
        if !seen.contains_key(&bus) {
            let (l, c) = row.loc(0);
            return Err(CaseParseError::at(l, c, K::UnknownGeneratorBus(bus)));
        }
        let g = Generator {
            bus,
            pg: row.number(1)?,
            qg: row.number(2)?,
            qmax: row.number(3)?,
            qmin: row.number(4)?,
            vg: row.number(5)?,
            pmax: row.number(6)?,
            pmin: row.number(7)?,
            cost: CostCoefficients { a: 0.0, b: 0.0, c: 0.0 },
        };
        for (what, lo, hi, col) in [("active power", g.pmin, g.pmax, 7), ("reactive power", g.qmin, g.qmax, 4)] {
            if lo > hi {
                let (l, c) = row.loc(col);
                return Err(CaseParseError::at(
                    l,
                    c,
                    K::InvertedLimits {
                        what,
                        lower: lo,
                        upper: hi,
                    },
                ));
            }
        }
        generators.push(g);
    }
    if cost_rows.len() != generators.len() {
        let line = cost_rows
            .get(generators.len())
            .map_or(headers[&Section::Cost], |r| r.line);
        return Err(CaseParseError::at(
            line,
            1,
            K::CostCount {
                gens: generators.len(),
                costs: cost_rows.len(),
            },
        ));
    }
    for (g, row) in generators.iter_mut().zip(&cost_rows) {
        g.cost = CostCoefficients {
            a: row.number(0)?,
            b: row.number(1)?,
            c: row.number(2)?,
        };
    }

    let case = OpfCase {
        base_mva,
        buses,
        branches,
        generators,
    };
    case.validate().map_err(|e| {
        let location = match &e {
            CaseError::SelfLoop { branch, .. } | CaseError::ZeroImpedance { branch } => {
                branch_rows.get(*branch).map(|r| Location { line: r.line, column: 1 })
            }
            CaseError::Disconnected(bus) => seen.get(bus).map(|&line| Location { line, column: 1 }),
            _ => None,
        };
        CaseParseError {
            location,
            kind: K::Invalid(e),
        }
    })?;
    Ok(case)
}

/// Serializes a case so that [`parse_case`] returns an equal value.
pub fn write_case(case: &OpfCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "BASEMVA {}", case.base_mva);
    out.push_str("BUS\n# id type Pd Qd Gs Bs Vm Va Vmax Vmin\n");
    for b in &case.buses {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {}",
            b.id,
            b.kind.code(),
            b.pd,
            b.qd,
            b.gs,
            b.bs,
            b.vm,
            b.va_deg,
            b.vmax,
            b.vmin
        );
    }
    out.push_str("BRANCH\n# from to r x b tap\n");
    for br in &case.branches {
        let _ = writeln!(out, "{} {} {} {} {} {}", br.from, br.to, br.r, br.x, br.b, br.tap);
    }
    out.push_str("GEN\n# bus Pg Qg Qmax Qmin Vg Pmax Pmin\n");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            g.bus, g.pg, g.qg, g.qmax, g.qmin, g.vg, g.pmax, g.pmin
        );
    }
    out.push_str("COST\n# a b c\n");
    for g in &case.generators {
        let _ = writeln!(out, "{} {} {}", g.cost.a, g.cost.b, g.cost.c);
    }
    out
}
