//! Execution traces and their line-oriented text form:
//!
//! ```text
//! tick <t> proc <id> block <kind> cost <units>
//! ```

use std::fmt;
use std::str::FromStr;

use super::cache::LineId;
use crate::error::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Section {
    Critical,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    Write,
    Read,
    Swap,
    Cas,
    SpinRead,
    LocalWork(Section),
}

impl BlockKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BlockKind::Write => "write",
            BlockKind::Read => "read",
            BlockKind::Swap => "swap",
            BlockKind::Cas => "cas",
            BlockKind::SpinRead => "spin_read",
            BlockKind::LocalWork(_) => "local_work",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One annotated line of the MCS operation as the simulator executes it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstructionBlock {
    pub kind: BlockKind,
    /// Shared line touched; `None` for local work.
    pub line: Option<LineId>,
    /// Work amount for local work, zero otherwise.
    pub work: f64,
}

impl InstructionBlock {
    pub fn access(kind: BlockKind, line: LineId) -> Self {
        debug_assert!(!matches!(kind, BlockKind::LocalWork(_)));
        Self { kind, line: Some(line), work: 0.0 }
    }

    pub fn local(section: Section, work: f64) -> Self {
        Self { kind: BlockKind::LocalWork(section), line: None, work }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEvent {
    pub tick: f64,
    pub proc: usize,
    pub kind: BlockKind,
    pub cost: f64,
    /// Zero-based index of the operation this block belongs to.
    pub round: u64,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tick {} proc {} block {} cost {}", self.tick, self.proc, self.kind, self.cost)
    }
}

pub fn format_trace(events: &[TraceEvent]) -> String {
    let mut out = String::with_capacity(events.len() * 40);
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

/// Parses the text form back into events. Local-work blocks alternate
/// critical, parallel within each process, and a parallel block closes the
/// round, so both are recovered from order.
pub fn parse_trace(text: &str) -> Result<Vec<TraceEvent>, SimError> {
    let mut events = Vec::new();
    let mut next_section: Vec<Section> = Vec::new();
    let mut rounds: Vec<u64> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| SimError::Config(format!("trace line {}: {what}: {raw:?}", lineno + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 8 || f[0] != "tick" || f[2] != "proc" || f[4] != "block" || f[6] != "cost" {
            return Err(bad("expected `tick <t> proc <id> block <kind> cost <units>`"));
        }
        let tick = parse_num::<f64>(f[1]).ok_or_else(|| bad("bad tick"))?;
        let proc = parse_num::<usize>(f[3]).ok_or_else(|| bad("bad proc"))?;
        let cost = parse_num::<f64>(f[7]).ok_or_else(|| bad("bad cost"))?;
        if next_section.len() <= proc {
            next_section.resize(proc + 1, Section::Critical);
            rounds.resize(proc + 1, 0);
        }
        let kind = match f[5] {
            "write" => BlockKind::Write,
            "read" => BlockKind::Read,
            "swap" => BlockKind::Swap,
            "cas" => BlockKind::Cas,
            "spin_read" => BlockKind::SpinRead,
            "local_work" => {
                let s = next_section[proc];
                next_section[proc] = match s {
                    Section::Critical => Section::Parallel,
                    Section::Parallel => Section::Critical,
                };
                BlockKind::LocalWork(s)
            }
            _ => return Err(bad("unknown block kind")),
        };
        let round = rounds[proc];
        if kind == BlockKind::LocalWork(Section::Parallel) {
            rounds[proc] += 1;
        }
        events.push(TraceEvent { tick, proc, kind, cost, round });
    }
    Ok(events)
}

fn parse_num<T: FromStr>(s: &str) -> Option<T> {
    s.parse().ok()
}
