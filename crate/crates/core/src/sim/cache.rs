//! MESI bookkeeping and access pricing for the abstract machine.

use crate::model::MachineConstants;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mesi {
    Modified,
    Exclusive,
    Shared,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
    Swap,
    Cas,
}

/// Cost of one access in work units.
///
/// Writes cost `w` whatever the line state. Swap and CAS cost `w` unless
/// another tail operation is in flight, in which case they cost
/// `x_contended`. Reads cost `r_invalid` from an Invalid line and
/// `r_modified` from any line present in the reader's cache.
pub fn access_cost(m: &MachineConstants, kind: AccessKind, state: Mesi, contended: bool) -> f64 {
    match kind {
        AccessKind::Write => m.w,
        AccessKind::Swap | AccessKind::Cas => {
            if contended {
                m.x_contended
            } else {
                m.w
            }
        }
        AccessKind::Read => match state {
            Mesi::Invalid => m.r_invalid,
            Mesi::Modified | Mesi::Exclusive | Mesi::Shared => m.r_modified,
        },
    }
}

/// Shared variables of the lock, one cache line each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineId {
    Tail,
    /// `next` field of the node owned by the given process.
    Next(usize),
    /// `locked` field of the node owned by the given process.
    Locked(usize),
}

impl LineId {
    pub(crate) fn index(self) -> usize {
        match self {
            LineId::Tail => 0,
            LineId::Next(p) => 1 + 2 * p,
            LineId::Locked(p) => 2 + 2 * p,
        }
    }
}

/// Per-process view of one line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheLineState {
    pub line: LineId,
    pub states: Vec<Mesi>,
    pub last_writer: Option<usize>,
}

impl CacheLineState {
    pub fn new(line: LineId, processes: usize) -> Self {
        Self { line, states: vec![Mesi::Invalid; processes], last_writer: None }
    }

    /// Applies a read by `proc` and returns the state the read found.
    /// The reader ends in Shared and any exclusive holder is downgraded.
    pub fn read(&mut self, proc: usize) -> Mesi {
        let found = self.states[proc];
        for s in self.states.iter_mut() {
            if matches!(s, Mesi::Modified | Mesi::Exclusive) {
                *s = Mesi::Shared;
            }
        }
        self.states[proc] = Mesi::Shared;
        found
    }

    /// Applies a completed write by `proc`: it holds Modified, everyone else Invalid.
    pub fn write(&mut self, proc: usize) {
        for s in self.states.iter_mut() {
            *s = Mesi::Invalid;
        }
        self.states[proc] = Mesi::Modified;
        self.last_writer = Some(proc);
    }

    pub fn state_of(&self, proc: usize) -> Mesi {
        self.states[proc]
    }

    /// At most one exclusive holder; a Modified holder implies all others Invalid.
    pub fn is_coherent(&self) -> bool {
        let exclusive = self
            .states
            .iter()
            .filter(|s| matches!(s, Mesi::Modified | Mesi::Exclusive))
            .count();
        let modified = self.states.contains(&Mesi::Modified);
        let others_invalid = self
            .states
            .iter()
            .filter(|s| **s != Mesi::Modified)
            .all(|s| *s == Mesi::Invalid);
        exclusive <= 1 && (!modified || others_invalid)
    }
}
