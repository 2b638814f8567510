//! Deterministic discrete-event simulator of the MCS-locked operation.
//!
//! Every process runs the same block sequence:
//!
//! ```text
//! write  my.next = null          W
//! write  my.locked = true        W
//! swap   tail <- me              W, or X when another tail op is in flight
//! [pred != null]
//!   write pred.next = me         W
//!   spin  my.locked              R_I once the unlock write lands
//! local  critical section        C
//! read   my.next                 R_I or R_M, by MESI state
//! [next == null]
//!   cas  tail: me -> null        W or X
//!   [cas failed] spin my.next    R_I once the successor's link lands
//! [next != null]
//!   write next.locked = false    W
//! local  parallel section        P
//! ```
//!
//! One tick is one work unit. Writes become visible when they complete;
//! reads see everything that completed at or before their start tick.
//! Tail operations are serialized in time: simultaneous requests are
//! granted in process-id order, and a request that finds the tail busy
//! queues and pays `x_contended`. A spinning process holds the line in its
//! cache and re-reads only once a write invalidates it, so a successful
//! spin is charged a single read at the write's completion tick.

pub mod cache;
pub mod trace;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use crate::error::SimError;
use crate::model::{MachineConstants, Workload};
use cache::{access_cost, AccessKind, CacheLineState, LineId, Mesi};
pub use trace::{format_trace, parse_trace, BlockKind, InstructionBlock, Section, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Total operations to complete before stopping.
    pub ops_target: u64,
    /// Leading completions excluded from the throughput window.
    pub warmup_ops: u64,
    pub trace: bool,
}

impl SimOptions {
    /// Two rounds of warm-up followed by 200 measured rounds.
    pub fn for_workload(wl: &Workload) -> Self {
        let n = wl.n as u64;
        Self { ops_target: 202 * n, warmup_ops: 2 * n, trace: false }
    }

    pub fn with_trace(self, trace: bool) -> Self {
        Self { trace, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProcessStats {
    pub completed_ops: u64,
    /// Ticks spent executing blocks.
    pub busy_ticks: f64,
    /// Ticks spent queued on the tail or spinning on a line.
    pub idle_ticks: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub total_ticks: f64,
    /// Length of the post-warm-up window.
    pub measured_ticks: f64,
    pub measured_ops: u64,
    /// Operations per time unit over the measured window.
    pub throughput: f64,
    /// Share of post-warm-up acquisitions whose swap returned null.
    pub tail_null_fraction: f64,
    pub acquisitions: u64,
    pub processes: Vec<ProcessStats>,
    /// Times a process entered the critical section while another held the lock.
    pub mutex_violations: u64,
    pub trace: Option<Vec<TraceEvent>>,
}

impl SimResult {
    pub fn completed_per_process(&self) -> Vec<u64> {
        self.processes.iter().map(|p| p.completed_ops).collect()
    }

    pub fn trace_text(&self) -> Option<String> {
        self.trace.as_deref().map(format_trace)
    }
}

/// Runs the abstract machine until `opts.ops_target` operations complete.
pub fn simulate(m: &MachineConstants, wl: &Workload, opts: &SimOptions) -> Result<SimResult, SimError> {
    m.validate()?;
    wl.validate()?;
    if opts.ops_target <= opts.warmup_ops {
        return Err(SimError::Config(format!(
            "ops_target ({}) must exceed warmup_ops ({})",
            opts.ops_target, opts.warmup_ops
        )));
    }
    if opts.warmup_ops < wl.n as u64 {
        return Err(SimError::Config(format!(
            "warmup_ops ({}) must cover at least one round of {} processes",
            opts.warmup_ops, wl.n
        )));
    }
    Machine::new(*m, *wl, *opts).run()
}

/// Block kinds and costs of one operation of one process, in program order.
pub fn extract_schedule(
    result: &SimResult,
    process: usize,
    round: u64,
) -> Result<Vec<(BlockKind, f64)>, SimError> {
    let trace = result.trace.as_ref().ok_or(SimError::NoTrace)?;
    let blocks: Vec<_> = trace
        .iter()
        .filter(|e| e.proc == process && e.round == round)
        .map(|e| (e.kind, e.cost))
        .collect();
    if blocks.is_empty() {
        return Err(SimError::RoundNotTraced { process, round });
    }
    Ok(blocks)
}

/// Completed operations and elapsed time units when `n` processes run only
/// the parallel loop of `p` work units, `ops_per_process` times each, with
/// no lock. Under the uniform scheduler every process advances in lockstep.
pub fn simulate_parallel_only(
    m: &MachineConstants,
    n: usize,
    p: f64,
    ops_per_process: u64,
) -> Result<(u64, f64), SimError> {
    m.validate()?;
    if n == 0 || p.is_nan() || p <= 0.0 || ops_per_process == 0 {
        return Err(SimError::Config(format!(
            "parallel-only run needs n >= 1, p > 0 and at least one op (n={n}, p={p}, ops={ops_per_process})"
        )));
    }
    let mut ticks = 0.0;
    for _ in 0..ops_per_process {
        ticks += p;
    }
    Ok((n as u64 * ops_per_process, ticks / m.alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    ClearNext,
    SetLocked,
    SwapTail,
    LinkPred,
    SpinLocked,
    Critical,
    ReadNext,
    CasTail,
    SpinNext,
    Unlock,
    Parallel,
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Ready,
    Busy { start: f64 },
    WaitTail { since: f64, cost: f64 },
    Spin { since: f64 },
}

#[derive(Debug, Clone)]
struct Proc {
    step: Step,
    phase: Phase,
    pred: Option<usize>,
    succ: Option<usize>,
    cas_ok: bool,
    round: u64,
    stats: ProcessStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    tick: f64,
    proc: usize,
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tick.total_cmp(&other.tick).then(self.proc.cmp(&other.proc))
    }
}

struct Machine {
    m: MachineConstants,
    wl: Workload,
    opts: SimOptions,
    now: f64,
    procs: Vec<Proc>,
    events: BinaryHeap<Reverse<Event>>,

    tail: Option<usize>,
    next: Vec<Option<usize>>,
    locked: Vec<bool>,
    lines: Vec<CacheLineState>,

    tail_in_flight: bool,
    tail_queue: VecDeque<usize>,
    lock_holder: Option<usize>,
    mutex_violations: u64,

    completed: u64,
    warm_tick: Option<f64>,
    end_tick: Option<f64>,
    acquisitions: Vec<(f64, bool)>,
    trace: Option<Vec<TraceEvent>>,
}

impl Machine {
    fn new(m: MachineConstants, wl: Workload, opts: SimOptions) -> Self {
        let n = wl.n;
        let mut lines = vec![CacheLineState::new(LineId::Tail, n)];
        for p in 0..n {
            lines.push(CacheLineState::new(LineId::Next(p), n));
            lines.push(CacheLineState::new(LineId::Locked(p), n));
        }
        debug_assert!(lines.iter().enumerate().all(|(i, l)| l.line.index() == i));
        let proc = Proc {
            step: Step::ClearNext,
            phase: Phase::Ready,
            pred: None,
            succ: None,
            cas_ok: false,
            round: 0,
            stats: ProcessStats::default(),
        };
        Self {
            m,
            wl,
            opts,
            now: 0.0,
            procs: vec![proc; n],
            events: BinaryHeap::new(),
            tail: None,
            next: vec![None; n],
            locked: vec![false; n],
            lines,
            tail_in_flight: false,
            tail_queue: VecDeque::new(),
            lock_holder: None,
            mutex_violations: 0,
            completed: 0,
            warm_tick: None,
            end_tick: None,
            acquisitions: Vec::new(),
            trace: opts.trace.then(Vec::new),
        }
    }

    fn finished(&self) -> bool {
        self.end_tick.is_some()
    }

    fn run(mut self) -> Result<SimResult, SimError> {
        loop {
            self.start_ready();
            if self.finished() {
                break;
            }
            let Some(Reverse(first)) = self.events.pop() else {
                return Err(SimError::Stalled { tick: self.now, completed: self.completed });
            };
            self.now = first.tick;
            self.complete(first.proc);
            while !self.finished() {
                match self.events.peek() {
                    Some(Reverse(e)) if e.tick == self.now => {
                        let pid = e.proc;
                        self.events.pop();
                        self.complete(pid);
                    }
                    _ => break,
                }
            }
            if self.finished() {
                break;
            }
        }
        Ok(self.into_result())
    }

    fn start_ready(&mut self) {
        let mut requests = Vec::new();
        for pid in 0..self.procs.len() {
            if self.finished() {
                return;
            }
            if matches!(self.procs[pid].phase, Phase::Ready) {
                self.advance(pid, &mut requests);
            }
        }
        for pid in requests {
            let quiet = !self.tail_in_flight && self.tail_queue.is_empty();
            if quiet {
                self.start_tail(pid, self.m.w);
            } else {
                self.procs[pid].phase = Phase::WaitTail { since: self.now, cost: self.m.x_contended };
                self.tail_queue.push_back(pid);
            }
        }
    }

    /// Starts blocks for `pid` until it is busy, spinning, or waiting on the tail.
    fn advance(&mut self, pid: usize, tail_requests: &mut Vec<usize>) {
        let w = self.m.w;
        loop {
            let step = self.procs[pid].step;
            let started = match step {
                Step::ClearNext => self.begin(pid, InstructionBlock::access(BlockKind::Write, LineId::Next(pid)), w),
                Step::SetLocked => self.begin(pid, InstructionBlock::access(BlockKind::Write, LineId::Locked(pid)), w),
                Step::SwapTail | Step::CasTail => {
                    self.procs[pid].phase = Phase::WaitTail { since: self.now, cost: w };
                    tail_requests.push(pid);
                    return;
                }
                Step::LinkPred => {
                    let pred = self.procs[pid].pred.expect("link step without predecessor");
                    self.begin(pid, InstructionBlock::access(BlockKind::Write, LineId::Next(pred)), w)
                }
                Step::SpinLocked => {
                    if self.locked[pid] {
                        self.procs[pid].phase = Phase::Spin { since: self.now };
                        return;
                    }
                    let cost = self.read_cost(pid, LineId::Locked(pid));
                    self.begin(pid, InstructionBlock::access(BlockKind::SpinRead, LineId::Locked(pid)), cost)
                }
                Step::Critical => {
                    if self.lock_holder.is_some_and(|h| h != pid) {
                        self.mutex_violations += 1;
                    }
                    self.lock_holder = Some(pid);
                    self.begin(pid, InstructionBlock::local(Section::Critical, self.wl.c), self.wl.c)
                }
                Step::ReadNext => {
                    self.procs[pid].succ = self.next[pid];
                    let cost = self.read_cost(pid, LineId::Next(pid));
                    self.begin(pid, InstructionBlock::access(BlockKind::Read, LineId::Next(pid)), cost)
                }
                Step::SpinNext => {
                    let Some(succ) = self.next[pid] else {
                        self.procs[pid].phase = Phase::Spin { since: self.now };
                        return;
                    };
                    self.procs[pid].succ = Some(succ);
                    let cost = self.read_cost(pid, LineId::Next(pid));
                    self.begin(pid, InstructionBlock::access(BlockKind::SpinRead, LineId::Next(pid)), cost)
                }
                Step::Unlock => {
                    let succ = self.procs[pid].succ.expect("unlock step without successor");
                    self.begin(pid, InstructionBlock::access(BlockKind::Write, LineId::Locked(succ)), w)
                }
                Step::Parallel => self.begin(pid, InstructionBlock::local(Section::Parallel, self.wl.p), self.wl.p),
            };
            if started || self.finished() {
                return;
            }
        }
    }

    fn read_cost(&mut self, pid: usize, line: LineId) -> f64 {
        let found: Mesi = self.lines[line.index()].read(pid);
        access_cost(&self.m, AccessKind::Read, found, false)
    }

    /// Records and schedules a block. Zero-cost blocks complete on the spot
    /// and `false` is returned so the caller keeps advancing.
    fn begin(&mut self, pid: usize, block: InstructionBlock, cost: f64) -> bool {
        let p = &mut self.procs[pid];
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEvent { tick: self.now, proc: pid, kind: block.kind, cost, round: p.round });
        }
        p.phase = Phase::Busy { start: self.now };
        if cost > 0.0 {
            self.events.push(Reverse(Event { tick: self.now + cost, proc: pid }));
            true
        } else {
            self.complete(pid);
            false
        }
    }

    fn start_tail(&mut self, pid: usize, cost: f64) {
        if let Phase::WaitTail { since, .. } = self.procs[pid].phase {
            self.procs[pid].stats.idle_ticks += self.now - since;
        }
        self.tail_in_flight = true;
        self.lines[LineId::Tail.index()].write(pid);
        let kind = match self.procs[pid].step {
            Step::SwapTail => {
                let pred = self.tail.replace(pid);
                self.procs[pid].pred = pred;
                self.acquisitions.push((self.now, pred.is_none()));
                BlockKind::Swap
            }
            Step::CasTail => {
                let ok = self.tail == Some(pid);
                if ok {
                    self.tail = None;
                }
                self.procs[pid].cas_ok = ok;
                BlockKind::Cas
            }
            other => unreachable!("tail operation requested from {other:?}"),
        };
        self.begin(pid, InstructionBlock::access(kind, LineId::Tail), cost);
    }

    fn tail_done(&mut self) {
        self.tail_in_flight = false;
        if let Some(next) = self.tail_queue.pop_front() {
            let Phase::WaitTail { cost, .. } = self.procs[next].phase else {
                unreachable!("queued process is not waiting on the tail");
            };
            self.start_tail(next, cost);
        }
    }

    fn write_line(&mut self, line: LineId, writer: usize) {
        let l = &mut self.lines[line.index()];
        l.write(writer);
        debug_assert!(l.is_coherent());
        for pid in 0..self.procs.len() {
            let Phase::Spin { since } = self.procs[pid].phase else { continue };
            let released = match (self.procs[pid].step, line) {
                (Step::SpinLocked, LineId::Locked(o)) => o == pid && !self.locked[pid],
                (Step::SpinNext, LineId::Next(o)) => o == pid && self.next[pid].is_some(),
                _ => false,
            };
            if released {
                self.procs[pid].stats.idle_ticks += self.now - since;
                self.procs[pid].phase = Phase::Ready;
            }
        }
    }

    fn release_lock(&mut self, pid: usize) {
        if self.lock_holder == Some(pid) {
            self.lock_holder = None;
        }
    }

    fn complete(&mut self, pid: usize) {
        if let Phase::Busy { start } = self.procs[pid].phase {
            self.procs[pid].stats.busy_ticks += self.now - start;
        }
        self.procs[pid].phase = Phase::Ready;
        let step = self.procs[pid].step;
        let next_step = match step {
            Step::ClearNext => {
                self.next[pid] = None;
                self.write_line(LineId::Next(pid), pid);
                Step::SetLocked
            }
            Step::SetLocked => {
                self.locked[pid] = true;
                self.write_line(LineId::Locked(pid), pid);
                Step::SwapTail
            }
            Step::SwapTail => {
                self.tail_done();
                if self.procs[pid].pred.is_some() {
                    Step::LinkPred
                } else {
                    Step::Critical
                }
            }
            Step::LinkPred => {
                let pred = self.procs[pid].pred.expect("link step without predecessor");
                self.next[pred] = Some(pid);
                self.write_line(LineId::Next(pred), pid);
                Step::SpinLocked
            }
            Step::SpinLocked => Step::Critical,
            Step::Critical => Step::ReadNext,
            Step::ReadNext => {
                if self.procs[pid].succ.is_some() {
                    Step::Unlock
                } else {
                    Step::CasTail
                }
            }
            Step::CasTail => {
                self.tail_done();
                if self.procs[pid].cas_ok {
                    self.release_lock(pid);
                    Step::Parallel
                } else {
                    Step::SpinNext
                }
            }
            Step::SpinNext => Step::Unlock,
            Step::Unlock => {
                let succ = self.procs[pid].succ.expect("unlock step without successor");
                self.locked[succ] = false;
                self.release_lock(pid);
                self.write_line(LineId::Locked(succ), pid);
                Step::Parallel
            }
            Step::Parallel => {
                self.finish_operation(pid);
                Step::ClearNext
            }
        };
        self.procs[pid].step = next_step;
    }

    fn finish_operation(&mut self, pid: usize) {
        let p = &mut self.procs[pid];
        p.stats.completed_ops += 1;
        p.round += 1;
        p.pred = None;
        p.succ = None;
        self.completed += 1;
        if self.completed == self.opts.warmup_ops {
            self.warm_tick = Some(self.now);
        }
        if self.completed == self.opts.ops_target {
            self.end_tick = Some(self.now);
        }
    }

    fn into_result(mut self) -> SimResult {
        let end = self.end_tick.expect("run ended before reaching ops_target");
        let warm = self.warm_tick.expect("warm-up is shorter than ops_target");
        for p in &mut self.procs {
            match p.phase {
                Phase::Busy { start } => p.stats.busy_ticks += end - start,
                Phase::WaitTail { since, .. } | Phase::Spin { since } => p.stats.idle_ticks += end - since,
                Phase::Ready => {}
            }
        }
        let measured_ops = self.opts.ops_target - self.opts.warmup_ops;
        let measured_ticks = end - warm;
        let window: Vec<bool> = self
            .acquisitions
            .iter()
            .filter(|(t, _)| *t >= warm && *t <= end)
            .map(|&(_, null)| null)
            .collect();
        let tail_null_fraction = if window.is_empty() {
            0.0
        } else {
            window.iter().filter(|n| **n).count() as f64 / window.len() as f64
        };
        SimResult {
            total_ticks: end,
            measured_ticks,
            measured_ops,
            throughput: self.m.alpha * measured_ops as f64 / measured_ticks,
            tail_null_fraction,
            acquisitions: window.len() as u64,
            processes: self.procs.iter().map(|p| p.stats).collect(),
            mutex_violations: self.mutex_violations,
            trace: self.trace,
        }
    }
}
