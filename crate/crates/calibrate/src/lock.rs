//! MCS queue lock over a fixed set of per-stream nodes.
//!
//! Nodes are addressed by slot index rather than pointer so the lock needs
//! no `unsafe`. Each slot must be used by one thread at a time; the tail,
//! every node and the owner stamp sit on their own cache lines.

use std::hint::spin_loop;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use crossbeam_utils::CachePadded;

const NIL: usize = usize::MAX;

/// Spins before a waiter starts yielding; only oversubscribed runs get there.
const SPINS_BEFORE_YIELD: u32 = 1 << 16;

#[inline]
fn wait_step(spins: &mut u32) {
    if *spins < SPINS_BEFORE_YIELD {
        *spins += 1;
        spin_loop();
    } else {
        std::thread::yield_now();
    }
}

#[derive(Debug)]
struct QNode {
    next: AtomicUsize,
    locked: AtomicBool,
}

#[derive(Debug)]
pub struct McsLock {
    tail: CachePadded<AtomicUsize>,
    nodes: Box<[CachePadded<QNode>]>,
}

impl McsLock {
    pub fn new(slots: usize) -> Self {
        let nodes = (0..slots)
            .map(|_| CachePadded::new(QNode { next: AtomicUsize::new(NIL), locked: AtomicBool::new(false) }))
            .collect();
        Self { tail: CachePadded::new(AtomicUsize::new(NIL)), nodes }
    }

    pub fn slots(&self) -> usize {
        self.nodes.len()
    }

    /// Acquires the lock with the node in `slot`.
    pub fn lock(&self, slot: usize) -> McsGuard<'_> {
        let node = &self.nodes[slot];
        node.next.store(NIL, Ordering::Relaxed);
        node.locked.store(true, Ordering::Relaxed);
        let pred = self.tail.swap(slot, Ordering::AcqRel);
        let found_free = pred == NIL;
        if !found_free {
            self.nodes[pred].next.store(slot, Ordering::Release);
            let mut spins = 0;
            while node.locked.load(Ordering::Acquire) {
                wait_step(&mut spins);
            }
        }
        McsGuard { lock: self, slot, found_free }
    }

    fn unlock(&self, slot: usize) {
        let node = &self.nodes[slot];
        let mut next = node.next.load(Ordering::Acquire);
        if next == NIL {
            if self
                .tail
                .compare_exchange(slot, NIL, Ordering::Release, Ordering::Relaxed)
                .is_ok()
            {
                return;
            }
            // A successor swapped in but has not linked yet.
            let mut spins = 0;
            loop {
                next = node.next.load(Ordering::Acquire);
                if next != NIL {
                    break;
                }
                wait_step(&mut spins);
            }
        }
        self.nodes[next].locked.store(false, Ordering::Release);
    }
}

#[must_use = "dropping the guard releases the lock"]
pub struct McsGuard<'a> {
    lock: &'a McsLock,
    slot: usize,
    found_free: bool,
}

impl McsGuard<'_> {
    /// Whether the tail swap returned null.
    pub fn found_free(&self) -> bool {
        self.found_free
    }
}

impl Drop for McsGuard<'_> {
    fn drop(&mut self) {
        self.lock.unlock(self.slot);
    }
}

/// Critical-section overlap detector: the holder stamps its id on entry
/// and clears it on exit; any other value seen at either point is a
/// violation.
#[derive(Debug, Default)]
pub struct OwnerStamp {
    owner: CachePadded<AtomicUsize>,
    violations: CachePadded<AtomicU64>,
}

impl OwnerStamp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enter(&self, id: usize) {
        if self.owner.swap(id + 1, Ordering::Relaxed) != 0 {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn exit(&self, id: usize) {
        if self.owner.swap(0, Ordering::Relaxed) != id + 1 {
            self.violations.fetch_add(1, Ordering::Relaxed);
        }
    }

    pub fn violations(&self) -> u64 {
        self.violations.load(Ordering::Relaxed)
    }
}
