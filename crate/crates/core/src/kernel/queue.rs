use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};
use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

/// Event kinds, declared in same-tick execution order.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PacketArrival,
    SubstanceArrival,
    FileAccess,
    ComponentTimer,
    CellMigration,
    CellExpiry,
    CntsGeneration,
}

impl EventKind {
    pub fn priority(self) -> u8 {
        self as u8
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::PacketArrival => "packet_arrival",
            EventKind::SubstanceArrival => "substance_arrival",
            EventKind::FileAccess => "file_access",
            EventKind::ComponentTimer => "component_timer",
            EventKind::CellMigration => "cell_migration",
            EventKind::CellExpiry => "cell_expiry",
            EventKind::CntsGeneration => "cnts_generation",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event<P> {
    pub due_tick: u64,
    pub kind: EventKind,
    pub payload: P,
}

impl<P> Event<P> {
    pub fn new(due_tick: u64, kind: EventKind, payload: P) -> Self {
        Event {
            due_tick,
            kind,
            payload,
        }
    }
}

struct Queued<P> {
    key: (u64, u8, u64),
    event: Event<P>,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// Discrete-time clock plus a totally ordered event queue keyed by
/// `(due_tick, kind priority, insertion sequence)`.
pub struct Kernel<P> {
    tick: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Kernel {
            tick: 0,
            seq: 0,
            queue: BinaryHeap::new(),
        }
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn schedule(&mut self, event: Event<P>) -> Result<()> {
        if event.due_tick < self.tick {
            return Err(SimError::PastDue {
                due: event.due_tick,
                now: self.tick,
            });
        }
        let key = (event.due_tick, event.kind.priority(), self.seq);
        self.seq += 1;
        self.queue.push(Reverse(Queued { key, event }));
        Ok(())
    }

    /// Schedules `delay` ticks from now; never fails.
    pub fn schedule_in(&mut self, delay: u64, kind: EventKind, payload: P) {
        let due = self.tick + delay;
        self.schedule(Event::new(due, kind, payload))
            .expect("future events are never past due");
    }

    /// Advances the clock by exactly one tick.
    pub fn advance(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    /// Pops the next event due at the current tick, if any. Events scheduled
    /// for the current tick while draining are picked up by later calls.
    pub fn pop_due(&mut self) -> Option<Event<P>> {
        match self.queue.peek() {
            Some(Reverse(q)) if q.key.0 <= self.tick => self.queue.pop().map(|Reverse(q)| q.event),
            _ => None,
        }
    }

    pub fn drain_current(&mut self) -> Vec<Event<P>> {
        let mut out = Vec::new();
        while let Some(e) = self.pop_due() {
            out.push(e);
        }
        out
    }

    /// Advances one tick and returns every event due at the new tick, in order.
    pub fn step(&mut self) -> Vec<Event<P>> {
        self.advance();
        self.drain_current()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_step_advances_clock() {
        let mut k: Kernel<u32> = Kernel::new();
        assert!(k.step().is_empty());
        assert_eq!(k.tick(), 1);
    }

    #[test]
    fn past_due_rejected() {
        let mut k: Kernel<u32> = Kernel::new();
        k.step();
        k.step();
        assert_eq!(
            k.schedule(Event::new(1, EventKind::PacketArrival, 0)),
            Err(SimError::PastDue { due: 1, now: 2 })
        );
    }

    #[test]
    fn same_tick_is_fifo_then_appends() {
        let mut k: Kernel<u32> = Kernel::new();
        k.schedule(Event::new(0, EventKind::PacketArrival, 1)).unwrap();
        k.schedule(Event::new(0, EventKind::PacketArrival, 2)).unwrap();
        let first = k.pop_due().unwrap();
        k.schedule(Event::new(0, EventKind::PacketArrival, 3)).unwrap();
        let rest: Vec<u32> = k.drain_current().into_iter().map(|e| e.payload).collect();
        assert_eq!(first.payload, 1);
        assert_eq!(rest, vec![2, 3]);
    }

    #[test]
    fn kind_priority_orders_same_tick() {
        let mut k: Kernel<&str> = Kernel::new();
        k.schedule(Event::new(1, EventKind::CellExpiry, "expiry")).unwrap();
        k.schedule(Event::new(1, EventKind::PacketArrival, "packet")).unwrap();
        let got: Vec<_> = k.step().into_iter().map(|e| e.payload).collect();
        assert_eq!(got, vec!["packet", "expiry"]);
    }
}
