//! Virtual clock and event queue.
//!
//! Events are dispatched strictly in `(fire_at, seq)` order, where `seq` is a
//! per-kernel insertion counter. Two events scheduled for the same instant
//! therefore fire in the order they were scheduled, which keeps runs
//! bit-reproducible.

use alloc::collections::BinaryHeap;
use core::cmp::Ordering;

use thiserror::Error;

/// Virtual time in seconds.
pub type Seconds = f64;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimClock {
    now: Seconds,
}

impl SimClock {
    pub fn now(&self) -> Seconds {
        self.now
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub fire_at: Seconds,
    pub seq: u64,
    pub kind: K,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ScheduleError {
    #[error("event scheduled at {fire_at} which is before the clock ({now})")]
    InPast { fire_at: Seconds, now: Seconds },
    #[error("event time {0} is not finite")]
    NotFinite(Seconds),
}

struct Queued<K>(Event<K>);

impl<K> PartialEq for Queued<K> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<K> Eq for Queued<K> {}

impl<K> PartialOrd for Queued<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Queued<K> {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_at
            .total_cmp(&self.0.fire_at)
            .then_with(|| other.0.seq.cmp(&self.0.seq))
    }
}

pub struct Kernel<K> {
    clock: SimClock,
    heap: BinaryHeap<Queued<K>>,
    next_seq: u64,
    dispatched: u64,
}

impl<K> Default for Kernel<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Kernel<K> {
    pub fn new() -> Self {
        Self {
            clock: SimClock::default(),
            heap: BinaryHeap::new(),
            next_seq: 0,
            dispatched: 0,
        }
    }

    pub fn now(&self) -> Seconds {
        self.clock.now
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.heap.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, fire_at: Seconds, kind: K) -> Result<EventHandle, ScheduleError> {
        if !fire_at.is_finite() {
            return Err(ScheduleError::NotFinite(fire_at));
        }
        if fire_at < self.clock.now {
            return Err(ScheduleError::InPast {
                fire_at,
                now: self.clock.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Queued(Event { fire_at, seq, kind }));
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: Seconds, kind: K) -> Result<EventHandle, ScheduleError> {
        self.schedule(self.clock.now + delay, kind)
    }

    pub fn peek_time(&self) -> Option<Seconds> {
        self.heap.peek().map(|q| q.0.fire_at)
    }

    /// Pops the next event if it fires at or before `t_end`, advancing the
    /// clock to its timestamp.
    pub fn pop_until(&mut self, t_end: Seconds) -> Option<Event<K>> {
        if self.peek_time()? > t_end {
            return None;
        }
        let Queued(ev) = self.heap.pop()?;
        self.clock.now = ev.fire_at;
        self.dispatched += 1;
        Some(ev)
    }

    /// Moves the clock forward without dispatching anything.
    pub fn advance_to(&mut self, t: Seconds) {
        if t > self.clock.now {
            self.clock.now = t;
        }
    }

    /// Dispatches every event with `fire_at <= t_end`. Afterwards the clock
    /// reads `t_end`, or the last dispatch time when `t_end` is infinite.
    pub fn run_until<F>(&mut self, t_end: Seconds, mut handler: F) -> SimClock
    where
        F: FnMut(&mut Self, Event<K>),
    {
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev);
        }
        if t_end.is_finite() {
            self.advance_to(t_end);
        }
        self.clock
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn ties_break_by_insertion_order() {
        let mut k = Kernel::new();
        k.schedule(5.0, 'A').unwrap();
        k.schedule(5.0, 'B').unwrap();
        let mut seen = Vec::new();
        k.run_until(10.0, |_, ev| seen.push(ev.kind));
        assert_eq!(seen, ['A', 'B']);
    }

    #[test]
    fn earlier_event_first_regardless_of_insertion() {
        let mut k = Kernel::new();
        k.schedule(7.0, 7).unwrap();
        k.schedule(2.0, 2).unwrap();
        let mut seen = Vec::new();
        k.run_until(f64::INFINITY, |_, ev| seen.push(ev.kind));
        assert_eq!(seen, [2, 7]);
        assert_eq!(k.now(), 7.0);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut k: Kernel<()> = Kernel::new();
        k.advance_to(1.0);
        let err = k.schedule(0.9, ()).unwrap_err();
        assert!(matches!(err, ScheduleError::InPast { .. }));
        assert!(k.schedule(f64::NAN, ()).is_err());
    }

    #[test]
    fn empty_queue_advances_clock() {
        let mut k: Kernel<()> = Kernel::new();
        let clock = k.run_until(10.0, |_, _| unreachable!());
        assert_eq!(clock.now(), 10.0);
        assert_eq!(k.dispatched(), 0);
    }

    #[test]
    fn run_until_stops_at_horizon() {
        let mut k = Kernel::new();
        for t in [1.0, 2.0, 3.0] {
            k.schedule(t, ()).unwrap();
        }
        let mut n = 0;
        k.run_until(2.5, |_, _| n += 1);
        assert_eq!(n, 2);
        assert_eq!(k.pending(), 1);
        assert_eq!(k.now(), 2.5);
    }

    #[test]
    fn self_rescheduling_timer() {
        let mut k = Kernel::new();
        k.schedule(2.0, ()).unwrap();
        let mut fired = Vec::new();
        k.run_until(9.0, |k, ev| {
            fired.push(ev.fire_at);
            k.schedule_in(2.0, ()).unwrap();
        });
        assert_eq!(fired, [2.0, 4.0, 6.0, 8.0]);
    }
}
