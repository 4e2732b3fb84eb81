//! Event-driven simulation core.
//!
//! A [`Kernel`] owns the simulated clock and a time-ordered queue of pending
//! events. Events fire in `(fire_time, sequence)` order, where `sequence` is
//! assigned at scheduling time, so simultaneous events are dispatched in the
//! order they were scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use thiserror::Error;

/// Simulated time in seconds.
pub type SimTime = f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("event scheduled at t={fire_time} but the clock is already at t={now}")]
    PastEvent { fire_time: SimTime, now: SimTime },
    #[error("event time {0} is not a finite number")]
    NonFiniteTime(SimTime),
    #[error("run_until({end}) is behind the clock (now={now})")]
    EndInPast { end: SimTime, now: SimTime },
}

/// Tag identifying what an event means to the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    RequestArrival,
    RequestCompletion,
    MonitorTick,
    AdaptationExecute,
    IntervalBoundary,
    EvaluatorTick,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::RequestArrival => "request-arrival",
            EventKind::RequestCompletion => "request-completion",
            EventKind::MonitorTick => "monitor-tick",
            EventKind::AdaptationExecute => "adaptation-execute",
            EventKind::IntervalBoundary => "interval-boundary",
            EventKind::EvaluatorTick => "evaluator-tick",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<P> {
    pub fire_time: SimTime,
    pub sequence: u64,
    pub kind: EventKind,
    pub payload: P,
}

/// One line of the dispatch trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub fire_time: SimTime,
    pub sequence: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimClock {
    pub now: SimTime,
    pub processed_events: u64,
}

#[derive(Debug, Clone)]
struct Pending<P>(SimEvent<P>);

impl<P> PartialEq for Pending<P> {
    fn eq(&self, other: &Self) -> bool {
        self.0.sequence == other.0.sequence
    }
}

impl<P> Eq for Pending<P> {}

impl<P> PartialOrd for Pending<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Pending<P> {
    // BinaryHeap is a max-heap; reverse so the earliest event is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .fire_time
            .total_cmp(&self.0.fire_time)
            .then_with(|| other.0.sequence.cmp(&self.0.sequence))
    }
}

#[derive(Debug, Clone)]
pub struct Kernel<P> {
    clock: SimClock,
    queue: BinaryHeap<Pending<P>>,
    next_sequence: u64,
    scheduled: u64,
    trace: Option<Vec<TraceEntry>>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Kernel {
            clock: SimClock::default(),
            queue: BinaryHeap::new(),
            next_sequence: 0,
            scheduled: 0,
            trace: None,
        }
    }

    /// Records every dispatched event so runs can be compared entry by entry.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.clock.now
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn scheduled_count(&self) -> u64 {
        self.scheduled
    }

    pub fn dispatched_count(&self) -> u64 {
        self.clock.processed_events
    }

    pub fn pending_count(&self) -> usize {
        self.queue.len()
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    /// Queues an event and returns its sequence number.
    pub fn schedule(&mut self, fire_time: SimTime, kind: EventKind, payload: P) -> Result<u64, KernelError> {
        if !fire_time.is_finite() {
            return Err(KernelError::NonFiniteTime(fire_time));
        }
        if fire_time < self.clock.now {
            return Err(KernelError::PastEvent {
                fire_time,
                now: self.clock.now,
            });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.scheduled += 1;
        self.queue.push(Pending(SimEvent {
            fire_time,
            sequence,
            kind,
            payload,
        }));
        Ok(sequence)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.queue.peek().map(|p| p.0.fire_time)
    }

    /// Pops the next event if it fires no later than `end`, advancing the clock to it.
    pub fn pop_due(&mut self, end: SimTime) -> Option<SimEvent<P>> {
        match self.queue.peek() {
            Some(p) if p.0.fire_time <= end => {}
            _ => return None,
        }
        let Pending(ev) = self.queue.pop()?;
        debug_assert!(ev.fire_time >= self.clock.now);
        self.clock.now = ev.fire_time;
        self.clock.processed_events += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry {
                fire_time: ev.fire_time,
                sequence: ev.sequence,
                kind: ev.kind,
            });
        }
        Some(ev)
    }

    /// Moves the clock forward without dispatching anything.
    pub fn advance_to(&mut self, t: SimTime) -> Result<(), KernelError> {
        if t < self.clock.now {
            return Err(KernelError::EndInPast { end: t, now: self.clock.now });
        }
        self.clock.now = t;
        Ok(())
    }

    /// Dispatches every event with `fire_time <= end` through `handler`, then
    /// leaves the clock at `end`. Returns the number of events processed.
    pub fn run_until<E, F>(&mut self, end: SimTime, mut handler: F) -> Result<u64, E>
    where
        F: FnMut(&mut Kernel<P>, SimEvent<P>) -> Result<(), E>,
        E: From<KernelError>,
    {
        if end < self.clock.now {
            return Err(KernelError::EndInPast { end, now: self.clock.now }.into());
        }
        let mut processed = 0;
        while let Some(ev) = self.pop_due(end) {
            handler(self, ev)?;
            processed += 1;
        }
        self.clock.now = end;
        Ok(processed)
    }
}
