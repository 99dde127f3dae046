//! Deterministic discrete-event engine.
//!
//! Virtual time is an integer count of nanoseconds. Events firing at the same
//! instant are processed in the order they were scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Nanoseconds since the start of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_duration(d: Duration) -> Self {
        SimTime(duration_ns(d))
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    /// Span from `earlier` to `self`, zero if `earlier` is later.
    pub fn since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, ns: u64) -> SimTime {
        SimTime(self.0 + ns)
    }
}

impl Add<Duration> for SimTime {
    type Output = SimTime;

    fn add(self, d: Duration) -> SimTime {
        SimTime(self.0 + duration_ns(d))
    }
}

impl Sub for SimTime {
    type Output = u64;

    fn sub(self, rhs: SimTime) -> u64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Whole nanoseconds of a duration, saturating at `u64::MAX`.
pub fn duration_ns(d: Duration) -> u64 {
    u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)
}

/// A scheduled occurrence of `K`.
#[derive(Debug, Clone)]
pub struct Event<K> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: K,
}

impl<K> PartialEq for Event<K> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<K> Eq for Event<K> {}

impl<K> PartialOrd for Event<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that `BinaryHeap` pops the earliest (fire_at, seq) first.
impl<K> Ord for Event<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("cannot schedule an event at {at} when the clock is already at {now}")]
    InThePast { at: SimTime, now: SimTime },
}

/// One processed event, as recorded in the optional trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub fire_at: SimTime,
    pub seq: u64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimStats {
    pub processed: u64,
    pub scheduled: u64,
    pub pending: u64,
}

/// Event queue plus virtual clock.
#[derive(Debug)]
pub struct Engine<K> {
    now: SimTime,
    next_seq: u64,
    processed: u64,
    queue: BinaryHeap<Event<K>>,
    trace: Option<Vec<TraceEntry>>,
}

impl<K> Default for Engine<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Engine<K> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            processed: 0,
            queue: BinaryHeap::new(),
            trace: None,
        }
    }

    /// Keep a record of every processed event.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn stats(&self) -> SimStats {
        SimStats {
            processed: self.processed,
            scheduled: self.next_seq,
            pending: self.queue.len() as u64,
        }
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    pub fn try_schedule(&mut self, at: SimTime, kind: K) -> Result<u64, ScheduleError> {
        if at < self.now {
            return Err(ScheduleError::InThePast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { fire_at: at, seq, kind });
        Ok(seq)
    }

    /// Schedules `kind` at `at`. Panics if `at` is earlier than the clock.
    pub fn schedule(&mut self, at: SimTime, kind: K) -> u64 {
        match self.try_schedule(at, kind) {
            Ok(seq) => seq,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn schedule_in(&mut self, delay_ns: u64, kind: K) -> u64 {
        let at = self.now + delay_ns;
        self.schedule(at, kind)
    }

    /// Pops the next event if it fires no later than `end`, advancing the clock.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Event<K>>
    where
        K: fmt::Debug,
    {
        if self.queue.peek()?.fire_at > end {
            return None;
        }
        let ev = self.queue.pop()?;
        debug_assert!(ev.fire_at >= self.now);
        self.now = ev.fire_at;
        self.processed += 1;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceEntry {
                fire_at: ev.fire_at,
                seq: ev.seq,
                label: format!("{:?}", ev.kind),
            });
        }
        Some(ev)
    }

    /// Processes every event with `fire_at <= end` in `(fire_at, seq)` order,
    /// then moves the clock to `end`.
    pub fn run_until<E, F>(&mut self, end: SimTime, mut handler: F) -> Result<SimStats, E>
    where
        K: fmt::Debug,
        F: FnMut(&mut Self, Event<K>) -> Result<(), E>,
    {
        let before = self.processed;
        while let Some(ev) = self.pop_until(end) {
            handler(self, ev)?;
        }
        if end > self.now {
            self.now = end;
        }
        Ok(SimStats {
            processed: self.processed - before,
            scheduled: self.next_seq,
            pending: self.queue.len() as u64,
        })
    }
}

/// A reproducible random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.uniform() < p
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
