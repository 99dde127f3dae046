//! Request-based windows over an LC tenant's FIFO and the SLO-to-core model.
//!
//! A window is established over everything queued at that moment; requests
//! that arrive while it is active belong to the next one. Given a window's
//! size `ql`, its head wait `tw`, the SLO, and the service-time estimates, the
//! required dequeue rate is `ql / (slo - tail_io - tw)` and the core count is
//! that rate times the mean service time (Little's law), rounded up.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::sim::SimTime;
use crate::workload::Request;

/// When a window is considered finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowEnd {
    /// Once its last member has been dequeued.
    #[default]
    Dequeue,
    /// Once its last member has completed device service. Cores do not
    /// dequeue past the window boundary while it is draining.
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub wid: u64,
    pub ql: u64,
    pub tw_ns: u64,
    pub established_at: SimTime,
    /// Members are the FIFO sequence numbers `start_seq..end_seq`.
    pub start_seq: u64,
    pub end_seq: u64,
    pub dequeued: u64,
    pub completed: u64,
    pub is_temp: bool,
}

impl Window {
    /// Snapshot over the current queue. `None` when the queue is empty.
    fn over_queue(queue: &VecDeque<Request>, wid: u64, now: SimTime, is_temp: bool) -> Option<Window> {
        let head = queue.front()?;
        let tail = queue.back()?;
        Some(Window {
            wid,
            ql: tail.seq - head.seq + 1,
            tw_ns: now.since(head.enqueued_at),
            established_at: now,
            start_seq: head.seq,
            end_seq: tail.seq + 1,
            dequeued: 0,
            completed: 0,
            is_temp,
        })
    }

    pub fn contains(&self, seq: u64) -> bool {
        (self.start_seq..self.end_seq).contains(&seq)
    }

    pub fn outstanding(&self) -> u64 {
        self.ql - self.completed
    }
}

/// Inputs of the SLO-to-core model for one (possibly temporary) window.
/// Time quantities share one unit (nanoseconds in the simulator).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowLoad<S> {
    pub ql: u64,
    pub tw: S,
    pub slo: S,
    pub tail_io: S,
    pub t_io_avg: S,
}

impl<S: Scalar> WindowLoad<S> {
    /// Time left to dequeue the whole window: `slo - tail_io - tw`.
    pub fn slack(&self) -> S {
        self.slo - self.tail_io - self.tw
    }

    /// Average dequeue rate needed to meet the SLO, `None` once no time is left.
    pub fn dequeue_rate(&self) -> Option<S> {
        let slack = self.slack();
        if slack <= S::zero() {
            None
        } else {
            Some(S::from_u64(self.ql) / slack)
        }
    }
}

/// Core demand for a window, clamped to `[1, total]`. A window with no time
/// left asks for every core (`total`).
pub fn calculate_cores<S: Scalar>(load: &WindowLoad<S>, total: usize) -> usize {
    let slack = load.slack();
    if slack <= S::zero() {
        return total;
    }
    // ql * t_io_avg / slack, multiplied first so exact ratios stay exact.
    let n = (S::from_u64(load.ql) * load.t_io_avg / slack).ceil_count();
    (n.min(total as u64) as usize).max(1)
}

/// Dequeues between mid-window probes for the SLO-aware policy:
/// `floor((slo - tail_io - tw) / t_io_avg)`, at least 1.
pub fn compute_budget<S: Scalar>(load: &WindowLoad<S>) -> u64 {
    let slack = load.slack();
    if slack <= S::zero() || load.t_io_avg <= S::zero() {
        return 1;
    }
    (slack / load.t_io_avg).floor_count().max(1)
}

/// Window bookkeeping of one LC tenant.
#[derive(Debug, Clone, Default)]
pub struct WindowTracker {
    pub end_rule: WindowEnd,
    pub current: Option<Window>,
    /// Windows established so far; the current window's id.
    pub wid: u64,
    /// Dequeues since the current window was established.
    pub wcnt: u64,
}

impl WindowTracker {
    pub fn new(end_rule: WindowEnd) -> Self {
        WindowTracker { end_rule, ..Default::default() }
    }

    pub fn is_active(&self) -> bool {
        self.current.is_some()
    }

    /// Establishes a window over the whole queue.
    ///
    /// Panics if a window is active or the queue is empty.
    pub fn new_window(&mut self, queue: &VecDeque<Request>, now: SimTime) -> &Window {
        assert!(self.current.is_none(), "a window is already active");
        let w = Window::over_queue(queue, self.wid + 1, now, false).expect("window over an empty queue");
        self.wid += 1;
        self.wcnt = 0;
        self.current.insert(w)
    }

    /// Snapshot of the current queue used for mid-window probes.
    pub fn temp_window(&self, queue: &VecDeque<Request>, now: SimTime) -> Option<Window> {
        self.current.as_ref()?;
        Window::over_queue(queue, self.wid, now, true)
    }

    /// Whether the queue head may be dequeued now.
    pub fn may_dequeue(&self, head_seq: u64) -> bool {
        match (&self.current, self.end_rule) {
            (Some(w), WindowEnd::Complete) => w.contains(head_seq),
            _ => true,
        }
    }

    /// Accounts a dequeue; returns the owning window id. Ends the window
    /// under [`WindowEnd::Dequeue`] when its last member leaves the queue.
    pub fn on_dequeue(&mut self, seq: u64) -> Option<u64> {
        let w = self.current.as_mut()?;
        if !w.contains(seq) {
            return None;
        }
        w.dequeued += 1;
        self.wcnt += 1;
        let wid = w.wid;
        if self.end_rule == WindowEnd::Dequeue && w.dequeued == w.ql {
            self.current = None;
        }
        Some(wid)
    }

    /// Accounts a completion; returns `true` if it ended the current window.
    pub fn on_complete(&mut self, seq: u64) -> bool {
        let Some(w) = self.current.as_mut() else {
            return false;
        };
        if !w.contains(seq) {
            return false;
        }
        w.completed += 1;
        if self.end_rule == WindowEnd::Complete && w.completed == w.ql {
            self.current = None;
            return true;
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{OpKind, TenantClass};
    use num_rational::Ratio;

    fn req(seq: u64, enq: u64) -> Request {
        Request {
            id: seq,
            tenant: 0,
            class: TenantClass::Lc,
            op: OpKind::Read,
            size: 4096,
            slot: None,
            seq,
            arrive_at: SimTime(enq),
            enqueued_at: SimTime(enq),
            dequeued_at: None,
            completed_at: None,
            service_ns: 0,
            wid: None,
        }
    }

    fn us(v: u64) -> f64 {
        v as f64 * 1000.0
    }

    #[test]
    fn window_captures_queue() {
        let q: VecDeque<_> = (0..7).map(|i| req(i, 100_000)).collect();
        let mut t = WindowTracker::new(WindowEnd::Dequeue);
        let w = t.new_window(&q, SimTime(150_000));
        assert_eq!((w.wid, w.ql, w.tw_ns), (1, 7, 50_000));
    }

    #[test]
    fn arrivals_during_window_form_next_window() {
        let mut q: VecDeque<_> = (0..4).map(|i| req(i, 0)).collect();
        let mut t = WindowTracker::new(WindowEnd::Dequeue);
        t.new_window(&q, SimTime(10));
        for i in 4..7 {
            q.push_back(req(i, 20));
        }
        assert_eq!(t.current.as_ref().unwrap().ql, 4);
        for _ in 0..4 {
            let r = q.pop_front().unwrap();
            assert_eq!(t.on_dequeue(r.seq), Some(1));
        }
        assert!(!t.is_active());
        let w = t.new_window(&q, SimTime(30));
        assert_eq!((w.wid, w.ql, w.tw_ns), (2, 3, 10));
    }

    #[test]
    fn completion_rule_ends_on_last_completion() {
        let mut q: VecDeque<_> = (0..2).map(|i| req(i, 0)).collect();
        let mut t = WindowTracker::new(WindowEnd::Complete);
        t.new_window(&q, SimTime(0));
        q.push_back(req(2, 5));
        let a = q.pop_front().unwrap();
        let b = q.pop_front().unwrap();
        t.on_dequeue(a.seq);
        t.on_dequeue(b.seq);
        assert!(t.is_active());
        assert!(!t.may_dequeue(q.front().unwrap().seq));
        assert!(!t.on_complete(b.seq));
        assert!(t.on_complete(a.seq));
        assert!(!t.is_active());
    }

    #[test]
    fn temp_window_includes_burst() {
        let mut q: VecDeque<_> = (0..3).map(|i| req(i, 0)).collect();
        let mut t = WindowTracker::new(WindowEnd::Dequeue);
        assert!(t.temp_window(&q, SimTime(0)).is_none());
        t.new_window(&q, SimTime(0));
        q.pop_front();
        for i in 3..53 {
            q.push_back(req(i, 1_000));
        }
        let tmp = t.temp_window(&q, SimTime(2_000)).unwrap();
        assert!(tmp.is_temp);
        assert_eq!((tmp.ql, tmp.tw_ns), (52, 2_000));
        q.clear();
        assert!(t.temp_window(&q, SimTime(3_000)).is_none());
    }

    #[test]
    #[should_panic(expected = "empty queue")]
    fn new_window_on_empty_queue_panics() {
        WindowTracker::new(WindowEnd::Dequeue).new_window(&VecDeque::new(), SimTime(0));
    }

    #[test]
    fn core_count_worked_example() {
        let load = WindowLoad { ql: 100, tw: us(500), slo: us(3000), tail_io: us(500), t_io_avg: us(100) };
        // DR = 100 / 2ms = 50 req/ms; N = 50 * 0.1ms = 5.
        assert_eq!(load.dequeue_rate().unwrap() * 1e6, 50.0);
        assert_eq!(calculate_cores(&load, 24), 5);
        assert_eq!(compute_budget(&load), 20);
    }

    #[test]
    fn clamps_and_demand_max() {
        let small = WindowLoad { ql: 1, tw: 0.0, slo: 1e12, tail_io: us(500), t_io_avg: us(100) };
        assert_eq!(calculate_cores(&small, 8), 1);
        let late = WindowLoad { ql: 10, tw: us(2600), slo: us(3000), tail_io: us(400), t_io_avg: us(100) };
        assert_eq!(late.dequeue_rate(), None);
        assert_eq!(calculate_cores(&late, 8), 8);
        assert_eq!(compute_budget(&late), 1);
        let huge = WindowLoad { ql: 10_000, tw: 0.0, slo: us(3000), tail_io: us(500), t_io_avg: us(100) };
        assert_eq!(calculate_cores(&huge, 8), 8);
    }

    #[test]
    fn exact_rationals_agree_with_floats_on_integral_boundary() {
        let exact = WindowLoad {
            ql: 100,
            tw: Ratio::<i128>::from_integer(500_000),
            slo: Ratio::from_integer(3_000_000),
            tail_io: Ratio::from_integer(500_000),
            t_io_avg: Ratio::from_integer(100_000),
        };
        assert_eq!(calculate_cores(&exact, 24), 5);
        assert_eq!(exact.dequeue_rate().unwrap(), Ratio::new(1, 20_000));
    }
}
