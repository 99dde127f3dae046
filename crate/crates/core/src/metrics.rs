//! Latency histograms, per-interval statistics and CSV emission.

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::sim::SimTime;

const SUB_BITS: u32 = 5;
const SUB_COUNT: u64 = 1 << SUB_BITS;

/// Smallest value tracked separately, in nanoseconds (1µs).
pub const HIST_MIN_NS: u64 = 1_000;
/// Largest value tracked separately, in nanoseconds (10s).
pub const HIST_MAX_NS: u64 = 10_000_000_000;

fn bucket_index(v: u64) -> usize {
    if v < 2 * SUB_COUNT {
        return v as usize;
    }
    let msb = 63 - v.leading_zeros();
    let shift = msb - SUB_BITS;
    ((shift as u64) * SUB_COUNT + (v >> shift)) as usize
}

/// Inclusive `[low, high]` value range covered by bucket `idx`.
fn bucket_bounds(idx: usize) -> (u64, u64) {
    let idx = idx as u64;
    if idx < 2 * SUB_COUNT {
        return (idx, idx);
    }
    let shift = idx / SUB_COUNT - 1;
    let low = (idx - shift * SUB_COUNT) << shift;
    (low, low + (1 << shift) - 1)
}

#[derive(Debug, Error, PartialEq)]
pub enum HistogramError {
    #[error("quantile of an empty histogram")]
    Empty,
    #[error("quantile {0} outside [0, 1]")]
    BadQuantile(f64),
}

/// Log-linear latency histogram from 1µs to 10s.
///
/// Each power-of-two range is split into 32 linear buckets, so the relative
/// width of a bucket is at most 1/32 of its lower edge. Values outside the
/// range are clamped into the first or last bucket.
#[derive(Debug, Clone)]
pub struct LatencyHistogram {
    counts: Vec<u64>,
    total: u64,
    raw: Option<Vec<u64>>,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self::new()
    }
}

impl LatencyHistogram {
    pub fn new() -> Self {
        LatencyHistogram {
            counts: vec![0; bucket_index(HIST_MAX_NS) + 1],
            total: 0,
            raw: None,
        }
    }

    /// Also keeps every raw sample, for checking against exact quantiles.
    pub fn with_raw_samples() -> Self {
        LatencyHistogram { raw: Some(Vec::new()), ..Self::new() }
    }

    pub fn record(&mut self, latency_ns: u64) {
        let v = latency_ns.clamp(HIST_MIN_NS, HIST_MAX_NS);
        self.counts[bucket_index(v)] += 1;
        self.total += 1;
        if let Some(raw) = self.raw.as_mut() {
            raw.push(latency_ns);
        }
    }

    pub fn count(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn raw_samples(&self) -> Option<&[u64]> {
        self.raw.as_deref()
    }

    pub fn clear(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.total = 0;
        if let Some(raw) = self.raw.as_mut() {
            raw.clear();
        }
    }

    pub fn merge(&mut self, other: &LatencyHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        if let (Some(a), Some(b)) = (self.raw.as_mut(), other.raw.as_ref()) {
            a.extend_from_slice(b);
        }
    }

    /// Inclusive range of the bucket that `latency_ns` falls into.
    pub fn bucket_of(latency_ns: u64) -> (u64, u64) {
        bucket_bounds(bucket_index(latency_ns.clamp(HIST_MIN_NS, HIST_MAX_NS)))
    }

    /// Upper edge of the first bucket whose cumulative fraction reaches `q`.
    pub fn quantile(&self, q: f64) -> Result<u64, HistogramError> {
        if !(0.0..=1.0).contains(&q) {
            return Err(HistogramError::BadQuantile(q));
        }
        if self.total == 0 {
            return Err(HistogramError::Empty);
        }
        let rank = quantile_rank(q, self.total);
        let mut cum = 0;
        for (idx, &c) in self.counts.iter().enumerate() {
            cum += c;
            if cum >= rank {
                return Ok(bucket_bounds(idx).1);
            }
        }
        unreachable!("rank never exceeds total")
    }

    pub fn quantile_opt(&self, q: f64) -> Option<u64> {
        self.quantile(q).ok()
    }
}

/// 1-based rank of the `q`-quantile among `n` samples: the smallest `k` with `k >= q*n`.
pub fn quantile_rank(q: f64, n: u64) -> u64 {
    ((q * n as f64).ceil() as u64).clamp(1, n)
}

/// Time-weighted mean of an integer level (e.g. a core count).
#[derive(Debug, Clone, Default)]
pub struct LevelIntegral {
    level: u64,
    since: SimTime,
    area: u128,
}

impl LevelIntegral {
    pub fn new(level: u64, at: SimTime) -> Self {
        LevelIntegral { level, since: at, area: 0 }
    }

    pub fn set(&mut self, level: u64, at: SimTime) {
        self.area += u128::from(self.level) * u128::from(at.since(self.since));
        self.level = level;
        self.since = at;
    }

    /// Closes the period ending at `at` and returns its mean, restarting the integral.
    pub fn take_mean(&mut self, start: SimTime, at: SimTime) -> f64 {
        let level = self.level;
        self.set(level, at);
        let span = at.since(start);
        let mean = if span == 0 { level as f64 } else { self.area as f64 / span as f64 };
        self.area = 0;
        mean
    }
}

/// Statistics of one tenant over one metrics interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalStats {
    pub interval: u64,
    pub tenant: String,
    /// Tail at the tenant's SLO quantile; absent for BE tenants and empty intervals.
    pub tail_ns: Option<u64>,
    pub completed: u64,
    pub bytes: u64,
    pub bandwidth_bytes_per_s: f64,
    pub mean_cores: f64,
}

/// Cumulative (post-warmup) tail of one tenant at one quantile.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub tenant: String,
    pub class: &'static str,
    pub quantile: f64,
    pub cumulative_tail_ns: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AllocTrigger {
    Register,
    WindowStart,
    Probe,
    Yield,
    Shortfall,
    Tick,
}

impl AllocTrigger {
    pub fn as_str(self) -> &'static str {
        match self {
            AllocTrigger::Register => "register",
            AllocTrigger::WindowStart => "window_start",
            AllocTrigger::Probe => "probe",
            AllocTrigger::Yield => "yield",
            AllocTrigger::Shortfall => "shortfall",
            AllocTrigger::Tick => "tick",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "register" => AllocTrigger::Register,
            "window_start" => AllocTrigger::WindowStart,
            "probe" => AllocTrigger::Probe,
            "yield" => AllocTrigger::Yield,
            "shortfall" => AllocTrigger::Shortfall,
            "tick" => AllocTrigger::Tick,
            _ => return None,
        })
    }
}

/// A change of an LC tenant's owned core count.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocEvent {
    pub time: SimTime,
    pub tenant: String,
    pub old_num: usize,
    pub new_num: usize,
    pub trigger: AllocTrigger,
    /// Cores logically owned by the BE pool right after the change.
    pub be_pool: usize,
    /// Sum of every LC tenant's core count right after the change.
    pub lc_total: usize,
    /// Smallest LC core count right after the change.
    pub lc_min: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub tenant: String,
    pub wid: u64,
    pub ql: u64,
    pub tw_ns: u64,
    pub granted_cores: usize,
    pub policy: &'static str,
}

pub const LATENCY_HEADER: &str = "run_id,tenant,class,quantile,cumulative_tail_ns";
pub const INTERVALS_HEADER: &str = "run_id,interval,tenant,tail_ns,bandwidth_bytes_per_s,mean_cores";
pub const ALLOC_HEADER: &str = "time_ns,tenant,old_num,new_num,trigger";
pub const WINDOWS_HEADER: &str = "tenant,wid,ql,tw_ns,granted_cores,policy";

fn opt(v: Option<u64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_latency_csv<W: Write>(out: &mut W, run_id: &str, rows: &[LatencyRow]) -> io::Result<()> {
    writeln!(out, "{LATENCY_HEADER}")?;
    for r in rows {
        writeln!(out, "{run_id},{},{},{},{}", r.tenant, r.class, r.quantile, opt(r.cumulative_tail_ns))?;
    }
    Ok(())
}

pub fn write_intervals_csv<W: Write>(out: &mut W, run_id: &str, rows: &[IntervalStats]) -> io::Result<()> {
    writeln!(out, "{INTERVALS_HEADER}")?;
    let mut line = String::new();
    for r in rows {
        line.clear();
        write!(
            line,
            "{run_id},{},{},{},{:.3},{:.4}",
            r.interval,
            r.tenant,
            opt(r.tail_ns),
            r.bandwidth_bytes_per_s,
            r.mean_cores
        )
        .expect("writing to a String");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn write_alloc_csv<W: Write>(out: &mut W, rows: &[AllocEvent]) -> io::Result<()> {
    writeln!(out, "{ALLOC_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.time.0, r.tenant, r.old_num, r.new_num, r.trigger.as_str())?;
    }
    Ok(())
}

pub fn write_windows_csv<W: Write>(out: &mut W, rows: &[WindowRecord]) -> io::Result<()> {
    writeln!(out, "{WINDOWS_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{}", r.tenant, r.wid, r.ql, r.tw_ns, r.granted_cores, r.policy)?;
    }
    Ok(())
}
