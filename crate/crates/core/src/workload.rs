//! Per-tenant request generation: Fio-style closed loops and open-loop
//! Poisson arrivals with an optional on/off burst.

use std::time::Duration;

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::device::humantime_serde_compat;
use crate::sim::{duration_ns, RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TenantClass {
    Lc,
    Be,
}

impl TenantClass {
    pub fn as_str(self) -> &'static str {
        match self {
            TenantClass::Lc => "LC",
            TenantClass::Be => "BE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Read,
    Write,
}

pub type TenantId = usize;

/// One I/O request and its pipeline timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: u64,
    pub tenant: TenantId,
    pub class: TenantClass,
    pub op: OpKind,
    pub size: u32,
    /// Closed-loop job slot that issued the request.
    pub slot: Option<u32>,
    /// Position in the tenant's FIFO, assigned at enqueue.
    pub seq: u64,
    pub arrive_at: SimTime,
    pub enqueued_at: SimTime,
    pub dequeued_at: Option<SimTime>,
    pub completed_at: Option<SimTime>,
    pub service_ns: u64,
    /// Window the request was dequeued under, for LC tenants under QWin.
    pub wid: Option<u64>,
}

impl Request {
    pub fn latency_ns(&self) -> Option<u64> {
        self.completed_at.map(|c| c.since(self.arrive_at))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    ClosedLoop,
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Burst {
    #[serde(with = "humantime_serde_compat")]
    pub on_duration: Duration,
    #[serde(with = "humantime_serde_compat")]
    pub off_duration: Duration,
    /// Arrival rate during the on-phase, requests per second.
    pub burst_rate: f64,
}

/// Size of one request with its relative weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeWeight {
    pub size: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub mode: LoadMode,
    pub block_size: u32,
    /// Overrides `block_size` with a weighted mix when non-empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub size_mix: Vec<SizeWeight>,
    #[serde(default = "one")]
    pub iodepth: u32,
    #[serde(default = "one")]
    pub numjobs: u32,
    pub read_ratio: f64,
    /// Open-loop arrival rate, requests per second.
    #[serde(default)]
    pub rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burst: Option<Burst>,
}

fn one() -> u32 {
    1
}

impl WorkloadSpec {
    pub fn closed_loop(block_size: u32, iodepth: u32, numjobs: u32, read_ratio: f64) -> Self {
        WorkloadSpec {
            mode: LoadMode::ClosedLoop,
            block_size,
            size_mix: Vec::new(),
            iodepth,
            numjobs,
            read_ratio,
            rate: 0.0,
            burst: None,
        }
    }

    pub fn open_loop(block_size: u32, rate: f64, read_ratio: f64) -> Self {
        WorkloadSpec {
            mode: LoadMode::OpenLoop,
            block_size,
            size_mix: Vec::new(),
            iodepth: 1,
            numjobs: 1,
            read_ratio,
            rate,
            burst: None,
        }
    }

    /// Table-style workload presets, by label.
    pub fn preset(label: &str) -> Option<(Self, TenantClass)> {
        let lc = |r| WorkloadSpec::closed_loop(4096, 16, 8, r);
        let be = |r| WorkloadSpec::closed_loop(65536, 16, 2, r);
        Some(match label {
            "A" => (lc(1.0), TenantClass::Lc),
            "B" => (lc(0.95), TenantClass::Lc),
            "C" => (lc(0.90), TenantClass::Lc),
            "D" => (lc(0.85), TenantClass::Lc),
            "E" => (be(1.0), TenantClass::Be),
            "F" => (be(0.99), TenantClass::Be),
            "G" => (be(0.95), TenantClass::Be),
            "H" => (be(0.90), TenantClass::Be),
            // OLTP-like: small random reads and writes plus larger log writes.
            "J" => (
                WorkloadSpec {
                    size_mix: vec![
                        SizeWeight { size: 4096, weight: 0.8 },
                        SizeWeight { size: 8192, weight: 0.15 },
                        SizeWeight { size: 65536, weight: 0.05 },
                    ],
                    ..WorkloadSpec::closed_loop(4096, 16, 8, 0.7)
                },
                TenantClass::Lc,
            ),
            // Webserver-like: read-mostly whole-file reads of mixed sizes.
            "K" => (
                WorkloadSpec {
                    size_mix: vec![
                        SizeWeight { size: 4096, weight: 0.5 },
                        SizeWeight { size: 16384, weight: 0.3 },
                        SizeWeight { size: 65536, weight: 0.2 },
                    ],
                    ..WorkloadSpec::closed_loop(4096, 16, 8, 0.95)
                },
                TenantClass::Lc,
            ),
            "P" => (WorkloadSpec::closed_loop(4096, 32, 8, 0.90), TenantClass::Lc),
            _ => return None,
        })
    }

    pub const PRESET_LABELS: [&'static str; 11] = ["A", "B", "C", "D", "E", "F", "G", "H", "J", "K", "P"];

    pub fn validate(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.read_ratio) {
            bad.push("read_ratio must be in [0, 1]".to_string());
        }
        if self.block_size == 0 && self.size_mix.is_empty() {
            bad.push("block_size must be positive".to_string());
        }
        if self.size_mix.iter().any(|s| s.size == 0 || s.weight.is_nan() || s.weight < 0.0)
            || (!self.size_mix.is_empty() && self.size_mix.iter().map(|s| s.weight).sum::<f64>() <= 0.0)
        {
            bad.push("size_mix needs positive sizes and a positive total weight".to_string());
        }
        match self.mode {
            LoadMode::ClosedLoop => {
                if self.iodepth == 0 || self.numjobs == 0 {
                    bad.push("closed_loop needs iodepth >= 1 and numjobs >= 1".to_string());
                }
            }
            LoadMode::OpenLoop => {
                if !(self.rate > 0.0 && self.rate.is_finite()) {
                    bad.push("open_loop needs rate > 0".to_string());
                }
            }
        }
        if let Some(b) = &self.burst {
            if self.mode != LoadMode::OpenLoop {
                bad.push("burst requires open_loop mode".to_string());
            }
            if b.on_duration.is_zero() || b.off_duration.is_zero() || b.burst_rate.is_nan() || b.burst_rate <= 0.0 {
                bad.push("burst needs positive on/off durations and burst_rate".to_string());
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad.join("; "))
        }
    }

    /// Upper bound on concurrently outstanding requests, if any.
    pub fn max_in_flight(&self) -> Option<u64> {
        match self.mode {
            LoadMode::ClosedLoop => Some(u64::from(self.iodepth) * u64::from(self.numjobs)),
            LoadMode::OpenLoop => None,
        }
    }

    /// Typical request size, used for estimator fallbacks.
    pub fn nominal_size(&self) -> u32 {
        self.size_mix
            .iter()
            .max_by(|a, b| a.weight.total_cmp(&b.weight))
            .map_or(self.block_size, |s| s.size)
    }

    /// Arrival rate in effect at `t`.
    pub fn rate_at(&self, t: SimTime) -> f64 {
        match &self.burst {
            Some(b) if in_on_phase(b, t) => b.burst_rate,
            _ => self.rate,
        }
    }
}

/// The off-phase comes first, starting at time zero.
fn in_on_phase(b: &Burst, t: SimTime) -> bool {
    let off = duration_ns(b.off_duration);
    let period = off + duration_ns(b.on_duration);
    t.0 % period >= off
}

fn next_phase_boundary(b: &Burst, t: SimTime) -> SimTime {
    let off = duration_ns(b.off_duration);
    let period = off + duration_ns(b.on_duration);
    let base = t.0 - t.0 % period;
    if t.0 % period < off {
        SimTime(base + off)
    } else {
        SimTime(base + period)
    }
}

/// Draws request attributes and arrival times for one tenant.
#[derive(Debug, Clone)]
pub struct WorkloadGen {
    spec: WorkloadSpec,
    arrivals: RngStream,
    ops: RngStream,
    sizes: RngStream,
    in_flight: u64,
}

impl WorkloadGen {
    pub fn new(spec: WorkloadSpec, arrivals: RngStream, ops: RngStream, sizes: RngStream) -> Self {
        WorkloadGen { spec, arrivals, ops, sizes, in_flight: 0 }
    }

    pub fn spec(&self) -> &WorkloadSpec {
        &self.spec
    }

    pub fn in_flight(&self) -> u64 {
        self.in_flight
    }

    /// Closed-loop job slots that issue at time zero (`iodepth` per job).
    pub fn initial_slots(&self) -> Vec<u32> {
        match self.spec.max_in_flight() {
            Some(n) => (0..n as u32).collect(),
            None => Vec::new(),
        }
    }

    /// Next open-loop arrival strictly after `now`, or `None` for closed loops.
    pub fn next_arrival(&mut self, now: SimTime) -> Option<SimTime> {
        if self.spec.mode != LoadMode::OpenLoop {
            return None;
        }
        let mut t = now;
        loop {
            let rate = self.spec.rate_at(t);
            let gap_s = Exp::new(rate).expect("validated positive rate").sample(self.arrivals.rng());
            let cand = t + ((gap_s * 1e9).round() as u64).max(1);
            match &self.spec.burst {
                // Memoryless: restart the draw at a phase change with the new rate.
                Some(b) => {
                    let boundary = next_phase_boundary(b, t);
                    if cand < boundary {
                        return Some(cand);
                    }
                    t = boundary;
                }
                None => return Some(cand),
            }
        }
    }

    /// Builds the next request. Op and size come from independent streams.
    pub fn next_request(&mut self, id: u64, tenant: TenantId, class: TenantClass, slot: Option<u32>, now: SimTime) -> Request {
        let op = if self.ops.bernoulli(self.spec.read_ratio) { OpKind::Read } else { OpKind::Write };
        let size = if self.spec.size_mix.is_empty() {
            self.spec.block_size
        } else {
            let total: f64 = self.spec.size_mix.iter().map(|s| s.weight).sum();
            let mut u = self.sizes.uniform() * total;
            let mut chosen = self.spec.size_mix[self.spec.size_mix.len() - 1].size;
            for s in &self.spec.size_mix {
                if u < s.weight {
                    chosen = s.size;
                    break;
                }
                u -= s.weight;
            }
            chosen
        };
        self.in_flight += 1;
        if let Some(max) = self.spec.max_in_flight() {
            assert!(self.in_flight <= max, "closed loop exceeded iodepth x numjobs");
        }
        Request {
            id,
            tenant,
            class,
            op,
            size,
            slot,
            seq: 0,
            arrive_at: now,
            enqueued_at: now,
            dequeued_at: None,
            completed_at: None,
            service_ns: 0,
            wid: None,
        }
    }

    /// Marks a request as finished; closed loops return the slot to reissue.
    pub fn on_completion(&mut self, slot: Option<u32>) -> Option<u32> {
        self.in_flight -= 1;
        match self.spec.mode {
            LoadMode::ClosedLoop => slot,
            LoadMode::OpenLoop => None,
        }
    }
}
