//! The simulated storage backend: per-tenant FIFO queues, a fixed pool of
//! cores each running one logical thread, and the request lifecycle
//! (enqueue, dequeue by a core, device service, completion).
//!
//! Every core has exactly one logical owner, an LC tenant or the BE pool.
//! Ownership changes are recorded as transfers. A transfer of a busy core
//! takes effect only when its in-flight request completes.

use std::collections::VecDeque;

use crate::baselines::{congestion_incremental_tick, interval_feedback_tick, static_allocate};
use crate::config::{AllocatorKind, ExperimentConfig, SloSpec};
use crate::device::{sample_service_time, EstimatorScope, Estimators};
use crate::metrics::{AllocEvent, AllocTrigger, IntervalStats, LatencyHistogram, LatencyRow, LevelIntegral, WindowRecord};
use crate::qwin::{lc_core_iteration, CorePolicy, PolicyChange};
use crate::sim::{duration_ns, Engine, Event, RngStream, SimStats, SimTime};
use crate::window::WindowTracker;
use crate::workload::{OpKind, Request, TenantClass, TenantId, WorkloadGen};

pub type CoreId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Owner {
    Lc(TenantId),
    Be,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    RequestArrival { tenant: TenantId, slot: Option<u32> },
    IoComplete { core: CoreId },
    CoreWake { core: CoreId },
    MetricTick,
    PolicyProbe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferKind {
    /// A BE-pool core claimed by an LC tenant.
    Preempt,
    /// A core given back to the BE pool by the LC tenant owning it.
    Yield,
}

/// One change of a core's logical owner.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreTransfer {
    pub core: CoreId,
    pub from: Owner,
    pub to: Owner,
    pub kind: TransferKind,
    pub marked_at: SimTime,
    /// Completion time of the request the core was handling when marked.
    pub in_flight_done_at: Option<SimTime>,
    /// Id of the request the core was handling when marked.
    pub in_flight_request: Option<u64>,
    pub busy_at_mark: bool,
    /// When the new owner could first use the core.
    pub effective_at: Option<SimTime>,
}

#[derive(Debug)]
pub struct Core {
    pub owner: Owner,
    pub in_flight: Option<Request>,
    /// Completion time once the device has started serving `in_flight`.
    pub done_at: Option<SimTime>,
    pending_marks: Vec<usize>,
    wake_pending: bool,
}

impl Core {
    pub fn is_idle(&self) -> bool {
        self.in_flight.is_none()
    }
}

#[derive(Debug)]
pub struct Tenant {
    pub id: TenantId,
    pub label: String,
    pub class: TenantClass,
    pub slo: Option<SloSpec>,
    pub queue: VecDeque<Request>,
    next_seq: u64,
    pub num: usize,
    pub windows: WindowTracker,
    pub policy: CorePolicy,
    pub budget: u64,
    estimators: Estimators,
    workload: WorkloadGen,
    service_rng: RngStream,
    /// Latencies since the last policy refresh.
    pub probe_hist: LatencyHistogram,
    /// Latencies since the last interval-feedback tick.
    pub feedback_hist: LatencyHistogram,
    /// Queue head seen at the previous congestion tick.
    pub last_head: Option<u64>,
    cumulative: LatencyHistogram,
    interval: LatencyHistogram,
    interval_bytes: u64,
    interval_completed: u64,
    measured_bytes: u64,
    cores_level: LevelIntegral,
    pub generated: u64,
    pub completed: u64,
}

impl Tenant {
    fn report_quantile(&self) -> f64 {
        self.slo.map_or(0.999, |s| s.quantile)
    }
}

/// Device FIFO plus in-service accounting.
#[derive(Debug, Default)]
struct Device {
    in_service: usize,
    waiting: VecDeque<CoreId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DequeueRecord {
    pub tenant: TenantId,
    pub seq: u64,
    /// Window the request was dequeued in (LC tenants under QWin).
    pub wid: Option<u64>,
    pub request: u64,
    pub core: CoreId,
    pub time: SimTime,
}

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub latency: Vec<LatencyRow>,
    pub intervals: Vec<IntervalStats>,
    pub allocs: Vec<AllocEvent>,
    pub windows: Vec<WindowRecord>,
    /// `(tenant, wid, first member seq, queue length at establishment)`.
    pub window_bounds: Vec<(TenantId, u64, u64, u64)>,
    pub policy_changes: Vec<PolicyChange>,
    pub transfers: Vec<CoreTransfer>,
    /// Every dequeue, when recording is enabled.
    pub dequeues: Vec<DequeueRecord>,
    /// `(request id, core, time)` of every completion, when recording is enabled.
    pub completions: Vec<(u64, CoreId, SimTime)>,
    pub tenants: Vec<TenantSummary>,
    pub stats: SimStats,
    pub probes: u64,
    /// Time-weighted mean BE pool size over the whole run.
    pub be_pool_mean: f64,
    /// Post-warmup latencies per tenant, when kept.
    pub raw_latencies: Vec<Option<Vec<u64>>>,
    pub trace: Option<Vec<crate::sim::TraceEntry>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TenantSummary {
    pub label: String,
    pub class: TenantClass,
    pub slo: Option<SloSpec>,
    /// Post-warmup tail at the SLO quantile (p99.9 for BE tenants).
    pub tail_ns: Option<u64>,
    /// Post-warmup bytes per second.
    pub bandwidth: f64,
    pub generated: u64,
    pub completed: u64,
    pub queued: u64,
    pub in_service: u64,
    pub windows: u64,
    pub final_num: usize,
}

/// Options that only tests and diagnostics need.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub trace_events: bool,
    /// Keep per-request dequeue and completion records.
    pub record_requests: bool,
    pub keep_raw_latencies: bool,
}

pub struct Backend {
    pub(crate) cfg: ExperimentConfig,
    pub(crate) now: SimTime,
    pub cores: Vec<Core>,
    pub tenants: Vec<Tenant>,
    device: Device,
    device_estimators: Option<Estimators>,
    warmup_end: SimTime,
    next_request_id: u64,
    be_cursor: usize,
    be_level: LevelIntegral,
    interval_index: u64,
    interval_start: SimTime,
    be_run_level: LevelIntegral,
    options: RunOptions,
    pending_wakes: Vec<CoreId>,
    scheduled: Vec<(SimTime, EventKind)>,
    /// Core currently stepping after a completion; never picked by `kick`.
    stepping: Option<CoreId>,
    pub(crate) allocs: Vec<AllocEvent>,
    pub(crate) windows_log: Vec<WindowRecord>,
    pub(crate) window_bounds: Vec<(TenantId, u64, u64, u64)>,
    pub(crate) policy_changes: Vec<PolicyChange>,
    pub(crate) transfers: Vec<CoreTransfer>,
    pub(crate) probes: u64,
    intervals: Vec<IntervalStats>,
    dequeues: Vec<DequeueRecord>,
    completions: Vec<(u64, CoreId, SimTime)>,
}

/// RNG stream ids: one block of four per tenant.
fn stream_id(tenant: TenantId, purpose: u64) -> u64 {
    1 + tenant as u64 * 4 + purpose
}

impl Backend {
    pub fn new(cfg: ExperimentConfig, options: RunOptions) -> Result<Self, crate::config::ConfigError> {
        let resolved = cfg.resolve_tenants()?;
        let total = cfg.pool.total;
        let seed = cfg.seed;
        let mut tenants = Vec::with_capacity(resolved.len());
        for (id, r) in resolved.into_iter().enumerate() {
            let q = r.slo.map_or(0.999, |s| s.quantile);
            let estimators = Estimators::for_model(&cfg.estimators, &cfg.device, q, OpKind::Read, r.workload.nominal_size());
            let hist = || {
                if options.keep_raw_latencies {
                    LatencyHistogram::with_raw_samples()
                } else {
                    LatencyHistogram::new()
                }
            };
            tenants.push(Tenant {
                id,
                label: r.label,
                class: r.class,
                slo: r.slo,
                queue: VecDeque::new(),
                next_seq: 0,
                num: 0,
                windows: WindowTracker::new(cfg.allocator.qwin.window_end),
                policy: cfg.allocator.qwin.policy.initial_policy(),
                budget: 1,
                estimators,
                workload: WorkloadGen::new(
                    r.workload,
                    RngStream::new(seed, stream_id(id, 0)),
                    RngStream::new(seed, stream_id(id, 1)),
                    RngStream::new(seed, stream_id(id, 2)),
                ),
                service_rng: RngStream::new(seed, stream_id(id, 3)),
                probe_hist: LatencyHistogram::new(),
                feedback_hist: LatencyHistogram::new(),
                last_head: None,
                cumulative: hist(),
                interval: LatencyHistogram::new(),
                interval_bytes: 0,
                interval_completed: 0,
                measured_bytes: 0,
                cores_level: LevelIntegral::new(0, SimTime::ZERO),
                generated: 0,
                completed: 0,
            });
        }
        for t in &mut tenants {
            t.budget = match t.policy {
                CorePolicy::Conservative => 0,
                _ => 1,
            };
        }
        let device_estimators = (cfg.estimators.scope == EstimatorScope::Device).then(|| {
            let q = tenants.iter().filter_map(|t| t.slo.map(|s| s.quantile)).fold(0.0, f64::max);
            Estimators::for_model(&cfg.estimators, &cfg.device, if q > 0.0 { q } else { 0.999 }, OpKind::Read, cfg.device.ref_size)
        });
        let cores = (0..total)
            .map(|_| Core { owner: Owner::Be, in_flight: None, done_at: None, pending_marks: Vec::new(), wake_pending: false })
            .collect();
        let warmup_end = SimTime::from_duration(cfg.warmup);
        let mut b = Backend {
            cfg,
            now: SimTime::ZERO,
            cores,
            tenants,
            device: Device::default(),
            device_estimators,
            warmup_end,
            next_request_id: 0,
            be_cursor: 0,
            be_level: LevelIntegral::new(total as u64, SimTime::ZERO),
            interval_index: 0,
            interval_start: SimTime::ZERO,
            be_run_level: LevelIntegral::new(total as u64, SimTime::ZERO),
            options,
            pending_wakes: Vec::new(),
            scheduled: Vec::new(),
            stepping: None,
            allocs: Vec::new(),
            windows_log: Vec::new(),
            window_bounds: Vec::new(),
            policy_changes: Vec::new(),
            transfers: Vec::new(),
            probes: 0,
            intervals: Vec::new(),
            dequeues: Vec::new(),
            completions: Vec::new(),
        };
        b.initial_assignment();
        Ok(b)
    }

    fn initial_assignment(&mut self) {
        match self.cfg.allocator.kind {
            AllocatorKind::Priority => {}
            AllocatorKind::Static => {
                let labels: Vec<_> = self.tenants.iter().map(|t| (t.label.clone(), t.class)).collect();
                let (counts, _) = static_allocate(&self.cfg.allocator.static_, &labels, self.cfg.pool.total)
                    .expect("validated static counts");
                let mut next = 0;
                for (t, n) in counts.into_iter().enumerate() {
                    for _ in 0..n {
                        self.cores[next].owner = Owner::Lc(t);
                        next += 1;
                    }
                    if n > 0 {
                        self.set_num(t, n);
                        self.log_alloc(t, 0, AllocTrigger::Register);
                    }
                }
            }
            AllocatorKind::Qwin | AllocatorKind::Shenango | AllocatorKind::Cake => {
                for t in self.lc_tenants() {
                    let core = self.cores.iter().position(|c| c.owner == Owner::Be).expect("validated core count");
                    self.cores[core].owner = Owner::Lc(t);
                    self.set_num(t, 1);
                    self.log_alloc(t, 0, AllocTrigger::Register);
                }
            }
        }
    }

    pub fn lc_tenants(&self) -> Vec<TenantId> {
        self.tenants.iter().filter(|t| t.class == TenantClass::Lc).map(|t| t.id).collect()
    }

    pub fn be_pool_size(&self) -> usize {
        self.cores.iter().filter(|c| c.owner == Owner::Be).count()
    }

    pub(crate) fn estimators_for(&self, t: TenantId) -> &Estimators {
        self.device_estimators.as_ref().unwrap_or(&self.tenants[t].estimators)
    }

    fn set_num(&mut self, t: TenantId, num: usize) {
        let now = self.now;
        self.tenants[t].num = num;
        self.tenants[t].cores_level.set(num as u64, now);
        let be = self.be_pool_size() as u64;
        self.be_level.set(be, now);
        self.be_run_level.set(be, now);
    }

    /// Records a change of `t`'s core count from `old` to its current value.
    pub(crate) fn log_alloc(&mut self, t: TenantId, old: usize, trigger: AllocTrigger) {
        let new = self.tenants[t].num;
        if new == old {
            return;
        }
        let lc: Vec<usize> = self.lc_tenants().into_iter().map(|i| self.tenants[i].num).collect();
        debug_assert!(self.ownership_consistent());
        self.allocs.push(AllocEvent {
            time: self.now,
            tenant: self.tenants[t].label.clone(),
            old_num: old,
            new_num: new,
            trigger,
            be_pool: self.be_pool_size(),
            lc_total: lc.iter().sum(),
            lc_min: lc.iter().copied().min().unwrap_or(0),
        });
    }

    /// Each tenant's counter equals the number of cores it logically owns.
    pub fn ownership_consistent(&self) -> bool {
        self.tenants.iter().all(|t| {
            t.class == TenantClass::Be || self.cores.iter().filter(|c| c.owner == Owner::Lc(t.id)).count() == t.num
        })
    }

    fn mark(&mut self, core: CoreId, to: Owner, kind: TransferKind) {
        let c = &mut self.cores[core];
        let busy = !c.is_idle();
        let idx = self.transfers.len();
        self.transfers.push(CoreTransfer {
            core,
            from: c.owner,
            to,
            kind,
            marked_at: self.now,
            in_flight_done_at: None,
            in_flight_request: c.in_flight.as_ref().map(|r| r.id),
            busy_at_mark: busy,
            effective_at: (!busy).then_some(self.now),
        });
        c.owner = to;
        if busy {
            c.pending_marks.push(idx);
        } else {
            self.wake(core);
        }
    }

    /// Moves up to `n` BE-pool cores to `t`: idle ones first, then the busy
    /// ones finishing soonest. Returns how many were claimed.
    pub(crate) fn grant_cores(&mut self, t: TenantId, n: usize) -> usize {
        let mut candidates: Vec<(u8, u64, CoreId)> = self
            .cores
            .iter()
            .enumerate()
            .filter(|(_, c)| c.owner == Owner::Be)
            .map(|(i, c)| match (c.is_idle(), c.done_at) {
                (true, _) => (0, 0, i),
                (false, Some(d)) => (1, d.0, i),
                (false, None) => (2, 0, i),
            })
            .collect();
        candidates.sort_unstable();
        let k = n.min(candidates.len());
        for &(_, _, core) in &candidates[..k] {
            self.mark(core, Owner::Lc(t), TransferKind::Preempt);
        }
        let num = self.tenants[t].num + k;
        self.set_num(t, num);
        k
    }

    /// Returns `k` of `t`'s cores to the BE pool, never `keep`. Preference:
    /// cores still finishing someone else's request, idle cores, then busy
    /// cores finishing soonest.
    pub(crate) fn release_cores(&mut self, t: TenantId, k: usize, keep: Option<CoreId>) -> usize {
        let mut candidates: Vec<(u8, u64, CoreId)> = self
            .cores
            .iter()
            .enumerate()
            .filter(|(i, c)| c.owner == Owner::Lc(t) && Some(*i) != keep)
            .map(|(i, c)| {
                let foreign = c.in_flight.as_ref().is_some_and(|r| r.tenant != t);
                match (foreign, c.is_idle(), c.done_at) {
                    (true, _, d) => (0, d.map_or(u64::MAX, |d| d.0), i),
                    (false, true, _) => (1, 0, i),
                    (false, false, Some(d)) => (2, d.0, i),
                    (false, false, None) => (3, 0, i),
                }
            })
            .collect();
        candidates.sort_unstable();
        let k = k.min(candidates.len());
        for &(_, _, core) in &candidates[..k] {
            self.mark(core, Owner::Be, TransferKind::Yield);
        }
        let num = self.tenants[t].num - k;
        self.set_num(t, num);
        k
    }

    /// Gives the executing core back to the BE pool.
    pub(crate) fn yield_core(&mut self, core: CoreId, t: TenantId) {
        debug_assert_eq!(self.cores[core].owner, Owner::Lc(t));
        self.mark(core, Owner::Be, TransferKind::Yield);
        let num = self.tenants[t].num - 1;
        self.set_num(t, num);
    }

    fn wake(&mut self, core: CoreId) {
        let c = &mut self.cores[core];
        if c.is_idle() && !c.wake_pending {
            c.wake_pending = true;
            self.pending_wakes.push(core);
        }
    }

    fn can_serve(&self, core: CoreId, t: TenantId) -> bool {
        let owner = self.cores[core].owner;
        match (self.cfg.allocator.kind, self.tenants[t].class) {
            (AllocatorKind::Priority, _) => true,
            (AllocatorKind::Cake, TenantClass::Be) => true,
            (_, TenantClass::Lc) => owner == Owner::Lc(t),
            (_, TenantClass::Be) => owner == Owner::Be,
        }
    }

    /// Wakes one idle core able to serve `t`, preferring its own cores.
    fn kick(&mut self, t: TenantId) {
        let own = |b: &Self, i: CoreId| match b.tenants[t].class {
            TenantClass::Lc => b.cores[i].owner == Owner::Lc(t),
            TenantClass::Be => b.cores[i].owner == Owner::Be,
        };
        let pick = (0..self.cores.len())
            .filter(|&i| Some(i) != self.stepping)
            .filter(|&i| self.cores[i].is_idle() && !self.cores[i].wake_pending && self.can_serve(i, t))
            .min_by_key(|&i| (!own(self, i), i));
        if let Some(core) = pick {
            self.wake(core);
        }
    }

    fn wake_idle_owned(&mut self, t: TenantId) {
        for i in 0..self.cores.len() {
            if self.cores[i].owner == Owner::Lc(t) {
                self.wake(i);
            }
        }
    }

    fn enqueue(&mut self, mut req: Request) {
        let t = req.tenant;
        let tn = &mut self.tenants[t];
        req.enqueued_at = self.now;
        req.seq = tn.next_seq;
        tn.next_seq += 1;
        tn.queue.push_back(req);
        self.kick(t);
    }

    fn arrive(&mut self, t: TenantId, slot: Option<u32>) {
        let id = self.next_request_id;
        self.next_request_id += 1;
        let now = self.now;
        let class = self.tenants[t].class;
        let req = self.tenants[t].workload.next_request(id, t, class, slot, now);
        self.tenants[t].generated += 1;
        self.enqueue(req);
    }

    /// Pops the head of `t`'s queue onto `core` and submits it to the device.
    pub(crate) fn dispatch_from(&mut self, core: CoreId, t: TenantId) -> bool {
        let now = self.now;
        let Some(mut req) = self.tenants[t].queue.pop_front() else {
            return false;
        };
        req.dequeued_at = Some(now);
        if self.tenants[t].class == TenantClass::Lc && self.cfg.allocator.kind == AllocatorKind::Qwin {
            req.wid = self.tenants[t].windows.on_dequeue(req.seq);
        }
        if self.options.record_requests {
            self.dequeues.push(DequeueRecord { tenant: t, seq: req.seq, wid: req.wid, request: req.id, core, time: now });
        }
        let c = &mut self.cores[core];
        debug_assert!(c.is_idle());
        c.in_flight = Some(req);
        c.done_at = None;
        if self.device.in_service < self.cfg.device.capacity {
            self.start_service(core);
        } else {
            self.device.waiting.push_back(core);
        }
        // Backlog left behind: get another idle core going.
        if !self.tenants[t].queue.is_empty() {
            self.kick(t);
        }
        true
    }

    fn start_service(&mut self, core: CoreId) {
        self.device.in_service += 1;
        let req = self.cores[core].in_flight.as_mut().expect("core holds a request");
        let tn = &mut self.tenants[req.tenant];
        let service = sample_service_time(&self.cfg.device, req.op, req.size, &mut tn.service_rng);
        req.service_ns = service;
        let done = self.now + service;
        self.cores[core].done_at = Some(done);
        self.scheduled.push((done, EventKind::IoComplete { core }));
    }

    fn be_round_robin(&mut self, core: CoreId) -> bool {
        let n = self.tenants.len();
        for k in 0..n {
            let t = (self.be_cursor + k) % n;
            if self.tenants[t].class == TenantClass::Be && !self.tenants[t].queue.is_empty() {
                self.be_cursor = (t + 1) % n;
                return self.dispatch_from(core, t);
            }
        }
        false
    }

    /// LC queue whose head has waited longest.
    fn oldest_lc_head(&self) -> Option<TenantId> {
        self.tenants
            .iter()
            .filter(|t| t.class == TenantClass::Lc)
            .filter_map(|t| t.queue.front().map(|r| (r.enqueued_at, r.seq, t.id)))
            .min()
            .map(|(_, _, t)| t)
    }

    /// Lets an idle core pick up work according to its owner and the allocator.
    fn core_step(&mut self, core: CoreId) {
        if !self.cores[core].is_idle() {
            return;
        }
        let owner = self.cores[core].owner;
        match (self.cfg.allocator.kind, owner) {
            (AllocatorKind::Priority, _) => {
                if let Some(t) = self.oldest_lc_head() {
                    self.dispatch_from(core, t);
                } else {
                    self.be_round_robin(core);
                }
            }
            (AllocatorKind::Qwin, Owner::Lc(t)) => {
                lc_core_iteration(self, core, t);
            }
            (AllocatorKind::Cake, Owner::Lc(t)) => {
                if !self.dispatch_from(core, t) {
                    self.be_round_robin(core);
                }
            }
            (_, Owner::Lc(t)) => {
                self.dispatch_from(core, t);
            }
            (_, Owner::Be) => {
                self.be_round_robin(core);
            }
        }
    }

    fn complete_io(&mut self, core: CoreId) {
        let now = self.now;
        let mut req = self.cores[core].in_flight.take().expect("completion on a busy core");
        self.cores[core].done_at = None;
        req.completed_at = Some(now);
        self.device.in_service -= 1;
        if let Some(next) = self.device.waiting.pop_front() {
            self.start_service(next);
        }
        if self.options.record_requests {
            self.completions.push((req.id, core, now));
        }
        for idx in std::mem::take(&mut self.cores[core].pending_marks) {
            let tr = &mut self.transfers[idx];
            tr.in_flight_done_at = Some(now);
            tr.effective_at = Some(now);
        }

        let t = req.tenant;
        let latency = now.since(req.arrive_at);
        let measured = now >= self.warmup_end;
        if let Some(dev) = self.device_estimators.as_mut() {
            dev.on_completion(req.service_ns);
        }
        let tn = &mut self.tenants[t];
        tn.estimators.on_completion(req.service_ns);
        tn.completed += 1;
        tn.interval_completed += 1;
        tn.interval_bytes += u64::from(req.size);
        if measured {
            tn.cumulative.record(latency);
            tn.measured_bytes += u64::from(req.size);
        }
        if tn.class == TenantClass::Lc {
            tn.interval.record(latency);
            tn.probe_hist.record(latency);
            tn.feedback_hist.record(latency);
            if self.cfg.allocator.kind == AllocatorKind::Qwin && tn.windows.on_complete(req.seq) {
                self.wake_idle_owned(t);
            }
        }
        // Zero think time: the replacement arrives at the completion instant.
        self.stepping = Some(core);
        if let Some(slot) = self.tenants[t].workload.on_completion(req.slot) {
            self.arrive(t, Some(slot));
        }
        self.stepping = None;
        self.core_step(core);
    }

    fn close_interval(&mut self) {
        let start = self.interval_start;
        let now = self.now;
        let secs = now.since(start) as f64 / 1e9;
        let be_mean = self.be_level.take_mean(start, now);
        for tn in &mut self.tenants {
            let tail = match (tn.class, tn.slo) {
                (TenantClass::Lc, Some(s)) => tn.interval.quantile_opt(s.quantile),
                _ => None,
            };
            let cores = match tn.class {
                TenantClass::Lc => tn.cores_level.take_mean(start, now),
                TenantClass::Be => be_mean,
            };
            self.intervals.push(IntervalStats {
                interval: self.interval_index,
                tenant: tn.label.clone(),
                tail_ns: tail,
                completed: tn.interval_completed,
                bytes: tn.interval_bytes,
                bandwidth_bytes_per_s: if secs > 0.0 { tn.interval_bytes as f64 / secs } else { 0.0 },
                mean_cores: cores,
            });
            tn.interval.clear();
            tn.interval_bytes = 0;
            tn.interval_completed = 0;
        }
        self.interval_index += 1;
        self.interval_start = now;
    }

    fn handle(&mut self, eng: &mut Engine<EventKind>, ev: Event<EventKind>) {
        self.now = eng.now();
        match ev.kind {
            EventKind::RequestArrival { tenant, slot } => {
                self.arrive(tenant, slot);
                if slot.is_none() {
                    if let Some(next) = self.tenants[tenant].workload.next_arrival(self.now) {
                        eng.schedule(next, EventKind::RequestArrival { tenant, slot: None });
                    }
                }
            }
            EventKind::IoComplete { core } => self.complete_io(core),
            EventKind::CoreWake { core } => {
                self.cores[core].wake_pending = false;
                self.core_step(core);
            }
            EventKind::MetricTick => {
                self.close_interval();
                eng.schedule(self.now + self.cfg.metrics_interval, EventKind::MetricTick);
            }
            EventKind::PolicyProbe => {
                match self.cfg.allocator.kind {
                    AllocatorKind::Shenango => {
                        congestion_incremental_tick(self);
                        eng.schedule(self.now + self.cfg.allocator.shenango.interval, EventKind::PolicyProbe);
                    }
                    AllocatorKind::Cake => {
                        interval_feedback_tick(self);
                        eng.schedule(self.now + self.cfg.allocator.cake.interval, EventKind::PolicyProbe);
                    }
                    _ => {}
                }
            }
        }
        self.flush(eng);
    }

    fn flush(&mut self, eng: &mut Engine<EventKind>) {
        for (at, kind) in self.scheduled.drain(..) {
            eng.schedule(at, kind);
        }
        for core in self.pending_wakes.drain(..) {
            eng.schedule(self.now, EventKind::CoreWake { core });
        }
    }

    /// Runs the configured experiment to completion.
    pub fn run(mut self) -> RunOutput {
        let mut eng = if self.options.trace_events { Engine::new().with_trace() } else { Engine::new() };
        for t in 0..self.tenants.len() {
            for slot in self.tenants[t].workload.initial_slots() {
                eng.schedule(SimTime::ZERO, EventKind::RequestArrival { tenant: t, slot: Some(slot) });
            }
            if let Some(first) = self.tenants[t].workload.next_arrival(SimTime::ZERO) {
                eng.schedule(first, EventKind::RequestArrival { tenant: t, slot: None });
            }
        }
        eng.schedule(SimTime::ZERO + self.cfg.metrics_interval, EventKind::MetricTick);
        match self.cfg.allocator.kind {
            AllocatorKind::Shenango => {
                eng.schedule(SimTime::ZERO + self.cfg.allocator.shenango.interval, EventKind::PolicyProbe);
            }
            AllocatorKind::Cake => {
                eng.schedule(SimTime::ZERO + self.cfg.allocator.cake.interval, EventKind::PolicyProbe);
            }
            _ => {}
        }
        let end = SimTime::from_duration(self.cfg.duration);
        let stats = eng
            .run_until(end, |eng, ev| {
                self.handle(eng, ev);
                Ok::<_, std::convert::Infallible>(())
            })
            .unwrap_or_else(|e| match e {});
        self.now = end;
        if self.interval_start < end {
            self.close_interval();
        }
        self.finish(stats, eng)
    }

    fn finish(mut self, stats: SimStats, eng: Engine<EventKind>) -> RunOutput {
        let measured_secs = (duration_ns(self.cfg.duration) - duration_ns(self.cfg.warmup)) as f64 / 1e9;
        let mut in_service = vec![0u64; self.tenants.len()];
        for c in &self.cores {
            if let Some(r) = &c.in_flight {
                in_service[r.tenant] += 1;
            }
        }
        let mut latency = Vec::new();
        let mut tenants = Vec::new();
        for tn in &self.tenants {
            let q = tn.report_quantile();
            let mut qs = vec![0.99, 0.999];
            if !qs.contains(&q) {
                qs.push(q);
            }
            for &qq in &qs {
                latency.push(LatencyRow {
                    tenant: tn.label.clone(),
                    class: tn.class.as_str(),
                    quantile: qq,
                    cumulative_tail_ns: tn.cumulative.quantile_opt(qq),
                });
            }
            tenants.push(TenantSummary {
                label: tn.label.clone(),
                class: tn.class,
                slo: tn.slo,
                tail_ns: tn.cumulative.quantile_opt(q),
                bandwidth: tn.measured_bytes as f64 / measured_secs,
                generated: tn.generated,
                completed: tn.completed,
                queued: tn.queue.len() as u64,
                in_service: in_service[tn.id],
                windows: tn.windows.wid,
                final_num: tn.num,
            });
        }
        let end = SimTime::from_duration(self.cfg.duration);
        let be_pool_mean = self.be_run_level.take_mean(SimTime::ZERO, end);
        let raw_latencies = self.tenants.iter().map(|t| t.cumulative.raw_samples().map(<[u64]>::to_vec)).collect();
        RunOutput {
            run_id: self.cfg.run_id(),
            latency,
            intervals: std::mem::take(&mut self.intervals),
            allocs: std::mem::take(&mut self.allocs),
            windows: std::mem::take(&mut self.windows_log),
            window_bounds: std::mem::take(&mut self.window_bounds),
            policy_changes: std::mem::take(&mut self.policy_changes),
            transfers: std::mem::take(&mut self.transfers),
            dequeues: std::mem::take(&mut self.dequeues),
            completions: std::mem::take(&mut self.completions),
            tenants,
            stats,
            probes: self.probes,
            be_pool_mean,
            raw_latencies,
            trace: eng.trace().map(|t| t.to_vec()),
        }
    }
}
