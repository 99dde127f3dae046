//! Per-core autonomous allocation for LC tenants: window establishment,
//! policy refresh, budget-driven mid-window probes and core yielding, plus
//! the `adjust_cores` grow/shrink step.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::{Backend, CoreId};
use crate::device::humantime_serde_compat;
use crate::metrics::{AllocTrigger, WindowRecord};
use crate::sim::{duration_ns, SimTime};
use crate::window::{calculate_cores, compute_budget, Window, WindowEnd, WindowLoad};
use crate::workload::TenantId;

/// How often cores are re-evaluated inside a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorePolicy {
    /// Only at window start (budget 0).
    Conservative,
    /// After every dequeue (budget 1).
    Aggressive,
    /// After every `budget` dequeues, budget derived from the window's slack.
    SloAware,
}

impl CorePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            CorePolicy::Conservative => "conservative",
            CorePolicy::Aggressive => "aggressive",
            CorePolicy::SloAware => "slo_aware",
        }
    }
}

/// `Adaptive` switches policies from measured slack; the others pin one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    #[default]
    Adaptive,
    Conservative,
    Aggressive,
    SloAware,
}

impl PolicyMode {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "adaptive" => PolicyMode::Adaptive,
            "conservative" => PolicyMode::Conservative,
            "aggressive" => PolicyMode::Aggressive,
            "slo_aware" => PolicyMode::SloAware,
            _ => return None,
        })
    }

    pub fn initial_policy(self) -> CorePolicy {
        match self {
            PolicyMode::Adaptive | PolicyMode::Aggressive => CorePolicy::Aggressive,
            PolicyMode::Conservative => CorePolicy::Conservative,
            PolicyMode::SloAware => CorePolicy::SloAware,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QwinParams {
    /// Windows between policy refreshes.
    pub thresh_win: u64,
    #[serde(with = "humantime_serde_compat")]
    pub thresh_low: Duration,
    #[serde(with = "humantime_serde_compat")]
    pub thresh_high: Duration,
    /// Completions needed before a measured tail is trusted.
    pub min_tail_samples: u64,
    pub policy: PolicyMode,
    pub window_end: WindowEnd,
}

impl Default for QwinParams {
    fn default() -> Self {
        QwinParams {
            thresh_win: 2000,
            thresh_low: Duration::from_micros(300),
            thresh_high: Duration::from_micros(1000),
            min_tail_samples: 1000,
            policy: PolicyMode::Adaptive,
            window_end: WindowEnd::Dequeue,
        }
    }
}

impl QwinParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.thresh_win == 0 {
            return Err("thresh_win must be >= 1".into());
        }
        if self.thresh_low >= self.thresh_high {
            return Err("thresh_low must be below thresh_high".into());
        }
        Ok(())
    }
}

/// Policy for a given slack (`slo - measured tail`, may be negative).
pub fn select_policy(slack_ns: i128, params: &QwinParams) -> CorePolicy {
    if slack_ns > duration_ns(params.thresh_high) as i128 {
        CorePolicy::Conservative
    } else if slack_ns < duration_ns(params.thresh_low) as i128 {
        CorePolicy::Aggressive
    } else {
        CorePolicy::SloAware
    }
}

/// What `adjust_cores` does for a tenant owning `num` cores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adjustment {
    None,
    Release(usize),
    Grant { n: usize, shortfall: usize },
}

pub fn plan_adjustment(num: usize, target: usize, available: usize) -> Adjustment {
    use std::cmp::Ordering::*;
    match num.cmp(&target) {
        Greater => Adjustment::Release(num - target),
        Equal => Adjustment::None,
        Less => {
            let delta = target - num;
            let n = delta.min(available);
            Adjustment::Grant { n, shortfall: delta - n }
        }
    }
}

/// A change of policy at a probe.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyChange {
    pub time: SimTime,
    pub tenant: String,
    pub old: CorePolicy,
    pub new: CorePolicy,
    pub slack_ns: i128,
}

pub const POLICY_HEADER: &str = "time_ns,tenant,old,new,slack_ns";

fn window_load(b: &Backend, t: TenantId, w: &Window) -> WindowLoad<f64> {
    let tn = &b.tenants[t];
    let slo = tn.slo.expect("LC tenant has an SLO");
    let est = b.estimators_for(t);
    WindowLoad {
        ql: w.ql,
        tw: w.tw_ns as f64,
        slo: duration_ns(slo.latency) as f64,
        tail_io: est.tail_io_ns() as f64,
        t_io_avg: est.t_io_avg_ns(),
    }
}

/// Grows or shrinks tenant `t` towards `target` cores. Never takes cores from
/// another LC tenant; `keep` is never released.
pub(crate) fn adjust_cores(b: &mut Backend, t: TenantId, target: usize, trigger: AllocTrigger, keep: Option<CoreId>) {
    let target = target.max(1);
    let num = b.tenants[t].num;
    match plan_adjustment(num, target, b.be_pool_size()) {
        Adjustment::None => {}
        Adjustment::Release(k) => {
            let released = b.release_cores(t, k, keep);
            debug_assert_eq!(released, k);
            b.log_alloc(t, num, trigger);
        }
        Adjustment::Grant { n, shortfall } => {
            if n == 0 {
                return;
            }
            let granted = b.grant_cores(t, n);
            debug_assert_eq!(granted, n);
            let trig = if shortfall > 0 { AllocTrigger::Shortfall } else { trigger };
            b.log_alloc(t, num, trig);
        }
    }
}

/// Re-selects the tenant's policy from the tail measured since the last refresh.
pub(crate) fn update_core_policy(b: &mut Backend, t: TenantId) {
    let params = b.cfg.allocator.qwin.clone();
    let now = b.now;
    let tn = &mut b.tenants[t];
    let slo = tn.slo.expect("LC tenant has an SLO");
    if tn.probe_hist.count() < params.min_tail_samples {
        return;
    }
    let tail = tn.probe_hist.quantile(slo.quantile).expect("non-empty");
    tn.probe_hist.clear();
    let slack = duration_ns(slo.latency) as i128 - tail as i128;
    let new = select_policy(slack, &params);
    if new != tn.policy {
        b.policy_changes.push(PolicyChange { time: now, tenant: tn.label.clone(), old: tn.policy, new, slack_ns: slack });
        tn.policy = new;
    }
}

/// One pass of the per-core loop for a core owned by LC tenant `t`.
/// Returns whether a request was dequeued.
pub(crate) fn lc_core_iteration(b: &mut Backend, core: CoreId, t: TenantId) -> bool {
    let now = b.now;
    let total = b.cfg.pool.total;

    // Window start: establish, maybe refresh policy, size the tenant.
    if !b.tenants[t].windows.is_active() && !b.tenants[t].queue.is_empty() {
        let tn = &mut b.tenants[t];
        let queue_len = tn.queue.len() as u64;
        let w = tn.windows.new_window(&tn.queue, now).clone();
        if b.cfg.allocator.qwin.policy == PolicyMode::Adaptive && w.wid.is_multiple_of(b.cfg.allocator.qwin.thresh_win) {
            update_core_policy(b, t);
        }
        let load = window_load(b, t, &w);
        let tn = &mut b.tenants[t];
        tn.budget = match tn.policy {
            CorePolicy::Conservative => 0,
            CorePolicy::Aggressive => 1,
            CorePolicy::SloAware => compute_budget(&load),
        };
        let demand = calculate_cores(&load, total);
        adjust_cores(b, t, demand, AllocTrigger::WindowStart, Some(core));
        let tn = &b.tenants[t];
        b.windows_log.push(WindowRecord {
            tenant: tn.label.clone(),
            wid: w.wid,
            ql: w.ql,
            tw_ns: w.tw_ns,
            granted_cores: tn.num,
            policy: tn.policy.as_str(),
        });
        b.window_bounds.push((t, w.wid, w.start_seq, queue_len));
    }

    // Handle the next request in FIFO order.
    let dequeued = b.tenants[t]
        .queue
        .front()
        .is_some_and(|r| b.tenants[t].windows.may_dequeue(r.seq))
        && b.dispatch_from(core, t);

    // Mid-window probe over a temporary window.
    if dequeued {
        let tn = &b.tenants[t];
        let budget = tn.budget;
        if tn.windows.is_active() && budget != 0 && tn.windows.wcnt.is_multiple_of(budget) {
            if let Some(tmp) = tn.windows.temp_window(&tn.queue, now) {
                b.probes += 1;
                let demand = calculate_cores(&window_load(b, t, &tmp), total);
                if demand > b.tenants[t].num {
                    adjust_cores(b, t, demand, AllocTrigger::Probe, Some(core));
                }
            }
        }
    }

    // Nothing left to do: give this core back unless it is the last one.
    let tn = &b.tenants[t];
    if !tn.windows.is_active() && tn.queue.is_empty() && tn.num > 1 {
        let num = tn.num;
        b.yield_core(core, t);
        b.log_alloc(t, num, AllocTrigger::Yield);
    }
    dequeued
}

#[cfg(test)]
mod tests {
    use super::*;

    fn us(v: u64) -> i128 {
        v as i128 * 1000
    }

    #[test]
    fn policy_regions_with_default_thresholds() {
        let p = QwinParams::default();
        let slo = us(3000);
        assert_eq!(select_policy(slo - us(1500), &p), CorePolicy::Conservative);
        assert_eq!(select_policy(slo - us(2800), &p), CorePolicy::Aggressive);
        assert_eq!(select_policy(slo - us(2500), &p), CorePolicy::SloAware);
        assert_eq!(select_policy(-us(100), &p), CorePolicy::Aggressive);
        assert_eq!(select_policy(us(300), &p), CorePolicy::SloAware);
        assert_eq!(select_policy(us(1000), &p), CorePolicy::SloAware);
    }

    #[test]
    fn adjustment_arithmetic() {
        assert_eq!(plan_adjustment(6, 4, 0), Adjustment::Release(2));
        assert_eq!(plan_adjustment(2, 7, 3), Adjustment::Grant { n: 3, shortfall: 2 });
        assert_eq!(plan_adjustment(2, 5, 4), Adjustment::Grant { n: 3, shortfall: 0 });
        assert_eq!(plan_adjustment(3, 3, 5), Adjustment::None);
    }

    #[test]
    fn params_validation() {
        assert!(QwinParams::default().validate().is_ok());
        let bad = QwinParams { thresh_low: Duration::from_millis(2), ..QwinParams::default() };
        assert!(bad.validate().is_err());
        assert!(QwinParams { thresh_win: 0, ..QwinParams::default() }.validate().is_err());
    }
}
