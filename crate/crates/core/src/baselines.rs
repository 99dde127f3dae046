//! Comparison allocators: static partition, strict priority over a shared
//! pool, congestion-driven increments and interval tail feedback.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::device::humantime_serde_compat;
use crate::metrics::AllocTrigger;
use crate::sim::duration_ns;
use crate::workload::TenantClass;

/// Fixed per-LC-tenant core counts plus the BE share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct StaticParams {
    pub lc_cores: BTreeMap<String, usize>,
    pub be_cores: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShenangoParams {
    #[serde(with = "humantime_serde_compat")]
    pub interval: Duration,
}

impl Default for ShenangoParams {
    fn default() -> Self {
        ShenangoParams { interval: Duration::from_micros(100) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CakeParams {
    #[serde(with = "humantime_serde_compat")]
    pub interval: Duration,
    pub step: usize,
    /// Shrink when the interval tail is below `slo * headroom`.
    pub headroom: f64,
    /// Completions needed in an interval before acting on its tail.
    pub min_samples: u64,
}

impl Default for CakeParams {
    fn default() -> Self {
        CakeParams { interval: Duration::from_secs(1), step: 1, headroom: 0.7, min_samples: 100 }
    }
}

/// Core counts for each tenant under a static partition, in tenant order
/// (zero for BE tenants), and the BE pool size.
pub fn static_allocate(params: &StaticParams, labels: &[(String, TenantClass)], total: usize) -> Result<(Vec<usize>, usize), String> {
    let mut counts = Vec::with_capacity(labels.len());
    for (label, class) in labels {
        counts.push(match class {
            TenantClass::Lc => *params
                .lc_cores
                .get(label)
                .ok_or_else(|| format!("no static core count for LC tenant {label}"))?,
            TenantClass::Be => 0,
        });
    }
    let lc: usize = counts.iter().sum();
    if lc + params.be_cores != total {
        return Err(format!("static counts sum to {} but the pool has {total} cores", lc + params.be_cores));
    }
    Ok((counts, params.be_cores))
}

/// Adds a core when the same request heads the queue on two consecutive
/// ticks; reclaims all but one core as soon as the queue is empty.
pub(crate) fn congestion_incremental_tick(b: &mut Backend) {
    for t in b.lc_tenants() {
        let head = b.tenants[t].queue.front().map(|r| r.seq);
        let num = b.tenants[t].num;
        match head {
            None => {
                if num > 1 {
                    b.release_cores(t, num - 1, None);
                    b.log_alloc(t, num, AllocTrigger::Tick);
                }
            }
            Some(seq) => {
                if b.tenants[t].last_head == Some(seq) && b.be_pool_size() > 0 {
                    b.grant_cores(t, 1);
                    b.log_alloc(t, num, AllocTrigger::Tick);
                }
            }
        }
        b.tenants[t].last_head = head;
    }
}

/// Moves `step` cores towards or away from the tenant depending on the tail
/// measured over the previous interval.
pub(crate) fn interval_feedback_tick(b: &mut Backend) {
    let params = b.cfg.allocator.cake.clone();
    for t in b.lc_tenants() {
        let tn = &mut b.tenants[t];
        let slo = tn.slo.expect("LC tenant has an SLO");
        if tn.feedback_hist.count() < params.min_samples {
            tn.feedback_hist.clear();
            continue;
        }
        let tail = tn.feedback_hist.quantile(slo.quantile).expect("non-empty");
        tn.feedback_hist.clear();
        let slo_ns = duration_ns(slo.latency);
        let num = tn.num;
        if tail > slo_ns {
            let n = params.step.min(b.be_pool_size());
            if n > 0 {
                b.grant_cores(t, n);
                b.log_alloc(t, num, AllocTrigger::Tick);
            }
        } else if (tail as f64) < slo_ns as f64 * params.headroom && num > 1 {
            let n = params.step.min(num - 1);
            b.release_cores(t, n, None);
            b.log_alloc(t, num, AllocTrigger::Tick);
        }
    }
}
