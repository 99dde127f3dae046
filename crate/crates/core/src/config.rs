//! Experiment configuration, validation and named scenarios.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{CakeParams, ShenangoParams, StaticParams};
use crate::device::{humantime_serde_compat, DeviceModel, EstimatorConfig};
use crate::qwin::QwinParams;
use crate::workload::{Burst, TenantClass, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorKind {
    Qwin,
    Static,
    Priority,
    Shenango,
    Cake,
}

impl AllocatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AllocatorKind::Qwin => "qwin",
            AllocatorKind::Static => "static",
            AllocatorKind::Priority => "priority",
            AllocatorKind::Shenango => "shenango",
            AllocatorKind::Cake => "cake",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "qwin" => AllocatorKind::Qwin,
            "static" => AllocatorKind::Static,
            "priority" => AllocatorKind::Priority,
            "shenango" => AllocatorKind::Shenango,
            "cake" => AllocatorKind::Cake,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllocatorConfig {
    pub kind: AllocatorKind,
    pub qwin: QwinParams,
    #[serde(rename = "static")]
    pub static_: StaticParams,
    pub shenango: ShenangoParams,
    pub cake: CakeParams,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        AllocatorConfig {
            kind: AllocatorKind::Qwin,
            qwin: QwinParams::default(),
            static_: StaticParams::default(),
            shenango: ShenangoParams::default(),
            cake: CakeParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SloSpec {
    pub quantile: f64,
    #[serde(with = "humantime_serde_compat")]
    pub latency: Duration,
}

impl SloSpec {
    pub fn p999(latency: Duration) -> Self {
        SloSpec { quantile: 0.999, latency }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TenantConfig {
    pub label: String,
    /// Taken from the preset when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<TenantClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Explicit workload; replaces the preset's when both are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload: Option<WorkloadSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slo: Option<SloSpec>,
}

impl TenantConfig {
    pub fn from_preset(label: &str, preset: &str, slo: Option<SloSpec>) -> Self {
        TenantConfig { label: label.into(), class: None, preset: Some(preset.into()), workload: None, slo }
    }
}

/// A tenant with its preset expanded.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedTenant {
    pub label: String,
    pub class: TenantClass,
    pub workload: WorkloadSpec,
    pub slo: Option<SloSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(with = "humantime_serde_compat")]
    pub duration: Duration,
    #[serde(with = "humantime_serde_compat")]
    pub warmup: Duration,
    #[serde(with = "humantime_serde_compat", default = "default_interval")]
    pub metrics_interval: Duration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub pool: PoolConfig,
    #[serde(default)]
    pub device: DeviceModel,
    #[serde(default)]
    pub estimators: EstimatorConfig,
    #[serde(default)]
    pub allocator: AllocatorConfig,
    pub tenants: Vec<TenantConfig>,
}

fn default_name() -> String {
    "custom".into()
}

fn default_interval() -> Duration {
    Duration::from_secs(1)
}

/// Every offending key with what is wrong with it.
#[derive(Debug, Clone, Error, PartialEq)]
#[error("invalid configuration: {}", format_problems(.problems))]
pub struct ConfigError {
    pub problems: Vec<(String, String)>,
}

fn format_problems(p: &[(String, String)]) -> String {
    p.iter().map(|(k, m)| format!("{k}: {m}")).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
        Self::from_toml_str(&text).map_err(|source| LoadError::Parse { path: path.into(), source })
    }

    pub fn run_id(&self) -> String {
        format!("{}-{}-s{}", self.name, self.allocator.kind.as_str(), self.seed)
    }

    pub fn resolve_tenants(&self) -> Result<Vec<ResolvedTenant>, ConfigError> {
        self.validate()?;
        Ok(self.tenants.iter().map(|t| resolve(t).expect("validated")).collect())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut p: Vec<(String, String)> = Vec::new();
        let mut bad = |k: &str, m: &str| p.push((k.to_string(), m.to_string()));
        if self.tenants.is_empty() {
            bad("tenants", "at least one tenant is required");
        }
        if self.pool.total == 0 {
            bad("pool.total", "must be >= 1");
        }
        if self.duration.is_zero() {
            bad("duration", "must be positive");
        }
        if self.duration <= self.warmup {
            bad("warmup", "must be shorter than duration");
        }
        if self.metrics_interval.is_zero() {
            bad("metrics_interval", "must be positive");
        }
        if let Err(e) = self.device.validate() {
            bad("device", &e);
        }
        if !(self.estimators.ewma_alpha > 0.0 && self.estimators.ewma_alpha <= 1.0) {
            bad("estimators.ewma_alpha", "must be in (0, 1]");
        }
        if self.estimators.hist_window == 0 {
            bad("estimators.hist_window", "must be >= 1");
        }
        if let Err(e) = self.allocator.qwin.validate() {
            bad("allocator.qwin", &e);
        }
        let mut labels = std::collections::BTreeSet::new();
        let mut lc_labels = Vec::new();
        for (i, t) in self.tenants.iter().enumerate() {
            let key = format!("tenants[{i}]");
            if t.label.is_empty() || !t.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                bad(&format!("{key}.label"), "must be non-empty [A-Za-z0-9_-]");
            }
            if !labels.insert(t.label.clone()) {
                bad(&format!("{key}.label"), "duplicate label");
            }
            match resolve(t) {
                Err(m) => bad(&key, &m),
                Ok(r) => {
                    if let Err(e) = r.workload.validate() {
                        bad(&format!("{key}.workload"), &e);
                    }
                    match (r.class, r.slo) {
                        (TenantClass::Lc, None) => bad(&format!("{key}.slo"), "LC tenants need an SLO"),
                        (TenantClass::Be, Some(_)) => bad(&format!("{key}.slo"), "BE tenants take no SLO"),
                        (TenantClass::Lc, Some(s)) => {
                            if !(s.quantile > 0.0 && s.quantile <= 1.0) {
                                bad(&format!("{key}.slo.quantile"), "must be in (0, 1]");
                            }
                            if s.latency.is_zero() {
                                bad(&format!("{key}.slo.latency"), "must be positive");
                            }
                            lc_labels.push(t.label.clone());
                        }
                        (TenantClass::Be, None) => {}
                    }
                }
            }
        }
        let needs_floor = matches!(
            self.allocator.kind,
            AllocatorKind::Qwin | AllocatorKind::Shenango | AllocatorKind::Cake
        );
        if needs_floor && lc_labels.len() > self.pool.total {
            bad("pool.total", "fewer cores than LC tenants");
        }
        if self.allocator.kind == AllocatorKind::Static {
            let s = &self.allocator.static_;
            let lc_sum: usize = s.lc_cores.values().sum();
            for l in &lc_labels {
                match s.lc_cores.get(l) {
                    None => bad("allocator.static.lc_cores", &format!("missing count for LC tenant {l}")),
                    Some(0) => bad("allocator.static.lc_cores", &format!("LC tenant {l} needs at least one core")),
                    Some(_) => {}
                }
            }
            for k in s.lc_cores.keys() {
                if !lc_labels.contains(k) {
                    bad("allocator.static.lc_cores", &format!("{k} is not an LC tenant"));
                }
            }
            if lc_sum + s.be_cores != self.pool.total {
                bad("allocator.static", "core counts must sum to pool.total");
            }
        }
        if self.allocator.kind == AllocatorKind::Shenango && self.allocator.shenango.interval.is_zero() {
            bad("allocator.shenango.interval", "must be positive");
        }
        if self.allocator.kind == AllocatorKind::Cake {
            let c = &self.allocator.cake;
            if c.interval.is_zero() || c.step == 0 || !(c.headroom > 0.0 && c.headroom <= 1.0) {
                bad("allocator.cake", "needs interval > 0, step >= 1 and headroom in (0, 1]");
            }
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { problems: p })
        }
    }
}

fn resolve(t: &TenantConfig) -> Result<ResolvedTenant, String> {
    let preset = match &t.preset {
        Some(name) => Some(WorkloadSpec::preset(name).ok_or_else(|| format!("unknown preset {name:?}"))?),
        None => None,
    };
    let workload = match (&t.workload, &preset) {
        (Some(w), _) => w.clone(),
        (None, Some((w, _))) => w.clone(),
        (None, None) => return Err("needs a preset or an explicit workload".into()),
    };
    let class = match (t.class, &preset) {
        (Some(c), _) => c,
        (None, Some((_, c))) => *c,
        (None, None) => return Err("needs a class when no preset is given".into()),
    };
    Ok(ResolvedTenant { label: t.label.clone(), class, workload, slo: t.slo })
}

fn ms(v: f64) -> Duration {
    Duration::from_nanos((v * 1e6).round() as u64)
}

fn base(name: &str, total: usize, tenants: Vec<TenantConfig>) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        seed: 1,
        duration: Duration::from_secs(60),
        warmup: Duration::from_secs(6),
        metrics_interval: Duration::from_secs(1),
        out_dir: None,
        pool: PoolConfig { total },
        device: DeviceModel { capacity: total.max(8), ..DeviceModel::default() },
        estimators: EstimatorConfig::default(),
        allocator: AllocatorConfig::default(),
        tenants,
    }
}

fn with_static(mut cfg: ExperimentConfig, lc: &[(&str, usize)], be: usize) -> ExperimentConfig {
    cfg.allocator.static_ = StaticParams {
        lc_cores: lc.iter().map(|(l, n)| (l.to_string(), *n)).collect::<BTreeMap<_, _>>(),
        be_cores: be,
    };
    cfg
}

fn three_lc_three_be(name: &str, lc: [&str; 3], slos: [f64; 3], q: f64) -> ExperimentConfig {
    let mut tenants: Vec<TenantConfig> = lc
        .iter()
        .zip(slos)
        .enumerate()
        .map(|(i, (p, s))| {
            TenantConfig::from_preset(&format!("T{}", i + 1), p, Some(SloSpec { quantile: q, latency: ms(s) }))
        })
        .collect();
    for (i, p) in ["F", "G", "H"].iter().enumerate() {
        tenants.push(TenantConfig::from_preset(&format!("T{}", i + 4), p, None));
    }
    with_static(base(name, 24, tenants), &[("T1", 6), ("T2", 6), ("T3", 6)], 6)
}

/// Single LC tenant (preset C, p99.9 SLO) next to one BE tenant (preset H) on 8 cores.
pub fn single_lc_scenario(slo_ms: f64) -> ExperimentConfig {
    let tenants = vec![
        TenantConfig::from_preset("T1", "C", Some(SloSpec::p999(ms(slo_ms)))),
        TenantConfig::from_preset("T2", "H", None),
    ];
    with_static(base("single", 8, tenants), &[("T1", 6)], 2)
}

/// Open-loop LC tenant with a periodic 4x burst next to a closed-loop BE tenant.
pub fn burst_scenario(base_rate: f64) -> ExperimentConfig {
    let lc = WorkloadSpec {
        burst: Some(Burst {
            on_duration: Duration::from_secs(3),
            off_duration: Duration::from_secs(7),
            burst_rate: 4.0 * base_rate,
        }),
        ..WorkloadSpec::open_loop(4096, base_rate, 0.9)
    };
    let tenants = vec![
        TenantConfig {
            label: "T1".into(),
            class: Some(TenantClass::Lc),
            preset: None,
            workload: Some(lc),
            slo: Some(SloSpec::p999(ms(4.0))),
        },
        TenantConfig::from_preset("T2", "H", None),
    ];
    let mut cfg = with_static(base("burst", 8, tenants), &[("T1", 4)], 4);
    cfg.allocator.cake.interval = Duration::from_secs(1);
    cfg
}

pub const SCENARIOS: [&str; 10] = [
    "group1", "group1-diverse", "group1-p99", "webserver", "oltp", "read-only", "read-heavy", "policies", "single",
    "burst",
];

/// Named scenarios shaped after the published experiments.
pub fn scenario(name: &str) -> Option<ExperimentConfig> {
    Some(match name {
        "group1" => three_lc_three_be("group1", ["B", "C", "D"], [4.0; 3], 0.999),
        "group1-diverse" => three_lc_three_be("group1-diverse", ["B", "C", "D"], [2.5, 4.0, 5.5], 0.999),
        "group1-p99" => three_lc_three_be("group1-p99", ["B", "C", "D"], [3.0; 3], 0.99),
        "webserver" => three_lc_three_be("webserver", ["K", "K", "K"], [5.5; 3], 0.999),
        "oltp" => three_lc_three_be("oltp", ["J", "J", "J"], [5.0; 3], 0.999),
        "read-only" => {
            let mut c = three_lc_three_be("read-only", ["A", "A", "A"], [4.5; 3], 0.999);
            for t in c.tenants.iter_mut().skip(3) {
                t.preset = Some("E".into());
            }
            c
        }
        "read-heavy" => three_lc_three_be("read-heavy", ["B", "C", "D"], [4.5; 3], 0.999),
        "policies" => {
            let tenants = vec![
                TenantConfig::from_preset("T1", "C", Some(SloSpec::p999(ms(3.0)))),
                TenantConfig::from_preset("T2", "P", Some(SloSpec::p999(ms(5.0)))),
                TenantConfig::from_preset("T3", "H", None),
            ];
            with_static(base("policies", 16, tenants), &[("T1", 6), ("T2", 6)], 4)
        }
        "single" => single_lc_scenario(4.0),
        "burst" => burst_scenario(8_000.0),
        _ => return None,
    })
}
