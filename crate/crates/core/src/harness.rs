//! Experiment orchestration: run one configuration, write its CSVs and
//! report, and sweep a configuration over seeds.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::backend::{Backend, RunOptions, RunOutput};
use crate::config::{ConfigError, ExperimentConfig};
use crate::metrics::{write_alloc_csv, write_intervals_csv, write_latency_csv, write_windows_csv};
use crate::qwin::POLICY_HEADER;
use crate::sim::duration_ns;
use crate::workload::TenantClass;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}: {source}")]
    Seed { seed: u64, source: ConfigError },
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("a sweep needs at least one seed")]
    NoSeeds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SloVerdict {
    pub tenant: String,
    pub quantile: f64,
    pub slo_ns: u64,
    /// Cumulative post-warmup tail; `None` if nothing completed.
    pub tail_ns: Option<u64>,
    pub met: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeBandwidth {
    pub tenant: String,
    pub bytes_per_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitReport {
    pub run_id: String,
    pub seed: u64,
    pub slo: Vec<SloVerdict>,
    pub bandwidth: Vec<BeBandwidth>,
    pub be_pool_mean: f64,
    pub events_processed: u64,
    #[serde(skip)]
    pub output: RunOutput,
}

impl ExitReport {
    fn from_output(cfg: &ExperimentConfig, output: RunOutput) -> Self {
        let mut slo = Vec::new();
        let mut bandwidth = Vec::new();
        for t in &output.tenants {
            match (t.class, t.slo) {
                (TenantClass::Lc, Some(s)) => {
                    let slo_ns = duration_ns(s.latency);
                    slo.push(SloVerdict {
                        tenant: t.label.clone(),
                        quantile: s.quantile,
                        slo_ns,
                        tail_ns: t.tail_ns,
                        met: t.tail_ns.is_some_and(|v| v <= slo_ns),
                    });
                }
                _ => bandwidth.push(BeBandwidth { tenant: t.label.clone(), bytes_per_s: t.bandwidth }),
            }
        }
        ExitReport {
            run_id: output.run_id.clone(),
            seed: cfg.seed,
            slo,
            bandwidth,
            be_pool_mean: output.be_pool_mean,
            events_processed: output.stats.processed,
            output,
        }
    }

    pub fn slo_met(&self, tenant: &str) -> Option<bool> {
        self.slo.iter().find(|v| v.tenant == tenant).map(|v| v.met)
    }

    pub fn tail_ns(&self, tenant: &str) -> Option<u64> {
        self.slo.iter().find(|v| v.tenant == tenant).and_then(|v| v.tail_ns)
    }

    pub fn be_bandwidth(&self, tenant: &str) -> Option<f64> {
        self.bandwidth.iter().find(|b| b.tenant == tenant).map(|b| b.bytes_per_s)
    }

    /// Sum over all BE tenants.
    pub fn total_be_bandwidth(&self) -> f64 {
        self.bandwidth.iter().map(|b| b.bytes_per_s).sum()
    }
}

/// Runs `cfg` and, if `cfg.out_dir` is set, writes its CSVs and `report.json`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExitReport, HarnessError> {
    run_with_options(cfg, RunOptions::default())
}

pub fn run_with_options(cfg: &ExperimentConfig, options: RunOptions) -> Result<ExitReport, HarnessError> {
    let output = Backend::new(cfg.clone(), options)?.run();
    let report = ExitReport::from_output(cfg, output);
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &report)?;
    }
    Ok(report)
}

fn create(path: &Path) -> Result<BufWriter<File>, HarnessError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| HarnessError::Io { path: path.into(), source })
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.into(), source }
}

/// Writes `latency.csv`, `intervals.csv`, `alloc_trace.csv`, `windows.csv`,
/// `policy_trace.csv` and `report.json` into `dir`.
pub fn write_outputs(dir: &Path, report: &ExitReport) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(io_at(dir))?;
    let out = &report.output;
    let path = dir.join("latency.csv");
    write_latency_csv(&mut create(&path)?, &out.run_id, &out.latency).map_err(io_at(&path))?;
    let path = dir.join("intervals.csv");
    write_intervals_csv(&mut create(&path)?, &out.run_id, &out.intervals).map_err(io_at(&path))?;
    let path = dir.join("alloc_trace.csv");
    write_alloc_csv(&mut create(&path)?, &out.allocs).map_err(io_at(&path))?;
    let path = dir.join("windows.csv");
    write_windows_csv(&mut create(&path)?, &out.windows).map_err(io_at(&path))?;
    let path = dir.join("policy_trace.csv");
    write_policy_csv(&mut create(&path)?, out).map_err(io_at(&path))?;
    let path = dir.join("report.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, report)
        .map_err(io::Error::from)
        .and_then(|_| w.flush())
        .map_err(io_at(&path))?;
    Ok(())
}

fn write_policy_csv<W: Write>(w: &mut W, out: &RunOutput) -> io::Result<()> {
    writeln!(w, "{POLICY_HEADER}")?;
    for c in &out.policy_changes {
        writeln!(w, "{},{},{},{},{}", c.time.0, c.tenant, c.old.as_str(), c.new.as_str(), c.slack_ns)?;
    }
    w.flush()
}

/// Mean, min and max of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        Some(Aggregate {
            mean: values.iter().sum::<f64>() / n as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            n,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TenantSweep {
    pub tenant: String,
    pub class: &'static str,
    /// Per seed: tail (LC) or bandwidth (BE).
    pub per_seed: Vec<(u64, Option<f64>)>,
    pub aggregate: Option<Aggregate>,
    /// LC only: seeds on which the SLO was met.
    pub slo_met: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub name: String,
    pub allocator: &'static str,
    pub seeds: Vec<u64>,
    pub tenants: Vec<TenantSweep>,
    #[serde(skip)]
    pub reports: Vec<ExitReport>,
}

impl SweepSummary {
    pub fn tenant(&self, label: &str) -> Option<&TenantSweep> {
        self.tenants.iter().find(|t| t.tenant == label)
    }

    /// Seed-mean of the summed BE bandwidth.
    pub fn mean_total_be_bandwidth(&self) -> f64 {
        self.reports.iter().map(ExitReport::total_be_bandwidth).sum::<f64>() / self.reports.len() as f64
    }

    /// One line per tenant and seed, then one aggregate line per tenant.
    pub fn table(&self) -> String {
        let mut s = String::from("tenant,class,seed,value\n");
        for t in &self.tenants {
            for (seed, v) in &t.per_seed {
                s += &format!("{},{},{},{}\n", t.tenant, t.class, seed, v.map(|v| v.to_string()).unwrap_or_default());
            }
            if let Some(a) = t.aggregate {
                s += &format!("{},{},mean,{}\n{},{},min,{}\n{},{},max,{}\n", t.tenant, t.class, a.mean, t.tenant, t.class, a.min, t.tenant, t.class, a.max);
            }
        }
        s
    }
}

/// Runs `cfg` once per seed, each in its own simulation instance. Every
/// seed's configuration is validated before anything runs. Per-seed outputs
/// go to `out_dir/seed-N` when an output directory is set.
pub fn sweep(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<SweepSummary, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::NoSeeds);
    }
    let cfgs: Vec<ExperimentConfig> = seeds
        .iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            c.out_dir = cfg.out_dir.as_ref().map(|d| d.join(format!("seed-{seed}")));
            c.validate().map(|_| c).map_err(|source| HarnessError::Seed { seed, source })
        })
        .collect::<Result<_, _>>()?;

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cfgs.len());
    let mut results: Vec<Option<Result<ExitReport, HarnessError>>> = (0..cfgs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = cfgs.iter().zip(results.iter_mut()).collect();
        let mut per_worker: Vec<Vec<_>> = (0..workers).map(|_| Vec::new()).collect();
        for (i, job) in chunks.into_iter().enumerate() {
            per_worker[i % workers].push(job);
        }
        for jobs in per_worker {
            scope.spawn(move || {
                for (c, slot) in jobs {
                    *slot = Some(run_experiment(c));
                }
            });
        }
    });
    let reports = results.into_iter().map(|r| r.expect("every seed ran")).collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(cfg, seeds, reports))
}

fn summarize(cfg: &ExperimentConfig, seeds: &[u64], reports: Vec<ExitReport>) -> SweepSummary {
    let mut tenants = Vec::new();
    for t in &reports[0].output.tenants {
        let lc = t.class == TenantClass::Lc;
        let per_seed: Vec<(u64, Option<f64>)> = reports
            .iter()
            .map(|r| {
                let v = if lc { r.tail_ns(&t.label).map(|v| v as f64) } else { r.be_bandwidth(&t.label) };
                (r.seed, v)
            })
            .collect();
        let values: Vec<f64> = per_seed.iter().filter_map(|(_, v)| *v).collect();
        tenants.push(TenantSweep {
            tenant: t.label.clone(),
            class: t.class.as_str(),
            aggregate: Aggregate::of(&values),
            slo_met: lc.then(|| reports.iter().filter(|r| r.slo_met(&t.label) == Some(true)).count()),
            per_seed,
        });
    }
    SweepSummary {
        name: cfg.name.clone(),
        allocator: cfg.allocator.kind.as_str(),
        seeds: seeds.to_vec(),
        tenants,
        reports,
    }
}

/// Same-seed comparison of two sweeps: per tenant, the seed-mean of `b - a`.
#[derive(Debug, Clone, Serialize)]
pub struct PairedRow {
    pub tenant: String,
    pub class: &'static str,
    pub a: Option<Aggregate>,
    pub b: Option<Aggregate>,
    pub mean_delta: Option<f64>,
}

pub fn paired(a: &SweepSummary, b: &SweepSummary) -> Vec<PairedRow> {
    a.tenants
        .iter()
        .filter_map(|ta| {
            let tb = b.tenant(&ta.tenant)?;
            let deltas: Vec<f64> = ta
                .per_seed
                .iter()
                .filter_map(|(seed, va)| {
                    let vb = tb.per_seed.iter().find(|(s, _)| s == seed)?.1?;
                    Some(vb - (*va)?)
                })
                .collect();
            Some(PairedRow {
                tenant: ta.tenant.clone(),
                class: ta.class,
                a: ta.aggregate,
                b: tb.aggregate,
                mean_delta: Aggregate::of(&deltas).map(|d| d.mean),
            })
        })
        .collect()
}

pub fn paired_table(a: &SweepSummary, b: &SweepSummary) -> String {
    let mut s = format!("tenant,class,{}_mean,{}_mean,mean_delta\n", a.allocator, b.allocator);
    let f = |v: Option<f64>| v.map(|v| format!("{v:.1}")).unwrap_or_default();
    for r in paired(a, b) {
        s += &format!("{},{},{},{},{}\n", r.tenant, r.class, f(r.a.map(|x| x.mean)), f(r.b.map(|x| x.mean)), f(r.mean_delta));
    }
    s
}
