use std::ops::Range;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;

use qwinsim::config::{scenario, AllocatorKind, ExperimentConfig, SCENARIOS};
use qwinsim::harness::{run_experiment, sweep};
use qwinsim::qwin::PolicyMode;

/// Simulate LC/BE tenants sharing a storage backend's cores.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// TOML experiment file.
    #[arg(long, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Named built-in scenario.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Seed range `N..M` (end exclusive) to sweep.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Range<u64>>,
    /// qwin, static, priority, shenango or cake.
    #[arg(long, value_parser = parse_allocator)]
    allocator: Option<AllocatorKind>,
    /// Fix the core policy instead of adapting it.
    #[arg(long, value_parser = parse_policy)]
    policy: Option<PolicyMode>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Seconds excluded from cumulative statistics.
    #[arg(long)]
    warmup: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check the configuration and exit.
    #[arg(long)]
    validate_only: bool,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
    /// List built-in scenarios and exit.
    #[arg(long)]
    list_scenarios: bool,
}

fn parse_seeds(s: &str) -> Result<Range<u64>, String> {
    let (a, b) = s.split_once("..").ok_or("expected N..M")?;
    let a: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if b <= a {
        return Err("empty seed range".into());
    }
    Ok(a..b)
}

fn parse_allocator(s: &str) -> Result<AllocatorKind, String> {
    AllocatorKind::parse(s).ok_or_else(|| format!("unknown allocator {s}"))
}

fn parse_policy(s: &str) -> Result<PolicyMode, String> {
    PolicyMode::parse(s).ok_or_else(|| format!("unknown policy {s}"))
}

fn secs(v: f64) -> Result<Duration, String> {
    Duration::try_from_secs_f64(v).map_err(|e| e.to_string())
}

fn build(args: &Args) -> Result<ExperimentConfig, String> {
    let mut cfg = match (&args.config, &args.scenario) {
        (Some(path), _) => ExperimentConfig::load(path).map_err(|e| e.to_string())?,
        (None, Some(name)) => scenario(name).ok_or_else(|| format!("unknown scenario {name}; try --list-scenarios"))?,
        (None, None) => return Err("one of --config or --scenario is required".into()),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = args.allocator {
        cfg.allocator.kind = kind;
    }
    if let Some(p) = args.policy {
        cfg.allocator.qwin.policy = p;
    }
    if let Some(d) = args.duration {
        cfg.duration = secs(d)?;
    }
    if let Some(w) = args.warmup {
        cfg.warmup = secs(w)?;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.list_scenarios {
        for s in SCENARIOS {
            println!("{s}");
        }
        return ExitCode::SUCCESS;
    }
    let cfg = match build(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if args.print_config {
        print!("{}", cfg.to_toml_string());
        return ExitCode::SUCCESS;
    }
    if args.validate_only {
        println!("ok");
        return ExitCode::SUCCESS;
    }

    if let Some(seeds) = &args.seeds {
        let seeds: Vec<u64> = seeds.clone().collect();
        match sweep(&cfg, &seeds) {
            Ok(s) => {
                print!("{}", s.table());
                for t in &s.tenants {
                    if let Some(met) = t.slo_met {
                        println!("# {} met its SLO on {met}/{} seeds", t.tenant, s.seeds.len());
                    }
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        }
    } else {
        match run_experiment(&cfg) {
            Ok(r) => {
                println!("run {}", r.run_id);
                for v in &r.slo {
                    let tail = v.tail_ns.map_or("n/a".into(), |t| format!("{:.3}ms", t as f64 / 1e6));
                    let verdict = if v.met { "met" } else { "missed" };
                    println!("  {} p{} tail {tail} vs slo {:.3}ms: {verdict}", v.tenant, v.quantile * 100.0, v.slo_ns as f64 / 1e6);
                }
                for b in &r.bandwidth {
                    println!("  {} {:.1} MB/s", b.tenant, b.bytes_per_s / 1e6);
                }
                println!("  mean BE pool {:.2} cores, {} events", r.be_pool_mean, r.events_processed);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        }
    }
}
