//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use num_rational::Ratio;

use qwinsim::backend::{Backend, CoreTransfer, Owner, RunOptions, RunOutput, TransferKind};
use qwinsim::config::{burst_scenario, scenario, single_lc_scenario, AllocatorKind, ExperimentConfig};
use qwinsim::harness::{run_experiment, run_with_options, sweep};
use qwinsim::metrics::{AllocTrigger, LatencyHistogram};
use qwinsim::qwin::{select_policy, CorePolicy, PolicyMode, QwinParams};
use qwinsim::sim::{duration_ns, SimTime};
use qwinsim::window::{calculate_cores, compute_budget, WindowEnd, WindowLoad};
use qwinsim::workload::TenantClass;
use qwinsim::ExactWindowLoad;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 1. Formula oracle

/// `(ql, tw, slo, tail_io, t_io_avg, total, cores, budget)`; times in µs,
/// the expected values worked out by hand.
type Tuple = (u64, u64, u64, u64, u64, usize, usize, u64);

const TUPLES: [Tuple; 23] = [
    // slack 2000: 100*100/2000 = 5; 2000/100 = 20
    (100, 500, 3000, 500, 100, 24, 5, 20),
    // same demand clamped to the pool
    (100, 500, 3000, 500, 100, 4, 4, 20),
    // slack 3000: 100/3000 -> 1; 3000/100 = 30
    (1, 0, 4000, 1000, 100, 8, 1, 30),
    // slack 0 -> every core, budget 1
    (10, 2600, 3000, 400, 100, 8, 8, 1),
    // slack -400
    (10, 3000, 3000, 400, 100, 8, 8, 1),
    // slack 1500: 3000/1500 = 2 exactly; 1500/100 = 15
    (30, 1000, 3000, 500, 100, 16, 2, 15),
    // 3100/1500 = 2.07 -> 3
    (31, 1000, 3000, 500, 100, 16, 3, 15),
    // slack 2000: 13440/2000 = 6.72 -> 7; 2000/105 = 19.05 -> 19
    (128, 1200, 4000, 800, 105, 8, 7, 19),
    (128, 1200, 4000, 800, 105, 6, 6, 19),
    // slack 50: 5000/50 = 100 -> 8; 50/100 = 0.5 -> clamp to 1
    (50, 0, 1000, 950, 100, 8, 8, 1),
    // slack 5000: 777/5000 -> 1; 5000/111 = 45.05 -> 45
    (7, 123, 5500, 377, 111, 24, 1, 45),
    // slack 2000: 24000/2000 = 12; 20
    (240, 300, 2500, 200, 100, 24, 12, 20),
    // 24100/2000 = 12.05 -> 13
    (241, 300, 2500, 200, 100, 24, 13, 20),
    // slack 5000: 100000/5000 = 20; 50
    (1000, 0, 6000, 1000, 100, 24, 20, 50),
    // 100100/5000 = 20.02 -> 21
    (1001, 0, 6000, 1000, 100, 24, 21, 50),
    // slack 1: 300 -> 8; 1/100 -> clamp to 1
    (3, 4499, 4500, 0, 100, 8, 8, 1),
    // slack 2000: 16000/2000 = 8; 2000/250 = 8
    (64, 700, 3000, 300, 250, 12, 8, 8),
    // 16250/2000 = 8.125 -> 9
    (65, 700, 3000, 300, 250, 12, 9, 8),
    // slack 900: 900/900 = 1; 9
    (9, 0, 900, 0, 100, 2, 1, 9),
    // 1900/900 = 2.11 -> 3
    (19, 50, 1000, 50, 100, 32, 3, 9),
    // slack -500
    (2, 1000, 3000, 2500, 100, 8, 8, 1),
    // slack 1: 5*1/1 = 5; 1/1 = 1
    (5, 0, 3000, 2999, 1, 8, 5, 1),
    // slack 300: 300/300 = 1; 3
    (3, 0, 1000, 700, 100, 8, 1, 3),
];

fn criterion_1() -> Outcome {
    let mut bad = Vec::new();
    let mut n = 0;
    for &(ql, tw, slo, tail, avg, total, cores, budget) in &TUPLES {
        let r = |v: u64| Ratio::<i128>::from_integer(v as i128);
        let exact: ExactWindowLoad = WindowLoad { ql, tw: r(tw), slo: r(slo), tail_io: r(tail), t_io_avg: r(avg) };
        // Same tuple in nanoseconds through the float path the simulator uses.
        let ns = |v: u64| (v * 1000) as f64;
        let float = WindowLoad { ql, tw: ns(tw), slo: ns(slo), tail_io: ns(tail), t_io_avg: ns(avg) };
        let got = [
            (calculate_cores(&exact, total), compute_budget(&exact)),
            (calculate_cores(&float, total), compute_budget(&float)),
        ];
        for g in got {
            if g != (cores, budget) {
                bad.push(format!("{:?} -> {g:?}, want {:?}", (ql, tw, slo, tail, avg, total), (cores, budget)));
            }
        }
        n += 1;
    }
    // Non-integral service time: 40 * 100.5 / 2010 = 2 exactly; 2010 / 100.5 = 20.
    let frac: ExactWindowLoad = WindowLoad {
        ql: 40,
        tw: Ratio::from_integer(0),
        slo: Ratio::from_integer(3000),
        tail_io: Ratio::from_integer(990),
        t_io_avg: Ratio::new(201, 2),
    };
    if (calculate_cores(&frac, 8), compute_budget(&frac)) != (2, 20) {
        bad.push("fractional t_io_avg".into());
    }
    n += 1;
    check(bad.is_empty(), if bad.is_empty() { format!("{n} tuples exact") } else { bad.join("; ") })
}

// ---------------------------------------------------------------------------
// 2. Window partition

fn criterion_2() -> Outcome {
    let mut details = Vec::new();
    for seed in 0..10u64 {
        // Different base rates and both end rules across seeds.
        let mut cfg = burst_scenario(6_000.0 + 1_000.0 * seed as f64);
        cfg.seed = seed;
        cfg.duration = Duration::from_secs(10);
        cfg.warmup = Duration::from_secs(1);
        cfg.allocator.kind = AllocatorKind::Qwin;
        cfg.allocator.qwin.window_end = if seed % 2 == 0 { WindowEnd::Dequeue } else { WindowEnd::Complete };
        let out = Backend::new(cfg, RunOptions { record_requests: true, ..Default::default() })
            .map_err(|e| e.to_string())?
            .run();
        let lc = 0;
        let generated = out.tenants[lc].generated;
        if generated < 100_000 {
            return Err(format!("seed {seed}: only {generated} LC requests"));
        }
        // Windows contiguous in wid; ql equals the queue length at establishment.
        let bounds: Vec<_> = out.window_bounds.iter().filter(|b| b.0 == lc).collect();
        let windows: Vec<_> = out.windows.iter().filter(|w| w.tenant == "T1").collect();
        if bounds.len() != windows.len() {
            return Err(format!("seed {seed}: window log mismatch"));
        }
        let mut ranges = BTreeMap::new();
        for (i, (b, w)) in bounds.iter().zip(&windows).enumerate() {
            if b.1 != i as u64 + 1 || w.wid != b.1 {
                return Err(format!("seed {seed}: wid {} at position {i}", b.1));
            }
            if w.ql != b.3 {
                return Err(format!("seed {seed}: window {} ql {} vs queue {}", w.wid, w.ql, b.3));
            }
            ranges.insert(b.1, (b.2, b.2 + w.ql));
        }
        // Members of consecutive windows are disjoint and adjacent.
        let mut prev_end = None;
        for (&wid, &(start, end)) in &ranges {
            if let Some(p) = prev_end {
                if start < p {
                    return Err(format!("seed {seed}: window {wid} overlaps its predecessor"));
                }
            }
            prev_end = Some(end);
        }
        // Every dequeued LC request belongs to exactly one window, the one
        // whose range holds its sequence number.
        let mut seen = HashMap::new();
        for d in out.dequeues.iter().filter(|d| d.tenant == lc) {
            let Some(wid) = d.wid else {
                return Err(format!("seed {seed}: seq {} dequeued outside any window", d.seq));
            };
            if seen.insert(d.seq, wid).is_some() {
                return Err(format!("seed {seed}: seq {} dequeued twice", d.seq));
            }
            let (s, e) = ranges[&wid];
            if !(s..e).contains(&d.seq) {
                return Err(format!("seed {seed}: seq {} not in window {wid}", d.seq));
            }
            // Ranges are sorted and disjoint, so only the neighbours could also hold it.
            let holders = [wid - 1, wid + 1]
                .iter()
                .filter_map(|w| ranges.get(w))
                .filter(|(s, e)| (*s..*e).contains(&d.seq))
                .count();
            if holders != 0 {
                return Err(format!("seed {seed}: seq {} in more than one window", d.seq));
            }
        }
        let waiting = out.tenants[lc].queued;
        if seen.len() as u64 + waiting != generated {
            return Err(format!("seed {seed}: {} dequeued + {waiting} queued != {generated}", seen.len()));
        }
        details.push(generated);
    }
    Ok(format!("10 seeds, {}..{} LC requests each", details.iter().min().unwrap(), details.iter().max().unwrap()))
}

// ---------------------------------------------------------------------------
// 3-5. Allocation trace properties over a matrix of runs

struct MatrixRun {
    name: String,
    total: usize,
    dir: tempfile::TempDir,
    out: RunOutput,
}

fn matrix() -> Vec<MatrixRun> {
    let mut cfgs = Vec::new();
    for name in ["single", "burst", "group1-diverse", "policies"] {
        for kind in [AllocatorKind::Qwin, AllocatorKind::Shenango, AllocatorKind::Cake, AllocatorKind::Static] {
            let mut c = scenario(name).unwrap();
            c.allocator.kind = kind;
            c.duration = Duration::from_secs(if name == "burst" { 25 } else { 8 });
            c.warmup = Duration::from_secs(1);
            cfgs.push((format!("{name}/{}", kind.as_str()), c));
        }
        for policy in [PolicyMode::Aggressive, PolicyMode::Conservative, PolicyMode::SloAware] {
            let mut c = scenario(name).unwrap();
            c.allocator.qwin.policy = policy;
            c.duration = Duration::from_secs(8);
            c.warmup = Duration::from_secs(1);
            cfgs.push((format!("{name}/qwin-{policy:?}"), c));
        }
        let mut c = scenario(name).unwrap();
        c.allocator.qwin.window_end = WindowEnd::Complete;
        c.duration = Duration::from_secs(8);
        c.warmup = Duration::from_secs(1);
        cfgs.push((format!("{name}/qwin-complete"), c));
    }
    cfgs.into_iter()
        .map(|(name, mut c)| {
            let dir = tempfile::tempdir().unwrap();
            c.out_dir = Some(dir.path().to_path_buf());
            let total = c.pool.total;
            let out = run_with_options(&c, RunOptions { record_requests: true, ..Default::default() }).unwrap().output;
            MatrixRun { name, total, dir, out }
        })
        .collect()
}

fn read_alloc_csv(path: &Path) -> Vec<(u64, String, usize, usize, String)> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_ns,tenant,old_num,new_num,trigger"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].into(), f[2].parse().unwrap(), f[3].parse().unwrap(), f[4].into())
        })
        .collect()
}

fn criterion_3(runs: &[MatrixRun]) -> Outcome {
    let mut probes = 0;
    let mut violations = Vec::new();
    for r in runs {
        for (t, tenant, old, new, trig) in read_alloc_csv(&r.dir.path().join("alloc_trace.csv")) {
            if trig == AllocTrigger::Probe.as_str() {
                probes += 1;
                if new < old {
                    violations.push(format!("{} {tenant} at {t}: {old}->{new}", r.name));
                }
            }
        }
    }
    if probes == 0 {
        return Err("no probe events in the matrix".into());
    }
    check(violations.is_empty(), format!("{} runs, {probes} probe events, {} violations {}", runs.len(), violations.len(), violations.join("; ")))
}

fn criterion_4(runs: &[MatrixRun]) -> Outcome {
    let mut busy_checked = 0;
    let mut violations = Vec::new();
    for r in runs {
        let completions: HashMap<u64, (usize, SimTime)> = r.out.completions.iter().map(|&(id, core, t)| (id, (core, t))).collect();
        for tr in &r.out.transfers {
            let CoreTransfer { core, from, to, kind, .. } = *tr;
            match (from, to, kind) {
                (Owner::Lc(_), _, TransferKind::Preempt) => {
                    violations.push(format!("{}: core {core} preempted from {from:?}", r.name));
                }
                (Owner::Lc(a), Owner::Lc(b), _) if a != b => {
                    violations.push(format!("{}: core {core} moved between LC tenants", r.name));
                }
                (Owner::Be, Owner::Lc(_), _) if tr.busy_at_mark => {
                    let Some(id) = tr.in_flight_request else {
                        violations.push(format!("{}: busy transfer without a request", r.name));
                        continue;
                    };
                    match completions.get(&id) {
                        Some(&(c, done)) if c == core && tr.effective_at == Some(done) => busy_checked += 1,
                        // Still in service when the run ended.
                        None if tr.effective_at.is_none() => {}
                        other => violations.push(format!(
                            "{}: core {core} effective {:?}, request done {other:?}",
                            r.name, tr.effective_at
                        )),
                    }
                }
                _ => {}
            }
        }
        // Nothing but the in-flight request may be dequeued on a core between
        // marking and effectiveness.
        let mut by_core: HashMap<usize, Vec<(SimTime, u64)>> = HashMap::new();
        for d in &r.out.dequeues {
            by_core.entry(d.core).or_default().push((d.time, d.request));
        }
        for tr in r.out.transfers.iter().filter(|t| t.busy_at_mark) {
            let end = tr.effective_at.unwrap_or(SimTime(u64::MAX));
            let list = by_core.get(&tr.core).map(Vec::as_slice).unwrap_or_default();
            let from = list.partition_point(|(t, _)| *t < tr.marked_at);
            if list[from..].iter().take_while(|(t, _)| *t < end).any(|&(_, id)| Some(id) != tr.in_flight_request) {
                violations.push(format!("{}: core {} dequeued while its transfer was pending", r.name, tr.core));
            }
        }
    }
    check(
        violations.is_empty() && busy_checked > 0,
        format!("{busy_checked} busy BE->LC transfers at completion, {} violations {}", violations.len(), violations.join("; ")),
    )
}

fn criterion_5(runs: &[MatrixRun]) -> Outcome {
    let mut events = 0;
    let mut violations = Vec::new();
    for r in runs {
        // Replay the CSV independently of the recorded pool sizes.
        let mut nums: BTreeMap<String, usize> = BTreeMap::new();
        let csv = read_alloc_csv(&r.dir.path().join("alloc_trace.csv"));
        let lc_labels: Vec<String> = r.out.tenants.iter().filter(|t| t.class == TenantClass::Lc).map(|t| t.label.clone()).collect();
        for (i, ev) in r.out.allocs.iter().enumerate() {
            events += 1;
            let (_, tenant, old, new, _) = &csv[i];
            let prev = nums.insert(tenant.clone(), *new).unwrap_or(0);
            if prev != *old {
                violations.push(format!("{}: {tenant} old {old} but replay has {prev}", r.name));
            }
            let sum: usize = nums.values().sum();
            if sum + ev.be_pool != r.total || ev.lc_total + ev.be_pool != r.total {
                violations.push(format!("{}: {sum} + {} != {}", r.name, ev.be_pool, r.total));
            }
            let registered = lc_labels.iter().all(|l| nums.contains_key(l));
            if registered && lc_labels.iter().any(|l| nums[l] < 1) {
                violations.push(format!("{}: LC tenant below one core at {}", r.name, ev.time));
            }
            if *new < 1 {
                violations.push(format!("{}: {tenant} dropped to {new}", r.name));
            }
        }
    }
    check(violations.is_empty() && events > 0, format!("{events} allocation events, {} violations {}", violations.len(), violations.join("; ")))
}

// ---------------------------------------------------------------------------
// 6. Policy regions

fn criterion_6() -> Outcome {
    let params = QwinParams::default();
    if duration_ns(params.thresh_low) != 300_000 || duration_ns(params.thresh_high) != 1_000_000 {
        return Err("default thresholds differ from 300us/1000us".into());
    }
    let slo_ns: u64 = 4_000_000;
    let mut bad = Vec::new();
    // Synthetic measured tails, taken through a histogram like a refresh does.
    for (tail_us, want) in [
        (2_000, CorePolicy::Conservative),
        (2_800, CorePolicy::Conservative),
        (3_300, CorePolicy::SloAware),
        (3_500, CorePolicy::SloAware),
        (3_800, CorePolicy::Aggressive),
        (3_950, CorePolicy::Aggressive),
        (6_000, CorePolicy::Aggressive),
    ] {
        let mut h = LatencyHistogram::new();
        for _ in 0..999 {
            h.record(500_000);
        }
        for _ in 0..2 {
            h.record(tail_us * 1000);
        }
        let tail = h.quantile(0.999).unwrap();
        let got = select_policy(slo_ns as i128 - tail as i128, &params);
        if got != want {
            bad.push(format!("tail {tail_us}us -> {got:?}"));
        }
    }
    // Region edges: strict comparisons on both thresholds.
    for (slack, want) in [
        (299_999, CorePolicy::Aggressive),
        (300_000, CorePolicy::SloAware),
        (1_000_000, CorePolicy::SloAware),
        (1_000_001, CorePolicy::Conservative),
        (-1, CorePolicy::Aggressive),
    ] {
        if select_policy(slack, &params) != want {
            bad.push(format!("slack {slack}"));
        }
    }
    // Every refresh recorded in a simulation agrees with the regions.
    let mut cfg = scenario("policies").unwrap();
    cfg.duration = Duration::from_secs(20);
    cfg.warmup = Duration::from_secs(1);
    let out = run_experiment(&cfg).map_err(|e| e.to_string())?.output;
    for c in &out.policy_changes {
        if select_policy(c.slack_ns, &params) != c.new {
            bad.push(format!("recorded change to {:?} at slack {}", c.new, c.slack_ns));
        }
    }
    check(bad.is_empty(), format!("3 regions exact, {} recorded changes consistent {}", out.policy_changes.len(), bad.join("; ")))
}

// ---------------------------------------------------------------------------
// 7-9. Directional experiments

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn sixty_seconds(slo_ms: f64) -> ExperimentConfig {
    let mut c = single_lc_scenario(slo_ms);
    c.duration = Duration::from_secs(60);
    c.warmup = Duration::from_secs(5);
    c.device.median = Duration::from_micros(100);
    c.device.sigma = 0.3;
    c.device.spike_probability = 0.001;
    c.device.spike_multiplier = 20.0;
    c.pool.total = 8;
    c
}

fn criterion_7() -> Outcome {
    let qwin = sweep(&sixty_seconds(4.0), &SEEDS).map_err(|e| e.to_string())?;
    let mut aggressive_cfg = sixty_seconds(4.0);
    aggressive_cfg.allocator.qwin.policy = PolicyMode::Aggressive;
    let aggressive = sweep(&aggressive_cfg, &SEEDS).map_err(|e| e.to_string())?;
    let met = qwin.tenant("T1").unwrap().slo_met.unwrap();
    let bq = qwin.mean_total_be_bandwidth();
    let ba = aggressive.mean_total_be_bandwidth();
    let gain = bq / ba - 1.0;
    let tails: Vec<String> = qwin.reports.iter().map(|r| format!("{:.2}", r.tail_ns("T1").unwrap_or(0) as f64 / 1e6)).collect();
    check(
        met >= 4 && gain >= 0.05,
        format!(
            "SLO met {met}/5 (p99.9 ms {}), BE {:.1} vs aggressive {:.1} MB/s ({:+.1}%)",
            tails.join("/"),
            bq / 1e6,
            ba / 1e6,
            gain * 100.0
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut points = Vec::new();
    for slo in [3.0, 4.5, 6.0] {
        let s = sweep(&sixty_seconds(slo), &SEEDS).map_err(|e| e.to_string())?;
        points.push((slo, s.mean_total_be_bandwidth()));
    }
    let ok = points.windows(2).all(|w| w[1].1 >= w[0].1 * 0.98);
    let text: Vec<String> = points.iter().map(|(s, b)| format!("{s}ms: {:.1} MB/s", b / 1e6)).collect();
    check(ok, text.join(", "))
}

fn criterion_9() -> Outcome {
    let mut wins = 0;
    let mut notes = Vec::new();
    for seed in SEEDS {
        let mut base = burst_scenario(8_000.0);
        base.seed = seed;
        base.duration = Duration::from_secs(40);
        base.warmup = Duration::from_secs(2);
        let slo_ns = duration_ns(base.tenants[0].slo.unwrap().latency);
        let run = |kind| {
            let mut c = base.clone();
            c.allocator.kind = kind;
            run_experiment(&c).unwrap().output
        };
        let cake = run(AllocatorKind::Cake);
        let qwin = run(AllocatorKind::Qwin);
        let burst = base.tenants[0].workload.as_ref().unwrap().burst.clone().unwrap();
        let period = (burst.on_duration + burst.off_duration).as_secs();
        let off = burst.off_duration.as_secs();
        let on = burst.on_duration.as_secs();
        let tail = |o: &RunOutput, i: u64| o.intervals.iter().find(|s| s.interval == i && s.tenant == "T1").and_then(|s| s.tail_ns);
        // Intervals of each on phase, which starts after the off phase.
        let mut hit = None;
        'outer: for cycle in 0..base.duration.as_secs() / period {
            for k in 0..on {
                let i = cycle * period + off + k;
                if let (Some(c), Some(q)) = (tail(&cake, i), tail(&qwin, i)) {
                    if c > slo_ns && q <= slo_ns {
                        hit = Some((i, c, q));
                        break 'outer;
                    }
                }
            }
        }
        match hit {
            Some((i, c, q)) => {
                wins += 1;
                notes.push(format!("s{seed}@{i}s {:.1}/{:.1}ms", c as f64 / 1e6, q as f64 / 1e6));
            }
            None => notes.push(format!("s{seed} none")),
        }
    }
    check(wins * 2 > SEEDS.len(), format!("{wins}/5 seeds (cake/qwin tails: {})", notes.join(", ")))
}

// ---------------------------------------------------------------------------
// 10. Determinism

fn criterion_10() -> Outcome {
    let mut cfg = scenario("group1-diverse").unwrap();
    cfg.duration = Duration::from_secs(6);
    cfg.warmup = Duration::from_secs(1);
    cfg.seed = 42;
    let files = ["latency.csv", "intervals.csv", "alloc_trace.csv", "windows.csv", "policy_trace.csv", "report.json"];
    let mut first: Option<Vec<Vec<u8>>> = None;
    let mut bytes = 0;
    for _ in 0..3 {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg.clone();
        c.out_dir = Some(dir.path().to_path_buf());
        run_experiment(&c).map_err(|e| e.to_string())?;
        let contents: Vec<Vec<u8>> = files.iter().map(|f| fs::read(dir.path().join(f)).unwrap()).collect();
        match &first {
            None => {
                bytes = contents.iter().map(Vec::len).sum();
                first = Some(contents);
            }
            Some(f) => {
                for (i, (a, b)) in f.iter().zip(&contents).enumerate() {
                    if a != b {
                        return Err(format!("{} differs between repeats", files[i]));
                    }
                }
            }
        }
    }
    Ok(format!("3 repeats byte-identical over {} files ({bytes} bytes)", files.len()))
}

// ---------------------------------------------------------------------------
// 11. Histogram fidelity

fn criterion_11() -> Outcome {
    let mut cfg = scenario("group1-diverse").unwrap();
    cfg.duration = Duration::from_secs(6);
    cfg.warmup = Duration::from_secs(1);
    let out = Backend::new(cfg, RunOptions { keep_raw_latencies: true, ..Default::default() })
        .map_err(|e| e.to_string())?
        .run();
    let mut checked = 0;
    let mut bad = Vec::new();
    for (t, raw) in out.tenants.iter().zip(&out.raw_latencies) {
        let mut raw = raw.clone().ok_or("raw samples not kept")?;
        raw.sort_unstable();
        let mut h = LatencyHistogram::new();
        for &v in &raw {
            h.record(v);
        }
        for q in [0.9, 0.99, 0.999] {
            let rank = ((q * raw.len() as f64).ceil() as usize).max(1);
            let exact = raw[rank - 1];
            let (lo, hi) = LatencyHistogram::bucket_of(exact);
            let width = hi - lo + 1;
            let got = h.quantile(q).unwrap();
            let reported = out.latency.iter().find(|r| r.tenant == t.label && r.quantile == q).and_then(|r| r.cumulative_tail_ns);
            if got.abs_diff(exact) > width || (reported.is_some() && reported != Some(got)) {
                bad.push(format!("{} q{q}: {got} vs {exact} (width {width})", t.label));
            }
            checked += 1;
        }
    }
    check(bad.is_empty(), format!("{checked} quantiles within one bucket {}", bad.join("; ")))
}

fn main() {
    let mut failed = 0;
    let mut report = |n: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let r = f();
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("criterion {n:>2} {name}: PASS ({d}) [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({d}) [{secs:.1}s]");
            }
        }
    };
    report(1, "formula oracle", &mut criterion_1);
    report(2, "window partition", &mut criterion_2);
    let runs = matrix();
    report(3, "monotonic probes", &mut || criterion_3(&runs));
    report(4, "preemption safety", &mut || criterion_4(&runs));
    report(5, "core conservation", &mut || criterion_5(&runs));
    drop(runs);
    report(6, "policy regions", &mut criterion_6);
    report(7, "slo vs aggressive", &mut criterion_7);
    report(8, "slo looseness", &mut criterion_8);
    report(9, "burst vs feedback", &mut criterion_9);
    report(10, "determinism", &mut criterion_10);
    report(11, "histogram fidelity", &mut criterion_11);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
