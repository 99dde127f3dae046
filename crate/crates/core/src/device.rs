//! Storage device service-time model and the online service-time estimators.

use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::VecDeque;
use std::time::Duration;

use crate::sim::{duration_ns, RngStream};
use crate::workload::OpKind;

/// Lognormal service time with a rare multiplicative spike.
///
/// The median applies to a read of `ref_size` bytes; other sizes scale by
/// `(size / ref_size)^size_exponent` and writes by `write_factor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceModel {
    #[serde(with = "humantime_serde_compat")]
    pub median: Duration,
    pub sigma: f64,
    pub spike_probability: f64,
    pub spike_multiplier: f64,
    /// Requests serviced concurrently; the rest wait in the device FIFO.
    pub capacity: usize,
    pub ref_size: u32,
    pub size_exponent: f64,
    pub write_factor: f64,
}

impl Default for DeviceModel {
    fn default() -> Self {
        DeviceModel {
            median: Duration::from_micros(100),
            sigma: 0.3,
            spike_probability: 0.001,
            spike_multiplier: 20.0,
            capacity: 8,
            ref_size: 4096,
            size_exponent: 0.5,
            write_factor: 1.0,
        }
    }
}

impl DeviceModel {
    pub fn validate(&self) -> Result<(), String> {
        let mut bad = Vec::new();
        if self.median.is_zero() {
            bad.push("device.median must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            bad.push("device.sigma must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.spike_probability) {
            bad.push("device.spike_probability must be in [0, 1]");
        }
        if !(self.spike_multiplier >= 1.0 && self.spike_multiplier.is_finite()) {
            bad.push("device.spike_multiplier must be >= 1");
        }
        if self.capacity == 0 {
            bad.push("device.capacity must be >= 1");
        }
        if self.ref_size == 0 {
            bad.push("device.ref_size must be >= 1");
        }
        if !(self.write_factor > 0.0 && self.size_exponent >= 0.0) {
            bad.push("device.write_factor must be > 0 and device.size_exponent >= 0");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(bad.join("; "))
        }
    }

    /// Median service time in nanoseconds for an operation of `size` bytes.
    pub fn median_ns(&self, op: OpKind, size: u32) -> f64 {
        let mut m = duration_ns(self.median) as f64;
        if size != self.ref_size {
            m *= (f64::from(size) / f64::from(self.ref_size)).powf(self.size_exponent);
        }
        if op == OpKind::Write {
            m *= self.write_factor;
        }
        m
    }

    /// The `q`-quantile of the service-time distribution for `(op, size)`.
    pub fn nominal_quantile_ns(&self, op: OpKind, size: u32, q: f64) -> f64 {
        let m = self.median_ns(op, size);
        let p = self.spike_probability;
        let ms = self.spike_multiplier;
        if self.sigma == 0.0 {
            return if q <= 1.0 - p { m } else { m * ms };
        }
        let z = Normal::standard();
        let cdf = |ln_x: f64| {
            (1.0 - p) * z.cdf((ln_x - m.ln()) / self.sigma) + p * z.cdf((ln_x - (m * ms).ln()) / self.sigma)
        };
        let (mut lo, mut hi) = (m.ln() - 12.0 * self.sigma, (m * ms).ln() + 12.0 * self.sigma);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) >= q {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi.exp()
    }
}

/// Draws one service time in nanoseconds (always at least 1ns).
pub fn sample_service_time(model: &DeviceModel, op: OpKind, size: u32, rng: &mut RngStream) -> u64 {
    let z: f64 = StandardNormal.sample(rng.rng());
    let spike = rng.bernoulli(model.spike_probability);
    let mut t = model.median_ns(op, size) * (model.sigma * z).exp();
    if spike {
        t *= model.spike_multiplier;
    }
    (t.round() as u64).max(1)
}

/// Exponentially weighted moving average seeded with its first sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ewma<F> {
    alpha: F,
    value: Option<F>,
}

impl<F: Float> Ewma<F> {
    pub fn new(alpha: F) -> Self {
        Ewma { alpha, value: None }
    }

    pub fn update(&mut self, sample: F) -> F {
        let v = match self.value {
            None => sample,
            Some(prev) => (F::one() - self.alpha) * prev + self.alpha * sample,
        };
        self.value = Some(v);
        v
    }

    pub fn value(&self) -> Option<F> {
        self.value
    }
}

const FINE_BUCKETS: usize = 100_000;
const FINE_WIDTH_NS: u64 = 1_000;
const COARSE_PER_OCTAVE: f64 = 64.0;
const COARSE_BUCKETS: usize = 448;

fn sliding_bucket(v_ns: u64) -> usize {
    let fine = (v_ns / FINE_WIDTH_NS) as usize;
    if fine < FINE_BUCKETS {
        return fine;
    }
    let octaves = (v_ns as f64 / (FINE_BUCKETS as f64 * FINE_WIDTH_NS as f64)).log2();
    FINE_BUCKETS + ((octaves * COARSE_PER_OCTAVE) as usize).min(COARSE_BUCKETS - 1)
}

fn sliding_bucket_low(idx: usize) -> u64 {
    if idx < FINE_BUCKETS {
        return idx as u64 * FINE_WIDTH_NS;
    }
    let octaves = (idx - FINE_BUCKETS) as f64 / COARSE_PER_OCTAVE;
    (FINE_BUCKETS as f64 * FINE_WIDTH_NS as f64 * octaves.exp2()).ceil() as u64
}

/// Counts of the most recent `window` samples, with O(log n) quantile reads.
///
/// Buckets are 1µs wide up to 100ms and log-spaced above that. A quantile
/// read returns the lower edge of the bucket holding the ranked sample.
#[derive(Debug, Clone)]
pub struct SlidingQuantile {
    window: usize,
    recent: VecDeque<u32>,
    tree: Vec<u32>,
}

impl SlidingQuantile {
    pub fn new(window: usize) -> Self {
        assert!(window > 0, "sliding window must hold at least one sample");
        SlidingQuantile {
            window,
            recent: VecDeque::with_capacity(window),
            tree: vec![0; FINE_BUCKETS + COARSE_BUCKETS + 1],
        }
    }

    fn add(&mut self, bucket: usize, delta: i32) {
        let mut i = bucket + 1;
        while i < self.tree.len() {
            self.tree[i] = self.tree[i].wrapping_add_signed(delta);
            i += i & i.wrapping_neg();
        }
    }

    pub fn push(&mut self, v_ns: u64) {
        if self.recent.len() == self.window {
            let old = self.recent.pop_front().expect("non-empty window") as usize;
            self.add(old, -1);
        }
        let b = sliding_bucket(v_ns);
        self.recent.push_back(b as u32);
        self.add(b, 1);
    }

    pub fn len(&self) -> usize {
        self.recent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent.is_empty()
    }

    /// Width of the bucket that holds `v_ns`.
    pub fn resolution_at(v_ns: u64) -> u64 {
        let b = sliding_bucket(v_ns);
        if b < FINE_BUCKETS {
            FINE_WIDTH_NS
        } else {
            sliding_bucket_low(b + 1) - sliding_bucket_low(b)
        }
    }

    pub fn quantile(&self, q: f64) -> Option<u64> {
        let n = self.recent.len() as u64;
        if n == 0 {
            return None;
        }
        let rank = crate::metrics::quantile_rank(q, n) as u32;
        // Fenwick descent: largest prefix with cumulative count < rank.
        let mut pos = 0usize;
        let mut remaining = rank;
        let mut step = (self.tree.len() - 1).next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] < remaining {
                pos = next;
                remaining -= self.tree[next];
            }
            step >>= 1;
        }
        Some(sliding_bucket_low(pos))
    }
}

/// Where the estimators draw their samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorScope {
    /// Each tenant tracks its own completed requests.
    #[default]
    Tenant,
    /// One shared estimator over every completion at the device.
    Device,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub ewma_alpha: f64,
    pub hist_window: usize,
    pub scope: EstimatorScope,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { ewma_alpha: 0.01, hist_window: 10_000, scope: EstimatorScope::Tenant }
    }
}

/// Online mean (`t_io_avg`) and tail (`tail_io`) of service times.
#[derive(Debug, Clone)]
pub struct Estimators {
    mean: Ewma<f64>,
    tail: SlidingQuantile,
    tail_quantile: f64,
    nominal_mean_ns: f64,
    nominal_tail_ns: u64,
}

impl Estimators {
    pub fn new(cfg: &EstimatorConfig, tail_quantile: f64, nominal_mean_ns: f64, nominal_tail_ns: u64) -> Self {
        Estimators {
            mean: Ewma::new(cfg.ewma_alpha),
            tail: SlidingQuantile::new(cfg.hist_window),
            tail_quantile,
            nominal_mean_ns,
            nominal_tail_ns,
        }
    }

    /// Estimators whose fallbacks come from the device model for `(op, size)`.
    pub fn for_model(cfg: &EstimatorConfig, model: &DeviceModel, tail_quantile: f64, op: OpKind, size: u32) -> Self {
        Self::new(
            cfg,
            tail_quantile,
            model.median_ns(op, size),
            model.nominal_quantile_ns(op, size, tail_quantile).round() as u64,
        )
    }

    pub fn on_completion(&mut self, service_ns: u64) {
        debug_assert!(service_ns > 0);
        self.mean.update(service_ns as f64);
        self.tail.push(service_ns);
    }

    pub fn samples(&self) -> usize {
        self.tail.len()
    }

    pub fn t_io_avg_ns(&self) -> f64 {
        self.mean.value().unwrap_or(self.nominal_mean_ns)
    }

    pub fn tail_io_ns(&self) -> u64 {
        self.tail.quantile(self.tail_quantile).unwrap_or(self.nominal_tail_ns)
    }
}

/// Serde adapter for `Duration` as human-readable strings such as `"300us"`.
pub mod humantime_serde_compat {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&humantime::format_duration(*d).to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let s = String::deserialize(d)?;
        humantime::parse_duration(&s).map_err(serde::de::Error::custom)
    }
}
