//! Synthetic microservice telemetry with planted workload regimes and
//! injected faults.
//!
//! Every random draw comes from a generator keyed by
//! `(seed, component, signal, tick)`, so output does not depend on the order
//! in which components or seconds are visited.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::keyed_rng;
use crate::telemetry::{
    FaultInterval, LogLevel, LogRecord, MetricSample, RegimeInterval, SpanStatus, Timestamp,
    TraceSpan,
};

const SECOND_US: u64 = 1_000_000;
/// Extra error log lines per second on the target of an active fault.
pub const FAULT_LOG_RATE: u64 = 10;
/// Relative noise used by [`default_scenario`].
pub const DEFAULT_NOISE: f64 = 0.05;
/// Length of each regime segment in [`default_scenario`].
pub const DEFAULT_SEGMENT_US: u64 = 3_600 * SECOND_US;
/// Length of each injected fault in [`default_scenario`].
pub const DEFAULT_FAULT_US: u64 = 180 * SECOND_US;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::InvalidScenario(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureType {
    CpuStress,
    LatencySpike,
    ErrorBurst,
}

impl FailureType {
    pub const ALL: [FailureType; 3] = [
        FailureType::CpuStress,
        FailureType::LatencySpike,
        FailureType::ErrorBurst,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureType::CpuStress => "cpu_stress",
            FailureType::LatencySpike => "latency_spike",
            FailureType::ErrorBurst => "error_burst",
        }
    }

    fn burst_message(self, rng: &mut impl Rng) -> String {
        match self {
            FailureType::CpuStress => {
                format!("worker thread starved: cpu throttled for {} ms", rng.gen_range(50..500))
            }
            FailureType::LatencySpike => format!(
                "deadline exceeded waiting on downstream after {} ms",
                rng.gen_range(800..5000)
            ),
            FailureType::ErrorBurst => format!(
                "internal handler failure: returned status {} to caller",
                [500, 502, 503][rng.gen_range(0..3)]
            ),
        }
    }
}

impl fmt::Display for FailureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FailureType {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FailureType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| SynthError::InvalidScenario(format!("unknown failure type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub operation: String,
}

/// Base signal levels of one component under one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentBase {
    /// Requests per second.
    pub request_rate: f64,
    pub latency_ms: f64,
    /// Fraction in [0, 1].
    pub cpu: f64,
    /// Fraction in [0, 1].
    pub error_rate: f64,
    /// Info log lines per second.
    pub log_lines_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub regime_id: u32,
    pub name: String,
    pub components: BTreeMap<String, ComponentBase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub start_us: u64,
    pub end_us: u64,
    pub target_component: String,
    pub failure_type: FailureType,
    pub magnitude: f64,
}

impl FaultSpec {
    fn active_at(&self, ts: u64) -> bool {
        self.start_us <= ts && ts < self.end_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub components: Vec<ComponentSpec>,
    /// Caller → callee pairs.
    pub edges: Vec<(String, String)>,
    pub regimes: Vec<RegimeSpec>,
    pub schedule: Vec<RegimeInterval>,
    pub faults: Vec<FaultSpec>,
    pub duration_us: u64,
    /// Relative standard deviation of the Gaussian noise on every signal.
    pub noise: f64,
    pub seed: u64,
}

/// Everything [`generate`] emits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticTelemetry {
    pub metrics: Vec<MetricSample>,
    pub spans: Vec<TraceSpan>,
    pub logs: Vec<LogRecord>,
    pub faults: Vec<FaultInterval>,
    pub regimes: Vec<RegimeInterval>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mut names = HashMap::new();
        for (i, c) in self.components.iter().enumerate() {
            if c.name.is_empty() || c.name.contains([',', '\n', ' ']) {
                return invalid(format!("bad component name {:?}", c.name));
            }
            if c.operation.is_empty() || c.operation.contains(char::is_whitespace) {
                return invalid(format!("bad operation name {:?}", c.operation));
            }
            if names.insert(c.name.as_str(), i).is_some() {
                return invalid(format!("duplicate component {}", c.name));
            }
        }
        for (a, b) in &self.edges {
            if !names.contains_key(a.as_str()) || !names.contains_key(b.as_str()) {
                return invalid(format!("edge {a}->{b} names an unknown component"));
            }
        }
        if self.has_cycle(&names) {
            return invalid("topology has a cycle");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return invalid("noise must be a finite non-negative number");
        }
        let mut regime_ids = HashMap::new();
        for r in &self.regimes {
            if regime_ids.insert(r.regime_id, r).is_some() {
                return invalid(format!("duplicate regime {}", r.regime_id));
            }
            for c in &self.components {
                let Some(b) = r.components.get(&c.name) else {
                    return invalid(format!("regime {} lacks component {}", r.regime_id, c.name));
                };
                let rates = [b.request_rate, b.latency_ms, b.log_lines_per_s];
                if rates.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return invalid(format!("negative rate in regime {}", r.regime_id));
                }
                if !(0.0..=1.0).contains(&b.cpu) || !(0.0..=1.0).contains(&b.error_rate) {
                    return invalid(format!("fraction out of [0,1] in regime {}", r.regime_id));
                }
            }
        }
        let mut cursor = 0;
        for seg in &self.schedule {
            if seg.start_us != cursor || seg.end_us <= seg.start_us {
                return invalid("schedule must tile [0, duration) in order");
            }
            if !regime_ids.contains_key(&seg.regime_id) {
                return invalid(format!("schedule names unknown regime {}", seg.regime_id));
            }
            cursor = seg.end_us;
        }
        if cursor != self.duration_us {
            return invalid("schedule must tile [0, duration) in order");
        }
        for f in &self.faults {
            if f.start_us >= f.end_us || f.end_us > self.duration_us {
                return invalid("fault interval must be non-empty and inside the scenario");
            }
            if !names.contains_key(f.target_component.as_str()) {
                return invalid(format!("fault targets unknown component {}", f.target_component));
            }
            if !(f.magnitude > 0.0 && f.magnitude.is_finite()) {
                return invalid("fault magnitude must be positive");
            }
        }
        Ok(())
    }

    fn has_cycle(&self, names: &HashMap<&str, usize>) -> bool {
        let n = self.components.len();
        let mut adj = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for (a, b) in &self.edges {
            adj[names[a.as_str()]].push(names[b.as_str()]);
            indeg[names[b.as_str()]] += 1;
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut visited = 0;
        while let Some(v) = stack.pop() {
            visited += 1;
            for &w in &adj[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    stack.push(w);
                }
            }
        }
        visited != n
    }

    fn regime_at(&self, ts: u64) -> &RegimeSpec {
        let seg = self
            .schedule
            .iter()
            .find(|s| s.start_us <= ts && ts < s.end_us)
            .expect("validated schedule covers the scenario");
        self.regimes
            .iter()
            .find(|r| r.regime_id == seg.regime_id)
            .expect("validated regime id")
    }
}

/// Multiplicative fault factor on `signal` of `component` at `ts`.
fn fault_factor(cfg: &ScenarioConfig, component: &str, ty: FailureType, ts: u64) -> f64 {
    cfg.faults
        .iter()
        .filter(|f| f.failure_type == ty && f.target_component == component && f.active_at(ts))
        .map(|f| f.magnitude)
        .product()
}

fn noisy(cfg: &ScenarioConfig, base: f64, component: &str, signal: &str, tick: u64) -> f64 {
    if cfg.noise == 0.0 || base == 0.0 {
        return base;
    }
    let z: f64 = keyed_rng(cfg.seed, component, signal, tick).sample(StandardNormal);
    base * (1.0 + cfg.noise * z)
}

/// Per-second signal levels of one component, after noise and faults.
struct Levels {
    request_rate: f64,
    latency_ms: f64,
    cpu: f64,
    error_rate: f64,
}

fn levels(cfg: &ScenarioConfig, component: &str, tick: u64) -> Levels {
    let ts = tick * SECOND_US;
    let base = &cfg.regime_at(ts).components[component];
    let request_rate = noisy(cfg, base.request_rate, component, "request_rate", tick).max(0.0);
    let latency_ms = (noisy(cfg, base.latency_ms, component, "latency", tick)
        * fault_factor(cfg, component, FailureType::LatencySpike, ts))
    .max(0.0);
    let cpu = (noisy(cfg, base.cpu, component, "cpu", tick)
        * fault_factor(cfg, component, FailureType::CpuStress, ts))
    .clamp(0.0, 1.0);
    let error_rate = (noisy(cfg, base.error_rate, component, "error_rate", tick)
        * fault_factor(cfg, component, FailureType::ErrorBurst, ts))
    .clamp(0.0, 1.0);
    Levels {
        request_rate,
        latency_ms,
        cpu,
        error_rate,
    }
}

/// Generate telemetry for `cfg`. Output streams are sorted by timestamp and
/// fully determined by the config (including its seed).
pub fn generate(cfg: &ScenarioConfig) -> Result<SyntheticTelemetry, SynthError> {
    cfg.validate()?;
    let ticks = cfg.duration_us / SECOND_US;
    let index: HashMap<&str, usize> = cfg
        .components
        .iter()
        .enumerate()
        .map(|(i, c)| (c.name.as_str(), i))
        .collect();
    let mut callees = vec![Vec::new(); cfg.components.len()];
    let mut has_caller = vec![false; cfg.components.len()];
    for (a, b) in &cfg.edges {
        callees[index[a.as_str()]].push(index[b.as_str()]);
        has_caller[index[b.as_str()]] = true;
    }
    for c in &mut callees {
        c.sort_unstable();
    }

    let mut out = SyntheticTelemetry::default();
    for tick in 0..ticks {
        let ts = tick * SECOND_US;
        let levels: Vec<Levels> = cfg
            .components
            .iter()
            .map(|c| levels(cfg, &c.name, tick))
            .collect();

        for (c, lv) in cfg.components.iter().zip(&levels) {
            for (name, value) in [
                ("cpu", lv.cpu),
                ("error_rate", lv.error_rate),
                ("latency_ms", lv.latency_ms),
                ("request_rate", lv.request_rate),
            ] {
                out.metrics.push(MetricSample {
                    ts: Timestamp(ts),
                    component: c.name.clone(),
                    metric_name: name.to_string(),
                    value,
                });
            }
        }

        // Request traces start at every component without callers; their
        // number follows the offered load, which the request_rate metric
        // measures with noise.
        for root in (0..cfg.components.len()).filter(|&i| !has_caller[i]) {
            let offered = cfg.regime_at(ts).components[&cfg.components[root].name].request_rate;
            let n = lines_in_tick(offered, tick);
            for k in 0..n {
                let start = ts + k * SECOND_US / n.max(1);
                let trace_id = format!("t{tick}-{root}-{k}");
                let mut next_span = 0u32;
                emit_span(
                    cfg,
                    &levels,
                    &callees,
                    root,
                    None,
                    &trace_id,
                    &mut next_span,
                    start,
                    tick * 65_536 + k,
                    &mut out.spans,
                );
            }
        }

        for (ci, c) in cfg.components.iter().enumerate() {
            let base = &cfg.regime_at(ts).components[&c.name];
            let lines = lines_in_tick(base.log_lines_per_s, tick);
            let mut rng = keyed_rng(cfg.seed, &c.name, "log", tick);
            for j in 0..lines {
                out.logs.push(LogRecord {
                    ts: Timestamp(ts + j * SECOND_US / lines.max(1)),
                    component: c.name.clone(),
                    level: LogLevel::Info,
                    message: format!(
                        "heartbeat: served request in {} ms",
                        (levels[ci].latency_ms * rng.gen_range(0.5..1.5)).round() as u64
                    ),
                });
            }
            let served = lines_in_tick(base.request_rate, tick);
            let mut rng = keyed_rng(cfg.seed, &c.name, "error_log", tick);
            for j in 0..served {
                if rng.gen::<f64>() < levels[ci].error_rate {
                    out.logs.push(LogRecord {
                        ts: Timestamp(ts + j * SECOND_US / served + 2),
                        component: c.name.clone(),
                        level: LogLevel::Error,
                        message: format!(
                            "request failed with status 500 after {} ms",
                            (levels[ci].latency_ms * rng.gen_range(0.5..1.5)).round() as u64
                        ),
                    });
                }
            }
            for f in cfg
                .faults
                .iter()
                .filter(|f| f.target_component == c.name && f.active_at(ts))
            {
                let mut rng = keyed_rng(cfg.seed, &c.name, f.failure_type.as_str(), tick);
                for j in 0..FAULT_LOG_RATE {
                    out.logs.push(LogRecord {
                        ts: Timestamp(ts + j * SECOND_US / FAULT_LOG_RATE + 1),
                        component: c.name.clone(),
                        level: LogLevel::Error,
                        message: f.failure_type.burst_message(&mut rng),
                    });
                }
            }
        }
    }

    out.metrics.sort_by_key(|m| m.ts);
    out.spans.sort_by_key(|s| s.start);
    out.logs.sort_by_key(|l| l.ts);
    out.faults = cfg
        .faults
        .iter()
        .map(|f| FaultInterval {
            start_us: f.start_us,
            end_us: f.end_us,
            root_cause_component: f.target_component.clone(),
            failure_type: f.failure_type.as_str().to_string(),
        })
        .collect();
    out.regimes = cfg.schedule.clone();
    Ok(out)
}

/// Lines emitted in `tick` by a source of `rate` lines/s, using a running
/// floor so that whole-window counts are exact.
fn lines_in_tick(rate: f64, tick: u64) -> u64 {
    let before = (rate * tick as f64).floor();
    let after = (rate * (tick + 1) as f64).floor();
    (after - before).max(0.0) as u64
}

/// Emits the span of `component` and, recursively, its callees. Returns the
/// span's duration in microseconds.
#[allow(clippy::too_many_arguments)]
fn emit_span(
    cfg: &ScenarioConfig,
    levels: &[Levels],
    callees: &[Vec<usize>],
    component: usize,
    parent: Option<&str>,
    trace_id: &str,
    next_span: &mut u32,
    start: u64,
    key: u64,
    spans: &mut Vec<TraceSpan>,
) -> u64 {
    let name = &cfg.components[component].name;
    let mut rng = keyed_rng(cfg.seed, name, "span", key);
    let z: f64 = rng.sample(StandardNormal);
    let self_us = (levels[component].latency_ms * 1000.0 * (1.0 + cfg.noise * z))
        .max(1.0)
        .round() as u64;
    let failed = rng.gen::<f64>() < levels[component].error_rate;

    let span_id = format!("s{}", *next_span);
    *next_span += 1;
    let slot = spans.len();
    spans.push(TraceSpan {
        trace_id: trace_id.to_string(),
        span_id: span_id.clone(),
        parent_span_id: parent.map(str::to_string),
        component: name.clone(),
        operation: cfg.components[component].operation.clone(),
        start: Timestamp(start),
        duration_us: 0,
        status: if failed { SpanStatus::Error } else { SpanStatus::Ok },
    });

    let mut child_start = start + 50;
    for &callee in &callees[component] {
        let d = emit_span(
            cfg, levels, callees, callee, Some(&span_id), trace_id, next_span, child_start, key,
            spans,
        );
        child_start += d + 50;
    }
    let duration = (child_start - start) + self_us;
    spans[slot].duration_us = duration;
    duration
}

/// A five-service chain `svc-a → … → svc-e` with `n_regimes` load levels
/// (each 3× the previous in request rate, cpu and log volume), one schedule
/// segment per regime, and `n_faults` evenly spaced faults cycling through
/// the failure types on rotating targets.
pub fn default_scenario(n_regimes: u32, n_faults: u32, seed: u64) -> ScenarioConfig {
    assert!(n_regimes >= 1, "n_regimes must be at least 1");
    let names = ["svc-a", "svc-b", "svc-c", "svc-d", "svc-e"];
    let ops = ["checkout", "reserve", "price", "charge", "persist"];
    let components: Vec<ComponentSpec> = names
        .iter()
        .zip(ops)
        .map(|(n, o)| ComponentSpec {
            name: n.to_string(),
            operation: o.to_string(),
        })
        .collect();
    let edges = names
        .windows(2)
        .map(|w| (w[0].to_string(), w[1].to_string()))
        .collect();

    let top = n_regimes as i32 - 1;
    let regimes = (0..n_regimes)
        .map(|r| {
            let scale = 3f64.powi(r as i32);
            let components = names
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    (
                        n.to_string(),
                        ComponentBase {
                            request_rate: scale,
                            latency_ms: 8.0 + 4.0 * i as f64 + 2.0 * r as f64,
                            cpu: 0.6 / 3f64.powi(top - r as i32),
                            error_rate: 0.005,
                            log_lines_per_s: 0.2 * scale,
                        },
                    )
                })
                .collect();
            RegimeSpec {
                regime_id: r,
                name: format!("load-x{}", scale as u64),
                components,
            }
        })
        .collect();

    // The final segment is twice as long, so a time-ordered train/test split
    // that holds out the tail still leaves training windows of every regime.
    let seg_len = |r: u32| if r + 1 == n_regimes { 2 * DEFAULT_SEGMENT_US } else { DEFAULT_SEGMENT_US };
    let mut schedule = Vec::new();
    let mut t = 0;
    for r in 0..n_regimes {
        schedule.push(RegimeInterval {
            start_us: t,
            end_us: t + seg_len(r),
            regime_id: r,
        });
        t += seg_len(r);
    }
    let duration_us = t;

    let faults = if n_faults == 0 {
        Vec::new()
    } else {
        let spacing = duration_us / u64::from(n_faults);
        let len = DEFAULT_FAULT_US.min(spacing / 2).max(SECOND_US);
        (0..n_faults)
            .map(|i| {
                let center = spacing * u64::from(i) + spacing / 2;
                let failure_type = FailureType::ALL[i as usize % 3];
                FaultSpec {
                    start_us: center - len / 2,
                    end_us: center - len / 2 + len,
                    target_component: names[i as usize % names.len()].to_string(),
                    failure_type,
                    magnitude: match failure_type {
                        FailureType::CpuStress => 3.0,
                        FailureType::LatencySpike => 5.0,
                        FailureType::ErrorBurst => 20.0,
                    },
                }
            })
            .collect()
    };

    ScenarioConfig {
        components,
        edges,
        regimes,
        schedule,
        faults,
        duration_us,
        noise: DEFAULT_NOISE,
        seed,
    }
}
