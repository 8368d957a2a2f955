//! Raw telemetry records, their on-disk formats, and alignment into
//! overlapping time windows.
//!
//! Formats:
//! - metrics: CSV with header `ts_us,component,metric,value`
//! - traces: JSON Lines, keys `trace_id, span_id, parent_span_id, component,
//!   operation, start_us, duration_us, status` (`status` is `ok` or `error`)
//! - logs: JSON Lines, keys `ts_us, component, level, message`
//! - fault labels: JSON Lines, keys `start_us, end_us, root_cause_component,
//!   failure_type`
//! - regime schedule: JSON Lines, keys `start_us, end_us, regime_id`

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TelemetryError {
    #[error("malformed row at line {0}")]
    MalformedRow(usize),
    #[error("non-finite value at line {0}")]
    NonFiniteValue(usize),
    #[error("malformed line {0}: {1}")]
    MalformedLine(usize, String),
    #[error("duplicate span {1} in trace {0}")]
    DuplicateSpan(String, String),
    #[error("unknown log level at line {0}")]
    UnknownLevel(usize),
    #[error("invalid windowing: window_len_us={window_len_us}, stride_us={stride_us}")]
    InvalidWindowing { window_len_us: u64, stride_us: u64 },
    #[error("field cannot be written to CSV: {0:?}")]
    UnwritableField(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for TelemetryError {
    fn from(e: std::io::Error) -> Self {
        TelemetryError::Io(e.to_string())
    }
}

type Result<T> = std::result::Result<T, TelemetryError>;

/// Microseconds since the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn micros(self) -> u64 {
        self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSample {
    pub ts: Timestamp,
    pub component: String,
    pub metric_name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpanStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpan {
    pub trace_id: String,
    pub span_id: String,
    pub parent_span_id: Option<String>,
    pub component: String,
    pub operation: String,
    pub start: Timestamp,
    pub duration_us: u64,
    pub status: SpanStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Debug,
    Info,
    Warn,
    Error,
    Fatal,
}

impl LogLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            LogLevel::Debug => "debug",
            LogLevel::Info => "info",
            LogLevel::Warn => "warn",
            LogLevel::Error => "error",
            LogLevel::Fatal => "fatal",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "debug" => LogLevel::Debug,
            "info" => LogLevel::Info,
            "warn" => LogLevel::Warn,
            "error" => LogLevel::Error,
            "fatal" => LogLevel::Fatal,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub ts: Timestamp,
    pub component: String,
    pub level: LogLevel,
    pub message: String,
}

/// Half-open interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
    pub window_id: u64,
}

impl TimeWindow {
    pub fn new(start: u64, end: u64, window_id: u64) -> Self {
        debug_assert!(start < end);
        TimeWindow {
            start: Timestamp(start),
            end: Timestamp(end),
            window_id,
        }
    }

    pub fn len_us(&self) -> u64 {
        self.end.0 - self.start.0
    }

    pub fn contains(&self, ts: Timestamp) -> bool {
        self.start <= ts && ts < self.end
    }

    /// Length of the intersection with `[start, end)`.
    pub fn intersection_us(&self, start: u64, end: u64) -> u64 {
        let lo = self.start.0.max(start);
        let hi = self.end.0.min(end);
        hi.saturating_sub(lo)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct WindowLabel {
    pub anomalous: bool,
    pub root_cause_component: Option<String>,
    pub failure_type: Option<String>,
    /// Ground-truth workload regime; only known for generated telemetry.
    pub regime_id: Option<u32>,
}

/// A fault interval from the label file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInterval {
    pub start_us: u64,
    pub end_us: u64,
    pub root_cause_component: String,
    pub failure_type: String,
}

/// One segment of a regime schedule file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeInterval {
    pub start_us: u64,
    pub end_us: u64,
    pub regime_id: u32,
}

/// Optional ground truth attached to windows by interval intersection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelSource {
    pub faults: Option<Vec<FaultInterval>>,
    pub regimes: Option<Vec<RegimeInterval>>,
}

impl LabelSource {
    pub fn is_empty(&self) -> bool {
        self.faults.is_none() && self.regimes.is_none()
    }

    /// Label for `window`: anomalous on any positive overlap with a fault; the
    /// fault (and regime) with the largest overlap wins, earliest on ties.
    pub fn label_for(&self, window: &TimeWindow) -> Option<WindowLabel> {
        if self.is_empty() {
            return None;
        }
        let mut label = WindowLabel::default();
        if let Some(faults) = &self.faults {
            let mut best: Option<(u64, &FaultInterval)> = None;
            for f in faults {
                let ov = window.intersection_us(f.start_us, f.end_us);
                if ov > 0 && best.map_or(true, |(b, _)| ov > b) {
                    best = Some((ov, f));
                }
            }
            if let Some((_, f)) = best {
                label.anomalous = true;
                label.root_cause_component = Some(f.root_cause_component.clone());
                label.failure_type = Some(f.failure_type.clone());
            }
        }
        if let Some(regimes) = &self.regimes {
            let mut best: Option<(u64, u32)> = None;
            for r in regimes {
                let ov = window.intersection_us(r.start_us, r.end_us);
                if ov > 0 && best.map_or(true, |(b, _)| ov > b) {
                    best = Some((ov, r.regime_id));
                }
            }
            label.regime_id = best.map(|(_, id)| id);
        }
        Some(label)
    }
}

/// An owned multimodal observation of one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalObservation {
    pub window: TimeWindow,
    pub metrics: Vec<MetricSample>,
    pub spans: Vec<TraceSpan>,
    pub logs: Vec<LogRecord>,
    pub label: Option<WindowLabel>,
}

impl MultimodalObservation {
    pub fn view(&self) -> ObservationView<'_> {
        ObservationView {
            window: self.window,
            metrics: &self.metrics,
            spans: &self.spans,
            logs: &self.logs,
            label: self.label.as_ref(),
        }
    }
}

/// Borrowed observation, as handed out by [`Corpus::observation`].
#[derive(Debug, Clone, Copy)]
pub struct ObservationView<'a> {
    pub window: TimeWindow,
    pub metrics: &'a [MetricSample],
    pub spans: &'a [TraceSpan],
    pub logs: &'a [LogRecord],
    pub label: Option<&'a WindowLabel>,
}

impl<'a> ObservationView<'a> {
    pub fn to_owned(&self) -> MultimodalObservation {
        MultimodalObservation {
            window: self.window,
            metrics: self.metrics.to_vec(),
            spans: self.spans.to_vec(),
            logs: self.logs.to_vec(),
            label: self.label.cloned(),
        }
    }

    /// Sorted, de-duplicated component names seen in any modality.
    pub fn components(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .metrics
            .iter()
            .map(|m| m.component.clone())
            .chain(self.spans.iter().map(|s| s.component.clone()))
            .chain(self.logs.iter().map(|l| l.component.clone()))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Copy of the observation restricted to one component's items.
    pub fn filter_component(&self, component: &str) -> MultimodalObservation {
        MultimodalObservation {
            window: self.window,
            metrics: self.metrics.iter().filter(|m| m.component == component).cloned().collect(),
            spans: self.spans.iter().filter(|s| s.component == component).cloned().collect(),
            logs: self.logs.iter().filter(|l| l.component == component).cloned().collect(),
            label: self.label.cloned(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty() && self.spans.is_empty() && self.logs.is_empty()
    }
}

/// Item ranges of one window inside the corpus streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub window: TimeWindow,
    pub label: Option<WindowLabel>,
    pub metrics: Range<usize>,
    pub spans: Range<usize>,
    pub logs: Range<usize>,
}

/// Time-sorted telemetry streams plus the windows over them. Each window is a
/// contiguous range of every stream, so observations are borrowed views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub window_len_us: u64,
    pub stride_us: u64,
    pub metrics: Vec<MetricSample>,
    pub spans: Vec<TraceSpan>,
    pub logs: Vec<LogRecord>,
    pub windows: Vec<WindowEntry>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn observation(&self, i: usize) -> ObservationView<'_> {
        let w = &self.windows[i];
        ObservationView {
            window: w.window,
            metrics: &self.metrics[w.metrics.clone()],
            spans: &self.spans[w.spans.clone()],
            logs: &self.logs[w.logs.clone()],
            label: w.label.as_ref(),
        }
    }

    pub fn observations(&self) -> impl Iterator<Item = ObservationView<'_>> + '_ {
        (0..self.len()).map(move |i| self.observation(i))
    }

    /// True when at least one window carries a label.
    pub fn is_labeled(&self) -> bool {
        self.windows.iter().any(|w| w.label.is_some())
    }
}

/// Jaccard overlap |A ∩ B| / |A ∪ B| of two half-open windows.
pub fn overlap_ratio(a: &TimeWindow, b: &TimeWindow) -> f64 {
    let inter = a.intersection_us(b.start.0, b.end.0);
    let union = a.len_us() + b.len_us() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Group the three streams into windows of `window_len_us` every `stride_us`.
///
/// Window starts are aligned down to a multiple of the stride and run until
/// the last start not after the latest timestamp. Spans belong to the window
/// containing their start. Windows with no items at all are dropped; the
/// `window_id` is the window's index in the undropped sequence.
pub fn build_windows(
    mut metrics: Vec<MetricSample>,
    mut spans: Vec<TraceSpan>,
    mut logs: Vec<LogRecord>,
    window_len_us: u64,
    stride_us: u64,
    labels: &LabelSource,
) -> Result<Corpus> {
    if window_len_us == 0 || stride_us == 0 || stride_us > window_len_us {
        return Err(TelemetryError::InvalidWindowing {
            window_len_us,
            stride_us,
        });
    }
    metrics.sort_by_key(|m| m.ts);
    spans.sort_by_key(|s| s.start);
    logs.sort_by_key(|l| l.ts);

    let bounds = [
        metrics.first().map(|m| m.ts.0),
        spans.first().map(|s| s.start.0),
        logs.first().map(|l| l.ts.0),
    ];
    let min_ts = bounds.iter().flatten().min().copied();
    let max_ts = [
        metrics.last().map(|m| m.ts.0),
        spans.last().map(|s| s.start.0),
        logs.last().map(|l| l.ts.0),
    ]
    .iter()
    .flatten()
    .max()
    .copied();

    let mut windows = Vec::new();
    if let (Some(min_ts), Some(max_ts)) = (min_ts, max_ts) {
        // Earliest stride-aligned window that still contains min_ts.
        let t0 = if min_ts < window_len_us {
            0
        } else {
            ((min_ts - window_len_us) / stride_us + 1) * stride_us
        };
        let mut index = 0u64;
        let mut start = t0;
        while start <= max_ts {
            let end = start + window_len_us;
            let window = TimeWindow::new(start, end, index);
            let m = range_of(&metrics, |x| x.ts.0, start, end);
            let s = range_of(&spans, |x| x.start.0, start, end);
            let l = range_of(&logs, |x| x.ts.0, start, end);
            if !(m.is_empty() && s.is_empty() && l.is_empty()) {
                windows.push(WindowEntry {
                    window,
                    label: labels.label_for(&window),
                    metrics: m,
                    spans: s,
                    logs: l,
                });
            }
            index += 1;
            start += stride_us;
        }
    }

    Ok(Corpus {
        window_len_us,
        stride_us,
        metrics,
        spans,
        logs,
        windows,
    })
}

fn range_of<T>(items: &[T], key: impl Fn(&T) -> u64, start: u64, end: u64) -> Range<usize> {
    let lo = items.partition_point(|x| key(x) < start);
    let hi = items.partition_point(|x| key(x) < end);
    lo..hi
}

pub const METRICS_HEADER: &str = "ts_us,component,metric,value";

pub fn parse_metrics<R: Read>(raw: R) -> Result<Vec<MetricSample>> {
    let reader = BufReader::new(raw);
    let mut out = Vec::new();
    let mut saw_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if !saw_header {
            if line.trim() != METRICS_HEADER {
                return Err(TelemetryError::MalformedRow(line_no));
            }
            saw_header = true;
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 || cols[1].is_empty() || cols[2].is_empty() {
            return Err(TelemetryError::MalformedRow(line_no));
        }
        let ts: u64 = cols[0]
            .trim()
            .parse()
            .map_err(|_| TelemetryError::MalformedRow(line_no))?;
        let value: f64 = cols[3]
            .trim()
            .parse()
            .map_err(|_| TelemetryError::MalformedRow(line_no))?;
        if !value.is_finite() {
            return Err(TelemetryError::NonFiniteValue(line_no));
        }
        out.push(MetricSample {
            ts: Timestamp(ts),
            component: cols[1].to_string(),
            metric_name: cols[2].to_string(),
            value,
        });
    }
    Ok(out)
}

pub fn write_metrics<W: Write>(mut out: W, metrics: &[MetricSample]) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for m in metrics {
        for field in [&m.component, &m.metric_name] {
            if field.is_empty() || field.contains([',', '\n', '\r']) {
                return Err(TelemetryError::UnwritableField(field.clone()));
            }
        }
        // `{}` on f64 prints the shortest representation that parses back exactly.
        writeln!(out, "{},{},{},{}", m.ts.0, m.component, m.metric_name, m.value)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpanLine {
    trace_id: String,
    span_id: String,
    parent_span_id: Option<String>,
    component: String,
    operation: String,
    start_us: u64,
    duration_us: u64,
    status: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LogLine {
    ts_us: u64,
    component: String,
    level: String,
    message: String,
}

/// Non-blank lines with their 1-based line numbers.
fn json_lines<R: Read>(raw: R) -> impl Iterator<Item = Result<(usize, String)>> {
    BufReader::new(raw)
        .lines()
        .enumerate()
        .filter_map(|(idx, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((idx + 1, l))),
            Err(e) => Some(Err(e.into())),
        })
}

pub fn parse_traces<R: Read>(raw: R) -> Result<Vec<TraceSpan>> {
    let mut seen: HashSet<(String, String)> = HashSet::new();
    let mut out = Vec::new();
    for item in json_lines(raw) {
        let (line_no, line) = item?;
        let rec: SpanLine = serde_json::from_str(&line)
            .map_err(|e| TelemetryError::MalformedLine(line_no, e.to_string()))?;
        let status = match rec.status.as_str() {
            "ok" => SpanStatus::Ok,
            "error" => SpanStatus::Error,
            other => {
                return Err(TelemetryError::MalformedLine(
                    line_no,
                    format!("unknown status {other:?}"),
                ))
            }
        };
        if rec.parent_span_id.as_deref() == Some(rec.span_id.as_str()) {
            return Err(TelemetryError::MalformedLine(
                line_no,
                "span is its own parent".into(),
            ));
        }
        if !seen.insert((rec.trace_id.clone(), rec.span_id.clone())) {
            return Err(TelemetryError::DuplicateSpan(rec.trace_id, rec.span_id));
        }
        out.push(TraceSpan {
            trace_id: rec.trace_id,
            span_id: rec.span_id,
            parent_span_id: rec.parent_span_id,
            component: rec.component,
            operation: rec.operation,
            start: Timestamp(rec.start_us),
            duration_us: rec.duration_us,
            status,
        });
    }
    Ok(out)
}

pub fn write_traces<W: Write>(mut out: W, spans: &[TraceSpan]) -> Result<()> {
    for s in spans {
        let line = SpanLine {
            trace_id: s.trace_id.clone(),
            span_id: s.span_id.clone(),
            parent_span_id: s.parent_span_id.clone(),
            component: s.component.clone(),
            operation: s.operation.clone(),
            start_us: s.start.0,
            duration_us: s.duration_us,
            status: match s.status {
                SpanStatus::Ok => "ok".into(),
                SpanStatus::Error => "error".into(),
            },
        };
        write_json_line(&mut out, &line)?;
    }
    Ok(())
}

pub fn parse_logs<R: Read>(raw: R) -> Result<Vec<LogRecord>> {
    let mut out = Vec::new();
    for item in json_lines(raw) {
        let (line_no, line) = item?;
        let rec: LogLine = serde_json::from_str(&line)
            .map_err(|e| TelemetryError::MalformedLine(line_no, e.to_string()))?;
        let level = LogLevel::parse(&rec.level).ok_or(TelemetryError::UnknownLevel(line_no))?;
        if rec.message.trim().is_empty() {
            return Err(TelemetryError::MalformedLine(line_no, "empty message".into()));
        }
        out.push(LogRecord {
            ts: Timestamp(rec.ts_us),
            component: rec.component,
            level,
            message: rec.message,
        });
    }
    Ok(out)
}

pub fn write_logs<W: Write>(mut out: W, logs: &[LogRecord]) -> Result<()> {
    for l in logs {
        let line = LogLine {
            ts_us: l.ts.0,
            component: l.component.clone(),
            level: l.level.as_str().to_string(),
            message: l.message.clone(),
        };
        write_json_line(&mut out, &line)?;
    }
    Ok(())
}

pub fn parse_fault_labels<R: Read>(raw: R) -> Result<Vec<FaultInterval>> {
    parse_intervals(raw, |f: &FaultInterval| f.start_us < f.end_us)
}

pub fn write_fault_labels<W: Write>(mut out: W, faults: &[FaultInterval]) -> Result<()> {
    for f in faults {
        write_json_line(&mut out, f)?;
    }
    Ok(())
}

pub fn parse_regimes<R: Read>(raw: R) -> Result<Vec<RegimeInterval>> {
    parse_intervals(raw, |r: &RegimeInterval| r.start_us < r.end_us)
}

pub fn write_regimes<W: Write>(mut out: W, regimes: &[RegimeInterval]) -> Result<()> {
    for r in regimes {
        write_json_line(&mut out, r)?;
    }
    Ok(())
}

fn parse_intervals<R: Read, T: serde::de::DeserializeOwned>(
    raw: R,
    valid: impl Fn(&T) -> bool,
) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for item in json_lines(raw) {
        let (line_no, line) = item?;
        let rec: T = serde_json::from_str(&line)
            .map_err(|e| TelemetryError::MalformedLine(line_no, e.to_string()))?;
        if !valid(&rec) {
            return Err(TelemetryError::MalformedLine(line_no, "empty interval".into()));
        }
        out.push(rec);
    }
    Ok(out)
}

fn write_json_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| TelemetryError::Io(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metric(ts: u64) -> MetricSample {
        MetricSample {
            ts: Timestamp(ts),
            component: "svc-a".into(),
            metric_name: "cpu".into(),
            value: 0.5,
        }
    }

    fn span(trace: &str, id: &str, start: u64, duration: u64) -> TraceSpan {
        TraceSpan {
            trace_id: trace.into(),
            span_id: id.into(),
            parent_span_id: None,
            component: "svc-a".into(),
            operation: "get".into(),
            start: Timestamp(start),
            duration_us: duration,
            status: SpanStatus::Ok,
        }
    }

    #[test]
    fn parses_single_metric_row() {
        let got = parse_metrics("ts_us,component,metric,value\n0,svc-a,cpu,0.5".as_bytes()).unwrap();
        assert_eq!(got, vec![metric(0)]);
    }

    #[test]
    fn header_only_metrics_is_empty() {
        assert!(parse_metrics("ts_us,component,metric,value\n".as_bytes())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn metric_errors_carry_line_numbers() {
        let nan = "ts_us,component,metric,value\n5,svc-a,cpu,NaN";
        assert_eq!(parse_metrics(nan.as_bytes()), Err(TelemetryError::NonFiniteValue(2)));
        let inf = "ts_us,component,metric,value\n0,a,b,1\n5,svc-a,cpu,inf";
        assert_eq!(parse_metrics(inf.as_bytes()), Err(TelemetryError::NonFiniteValue(3)));
        let short = "ts_us,component,metric,value\n5,svc-a,cpu";
        assert_eq!(parse_metrics(short.as_bytes()), Err(TelemetryError::MalformedRow(2)));
        let bad = "ts_us,component,metric,value\nx,svc-a,cpu,1";
        assert_eq!(parse_metrics(bad.as_bytes()), Err(TelemetryError::MalformedRow(2)));
        assert_eq!(parse_metrics("a,b\n".as_bytes()), Err(TelemetryError::MalformedRow(1)));
    }

    const SPAN: &str = r#"{"trace_id":"t1","span_id":"s1","parent_span_id":null,"component":"svc-a","operation":"get","start_us":3,"duration_us":10,"status":"ok"}"#;

    #[test]
    fn parses_one_span() {
        let got = parse_traces(SPAN.as_bytes()).unwrap();
        assert_eq!(got, vec![span("t1", "s1", 3, 10)]);
    }

    #[test]
    fn duplicate_span_rejected() {
        let raw = format!("{SPAN}\n{SPAN}\n");
        assert_eq!(
            parse_traces(raw.as_bytes()),
            Err(TelemetryError::DuplicateSpan("t1".into(), "s1".into()))
        );
    }

    #[test]
    fn status_is_case_sensitive() {
        let raw = SPAN.replace("\"ok\"", "\"OK\"");
        assert!(matches!(
            parse_traces(raw.as_bytes()),
            Err(TelemetryError::MalformedLine(1, _))
        ));
    }

    #[test]
    fn self_parent_rejected() {
        let raw = SPAN.replace("null", "\"s1\"");
        assert!(matches!(
            parse_traces(raw.as_bytes()),
            Err(TelemetryError::MalformedLine(1, _))
        ));
    }

    #[test]
    fn parses_logs_skipping_blank_lines() {
        let line = r#"{"ts_us":1,"component":"svc-a","level":"error","message":"timeout"}"#;
        let got = parse_logs(line.as_bytes()).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].level, LogLevel::Error);
        assert_eq!(got[0].message, "timeout");

        let two = format!("{line}\n\n{line}\n");
        assert_eq!(parse_logs(two.as_bytes()).unwrap().len(), 2);

        let critical = line.replace("error", "critical");
        assert_eq!(parse_logs(critical.as_bytes()), Err(TelemetryError::UnknownLevel(1)));
    }

    #[test]
    fn half_open_membership() {
        let c = build_windows(vec![metric(10)], vec![], vec![], 60, 30, &LabelSource::default())
            .unwrap();
        // Window [30, 90) would not contain ts=10 and is empty, so only [0, 60) survives.
        assert_eq!(c.len(), 1);
        assert_eq!(c.windows[0].window, TimeWindow::new(0, 60, 0));
        assert_eq!(c.observation(0).metrics.len(), 1);
    }

    #[test]
    fn spans_belong_to_window_of_their_start() {
        let c = build_windows(
            vec![],
            vec![span("t", "s", 59, 100)],
            vec![],
            60,
            30,
            &LabelSource::default(),
        )
        .unwrap();
        let ids: Vec<_> = c.windows.iter().map(|w| w.window.start.0).collect();
        assert_eq!(ids, vec![0, 30]);
        assert_eq!(c.observation(0).spans.len(), 1);
    }

    #[test]
    fn window_starts_cover_the_range() {
        // One metric every 10us over [0, 200).
        let metrics = (0..20).map(|i| metric(i * 10)).collect();
        let c = build_windows(metrics, vec![], vec![], 60, 30, &LabelSource::default()).unwrap();
        let starts: Vec<_> = c.windows.iter().map(|w| w.window.start.0).collect();
        assert_eq!(starts, vec![0, 30, 60, 90, 120, 150, 180]);
        // Last window [180, 240) holds ts 180 and 190.
        assert_eq!(c.observation(6).metrics.len(), 2);
    }

    #[test]
    fn empty_windows_are_dropped() {
        let c = build_windows(
            vec![metric(0), metric(500)],
            vec![],
            vec![],
            60,
            30,
            &LabelSource::default(),
        )
        .unwrap();
        let ids: Vec<_> = c.windows.iter().map(|w| w.window.window_id).collect();
        // 500 lies in [450,510) and [480,540).
        assert_eq!(ids, vec![0, 15, 16]);
    }

    #[test]
    fn bad_windowing_rejected() {
        for (len, stride) in [(0, 0), (60, 0), (60, 61)] {
            assert!(matches!(
                build_windows(vec![], vec![], vec![], len, stride, &LabelSource::default()),
                Err(TelemetryError::InvalidWindowing { .. })
            ));
        }
    }

    #[test]
    fn labels_attach_by_intersection() {
        let metrics = (0..20).map(|i| metric(i * 10)).collect();
        let labels = LabelSource {
            faults: Some(vec![FaultInterval {
                start_us: 100,
                end_us: 120,
                root_cause_component: "svc-b".into(),
                failure_type: "cpu_stress".into(),
            }]),
            regimes: Some(vec![
                RegimeInterval { start_us: 0, end_us: 100, regime_id: 0 },
                RegimeInterval { start_us: 100, end_us: 300, regime_id: 1 },
            ]),
        };
        let c = build_windows(metrics, vec![], vec![], 60, 30, &labels).unwrap();
        let anomalous: Vec<_> = c
            .windows
            .iter()
            .filter(|w| w.label.as_ref().unwrap().anomalous)
            .map(|w| w.window.start.0)
            .collect();
        assert_eq!(anomalous, vec![60, 90]);
        let l = c.windows[2].label.as_ref().unwrap();
        assert_eq!(l.root_cause_component.as_deref(), Some("svc-b"));
        assert_eq!(l.failure_type.as_deref(), Some("cpu_stress"));
        // [60,120): 40us in regime 0, 20us in regime 1.
        assert_eq!(l.regime_id, Some(0));
        assert_eq!(c.windows[0].label.as_ref().unwrap().root_cause_component, None);
    }

    #[test]
    fn overlap_ratio_examples() {
        let a = TimeWindow::new(0, 60, 0);
        assert_eq!(overlap_ratio(&a, &a), 1.0);
        assert_eq!(overlap_ratio(&a, &TimeWindow::new(60, 120, 1)), 0.0);
        assert!((overlap_ratio(&a, &TimeWindow::new(30, 90, 1)) - 30.0 / 90.0).abs() < 1e-15);
    }

    #[test]
    fn writers_round_trip() {
        let metrics = vec![metric(0), MetricSample { value: 0.1 + 0.2, ..metric(7) }];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &metrics).unwrap();
        assert_eq!(parse_metrics(buf.as_slice()).unwrap(), metrics);

        let spans = vec![span("t", "a", 1, 2), TraceSpan {
            parent_span_id: Some("a".into()),
            status: SpanStatus::Error,
            ..span("t", "b", 1, 1)
        }];
        let mut buf = Vec::new();
        write_traces(&mut buf, &spans).unwrap();
        assert_eq!(parse_traces(buf.as_slice()).unwrap(), spans);
    }

    #[test]
    fn writer_rejects_commas() {
        let m = MetricSample { component: "a,b".into(), ..metric(0) };
        assert!(write_metrics(Vec::new(), &[m]).is_err());
    }
}
