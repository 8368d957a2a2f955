//! Canonical text renderings of one window's modalities.
//!
//! Renderings are sorted line sets, so permuting the items of a window never
//! changes the text. Numbers are printed with four fixed decimals.

use std::collections::BTreeMap;

use crate::embedding::Modality;
use crate::telemetry::{ObservationView, SpanStatus};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModalityText {
    pub modality: Modality,
    pub text: String,
}

pub fn textualize(obs: &ObservationView<'_>, modality: Modality) -> ModalityText {
    let lines = match modality {
        Modality::Metrics => metric_lines(obs),
        Modality::Traces => trace_lines(obs),
        Modality::Logs => log_lines(obs),
    };
    let text = if lines.is_empty() {
        format!("<empty:{}>", modality.tag())
    } else {
        lines.join("\n")
    };
    ModalityText { modality, text }
}

fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn metric_lines(obs: &ObservationView<'_>) -> Vec<String> {
    // (component, metric) -> [(ts, value)]
    let mut groups: BTreeMap<(&str, &str), Vec<(u64, f64)>> = BTreeMap::new();
    for m in obs.metrics {
        groups
            .entry((m.component.as_str(), m.metric_name.as_str()))
            .or_default()
            .push((m.ts.0, m.value));
    }
    let mut lines: Vec<String> = groups
        .into_iter()
        .map(|((component, metric), samples)| {
            // Latest timestamp wins; equal timestamps resolve to the larger value.
            let last = samples
                .iter()
                .copied()
                .max_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
                .map(|(_, v)| v)
                .unwrap_or_default();
            let mut values: Vec<f64> = samples.iter().map(|s| s.1).collect();
            let n = values.len();
            let mean = sorted_sum(&mut values) / n as f64;
            format!(
                "{component} {metric} n={n} mean={mean:.4} min={:.4} max={:.4} last={last:.4}",
                values[0],
                values[n - 1],
            )
        })
        .collect();
    lines.sort();
    lines
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn trace_lines(obs: &ObservationView<'_>) -> Vec<String> {
    let mut groups: BTreeMap<(&str, &str), (usize, Vec<f64>)> = BTreeMap::new();
    for s in obs.spans {
        let g = groups
            .entry((s.component.as_str(), s.operation.as_str()))
            .or_default();
        if s.status == SpanStatus::Error {
            g.0 += 1;
        }
        g.1.push(s.duration_us as f64 / 1000.0);
    }
    let mut lines: Vec<String> = groups
        .into_iter()
        .map(|((component, op), (errors, mut lat))| {
            let n = lat.len();
            let mean = sorted_sum(&mut lat) / n as f64;
            let p95 = nearest_rank(&lat, 95.0);
            format!("{component} {op} n={n} errors={errors} mean_ms={mean:.4} p95_ms={p95:.4}")
        })
        .collect();
    lines.sort();
    lines
}

/// Replaces every maximal run of ASCII digits with `<NUM>`.
pub fn log_template(message: &str) -> String {
    let mut out = String::with_capacity(message.len());
    let mut in_digits = false;
    for ch in message.chars() {
        if ch.is_ascii_digit() {
            if !in_digits {
                out.push_str("<NUM>");
                in_digits = true;
            }
        } else {
            in_digits = false;
            out.push(ch);
        }
    }
    out
}

fn log_lines(obs: &ObservationView<'_>) -> Vec<String> {
    let mut counts: BTreeMap<(&str, &str, String), usize> = BTreeMap::new();
    for l in obs.logs {
        *counts
            .entry((l.component.as_str(), l.level.as_str(), log_template(l.message.trim())))
            .or_default() += 1;
    }
    let mut lines: Vec<String> = counts
        .into_iter()
        .map(|((component, level, template), count)| {
            format!("{component} {level} {template} count={count}")
        })
        .collect();
    lines.sort();
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{
        LogLevel, LogRecord, MetricSample, MultimodalObservation, TimeWindow, Timestamp, TraceSpan,
    };

    fn obs() -> MultimodalObservation {
        MultimodalObservation {
            window: TimeWindow::new(0, 60, 0),
            metrics: vec![],
            spans: vec![],
            logs: vec![],
            label: None,
        }
    }

    fn log(msg: &str) -> LogRecord {
        LogRecord {
            ts: Timestamp(1),
            component: "svc-a".into(),
            level: LogLevel::Warn,
            message: msg.into(),
        }
    }

    #[test]
    fn empty_modalities_use_sentinels() {
        let o = obs();
        assert_eq!(textualize(&o.view(), Modality::Metrics).text, "<empty:M>");
        assert_eq!(textualize(&o.view(), Modality::Traces).text, "<empty:T>");
        assert_eq!(textualize(&o.view(), Modality::Logs).text, "<empty:L>");
    }

    #[test]
    fn single_metric_statistics() {
        let mut o = obs();
        o.metrics.push(MetricSample {
            ts: Timestamp(0),
            component: "svc-a".into(),
            metric_name: "cpu".into(),
            value: 0.5,
        });
        assert_eq!(
            textualize(&o.view(), Modality::Metrics).text,
            "svc-a cpu n=1 mean=0.5000 min=0.5000 max=0.5000 last=0.5000"
        );
    }

    #[test]
    fn log_digit_runs_become_placeholders() {
        assert_eq!(log_template("conn 123 timeout"), "conn <NUM> timeout");
        assert_eq!(log_template("a1b22c"), "a<NUM>b<NUM>c");
        let mut o = obs();
        o.logs = vec![log("conn 123 timeout"), log("conn 456 timeout")];
        assert_eq!(
            textualize(&o.view(), Modality::Logs).text,
            "svc-a warn conn <NUM> timeout count=2"
        );
    }

    #[test]
    fn trace_summary_uses_nearest_rank_p95() {
        let mut o = obs();
        for (i, d) in [1000u64, 2000, 3000, 4000].iter().enumerate() {
            o.spans.push(TraceSpan {
                trace_id: "t".into(),
                span_id: format!("s{i}"),
                parent_span_id: None,
                component: "svc-a".into(),
                operation: "get".into(),
                start: Timestamp(i as u64),
                duration_us: *d,
                status: if i == 0 { SpanStatus::Error } else { SpanStatus::Ok },
            });
        }
        assert_eq!(
            textualize(&o.view(), Modality::Traces).text,
            "svc-a get n=4 errors=1 mean_ms=2.5000 p95_ms=4.0000"
        );
        assert_eq!(nearest_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0), 3.0);
        assert_eq!(nearest_rank(&[7.0], 95.0), 7.0);
    }

    #[test]
    fn last_is_latest_timestamp() {
        let mut o = obs();
        for (ts, v) in [(5, 2.0), (1, 9.0), (3, 1.0)] {
            o.metrics.push(MetricSample {
                ts: Timestamp(ts),
                component: "c".into(),
                metric_name: "m".into(),
                value: v,
            });
        }
        assert_eq!(
            textualize(&o.view(), Modality::Metrics).text,
            "c m n=3 mean=4.0000 min=1.0000 max=9.0000 last=2.0000"
        );
    }
}
