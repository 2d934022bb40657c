//! Aggregation of run results. Everything here is a pure function of the
//! stored results, so reports can be rebuilt without retraining.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::{MethodKind, RunResult};
use crate::error::Result;
use crate::metrics::{avg_success, ci90, forgetting, forward_transfer, Interval};

/// Header of `metrics.csv`. Stable across versions.
pub const METRICS_HEADER: &str = "method,seed,replay_ratio,metric,value";

/// Metric names, in the order rows are emitted for each run.
pub const SUCCESS: &str = "success";
pub const FORWARD_TRANSFER: &str = "forward_transfer";
pub const FORGETTING: &str = "forgetting";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: MethodKind,
    pub seed: u64,
    /// Set for replay methods only.
    pub replay_ratio: Option<f64>,
    pub metric: String,
    pub value: f64,
}

/// One row per (run, metric). Incomplete runs contribute nothing. Forward
/// transfer needs a single-task reference for the run's seed; forgetting and
/// transfer are skipped for jointly trained runs.
pub fn metric_rows(results: &[RunResult], references: &BTreeMap<u64, Vec<f64>>) -> Result<Vec<MetricRow>> {
    let mut rows = Vec::new();
    for r in results.iter().filter(|r| r.completed) {
        let s = r.success_matrix()?;
        let replay_ratio = r.method.uses_replay_ratio().then_some(r.config.replay_ratio);
        let mut push = |metric: &str, value: f64| {
            rows.push(MetricRow { method: r.method, seed: r.seed, replay_ratio, metric: metric.to_string(), value })
        };
        push(SUCCESS, avg_success(&s));
        if !r.joint {
            if let Some(ft) = references.get(&r.seed).map(|reference| forward_transfer(&s, reference)).transpose()? {
                if let Some(mean) = ft.mean {
                    push(FORWARD_TRANSFER, mean);
                }
            }
            if let Some(mean) = forgetting(&s).mean {
                push(FORGETTING, mean);
            }
        }
        for (task, v) in s.final_column().into_iter().enumerate() {
            push(&format!("success_task{task}"), v);
        }
    }
    Ok(rows)
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        let ratio = r.replay_ratio.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{}", r.method.tag(), r.seed, ratio, r.metric, r.value);
    }
    out
}

/// Groups `metric` values by (method, ratio) in first-seen order.
type Groups = Vec<((MethodKind, Option<f64>), Vec<f64>)>;

fn grouped(rows: &[MetricRow], metric: &str) -> Groups {
    let mut groups: Groups = Vec::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        let key = (r.method, r.replay_ratio);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.value),
            None => groups.push((key, vec![r.value])),
        }
    }
    groups
}

/// Mean and 90% interval; the half-width is absent with fewer than two seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub half_width: Option<f64>,
}

pub fn aggregate(values: &[f64]) -> Option<Aggregate> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let half_width = ci90(values).ok().map(|Interval { half_width, .. }| half_width);
    Some(Aggregate { n: values.len(), mean, half_width })
}

fn cell(a: Option<Aggregate>, percent: bool) -> String {
    let k = if percent { 100.0 } else { 1.0 };
    match a {
        None => "n/a".into(),
        Some(Aggregate { mean, half_width: Some(h), .. }) => format!("{:.1} ± {:.1}", mean * k, h * k),
        Some(Aggregate { mean, .. }) => format!("{:.1}", mean * k),
    }
}

fn method_name(method: MethodKind, ratio: Option<f64>) -> String {
    match ratio {
        Some(r) => format!("{} (r={r})", method.display_name()),
        None => method.display_name().to_string(),
    }
}

/// Markdown table: average success, forward transfer and forgetting per
/// method, in percent, as mean ± 90% interval over seeds.
pub fn summary_table(results: &[RunResult], rows: &[MetricRow]) -> String {
    let success = grouped(rows, SUCCESS);
    let ft = grouped(rows, FORWARD_TRANSFER);
    let forget = grouped(rows, FORGETTING);
    let lookup = |g: &Groups, key| {
        g.iter().find(|(k, _)| *k == key).and_then(|(_, v)| aggregate(v))
    };
    let mut out = String::from("| Method | Seeds | Success (%) | Forward transfer (%) | Forgetting (%) |\n|---|---|---|---|---|\n");
    for (key, values) in &success {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            method_name(key.0, key.1),
            values.len(),
            cell(aggregate(values), true),
            cell(lookup(&ft, *key), true),
            cell(lookup(&forget, *key), true),
        );
    }
    let failed: Vec<&RunResult> = results.iter().filter(|r| !r.completed).collect();
    if !failed.is_empty() {
        out.push_str("\nIncomplete runs:\n\n");
        for r in failed {
            let _ = writeln!(out, "- {} seed {}: {}", r.label, r.seed, r.error.as_deref().unwrap_or("unknown error"));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    /// Success per method, in the configured method order.
    pub cells: Vec<(MethodKind, Option<Aggregate>)>,
}

/// Average success against replay ratio, one row per ratio.
pub fn sweep_rows(rows: &[MetricRow], methods: &[MethodKind], ratios: &[f64]) -> Vec<SweepRow> {
    let success = grouped(rows, SUCCESS);
    ratios
        .iter()
        .map(|&ratio| SweepRow {
            ratio,
            cells: methods
                .iter()
                .map(|&m| {
                    let values = success.iter().find(|(k, _)| *k == (m, Some(ratio))).map(|(_, v)| v.as_slice());
                    (m, values.and_then(aggregate))
                })
                .collect(),
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let Some(first) = rows.first() else { return String::new() };
    let mut out = String::from("| Replay ratio |");
    for (m, _) in &first.cells {
        let _ = write!(out, " {} |", m.display_name());
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(first.cells.len()));
    out.push('\n');
    for row in rows {
        let _ = write!(out, "| {} |", row.ratio);
        for (_, a) in &row.cells {
            let _ = write!(out, " {} |", cell(*a, true));
        }
        out.push('\n');
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("replay_ratio,method,seeds,mean,ci90_half_width\n");
    for row in rows {
        for (m, a) in &row.cells {
            let (n, mean, h) = match a {
                Some(a) => (a.n.to_string(), a.mean.to_string(), a.half_width.map(|h| h.to_string()).unwrap_or_default()),
                None => ("0".into(), String::new(), String::new()),
            };
            let _ = writeln!(out, "{},{},{n},{mean},{h}", row.ratio, m.tag());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{MethodConfig, RESULT_SCHEMA_VERSION};
    use crate::pathworld::StreamMode;

    fn result(method: MethodKind, seed: u64, evaluations: Vec<Vec<f64>>) -> RunResult {
        let tasks = evaluations[0].len();
        RunResult {
            schema_version: RESULT_SCHEMA_VERSION,
            label: MethodConfig::for_method(method).label(),
            method,
            seed,
            stream_mode: StreamMode::Sequential,
            config: MethodConfig::for_method(method),
            evaluations,
            trained_at: (1..=tasks).collect(),
            buckets: Vec::new(),
            quality: Vec::new(),
            boundary_queries: 0,
            joint: method == MethodKind::Multitask,
            completed: true,
            error: None,
            wall_clock_secs: 1.0,
        }
    }

    fn finetune_like(seed: u64) -> RunResult {
        result(MethodKind::Finetune, seed, vec![vec![0.0, 0.0], vec![0.8, 0.0], vec![0.2, 0.6]])
    }

    #[test]
    fn rows_and_csv() {
        let refs = BTreeMap::from([(1, vec![0.8, 0.8])]);
        let rows = metric_rows(&[finetune_like(1)], &refs).unwrap();
        let csv = metrics_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines[1], "finetune,1,,success,0.4");
        // D = (0.8 + 0)/2 = 0.4 and (0.6 + 0)/2 = 0.3 against D_ref = 0.4: FT = (0 + (-0.1/0.6))/2.
        let ft: f64 = lines[2].rsplit(',').next().unwrap().parse().unwrap();
        assert!(lines[2].starts_with("finetune,1,,forward_transfer,"));
        assert!((ft - (-0.1 / 0.6) / 2.0).abs() < 1e-12);
        assert_eq!(lines[3], "finetune,1,,forgetting,0.30000000000000004");
        assert_eq!(lines[4], "finetune,1,,success_task0,0.2");
        assert_eq!(lines.len(), 6);
    }

    #[test]
    fn joint_and_incomplete_runs() {
        let mut failed = finetune_like(2);
        failed.completed = false;
        failed.error = Some("boom".into());
        let joint = result(MethodKind::Multitask, 1, vec![vec![0.0, 0.0], vec![0.9, 1.0], vec![0.9, 1.0]]);
        let results = [joint, failed];
        let rows = metric_rows(&results, &BTreeMap::from([(1, vec![0.5, 0.5])])).unwrap();
        assert!(rows.iter().all(|r| r.method == MethodKind::Multitask));
        assert!(rows.iter().all(|r| r.metric != FORGETTING && r.metric != FORWARD_TRANSFER));
        let table = summary_table(&results, &rows);
        assert!(table.contains("| Multitask | 1 | 95.0 | n/a | n/a |"), "{table}");
        assert!(table.contains("finetune seed 2: boom"));
    }

    #[test]
    fn summary_uses_intervals() {
        let results = [finetune_like(1), finetune_like(2)];
        let rows = metric_rows(&results, &BTreeMap::new()).unwrap();
        let table = summary_table(&results, &rows);
        assert!(table.contains("| Finetune | 2 | 40.0 ± 0.0 | n/a | 30.0 ± 0.0 |"), "{table}");
    }

    #[test]
    fn sweep_layout() {
        let mk = |ratio: f64, seed: u64, value: f64| MetricRow {
            method: MethodKind::Tdgr,
            seed,
            replay_ratio: Some(ratio),
            metric: SUCCESS.into(),
            value,
        };
        let rows = vec![mk(0.5, 1, 0.5), mk(0.5, 2, 0.7), mk(0.9, 1, 0.9)];
        let sweep = sweep_rows(&rows, &[MethodKind::Tdgr, MethodKind::Dgr], &[0.5, 0.9]);
        assert_eq!(sweep.len(), 2);
        let a = sweep[0].cells[0].1.unwrap();
        assert_eq!(a.n, 2);
        assert!((a.mean - 0.6).abs() < 1e-12);
        assert!(sweep[0].cells[1].1.is_none());
        let table = sweep_table(&sweep);
        assert_eq!(table.lines().count(), 4);
        assert!(table.contains("| 0.9 | 90.0 | n/a |"), "{table}");
        assert!(sweep_csv(&sweep).contains("0.5,dgr,0,,\n"));
    }
}
