//! Average steps and transport rate, recomputable from records alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::record::EpisodeRecord;

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// One episode's numbers, straight from its footer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub task: String,
    pub seed: u64,
    pub completed: bool,
    pub steps_used: u32,
    pub horizon: u32,
    pub delivered: u32,
    pub total_targets: u32,
    pub goal_progress: f64,
    pub messages_sent: u32,
    pub backend_failures: u32,
    pub parse_failures: u32,
    pub fallbacks: u32,
}

impl EpisodeRow {
    pub fn from_record(r: &EpisodeRecord) -> Self {
        let f = &r.footer;
        EpisodeRow {
            task: r.header.task.id.clone(),
            seed: r.header.seed,
            completed: f.completed,
            steps_used: f.steps_used,
            horizon: f.horizon,
            delivered: f.delivered,
            total_targets: f.total_targets,
            goal_progress: f.goal_progress,
            messages_sent: f.messages_sent,
            backend_failures: f.backend_failures,
            parse_failures: f.parse_failures,
            fallbacks: f.fallbacks,
        }
    }
}

/// Aggregate over a group of episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub episodes: u32,
    pub completed: u32,
    pub incomplete: u32,
    /// Mean steps over completed episodes; `None` when none completed.
    pub average_steps: Option<f64>,
    /// Mean steps over all episodes, incomplete ones counted at the steps
    /// they used (their horizon).
    pub mean_steps_all: f64,
    pub delivered: u32,
    pub total_targets: u32,
    /// Delivered over total, in percent.
    pub transport_rate: f64,
    pub messages_sent: u32,
    pub backend_failures: u32,
    pub parse_failures: u32,
    pub fallbacks: u32,
}

impl GroupMetrics {
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a EpisodeRow>) -> Self {
        let rows: Vec<&EpisodeRow> = rows.into_iter().collect();
        let done: Vec<f64> = rows.iter().filter(|r| r.completed).map(|r| r.steps_used as f64).collect();
        let delivered: u32 = rows.iter().map(|r| r.delivered).sum();
        let total: u32 = rows.iter().map(|r| r.total_targets).sum();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let all: Vec<f64> = rows.iter().map(|r| r.steps_used as f64).collect();
        GroupMetrics {
            episodes: rows.len() as u32,
            completed: done.len() as u32,
            incomplete: (rows.len() - done.len()) as u32,
            average_steps: (!done.is_empty()).then(|| mean(&done)),
            mean_steps_all: if all.is_empty() { 0.0 } else { mean(&all) },
            delivered,
            total_targets: total,
            transport_rate: if total == 0 { 100.0 } else { 100.0 * delivered as f64 / total as f64 },
            messages_sent: rows.iter().map(|r| r.messages_sent).sum(),
            backend_failures: rows.iter().map(|r| r.backend_failures).sum(),
            parse_failures: rows.iter().map(|r| r.parse_failures).sum(),
            fallbacks: rows.iter().map(|r| r.fallbacks).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    /// Rows sorted by (task, seed).
    pub rows: Vec<EpisodeRow>,
    pub per_task: BTreeMap<String, GroupMetrics>,
    pub aggregate: GroupMetrics,
}

impl MetricsReport {
    pub fn from_rows(mut rows: Vec<EpisodeRow>) -> Self {
        rows.sort_by(|a, b| (&a.task, a.seed).cmp(&(&b.task, b.seed)));
        let mut tasks: BTreeMap<String, Vec<&EpisodeRow>> = BTreeMap::new();
        for r in &rows {
            tasks.entry(r.task.clone()).or_default().push(r);
        }
        let per_task = tasks.into_iter().map(|(t, rs)| (t, GroupMetrics::from_rows(rs))).collect();
        let aggregate = GroupMetrics::from_rows(&rows);
        MetricsReport { schema_version: METRICS_SCHEMA_VERSION, rows, per_task, aggregate }
    }

    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        Self::from_rows(records.iter().map(EpisodeRow::from_record).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Per-task summary followed by the per-seed table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>5} {:>5} {:>10} {:>10} {:>9} {:>5} {:>5}",
            "task", "eps", "inc", "avg_steps", "mean_all", "transport", "fail", "fallb"
        );
        let line = |out: &mut String, name: &str, g: &GroupMetrics| {
            let avg = g.average_steps.map(|a| format!("{a:.1}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<16} {:>5} {:>5} {:>10} {:>10.1} {:>8.1}% {:>5} {:>5}",
                name, g.episodes, g.incomplete, avg, g.mean_steps_all, g.transport_rate, g.backend_failures, g.fallbacks
            );
        };
        for (task, g) in &self.per_task {
            line(&mut out, task, g);
        }
        line(&mut out, "all", &self.aggregate);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<16} {:>6} {:>5} {:>6} {:>9}", "task", "seed", "done", "steps", "delivered");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:>6} {:>5} {:>6} {:>5}/{:<3}",
                r.task,
                r.seed,
                if r.completed { "yes" } else { "no" },
                r.steps_used,
                r.delivered,
                r.total_targets
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(task: &str, seed: u64, completed: bool, steps: u32, delivered: u32) -> EpisodeRow {
        EpisodeRow {
            task: task.into(),
            seed,
            completed,
            steps_used: steps,
            horizon: 250,
            delivered,
            total_targets: 4,
            goal_progress: delivered as f64 / 4.0,
            messages_sent: 0,
            backend_failures: 0,
            parse_failures: 0,
            fallbacks: 0,
        }
    }

    #[test]
    fn incomplete_episodes_are_reported_separately() {
        let r = MetricsReport::from_rows(vec![row("a", 1, true, 40, 4), row("a", 0, false, 250, 2), row("a", 2, true, 60, 4)]);
        let g = &r.per_task["a"];
        assert_eq!(g.average_steps, Some(50.0));
        assert_eq!(g.incomplete, 1);
        assert!((g.mean_steps_all - 350.0 / 3.0).abs() < 1e-9);
        assert!((g.transport_rate - 100.0 * 10.0 / 12.0).abs() < 1e-9);
        assert_eq!(r.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn no_completions_means_no_average() {
        let r = MetricsReport::from_rows(vec![row("b", 0, false, 250, 0)]);
        assert_eq!(r.aggregate.average_steps, None);
        assert_eq!(r.aggregate.transport_rate, 0.0);
    }

    #[test]
    fn json_roundtrip() {
        let r = MetricsReport::from_rows(vec![row("a", 0, true, 12, 4)]);
        assert_eq!(MetricsReport::from_json(&r.to_json()).unwrap(), r);
        assert!(r.render_table().contains("12"));
    }
}
