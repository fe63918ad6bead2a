//! The four-row ablation suite.
//!
//! Reference average steps for the rows, in order (two agents, symbolic
//! household tasks, a large hosted model): full 40.3, without the learned
//! utility 52.7, prompted cost estimation 57.6, without reflection 49.3.
//! They document the expected ordering; desk-scale runs with the scripted
//! backend are not expected to match them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::benchmark::{run_suite, write_outputs};
use super::config::RunConfig;
use super::metrics::MetricsReport;
use super::runner::Resources;
use super::HarnessError;
use crate::agent::AblationFlags;

/// Row names, flags and reference average steps in report order.
pub fn ablation_rows() -> [(&'static str, AblationFlags, f64); 4] {
    [
        ("full", AblationFlags::full(), 40.3),
        ("without_utility", AblationFlags::without_utility(), 52.7),
        ("prompted_costs", AblationFlags::prompted_costs(), 57.6),
        ("without_reflection", AblationFlags::without_reflection(), 49.3),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub flags: AblationFlags,
    pub reference_steps: f64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>10} {:>10} {:>5} {:>10} {:>10}\n",
            "variant", "avg_steps", "mean_all", "inc", "transport", "reference"
        );
        for r in &self.rows {
            let g = &r.report.aggregate;
            let avg = g.average_steps.map(|a| format!("{a:.1}")).unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "{:<20} {:>10} {:>10.1} {:>5} {:>9.1}% {:>10.1}\n",
                r.name, avg, g.mean_steps_all, g.incomplete, g.transport_rate, r.reference_steps
            ));
        }
        out
    }
}

/// Run all four variants of `config` over the same (task, seed) grid. The
/// resources must carry a cost model for the rows that use one.
pub fn run_ablation_with(config: &RunConfig, res: &Resources) -> Result<AblationReport, HarnessError> {
    let mut rows = Vec::new();
    for (name, flags, reference_steps) in ablation_rows() {
        let variant = RunConfig { flags, out_dir: config.out_dir.as_ref().map(|d| d.join(name)), ..config.clone() };
        let out = run_suite(&variant, res)?;
        if let Some(dir) = &variant.out_dir {
            write_outputs(dir, &variant, &out)?;
        }
        rows.push(AblationRow { name: name.to_string(), flags, reference_steps, report: out.report });
    }
    let report = AblationReport { rows };
    if let Some(dir) = &config.out_dir {
        write_report(dir, &report)?;
    }
    Ok(report)
}

/// Load the utility model named by the config and run the suite.
pub fn run_ablation(config: &RunConfig) -> Result<AblationReport, HarnessError> {
    let full = RunConfig { flags: AblationFlags::full(), ..config.clone() };
    full.validate()?;
    let res = Resources::load(&full)?;
    run_ablation_with(config, &res)
}

fn write_report(dir: &Path, report: &AblationReport) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(e.to_string());
    std::fs::create_dir_all(dir).map_err(io)?;
    std::fs::write(dir.join("ablation.json"), report.to_json()).map_err(io)?;
    std::fs::write(dir.join("ablation.txt"), report.render_table()).map_err(io)
}
