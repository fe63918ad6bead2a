//! Whole-suite runs.

use std::fs;
use std::path::Path;

use super::config::RunConfig;
use super::metrics::MetricsReport;
use super::record::EpisodeRecord;
use super::runner::{run_episode_with, Resources};
use super::HarnessError;
use crate::comm::KnowledgeList;
use crate::world::Task;

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub report: MetricsReport,
    /// Sorted by (task, seed).
    pub records: Vec<EpisodeRecord>,
}

fn io(e: std::io::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

/// File name of one episode's record.
pub fn record_file_name(task: &str, seed: u64) -> String {
    format!("{task}_seed{seed}.jsonl")
}

/// Run every (task, seed) pair of the config. Episodes are independent
/// unless knowledge persists across them, so they run on scoped threads;
/// results are merged in (task, seed) order.
pub fn run_suite(config: &RunConfig, res: &Resources) -> Result<BenchmarkOutput, HarnessError> {
    config.validate()?;
    let tasks: Vec<Task> = config.tasks()?;
    let grid: Vec<(&Task, u64)> = tasks.iter().flat_map(|t| config.seeds.iter().map(move |s| (t, *s))).collect();
    let mut records = if config.comm.persist_knowledge {
        let mut out = Vec::with_capacity(grid.len());
        let mut carried = KnowledgeList::default();
        for (task, seed) in &grid {
            let r = run_episode_with(config, res, task, *seed, carried.clone())?;
            carried = r.footer.knowledge.clone();
            out.push(r);
        }
        out
    } else {
        let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(grid.len().max(1));
        let chunk = grid.len().div_ceil(workers.max(1)).max(1);
        let results: Vec<Result<Vec<EpisodeRecord>, HarnessError>> = std::thread::scope(|s| {
            let handles: Vec<_> = grid
                .chunks(chunk)
                .map(|part| {
                    s.spawn(move || {
                        part.iter()
                            .map(|(task, seed)| run_episode_with(config, res, task, *seed, KnowledgeList::default()))
                            .collect::<Result<Vec<_>, _>>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("episode thread panicked")).collect()
        });
        let mut out = Vec::with_capacity(grid.len());
        for r in results {
            out.extend(r?);
        }
        out
    };
    records.sort_by(|a, b| (&a.header.task.id, a.header.seed).cmp(&(&b.header.task.id, b.header.seed)));
    let report = MetricsReport::from_records(&records);
    Ok(BenchmarkOutput { report, records })
}

/// Write records, the config and both report renderings under `dir`.
pub fn write_outputs(dir: &Path, config: &RunConfig, out: &BenchmarkOutput) -> Result<(), HarnessError> {
    let records_dir = dir.join("records");
    fs::create_dir_all(&records_dir).map_err(io)?;
    for r in &out.records {
        let file = fs::File::create(records_dir.join(record_file_name(&r.header.task.id, r.header.seed))).map_err(io)?;
        r.write_jsonl(std::io::BufWriter::new(file))?;
    }
    fs::write(dir.join("config.toml"), config.to_toml_string()).map_err(io)?;
    fs::write(dir.join("report.json"), out.report.to_json()).map_err(io)?;
    fs::write(dir.join("report.txt"), out.report.render_table()).map_err(io)?;
    Ok(())
}

/// Load resources, run the suite and write everything to `out_dir` when
/// one is configured.
pub fn run_benchmark(config: &RunConfig) -> Result<MetricsReport, HarnessError> {
    config.validate()?;
    let res = Resources::load(config)?;
    let out = run_suite(config, &res)?;
    if let Some(dir) = &config.out_dir {
        write_outputs(dir, config, &out)?;
    }
    Ok(out.report)
}

/// Read every record under `dir/records`, sorted by file name.
pub fn read_records(dir: &Path) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let mut paths: Vec<_> = fs::read_dir(dir.join("records"))
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "jsonl").unwrap_or(false))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let file = fs::File::open(p).map_err(io)?;
            EpisodeRecord::read_jsonl(std::io::BufReader::new(file))
        })
        .collect()
}
