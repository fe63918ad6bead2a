//! `liet`: collect exploration data, train the cost model, run episodes,
//! ablations and replays.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use liet_core::harness::{self, RunConfig, Verdict};
use liet_core::llm::{BackendSpec, HttpSpec};
use liet_core::utility::{
    collect_exploratory_dataset, evaluate_utility, train_utility, CollectConfig, ExploratoryDataset, TrainConfig,
    UtilityModel,
};
use liet_core::world::suite;

#[derive(Parser, Debug)]
#[command(name = "liet", version, about = "Cooperative embodied agents with learned costs and evolving team knowledge")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Run configuration file (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single seed; replaces the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `scripted`, `scripted:<ruleset>`, or an http(s) chat-completions URL.
    #[arg(long, global = true)]
    backend: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Random exploration episodes labelled with true action costs.
    Collect {
        #[arg(long, default_value = "household")]
        suite: String,
        /// Episodes per task.
        #[arg(long, default_value_t = 2)]
        episodes: usize,
        #[arg(long)]
        horizon: Option<u32>,
    },
    /// Fit the cost model on a collected dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Holdout error and per-state rank correlation of a trained model.
    EvalUtility {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the configured task suite and report metrics.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the four ablation variants over the same grid.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-execute recorded episodes and compare.
    Replay {
        /// A record file or a directory containing `records/`.
        path: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    suite: Option<String>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    utility_model: Option<PathBuf>,
    /// Disable the learned cost model.
    #[arg(long)]
    no_utility: bool,
    /// Store prompt and observation digests instead of full text.
    #[arg(long)]
    hash_only: bool,
}

fn parse_backend(text: &str, base: &BackendSpec) -> Result<BackendSpec> {
    if text == "scripted" {
        return Ok(BackendSpec::Scripted { ruleset: "default".into() });
    }
    if let Some(ruleset) = text.strip_prefix("scripted:") {
        return Ok(BackendSpec::Scripted { ruleset: ruleset.into() });
    }
    if text.starts_with("http://") || text.starts_with("https://") {
        let spec = match base {
            BackendSpec::Http(h) => HttpSpec { endpoint: text.into(), ..h.clone() },
            BackendSpec::Scripted { .. } => HttpSpec { endpoint: text.into(), ..Default::default() },
        };
        return Ok(BackendSpec::Http(spec));
    }
    bail!("unknown backend {text:?}; expected scripted, scripted:<ruleset> or a URL")
}

fn run_config(global: &Global, run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &global.out {
        cfg.out_dir = Some(out.clone());
    }
    if let Some(b) = &global.backend {
        cfg.backend = parse_backend(b, &cfg.backend)?;
    }
    if let Some(s) = &run.suite {
        cfg.suite = s.clone();
    }
    if let Some(n) = run.agents {
        cfg.n_agents = n;
    }
    if let Some(m) = &run.utility_model {
        cfg.utility_model = Some(m.clone());
    }
    if run.no_utility {
        cfg.flags.use_utility = false;
    }
    cfg.hash_only |= run.hash_only;
    cfg.validate()?;
    Ok(cfg)
}

fn read_dataset(path: &Path) -> Result<ExploratoryDataset> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(ExploratoryDataset::read_jsonl(BufReader::new(file))?)
}

fn replay_path(path: &Path) -> Result<bool> {
    let records = if path.is_dir() {
        harness::read_records(path)?
    } else {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        vec![harness::EpisodeRecord::from_jsonl(&text)?]
    };
    let mut ok = true;
    for r in &records {
        let verdict = harness::replay(r)?;
        let name = format!("{} seed {}", r.header.task.id, r.header.seed);
        match verdict {
            Verdict::Pass => println!("{name}: pass"),
            Verdict::Diverged { tick, detail } => {
                ok = false;
                println!("{name}: diverged at tick {tick} ({detail})");
            }
        }
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    let g = &cli.global;
    match &cli.command {
        Command::Collect { suite: id, episodes, horizon } => {
            let tasks = suite(id).with_context(|| format!("unknown suite {id:?}"))?;
            let cfg = CollectConfig {
                episodes_per_task: *episodes,
                seed: g.seed.unwrap_or(0),
                exploration_horizon: horizon.or(CollectConfig::default().exploration_horizon),
                ..Default::default()
            };
            let ds = collect_exploratory_dataset(&tasks, &cfg)?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("dataset.jsonl"));
            ds.write_jsonl(std::io::BufWriter::new(fs::File::create(&out)?))?;
            println!("{} train, {} holdout samples -> {}", ds.train().len(), ds.holdout().len(), out.display());
        }
        Command::Train { data, epochs, learning_rate } => {
            let ds = read_dataset(data)?;
            let mut cfg = TrainConfig { seed: g.seed.unwrap_or(0), ..Default::default() };
            if let Some(e) = epochs {
                cfg.epochs = *e;
            }
            if let Some(lr) = learning_rate {
                cfg.learning_rate = *lr;
            }
            let model = train_utility(&ds, &cfg)?;
            let out = g.out.clone().unwrap_or_else(|| PathBuf::from("utility.json"));
            model.save(&out)?;
            println!("model -> {}", out.display());
        }
        Command::EvalUtility { model, data } => {
            let model = UtilityModel::load(model)?;
            let ds = read_dataset(data)?;
            let probes = ds.holdout_probes();
            let holdout = ds.holdout();
            let samples = if probes.is_empty() { &holdout } else { &probes };
            let report = evaluate_utility(&model, samples).or_else(|_| evaluate_utility(&model, &holdout))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Run { run } => {
            let cfg = run_config(g, run)?;
            let report = harness::run_benchmark(&cfg)?;
            print!("{}", report.render_table());
        }
        Command::Ablate { run } => {
            let cfg = run_config(g, run)?;
            let report = harness::run_ablation(&cfg)?;
            print!("{}", report.render_table());
        }
        Command::Replay { path } => return replay_path(path),
    }
    Ok(true)
}
