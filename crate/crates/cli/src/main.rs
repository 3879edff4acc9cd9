use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cmpsearch::learning::CounterMode;
use cmpsearch::smallworld::ShortcutMode;
use cmpsearch::{PolicyKind, TiePolicy};
use cmpsearch_cli::commands::{self, LearnFiles};
use cmpsearch_cli::config::{parse_instance, ExperimentConfig, InstanceSpec};
use cmpsearch_cli::record::ResultRecord;
use cmpsearch_service::catalog::Catalog;
use cmpsearch_service::{AppState, ServiceConfig};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "cmpsearch", version, about = "Comparison-oracle search and small-world routing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean search cost of a selection policy.
    Search(RunArgs),
    /// Greedy forwarding hops on a grid with one shortcut per node.
    Forward(RunArgs),
    /// Adaptive run of the learned policy.
    Learn {
        #[command(flatten)]
        run: RunArgs,
        /// Learned state to start from.
        #[arg(long)]
        state_in: Option<PathBuf>,
        /// Where to write the final learned state.
        #[arg(long)]
        state_out: Option<PathBuf>,
        /// CSV of per-timeslot costs.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Exact structural checks on an instance, or a sweep of random ones.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        /// Check the normalizer bound on this many random instances instead.
        #[arg(long)]
        sweep: Option<u64>,
    },
    /// Lower-bound check on the hierarchical instance.
    Lowerbound {
        #[arg(long, default_value_t = 4)]
        branching: usize,
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// HTTP service for person-in-the-loop searches.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Directory for the event log and snapshots; state is in memory without it.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Extra JSON datasets to offer next to the bundled ones.
        #[arg(long)]
        datasets: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Minutes of inactivity before a session is abandoned.
        #[arg(long, default_value_t = 30)]
        timeout_min: u64,
        #[arg(long, default_value_t = 100)]
        snapshot_every: u64,
    },
}

#[derive(Args, Clone, Default)]
struct OutputArgs {
    /// JSON-lines file to append the result record to; stdout when unset.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Directory for result files named after the subcommand.
    #[arg(long, env = "CMPSEARCH_OUTPUT_DIR", hide_env_values = true)]
    output_dir: Option<PathBuf>,
    /// Include wall-clock time in the record.
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance as kind:args, e.g. grid:32x32, line:0,1,3, hierarchical:4,5,
    /// random:200,2,1.0, dissimilarity:distorted,40, file:data.json.
    #[arg(long)]
    instance: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// exact-rank, nonmetric-rank, uniform or learned.
    #[arg(long, value_parser = by_name::<PolicyKind>)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Proposals per query.
    #[arg(long)]
    width: Option<usize>,
    /// Query cap per search.
    #[arg(long)]
    cap: Option<u64>,
    /// random, random:P or lower-id.
    #[arg(long, value_parser = parse_tie_policy)]
    tie_policy: Option<TiePolicy>,
    /// Local-edge radius for grid instances.
    #[arg(long)]
    radius: Option<u32>,
    #[arg(long)]
    timeslots: Option<u64>,
    /// resample, frozen or disabled.
    #[arg(long, value_parser = by_name::<ShortcutMode>)]
    shortcuts: Option<ShortcutMode>,
    /// Moving-average target counter with the given weight on the newest slot.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.001")]
    ema: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

fn by_name<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(text.replace('-', "_"))).map_err(|_| format!("unknown value {text:?}"))
}

fn parse_tie_policy(text: &str) -> Result<TiePolicy, String> {
    match text.split_once(':') {
        None if text == "lower-id" => Ok(TiePolicy::DeterministicLowerId),
        None if text == "random" => Ok(TiePolicy::default()),
        Some(("random", p)) => p.parse().map(|p_first| TiePolicy::Probabilistic { p_first }).map_err(|e| format!("{e}")),
        _ => Err(format!("unknown tie policy {text:?}")),
    }
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let mut cfg: ExperimentConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                if let Some(seed) = self.seed {
                    cfg.seed = seed;
                }
                if let Some(instance) = &self.instance {
                    cfg.instance = parse_instance(instance)?;
                }
                cfg
            }
            None => {
                let Some(instance) = &self.instance else { bail!("give --config or --instance") };
                let Some(seed) = self.seed else { bail!("give --seed or a config file with a seed") };
                ExperimentConfig::new(parse_instance(instance)?, seed)
            }
        };
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = self.policy {
            cfg.policy = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.width {
            cfg.width = v;
        }
        if self.cap.is_some() {
            cfg.cap = self.cap;
        }
        if let Some(v) = self.tie_policy {
            cfg.tie_policy = v;
        }
        if let Some(v) = self.timeslots {
            cfg.timeslots = v;
        }
        if let Some(v) = self.shortcuts {
            cfg.shortcuts = v;
        }
        if let Some(alpha) = self.ema {
            cfg.counter = CounterMode::Ema { alpha };
        }
        if let Some(r) = self.radius {
            match &mut cfg.instance {
                InstanceSpec::Grid { radius, .. } => *radius = r,
                _ => bail!("--radius applies to grid instances only"),
            }
        }
        if self.out.output.is_some() {
            cfg.output = self.out.output.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl OutputArgs {
    fn path(&self, configured: Option<PathBuf>, command: &str) -> Option<PathBuf> {
        self.output.clone().or(configured).or_else(|| self.output_dir.as_ref().map(|d| d.join(format!("{command}.jsonl"))))
    }
}

fn finish(mut record: ResultRecord, out: &OutputArgs, configured: Option<PathBuf>, started: Instant) -> Result<ExitCode> {
    if out.timing {
        record.wall_time_s = Some(started.elapsed().as_secs_f64());
    }
    record.emit(out.path(configured, &record.command).as_deref())?;
    eprint!("{}", record.summary());
    Ok(if record.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run(cli: Cli) -> Result<ExitCode> {
    let started = Instant::now();
    match cli.command {
        Command::Search(run) => {
            let cfg = run.config()?;
            finish(commands::search(&cfg)?, &run.out, cfg.output.clone(), started)
        }
        Command::Forward(run) => {
            let cfg = run.config()?;
            finish(commands::forward(&cfg)?, &run.out, cfg.output.clone(), started)
        }
        Command::Learn { run, state_in, state_out, trace } => {
            let cfg = run.config()?;
            let record = commands::learn(&cfg, &LearnFiles { state_in, state_out, trace })?;
            finish(record, &run.out, cfg.output.clone(), started)
        }
        Command::Verify { run, sweep: Some(count) } => {
            let seed = match &run.config {
                Some(_) => run.config()?.seed,
                None => run.seed.unwrap_or(0),
            };
            finish(commands::verify_sweep(count, seed)?, &run.out, None, started)
        }
        Command::Verify { run, sweep: None } => {
            let cfg = run.config()?;
            finish(commands::verify(&cfg)?, &run.out, cfg.output.clone(), started)
        }
        Command::Lowerbound { branching, depth, trials, seed, out } => {
            finish(commands::lowerbound(branching, depth, trials, seed)?, &out, None, started)
        }
        Command::Serve { addr, data_dir, datasets, seed, timeout_min, snapshot_every } => {
            let mut catalog = Catalog::bundled();
            if let Some(dir) = &datasets {
                catalog.load_dir(dir).with_context(|| format!("loading datasets from {}", dir.display()))?;
            }
            let config = ServiceConfig { seed, data_dir, timeout: Duration::from_secs(timeout_min * 60), snapshot_every };
            let app = Arc::new(AppState::new(catalog, &config)?);
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                eprintln!("listening on {}", listener.local_addr()?);
                cmpsearch_service::serve(listener, app).await?;
                anyhow::Ok(())
            })?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
