use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slowman::dmap::EpsilonRule;
use slowman::reduced::{Formulation, GridSpec};
use slowman::sampling::SyntheticKind;
use slowman_cli::config::PipelineConfig;
use slowman_cli::{pipeline, CliError};

#[derive(Parser)]
#[command(name = "slowman", version, about = "Data-driven slow-manifold reduction of stiff kinetics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Harvest and subsample a point cloud.
    Sample(Overrides),
    /// Compute the diffusion-map embedding of the cloud.
    Embed(Overrides),
    /// Tabulate the reduced right-hand side on a grid.
    Tabulate(Overrides),
    /// Integrate the detailed and reduced systems.
    Simulate(Overrides),
    /// Compare detailed and reduced trajectories.
    Compare(Overrides),
    /// Every stage in sequence.
    Run(Overrides),
}

/// Flags override the matching configuration keys.
#[derive(Args)]
struct Overrides {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for all random streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Method preset 1-12.
    #[arg(long)]
    preset: Option<u8>,
    /// Built-in model: `davis-skodje`, `linear-2d` or `toy-h2-skeleton`.
    #[arg(long)]
    model: Option<String>,
    /// Stiffness parameter `gamma` of `davis-skodje`.
    #[arg(long)]
    gamma: Option<f64>,
    /// Reaction mechanism JSON file.
    #[arg(long)]
    mechanism: Option<PathBuf>,
    /// Benchmark cloud such as `cylinder-grid` or `circle`.
    #[arg(long, value_parser = parse_synthetic)]
    synthetic: Option<SyntheticKind>,
    /// Number of synthetic points.
    #[arg(long)]
    n: Option<usize>,
    /// Number of harvested trajectories.
    #[arg(long)]
    n_traj: Option<usize>,
    /// Table size such as `60` or `40x40`.
    #[arg(long)]
    grid: Option<String>,
    /// `chain-rule` or `projection`.
    #[arg(long)]
    formulation: Option<String>,
    /// `critical` or `max-min`.
    #[arg(long)]
    epsilon_rule: Option<String>,
    /// Factor applied to the kernel-scale rule.
    #[arg(long)]
    multiplier: Option<f64>,
    /// Reduced initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    u0: Option<Vec<f64>>,
    /// Detailed initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y0: Option<Vec<f64>>,
    /// Simulation horizon.
    #[arg(long)]
    t_end: Option<f64>,
    /// Compare artifacts whose configuration hashes differ.
    #[arg(long)]
    force: bool,
}

fn parse_synthetic(s: &str) -> Result<SyntheticKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown synthetic cloud `{s}`"))
}

impl Overrides {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.out_dir = self.out.clone().or(cfg.out_dir);
        if let Some(p) = self.preset {
            cfg.operators.preset = Some(p);
        }
        let s = &mut cfg.sampling;
        if let Some(m) = &self.model {
            s.model = Some(m.clone());
            s.mechanism = None;
            s.synthetic = None;
        }
        if let Some(m) = &self.mechanism {
            s.mechanism = Some(m.clone());
            s.model = None;
            s.synthetic = None;
        }
        if let Some(k) = self.synthetic {
            s.synthetic = Some(k);
            s.model = None;
            s.mechanism = None;
        }
        if let Some(g) = self.gamma {
            s.gamma = Some(g);
        }
        if let Some(n) = self.n {
            s.synthetic_params.n = n;
        }
        if let Some(n) = self.n_traj {
            s.plan.n_trajectories = n;
        }
        if let Some(g) = &self.grid {
            let spec: GridSpec = g.parse().map_err(|e| CliError::Usage(format!("--grid: {e}")))?;
            cfg.grid.nodes = Some(spec.axes.iter().map(|a| a.nodes).collect());
        }
        if let Some(f) = &self.formulation {
            let f: Formulation = f.parse().map_err(|e| CliError::Usage(format!("--formulation: {e}")))?;
            cfg.operators.formulation = Some(f);
        }
        if let Some(r) = &self.epsilon_rule {
            let r: EpsilonRule = r.parse().map_err(|e| CliError::Usage(format!("--epsilon-rule: {e}")))?;
            cfg.dmap.epsilon_rule = r;
        }
        if let Some(m) = self.multiplier {
            cfg.dmap.multiplier = m;
        }
        if let Some(u) = &self.u0 {
            cfg.simulation.u0 = Some(u.clone());
        }
        if let Some(y) = &self.y0 {
            cfg.simulation.y0 = Some(y.clone());
        }
        if let Some(t) = self.t_end {
            cfg.simulation.t_end = t;
        }
        cfg.comparison.force |= self.force;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("MK_THREADS") else { return Ok(()) };
    let n: usize =
        value.trim().parse().map_err(|_| CliError::Usage(format!("MK_THREADS must be a thread count, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("MK_THREADS: {e}")))
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    configure_threads()?;
    let (stage, overrides): (fn(&PipelineConfig) -> Result<PathBuf, CliError>, &Overrides) = match &cli.command {
        Command::Sample(o) => (pipeline::cmd_sample, o),
        Command::Embed(o) => (pipeline::cmd_embed, o),
        Command::Tabulate(o) => (pipeline::cmd_tabulate, o),
        Command::Simulate(o) => (pipeline::cmd_simulate, o),
        Command::Compare(o) => (pipeline::cmd_compare, o),
        Command::Run(o) => (pipeline::cmd_run, o),
    };
    let cfg = overrides.resolve()?;
    stage(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
