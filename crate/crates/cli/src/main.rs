use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use catpool::report::{self, ExpansionScope, Mode, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "catpool",
    version,
    about = "Tail-risk diversification of catastrophe risk pools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pool metrics, member shares and tail correlations for fixed pools.
    Metrics(Common),
    /// Optimal pool for each configured region on its own.
    OptimizeRegional(Common),
    /// Joint Pareto front over all pools, with regional optima pinned.
    OptimizeGlobal(Common),
    /// Metrics and expansions of existing pools.
    ExpandExisting {
        #[command(flatten)]
        common: Common,
        /// Which countries may join: the pool's own region or any.
        #[arg(long, value_enum)]
        scope: Option<Scope>,
    },
    /// Synthetic annual losses from an event catalogue.
    Sample(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed for the optimizer and sampler.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Scope {
    Regional,
    Global,
}

fn load(common: &Common) -> catpool::Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = std::path::absolute(out).unwrap_or_else(|_| out.clone());
    }
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> catpool::Result<report::CommandOutput> {
    let (common, mode) = match &cli.command {
        Command::Metrics(c) => (c, Mode::Metrics),
        Command::OptimizeRegional(c) => (c, Mode::OptimizeRegional),
        Command::OptimizeGlobal(c) => (c, Mode::OptimizeGlobal),
        Command::ExpandExisting { common, .. } => (common, Mode::ExpandExisting),
        Command::Sample(c) => (c, Mode::Sample),
    };
    let mut cfg = load(common)?;
    if let Command::ExpandExisting { scope: Some(s), .. } = cli.command {
        cfg.expansion_scope = match s {
            Scope::Regional => ExpansionScope::Regional,
            Scope::Global => ExpansionScope::Global,
        };
    }
    if let Some(configured) = cfg.mode {
        if configured != mode {
            log::warn!(
                "config mode {} differs from command {}; running the command",
                configured.name(),
                mode.name()
            );
        }
    }
    report::run_mode(&cfg, mode)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            println!("{}", out.manifest_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
