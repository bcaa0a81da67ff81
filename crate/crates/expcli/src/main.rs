use std::path::PathBuf;
use std::process::ExitCode;

use branchsel_exp::config::{ConfigFile, ExperimentConfig, Overrides, Scenario};
use branchsel_exp::error::ExpError;
use branchsel_exp::scenarios::{execute, summary_line};
use branchsel_exp::sweep::{parse_values, run_sweep, SweepParam};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "branchsel", version, about = "Monte Carlo experiments for branching Brownian motion with selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario name; overrides the config file.
    #[arg(long)]
    scenario: Option<String>,
    /// TOML config file (flat `key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; the default uses every core.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run(Common),
    /// Run a scenario once per parameter value and fit the velocity gap.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// L, N or K.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 3,4,5,6.
        #[arg(long)]
        values: String,
        /// Replace estimates by the theoretical velocity plus noise of this
        /// standard deviation instead of simulating.
        #[arg(long)]
        synthetic_noise: Option<f64>,
    },
}

impl Common {
    fn load(&self) -> Result<(ConfigFile, Overrides), ExpError> {
        let file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let over = Overrides {
            scenario: self.scenario.as_deref().map(str::parse::<Scenario>).transpose()?,
            seed: self.seed,
            replicas: self.replicas,
            out: self.out.clone(),
            threads: self.threads,
        };
        Ok((file, over))
    }
}

fn run(cli: Cli) -> Result<(), ExpError> {
    match cli.command {
        Command::Run(common) => {
            let (file, over) = common.load()?;
            let cfg = ExperimentConfig::resolve(&file, &over)?;
            let run = execute(&cfg)?;
            println!("{}", summary_line(&cfg, &run));
        }
        Command::Sweep {
            common,
            param,
            values,
            synthetic_noise,
        } => {
            let (file, over) = common.load()?;
            let param: SweepParam = param.parse()?;
            let values = parse_values(&values)?;
            let res = run_sweep(&file, &over, param, &values, synthetic_noise)?;
            for r in &res.rows {
                println!("{param} = {}: {} = {} (se {})", r.value, r.name, r.estimate, r.stderr);
            }
            if let Some(f) = &res.fit {
                println!("gap coefficient {} (se {}), chi2 {}", f.coefficient, f.stderr, f.chi2);
            }
            println!("wrote {}", res.out.join("sweep.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
