use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chainscale::config::{load_with_overrides, ConfigError, ScenarioConfig, Strategy};
use chainscale::sim::run_scenario;
use chainscale::sweep::{format_table, sweep, SweepAxis};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chainscale", version, about = "Service chain scaling simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write its report.
    Run(RunArgs),
    /// Run a scenario once per value of one config parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dotted config path, e.g. `traffic.generators.change_interval_s`.
        #[arg(long)]
        axis: String,
        /// `start..end:step` or a comma-separated list.
        #[arg(long)]
        values: String,
    },
    /// Check a scenario file and list every problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    strategy: Option<Strategy>,
    #[arg(long, value_enum)]
    tagging: Option<Toggle>,
    /// Output directory.
    #[arg(long, env = "CHAINSCALE_OUT", default_value = "out")]
    out: PathBuf,
    /// Extra `path=value` config edits.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    sets: Vec<String>,
}

impl RunArgs {
    fn edits(&self) -> Result<Vec<(String, toml::Value)>> {
        let mut edits = Vec::new();
        if let Some(s) = self.strategy {
            edits.push(("strategy".into(), toml::Value::String(s.name().into())));
        }
        if let Some(t) = self.tagging {
            edits.push(("tagging".into(), toml::Value::Boolean(matches!(t, Toggle::On))));
        }
        for s in &self.sets {
            let Some((path, value)) = s.split_once('=') else { bail!("--set expects PATH=VALUE, got `{s}`") };
            let axis = SweepAxis::parse(path, value)?;
            let [v] = <[toml::Value; 1]>::try_from(axis.values).map_err(|_| anyhow::anyhow!("--set {path}: one value expected"))?;
            edits.push((path.into(), v));
        }
        Ok(edits)
    }

    fn text(&self) -> Result<String> {
        std::fs::read_to_string(&self.config).with_context(|| format!("reading {}", self.config.display()))
    }
}

fn load(args: &RunArgs) -> Result<ScenarioConfig> {
    let cfg = load_with_overrides(&args.text()?, &args.edits()?)
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.config.display()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = load(args)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let mut report = run_scenario(&cfg, seed)?;
    report.summary.seed = seed;
    report.write_to(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let s = &report.summary;
    println!(
        "{} [{}] seed {}: {} flows, {} created, mean loss {:.3}%, mean rtt {:.1} ms -> {}",
        s.scenario,
        s.strategy,
        s.seed,
        s.flows,
        s.instances_created,
        s.dp_loss_mean_pct,
        s.rtt_mean_ms,
        args.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(args) => run(args),
        Cmd::Sweep { run, axis, values } => (|| {
            let axis = SweepAxis::parse(axis, values)?;
            load(run)?;
            let rows = sweep(&run.text()?, &axis, &run.edits()?, run.seed)?;
            let table = format_table(&axis.path, &rows);
            print!("{table}");
            std::fs::create_dir_all(&run.out)?;
            std::fs::write(run.out.join("sweep.txt"), &table)?;
            std::fs::write(run.out.join("sweep.json"), serde_json::to_string_pretty(&rows)? + "\n")?;
            Ok(())
        })(),
        Cmd::Validate { config } => match ScenarioConfig::load(config).and_then(|c| c.validate()) {
            Ok(()) => {
                println!("{}: ok", config.display());
                Ok(())
            }
            Err(ConfigError::Invalid(errs)) => {
                for e in &errs {
                    eprintln!("{e}");
                }
                Err(anyhow::anyhow!("{}: {} problem(s)", config.display(), errs.len()))
            }
            Err(e) => Err(e.into()),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
