use std::path::PathBuf;
use std::process::ExitCode;

use bbf_cli::{CliError, Policy, Result};
use bbf_core::config::AgentConfig;
use bbf_metrics::BootstrapConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bbf", version, about = "Desk-scale sample-efficient value-based agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-key overrides.
#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file; the desk preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replay ratio.
    #[arg(long)]
    rr: Option<String>,
    #[arg(long)]
    width_scale: Option<usize>,
    #[arg(long)]
    env_steps: Option<u64>,
    /// Any other config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<AgentConfig> {
        let mut overrides = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k.to_string(), v));
            }
        };
        put("env", self.env.clone());
        put("seed", self.seed.map(|s| s.to_string()));
        put("replay_ratio", self.rr.clone());
        put("width_scale", self.width_scale.map(|w| w.to_string()));
        put("env_steps", self.env_steps.map(|s| s.to_string()));
        for s in &self.set {
            overrides.push(bbf_cli::parse_assignment(s)?);
        }
        bbf_cli::load_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for scores, metrics, episodes and checkpoint.
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Continue from `OUT/checkpoint.bin` when present.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every arm x env x seed job of a suite matrix.
    Suite {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip finished jobs and continue interrupted ones.
        #[arg(long)]
        resume: bool,
    },
    /// Aggregate statistics with bootstrap intervals.
    Report {
        /// Score CSV, per-game table CSV, or a directory of them.
        #[arg(long)]
        scores: PathBuf,
        /// `game,random,reference` file; the built-in environments when omitted.
        #[arg(long)]
        refs: Option<PathBuf>,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        resamples: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        bootstrap_seed: u64,
    },
    /// Schedule tables.
    Schedule {
        #[command(subcommand)]
        what: ScheduleCommand,
    },
    /// Print the resolved config and the network layout.
    Describe {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// List every config key.
    Keys,
    /// Measure random and scripted-policy reference scores.
    Calibrate {
        /// Environments to measure; all when omitted.
        #[arg(long)]
        env: Vec<String>,
        #[arg(long, default_value_t = 1000)]
        random_episodes: usize,
        #[arg(long, default_value_t = 100)]
        expert_episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Dump a sticky-action trajectory as CSV.
    Trajectory {
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.25)]
        sticky: f64,
        #[arg(long, value_enum, default_value_t = Policy::Random)]
        policy: Policy,
    },
}

#[derive(Subcommand)]
enum ScheduleCommand {
    /// `k,n,gamma` rows for one reset period.
    Dump {
        #[command(flatten)]
        config: ConfigArgs,
        /// Last gradient step; the reset period when omitted.
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value_t = 1)]
        every: u64,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, resume } => {
            let c = config.load()?;
            log::info!("training {} on {} (seed {}) into {}", c.name, c.env, c.seed, out.display());
            let t = bbf_cli::train(c, &out, resume)?;
            let finals = t.record.final_returns();
            let (mean, sd) = bbf_cli::summarize(&finals);
            println!(
                "env_steps {} grad_steps {} resets {} final return {mean:.3} (sd {sd:.3}, {} episodes)",
                t.state.env_steps,
                t.record.gradient_steps(),
                t.record.resets.len(),
                finals.len()
            );
        }
        Command::Eval { checkpoint, episodes, seed } => {
            let returns = bbf_cli::eval(&checkpoint, episodes, seed)?;
            let (mean, sd) = bbf_cli::summarize(&returns);
            println!("episodes {} mean {mean:.3} sd {sd:.3}", returns.len());
        }
        Command::Suite { matrix, out, resume } => {
            let s = bbf_cli::suite(&matrix, &out, resume)?;
            println!(
                "completed {} skipped {} failed {} merged {}",
                s.completed,
                s.skipped,
                s.failed.len(),
                s.merged.display()
            );
            for (id, e) in &s.failed {
                eprintln!("{id}: {e}");
            }
        }
        Command::Report {
            scores,
            refs,
            out,
            profile,
            resamples,
            level,
            bootstrap_seed,
        } => {
            let cfg = BootstrapConfig {
                resamples,
                level,
                seed: bootstrap_seed,
            };
            let reports = bbf_cli::report(&scores, refs.as_deref(), &cfg)?;
            bbf_cli::write_report_files(&reports, &out, profile.as_deref())?;
            for (method, r) in &reports {
                println!(
                    "{method:<16} mean {:.3} median {:.3} games_above_reference {}",
                    r.mean.point, r.median.point, r.games_above_reference
                );
            }
        }
        Command::Schedule {
            what: ScheduleCommand::Dump { config, steps, every },
        } => {
            let c = config.load()?;
            let steps = steps.unwrap_or(c.schedule.reset_period);
            print!("{}", bbf_cli::schedule_dump(&c, steps, every)?);
        }
        Command::Describe { config } => print!("{}", bbf_cli::describe(&config.load()?)),
        Command::Keys => print!("{}", AgentConfig::key_reference()),
        Command::Calibrate {
            env,
            random_episodes,
            expert_episodes,
            seed,
        } => {
            let names = if env.is_empty() {
                bbf_core::envs::NAMES.iter().map(|s| s.to_string()).collect()
            } else {
                env
            };
            print!("{}", bbf_cli::calibrate(&names, random_episodes, expert_episodes, seed)?);
        }
        Command::Trajectory {
            env,
            steps,
            seed,
            sticky,
            policy,
        } => print!("{}", bbf_cli::trajectory(&env, steps, seed, sticky, policy)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
