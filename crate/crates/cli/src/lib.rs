//! Library side of the `bbf` command: every subcommand is a plain function
//! here so tests can drive it without spawning a process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bbf_core::config::AgentConfig;
use bbf_core::envs::{self, Environment, Sticky, TrajectoryRow};
use bbf_core::kv::KvMap;
use bbf_core::schedules::{gamma_at, n_at};
use bbf_core::trainer::{self, SuiteMatrix, SuiteSummary, Trainer};
use bbf_metrics::io::{self as mio, GameTable};
use bbf_metrics::{aggregate, AggregateReport, BootstrapConfig};
use rand::Rng as _;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] bbf_core::Error),
    #[error(transparent)]
    Metrics(#[from] bbf_metrics::MetricsError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
    }
    fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source })
}

/// Splits `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got `{s}`")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

/// Config file (or the desk preset when absent) with `overrides` applied
/// on top, in order.
pub fn load_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<AgentConfig> {
    let mut kv = match file {
        Some(p) => KvMap::parse(&read(p)?)?,
        None => KvMap::new(),
    };
    for (k, v) in overrides {
        kv.set(k, v.clone());
    }
    Ok(AgentConfig::from_kv(&kv)?)
}

/// Trains into `out`: `config.txt`, `scores.csv`, `metrics.csv`,
/// `episodes.csv` and a final `checkpoint.bin`. With `resume`, an existing
/// checkpoint in `out` is continued.
pub fn train(config: AgentConfig, out: &Path, resume: bool) -> Result<Trainer> {
    let ckpt = out.join("checkpoint.bin");
    let mut t = if resume && ckpt.exists() {
        let t = Trainer::load(&ckpt)?;
        if t.config != config {
            return Err(CliError::Usage(format!("{} was written by a different config", ckpt.display())));
        }
        log::info!("resuming at env step {}", t.state.env_steps);
        t
    } else {
        Trainer::new(config)?
    };
    write(&out.join("config.txt"), &t.config.to_kv().to_text())?;
    t.run(Some(&ckpt))?;
    t.save(&ckpt)?;
    t.write_outputs(out)?;
    Ok(t)
}

/// Evaluates a checkpoint's target network.
pub fn eval(checkpoint: &Path, episodes: Option<usize>, seed: Option<u64>) -> Result<Vec<f64>> {
    let t = Trainer::load(checkpoint)?;
    let mut s = t.eval_settings();
    if let Some(n) = episodes {
        s.episodes = n;
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    Ok(trainer::evaluate(&t.bundle, &s)?)
}

pub fn suite(matrix: &Path, out: &Path, resume: bool) -> Result<SuiteSummary> {
    let m = SuiteMatrix::parse(&read(matrix)?)?;
    Ok(trainer::run_suite(&m, out, resume)?)
}

/// Reference scores of the built-in environments as `game,random,reference`.
pub fn builtin_references() -> String {
    let mut s = mio::REFERENCE_COLUMNS.join(",");
    s.push('\n');
    for name in envs::NAMES {
        let spec = envs::spec_of(name).expect("built-in env");
        let _ = writeln!(s, "{},{},{}", name, spec.reference_random_score, spec.reference_expert_score);
    }
    s
}

fn is_table(text: &str) -> bool {
    let head = text.lines().next().unwrap_or("");
    head.replace(' ', "").starts_with("game,random,human")
}

fn is_scores(text: &str) -> bool {
    let head = text.lines().next().unwrap_or("");
    head.trim() == mio::SCORE_COLUMNS.join(",")
}

/// Score inputs found at `path`: the file itself, or every score CSV directly
/// inside the directory, falling back to its `scores/` subdirectory.
fn score_inputs(path: &Path) -> Result<Vec<(PathBuf, String)>> {
    if path.is_file() {
        return Ok(vec![(path.to_path_buf(), read(path)?)]);
    }
    let list = |dir: &Path| -> Result<Vec<(PathBuf, String)>> {
        let entries = fs::read_dir(dir).map_err(|source| CliError::Io { path: dir.into(), source })?;
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        let mut out = Vec::new();
        for p in files {
            let text = read(&p)?;
            if is_scores(&text) || is_table(&text) {
                out.push((p, text));
            }
        }
        Ok(out)
    };
    let mut found = list(path)?;
    if found.is_empty() && path.join("scores").is_dir() {
        found = list(&path.join("scores"))?;
    }
    if found.is_empty() {
        return Err(CliError::Usage(format!("no score files in {}", path.display())));
    }
    Ok(found)
}

/// Aggregates score files (or a per-game table) into one report per method.
pub fn report(scores: &Path, refs: Option<&Path>, bootstrap: &BootstrapConfig) -> Result<Vec<(String, AggregateReport)>> {
    let inputs = score_inputs(scores)?;
    let mut out = Vec::new();
    let mut records = Vec::new();
    for (path, text) in &inputs {
        if is_table(text) {
            let table = GameTable::parse(text)?;
            for col in &table.columns {
                out.push((col.clone(), aggregate(&table.matrix(col)?, bootstrap)?));
            }
        } else {
            records.extend(mio::parse_scores(text).map_err(|e| match e {
                bbf_metrics::MetricsError::Parse { line, msg } => bbf_metrics::MetricsError::Parse {
                    line,
                    msg: format!("{}: {msg}", path.display()),
                },
                other => other,
            })?);
        }
    }
    if !records.is_empty() {
        let refs_text = match refs {
            Some(p) => read(p)?,
            None => builtin_references(),
        };
        let references = mio::parse_references(&refs_text)?;
        for (name, matrix) in mio::run_matrices(&records, &references)? {
            out.push((name, aggregate(&matrix, bootstrap)?));
        }
    }
    Ok(out)
}

pub fn report_csv(reports: &[(String, AggregateReport)]) -> Result<String> {
    let mut buf = Vec::new();
    mio::write_report(&mut buf, reports)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn profile_csv(reports: &[(String, AggregateReport)]) -> Result<String> {
    let mut buf = Vec::new();
    mio::write_profile(&mut buf, reports)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn write_report_files(reports: &[(String, AggregateReport)], out: &Path, profile: Option<&Path>) -> Result<()> {
    write(out, &report_csv(reports)?)?;
    if let Some(p) = profile {
        write(p, &profile_csv(reports)?)?;
    }
    Ok(())
}

/// `k,n,gamma` for gradient steps `0, every, 2*every, ..` up to `steps`
/// inclusive, `k` counted from the last reset.
pub fn schedule_dump(config: &AgentConfig, steps: u64, every: u64) -> Result<String> {
    if every == 0 {
        return Err(CliError::Usage("--every must be positive".into()));
    }
    let mut s = String::from("k,n,gamma\n");
    for k in (0..=steps).step_by(every as usize) {
        let _ = writeln!(s, "{k},{},{}", n_at(k, &config.schedule), gamma_at(k, &config.schedule));
    }
    Ok(s)
}

pub fn describe(config: &AgentConfig) -> String {
    let mut s = config.to_kv().to_text();
    s.push('\n');
    s.push_str(&config.arch.describe());
    s
}

/// `env,random,expert` measured by playing both reference policies.
pub fn calibrate(names: &[String], random_episodes: usize, expert_episodes: usize, seed: u64) -> Result<String> {
    let mut s = String::from("env,random,expert,shipped_random,shipped_expert\n");
    for name in names {
        let spec = envs::spec_of(name)?;
        let (random, expert) = envs::calibrate(name, random_episodes, expert_episodes, seed)?;
        let _ = writeln!(
            s,
            "{name},{random:.4},{expert:.4},{},{}",
            spec.reference_random_score, spec.reference_expert_score
        );
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Policy {
    Random,
    Expert,
}

/// Plays `steps` sticky-wrapped steps, starting new episodes as needed.
pub fn trajectory(env: &str, steps: u64, seed: u64, sticky_prob: f64, policy: Policy) -> Result<String> {
    let inner: Box<dyn Environment> = envs::make(env)?;
    let actions = inner.spec().num_actions;
    let mut env = Sticky::new(inner, sticky_prob, bbf_core::rng::derive(seed, 1))?;
    let mut rng = bbf_core::rng::stream(seed, 2);
    let mut episode = 0;
    env.reset(bbf_core::rng::derive(seed, 3 + episode));
    let mut rows = Vec::new();
    for step in 0..steps {
        let action = match policy {
            Policy::Random => rng.random_range(0..actions),
            Policy::Expert => env.inner.expert_action(),
        };
        let s = env.step(action)?;
        rows.push(TrajectoryRow {
            step,
            action,
            executed_action: s.executed_action,
            reward: s.step.reward,
            terminal: s.step.terminal,
        });
        if s.step.terminal {
            episode += 1;
            env.reset(bbf_core::rng::derive(seed, 3 + episode));
        }
    }
    let mut buf = Vec::new();
    envs::write_trajectory(&mut buf, &rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Mean and sample standard deviation.
pub fn summarize(returns: &[f64]) -> (f64, f64) {
    let n = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}
