//! The training loop, evaluation, resumable checkpoints, score/metrics
//! files and the suite runner.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bbf_autodiff::checkpoint::{decode_params, encode_params, Container};
use bbf_autodiff::{flush_subnormals, AdamW, ParameterSet};

use crate::config::AgentConfig;
use crate::envs::{self, Environment, FrameStack, Sticky};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::losses;
use crate::network::{self, NetworkBundle};
use crate::replay::ReplayBuffer;
use crate::rng::{self, Rng};
use crate::schedules::{self, ScheduleState};

pub const SCORE_HEADER: [&str; 6] = ["env", "config_name", "seed", "env_steps", "episode_index", "return"];
pub const METRICS_HEADER: [&str; 9] = [
    "grad_step",
    "env_steps",
    "n",
    "gamma",
    "td_loss",
    "spr_loss",
    "grad_norm",
    "param_norm",
    "reset_flag",
];

const TAG_ACT: u64 = 1;
const TAG_LEARN: u64 = 2;
const TAG_STICKY: u64 = 3;
const TAG_EPISODE: u64 = 4;
const TAG_TEMPLATE: u64 = 5;
const TAG_EVAL: u64 = 6;
const TAG_INIT: u64 = 7;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub env: String,
    pub config_name: String,
    pub seed: u64,
    pub env_steps: u64,
    pub episode_index: u64,
    pub ret: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub grad_step: u64,
    pub env_steps: u64,
    pub n: usize,
    pub gamma: f64,
    pub td_loss: f64,
    pub spr_loss: f64,
    pub grad_norm: f64,
    pub param_norm: f64,
    pub reset_flag: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRow {
    pub env_steps: u64,
    pub episode_index: u64,
    pub ret: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunRecord {
    /// Training episodes as they complete.
    pub episodes: Vec<EpisodeRow>,
    pub metrics: Vec<MetricsRow>,
    /// Gradient-step indices at which resets happened.
    pub resets: Vec<u64>,
    /// Evaluation returns, tagged with the env step they were taken at.
    pub scores: Vec<ScoreRow>,
}

impl RunRecord {
    pub fn gradient_steps(&self) -> u64 {
        self.metrics.last().map_or(0, |m| m.grad_step)
    }

    /// Returns of the last evaluation.
    pub fn final_returns(&self) -> Vec<f64> {
        let Some(last) = self.scores.iter().map(|s| s.env_steps).max() else {
            return Vec::new();
        };
        self.scores.iter().filter(|s| s.env_steps == last).map(|s| s.ret).collect()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn write_scores<W: Write>(out: W, rows: &[ScoreRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCORE_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.env.clone(),
            r.config_name.clone(),
            r.seed.to_string(),
            r.env_steps.to_string(),
            r.episode_index.to_string(),
            r.ret.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scores(text: &str) -> Result<Vec<ScoreRow>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().collect::<Vec<_>>() != SCORE_HEADER {
        return Err(Error::Io(std::io::Error::other("score file header mismatch")));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |col: &str| Error::Io(std::io::Error::other(format!("row {}: bad {col}", i + 2)));
        rows.push(ScoreRow {
            env: rec[0].to_string(),
            config_name: rec[1].to_string(),
            seed: rec[2].parse().map_err(|_| bad("seed"))?,
            env_steps: rec[3].parse().map_err(|_| bad("env_steps"))?,
            episode_index: rec[4].parse().map_err(|_| bad("episode_index"))?,
            ret: rec[5].parse().map_err(|_| bad("return"))?,
        });
    }
    Ok(rows)
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.grad_step.to_string(),
            r.env_steps.to_string(),
            r.n.to_string(),
            r.gamma.to_string(),
            r.td_loss.to_string(),
            r.spr_loss.to_string(),
            r.grad_norm.to_string(),
            r.param_norm.to_string(),
            u8::from(r.reset_flag).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Io(std::io::Error::other(format!("bad metrics value `{}`", &rec[i]))))
        };
        rows.push(MetricsRow {
            grad_step: f(0)? as u64,
            env_steps: f(1)? as u64,
            n: f(2)? as usize,
            gamma: f(3)?,
            td_loss: f(4)?,
            spr_loss: f(5)?,
            grad_norm: f(6)?,
            param_norm: f(7)?,
            reset_flag: &rec[8] == "1",
        });
    }
    Ok(rows)
}

fn write_episodes(rows: &[EpisodeRow]) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&format!("{},{},{}\n", r.env_steps, r.episode_index, r.ret));
    }
    s
}

fn read_episodes(text: &str) -> Result<Vec<EpisodeRow>> {
    let bad = || Error::Checkpoint("bad episode log".into());
    text.lines()
        .map(|l| {
            let mut p = l.split(',');
            Ok(EpisodeRow {
                env_steps: p.next().ok_or_else(bad)?.parse().map_err(|_| bad())?,
                episode_index: p.next().ok_or_else(bad)?.parse().map_err(|_| bad())?,
                ret: p.next().ok_or_else(bad)?.parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub env: String,
    pub episodes: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub sticky_prob: f64,
    pub frame_stack: usize,
}

/// Greedy-ish episodes under the target parameters; raw returns.
pub fn evaluate(bundle: &NetworkBundle<f32>, s: &EvalSettings) -> Result<Vec<f64>> {
    flush_subnormals(|| evaluate_episodes(bundle, s))
}

fn evaluate_episodes(bundle: &NetworkBundle<f32>, s: &EvalSettings) -> Result<Vec<f64>> {
    let mut env = Sticky::new(envs::make(&s.env)?, s.sticky_prob, rng::derive(s.seed, TAG_STICKY))?;
    let mut act_rng = rng::stream(rng::derive(s.seed, TAG_ACT), 0);
    let mut out = Vec::with_capacity(s.episodes);
    let mut frames = FrameStack::new(s.frame_stack);
    for ep in 0..s.episodes {
        frames.reset(env.reset(rng::derive(s.seed, TAG_EPISODE ^ ((ep as u64) << 8))));
        let mut total = 0.0;
        loop {
            let a = bundle.select_action(&frames.stacked(), s.epsilon, &mut act_rng)?;
            let st = env.step(a)?.step;
            total += st.reward as f64;
            if st.terminal {
                break;
            }
            frames.push(st.observation);
        }
        out.push(total);
    }
    Ok(out)
}

/// One training run's complete mutable state.
pub struct Trainer {
    pub config: AgentConfig,
    pub bundle: NetworkBundle<f32>,
    pub optimizer: AdamW<f32>,
    pub replay: ReplayBuffer,
    pub state: ScheduleState,
    pub record: RunRecord,
    env: Sticky<Box<dyn Environment>>,
    frames: FrameStack,
    act_rng: Rng,
    learn_rng: Rng,
    episode_id: u64,
    episode_return: f64,
    evaluated_at: Option<u64>,
}

impl Trainer {
    pub fn new(config: AgentConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let bundle = NetworkBundle::new(config.arch.clone(), rng::derive(seed, TAG_INIT))?;
        let optimizer = AdamW::new(config.optimizer, &bundle.online);
        let env_spec = envs::spec_of(&config.env)?;
        let replay = ReplayBuffer::new(config.replay.clone(), env_spec.frame_len())?;
        let env = Sticky::new(envs::make(&config.env)?, config.sticky_prob, rng::derive(seed, TAG_STICKY))?;
        let mut t = Trainer {
            bundle,
            optimizer,
            replay,
            state: ScheduleState::default(),
            record: RunRecord::default(),
            env,
            frames: FrameStack::new(config.frame_stack()),
            act_rng: rng::stream(rng::derive(seed, TAG_ACT), 0),
            learn_rng: rng::stream(rng::derive(seed, TAG_LEARN), 0),
            episode_id: 0,
            episode_return: 0.0,
            evaluated_at: None,
            config,
        };
        let first = t.env.reset(t.episode_seed());
        t.frames.reset(first);
        Ok(t)
    }

    fn episode_seed(&self) -> u64 {
        rng::derive(self.config.seed, TAG_EPISODE ^ (self.episode_id << 8))
    }

    pub fn is_done(&self) -> bool {
        self.state.env_steps >= self.config.env_steps && self.evaluated_at == Some(self.state.env_steps)
    }

    fn current_frame(&self) -> Vec<f32> {
        self.frames.frames().last().cloned().expect("frame stack is never empty")
    }

    /// Collects one environment step and performs the updates it is owed.
    pub fn step_env(&mut self) -> Result<()> {
        flush_subnormals(|| self.advance())
    }

    fn advance(&mut self) -> Result<()> {
        let c = &self.config;
        let eps = if self.state.env_steps < c.warmup {
            1.0
        } else {
            schedules::epsilon(self.state.env_steps, &c.schedule)
        };
        let action = self.bundle.select_action(&self.frames.stacked(), eps, &mut self.act_rng)?;
        let frame = self.current_frame();
        let st = self.env.step(action)?.step;
        self.replay.append(&frame, action, st.reward, st.terminal, self.episode_id)?;
        self.episode_return += st.reward as f64;
        self.state.env_steps += 1;
        if st.terminal {
            self.record.episodes.push(EpisodeRow {
                env_steps: self.state.env_steps,
                episode_index: self.episode_id,
                ret: self.episode_return,
            });
            self.episode_id += 1;
            self.episode_return = 0.0;
            let obs = self.env.reset(self.episode_seed());
            self.frames.reset(obs);
        } else {
            self.frames.push(st.observation);
        }
        if self.state.env_steps > self.config.warmup {
            let due = schedules::gradient_steps_due(self.state.env_steps - self.config.warmup, &self.config.schedule);
            for _ in 0..due {
                self.learn()?;
            }
        }
        let every = self.config.eval_every;
        if every > 0 && self.state.env_steps % every == 0 && self.state.env_steps < self.config.env_steps {
            self.run_evaluation()?;
        }
        Ok(())
    }

    pub fn current_n(&self) -> usize {
        self.config
            .fixed_n
            .unwrap_or_else(|| schedules::current_n(&self.state, &self.config.schedule))
    }

    pub fn current_gamma(&self) -> f64 {
        self.config
            .fixed_gamma
            .unwrap_or_else(|| schedules::current_gamma(&self.state, &self.config.schedule))
    }

    fn fault(&self, detail: String) -> Error {
        Error::NumericFault {
            step: self.state.gradient_steps_total,
            detail,
        }
    }

    pub fn gradient_step(&mut self) -> Result<()> {
        flush_subnormals(|| self.learn())
    }

    fn learn(&mut self) -> Result<()> {
        let n = self.current_n();
        let gamma = self.current_gamma();
        let c = &self.config;
        let k = if c.arch.use_spr { c.arch.spr_horizon } else { 0 };
        let batch = self.replay.sample(c.batch_size, n, gamma, k, &mut self.learn_rng)?;
        self.bundle.online.zero_grad();
        let (report, grads) =
            losses::total_loss(&batch, &self.bundle.online, &self.bundle.target, &c.arch, &c.loss, &mut self.learn_rng)
                .map_err(|e| match e {
                    Error::Tensor(t) => self.fault(format!("{t} (n = {n}, gamma = {gamma})")),
                    other => other,
                })?;
        self.bundle.online.accumulate(&grads)?;
        let grad_norm = self.bundle.online.grad_norm() as f64;
        if !grad_norm.is_finite() {
            return Err(self.fault(format!(
                "non-finite gradient norm; td_loss = {}, spr_loss = {}",
                report.td_loss, report.spr_loss
            )));
        }
        self.optimizer.step(&mut self.bundle.online)?;
        network::ema_update(&mut self.bundle.target, &self.bundle.online, self.config.ema_tau)?;
        self.replay.update_priorities(&batch.indices, &report.td_errors);
        self.state.record_gradient_step();
        let reset = self.config.resets && schedules::should_reset(&self.state, &self.config.schedule);
        if reset {
            self.reset_online()?;
        }
        let param_norm = self.bundle.online.norm() as f64;
        if !param_norm.is_finite() {
            return Err(self.fault("non-finite parameter norm after update".into()));
        }
        self.record.metrics.push(MetricsRow {
            grad_step: self.state.gradient_steps_total,
            env_steps: self.state.env_steps,
            n,
            gamma,
            td_loss: report.td_loss,
            spr_loss: report.spr_loss,
            grad_norm,
            param_norm,
            reset_flag: reset,
        });
        Ok(())
    }

    /// Shrink-and-perturb on the online network; the target is untouched.
    fn reset_online(&mut self) -> Result<()> {
        let c = &self.config;
        let tag = TAG_TEMPLATE ^ ((self.state.reset_count + 1) << 8);
        let template = network::init_params::<f32>(&c.arch, rng::derive(c.seed, tag))?;
        let policy = c.reset_policy.clone();
        let alpha = c.alpha_encoder;
        self.bundle.online = network::shrink_and_perturb(&self.bundle.online, &template, alpha, &policy)?;
        let names: Vec<String> = self.bundle.online.names().map(str::to_string).collect();
        for name in names {
            if policy.interpolates(&name) {
                self.optimizer.scale_moments(&name, (1.0 - alpha) as f32);
            } else {
                self.optimizer.reset_moments(&name);
            }
        }
        self.state.record_reset();
        self.record.resets.push(self.state.gradient_steps_total);
        Ok(())
    }

    pub fn eval_settings(&self) -> EvalSettings {
        EvalSettings {
            env: self.config.env.clone(),
            episodes: self.config.eval_episodes,
            seed: rng::derive(self.config.seed, TAG_EVAL ^ (self.state.env_steps << 8)),
            epsilon: self.config.eval_epsilon,
            sticky_prob: self.config.sticky_prob,
            frame_stack: self.config.frame_stack(),
        }
    }

    pub fn run_evaluation(&mut self) -> Result<Vec<f64>> {
        let returns = evaluate(&self.bundle, &self.eval_settings())?;
        for (i, &r) in returns.iter().enumerate() {
            self.record.scores.push(ScoreRow {
                env: self.config.env.clone(),
                config_name: self.config.name.clone(),
                seed: self.config.seed,
                env_steps: self.state.env_steps,
                episode_index: i as u64,
                ret: r,
            });
        }
        self.evaluated_at = Some(self.state.env_steps);
        Ok(returns)
    }

    /// Runs to `env_steps` and the final evaluation, checkpointing to
    /// `checkpoint` every `checkpoint_every` env steps when given.
    pub fn run(&mut self, checkpoint: Option<&Path>) -> Result<()> {
        while self.state.env_steps < self.config.env_steps {
            self.step_env()?;
            let every = self.config.checkpoint_every;
            if let Some(path) = checkpoint {
                if every > 0 && self.state.env_steps % every == 0 {
                    self.save(path)?;
                }
            }
        }
        if self.evaluated_at != Some(self.state.env_steps) {
            self.run_evaluation()?;
        }
        Ok(())
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        c.put("config", self.config.to_kv().to_text().into_bytes());
        c.put("online", encode_params(&self.bundle.online)?);
        c.put("target", encode_params(&self.bundle.target)?);
        let (m, v) = self.optimizer.export();
        c.put("adam.m", encode_params(&m)?);
        c.put("adam.v", encode_params(&v)?);
        self.replay.dump(&mut c, "replay");
        let mut st = self.state.to_kv();
        st.set("adam_steps", self.optimizer.step_count().to_string());
        st.set("act_rng", rng::save(&self.act_rng));
        st.set("learn_rng", rng::save(&self.learn_rng));
        st.set("episode_id", self.episode_id.to_string());
        st.set("episode_return", format!("{:e}", self.episode_return));
        st.set("evaluated_at", self.evaluated_at.map_or("none".into(), |v| v.to_string()));
        c.put("state", st.to_text().into_bytes());
        c.put("env", self.env.save_state().to_text().into_bytes());
        let mut frames = Vec::new();
        for f in self.frames.frames() {
            frames.extend(f.iter().flat_map(|v| v.to_le_bytes()));
        }
        c.put("frames", frames);
        let mut ms = Vec::new();
        write_metrics(&mut ms, &self.record.metrics)?;
        c.put("record.metrics", ms);
        let mut sc = Vec::new();
        write_scores(&mut sc, &self.record.scores)?;
        c.put("record.scores", sc);
        c.put("record.episodes", write_episodes(&self.record.episodes).into_bytes());
        let resets: Vec<String> = self.record.resets.iter().map(u64::to_string).collect();
        c.put("record.resets", resets.join(",").into_bytes());
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_container()?.encode()?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let text = |name: &str| -> Result<String> {
            String::from_utf8(c.require(name)?.to_vec()).map_err(|_| Error::Checkpoint(format!("{name} is not utf-8")))
        };
        let config = AgentConfig::parse(&text("config")?)?;
        let mut t = Trainer::new(config)?;
        let load = |name: &str| -> Result<ParameterSet<f32>> { Ok(decode_params(c.require(name)?)?) };
        let online = load("online")?;
        let mut target = load("target")?;
        t.bundle.online.check_congruent(&online)?;
        t.bundle.target.check_congruent(&target)?;
        target.iter_mut().for_each(|(_, p)| p.set_requires_grad(false));
        t.bundle.online = online;
        t.bundle.target = target;
        t.optimizer.import(&load("adam.m")?, &load("adam.v")?)?;
        t.replay = ReplayBuffer::restore(c, "replay")?;
        let st = KvMap::parse(&text("state")?)?;
        t.state = ScheduleState::from_kv(&st)?;
        t.optimizer.set_step_count(st.parse_value("adam_steps")?);
        t.act_rng = rng::restore(st.require("act_rng")?)?;
        t.learn_rng = rng::restore(st.require("learn_rng")?)?;
        t.episode_id = st.parse_value("episode_id")?;
        t.episode_return = st.parse_value("episode_return")?;
        t.evaluated_at = match st.require("evaluated_at")? {
            "none" => None,
            v => Some(v.parse().map_err(|_| Error::Checkpoint("bad evaluated_at".into()))?),
        };
        t.env.load_state(&KvMap::parse(&text("env")?)?)?;
        let raw = c.require("frames")?;
        let flen = envs::spec_of(&t.config.env)?.frame_len();
        if raw.is_empty() || raw.len() % (flen * 4) != 0 {
            return Err(Error::Checkpoint("frame history has the wrong size".into()));
        }
        let floats: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        let mut chunks = floats.chunks(flen);
        t.frames.reset(chunks.next().expect("non-empty").to_vec());
        for f in chunks {
            t.frames.push(f.to_vec());
        }
        t.record.metrics = read_metrics(&text("record.metrics")?)?;
        t.record.scores = read_scores(&text("record.scores")?)?;
        t.record.episodes = read_episodes(&text("record.episodes")?)?;
        let resets = text("record.resets")?;
        t.record.resets = resets
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Checkpoint("bad reset log".into())))
            .collect::<Result<_>>()?;
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_container(&Container::decode(&bytes)?)
    }

    /// Writes `scores.csv`, `metrics.csv` and `episodes.csv` into `dir`.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_scores(fs::File::create(dir.join("scores.csv"))?, &self.record.scores)?;
        write_metrics(fs::File::create(dir.join("metrics.csv"))?, &self.record.metrics)?;
        let mut ep = String::from("env_steps,episode_index,return\n");
        ep.push_str(&write_episodes(&self.record.episodes));
        fs::write(dir.join("episodes.csv"), ep)?;
        Ok(())
    }
}

/// Trains `config` to completion.
pub fn train(config: AgentConfig) -> Result<RunRecord> {
    let mut t = Trainer::new(config)?;
    t.run(None)?;
    Ok(t.record)
}

/// Arms x envs x seeds, from `key = value` text:
///
/// ```text
/// envs = chase,dodge
/// seeds = 0,1,2
/// arms = bbf,baseline
/// common.env_steps = 2000        # applied to every arm
/// arm.baseline.width_scale = 1   # applied to one arm
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteMatrix {
    pub envs: Vec<String>,
    pub seeds: Vec<u64>,
    pub arms: Vec<(String, KvMap)>,
}

impl SuiteMatrix {
    pub fn parse(text: &str) -> Result<Self> {
        let map = KvMap::parse(text)?;
        let list = |k: &str| -> Result<Vec<String>> {
            let v: Vec<String> = map
                .require(k)?
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if v.is_empty() {
                return Err(Error::config(format!("`{k}` is empty")));
            }
            Ok(v)
        };
        let envs = list("envs")?;
        for e in &envs {
            envs::spec_of(e)?;
        }
        let seeds = list("seeds")?
            .iter()
            .map(|s| s.parse().map_err(|_| Error::config(format!("bad seed `{s}`"))))
            .collect::<Result<Vec<u64>>>()?;
        let names = list("arms")?;
        let mut arms = Vec::new();
        for name in &names {
            if name.contains('/') || name.contains("__") {
                return Err(Error::config(format!("arm name `{name}` may not contain `/` or `__`")));
            }
            let mut kv = KvMap::new();
            kv.set("name", name.clone());
            for (k, v) in map.iter() {
                if let Some(key) = k.strip_prefix("common.") {
                    kv.set(key, v);
                }
            }
            let prefix = format!("arm.{name}.");
            for (k, v) in map.iter() {
                if let Some(key) = k.strip_prefix(&prefix) {
                    kv.set(key, v);
                }
            }
            arms.push((name.clone(), kv));
        }
        for (k, _) in map.iter() {
            let known = matches!(k, "envs" | "seeds" | "arms")
                || k.starts_with("common.")
                || names.iter().any(|n| k.starts_with(&format!("arm.{n}.")));
            if !known {
                return Err(Error::config(format!("unknown suite key `{k}`")));
            }
        }
        Ok(SuiteMatrix { envs, seeds, arms })
    }

    /// Every job's config, in arm, env, seed order.
    pub fn jobs(&self) -> Result<Vec<AgentConfig>> {
        let mut out = Vec::new();
        for (_, kv) in &self.arms {
            for env in &self.envs {
                for &seed in &self.seeds {
                    let mut kv = kv.clone();
                    kv.set("env", env.clone());
                    kv.set("seed", seed.to_string());
                    out.push(AgentConfig::from_kv(&kv)?);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteSummary {
    pub completed: usize,
    pub skipped: usize,
    pub failed: Vec<(String, String)>,
    pub score_files: Vec<PathBuf>,
    pub merged: PathBuf,
}

pub fn job_id(c: &AgentConfig) -> String {
    format!("{}__{}__seed{}", c.name, c.env, c.seed)
}

/// Runs every job of the matrix sequentially. Each job writes
/// `DIR/scores/<job>.csv`; `DIR/scores.csv` merges them. With `resume`,
/// finished jobs are skipped and interrupted ones continue from
/// `DIR/runs/<job>/checkpoint.bin`.
pub fn run_suite(matrix: &SuiteMatrix, out: &Path, resume: bool) -> Result<SuiteSummary> {
    let jobs = matrix.jobs()?;
    fs::create_dir_all(out.join("scores"))?;
    let mut summary = SuiteSummary::default();
    for cfg in jobs {
        let id = job_id(&cfg);
        let score_path = out.join("scores").join(format!("{id}.csv"));
        if resume && score_path.exists() {
            summary.skipped += 1;
            summary.score_files.push(score_path);
            continue;
        }
        let run_dir = out.join("runs").join(&id);
        match run_job(cfg, &run_dir, &score_path, resume) {
            Ok(()) => {
                summary.completed += 1;
                summary.score_files.push(score_path);
            }
            Err(e) => {
                log::warn!("job {id} failed: {e}");
                summary.failed.push((id, e.to_string()));
            }
        }
    }
    let mut merged = Vec::new();
    for p in &summary.score_files {
        merged.extend(read_scores(&fs::read_to_string(p)?)?);
    }
    summary.merged = out.join("scores.csv");
    write_scores(fs::File::create(&summary.merged)?, &merged)?;
    let failures: String = summary.failed.iter().map(|(id, e)| format!("{id}: {e}\n")).collect();
    fs::write(out.join("failures.txt"), failures)?;
    Ok(summary)
}

fn run_job(cfg: AgentConfig, run_dir: &Path, score_path: &Path, resume: bool) -> Result<()> {
    fs::create_dir_all(run_dir)?;
    let ckpt = run_dir.join("checkpoint.bin");
    let mut t = if resume && ckpt.exists() {
        let t = Trainer::load(&ckpt)?;
        if t.config != cfg {
            return Err(Error::config("checkpoint config differs from the matrix"));
        }
        t
    } else {
        Trainer::new(cfg)?
    };
    t.run(Some(&ckpt))?;
    t.write_outputs(run_dir)?;
    let tmp = score_path.with_extension("tmp");
    write_scores(fs::File::create(&tmp)?, &t.record.scores)?;
    fs::rename(&tmp, score_path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_csv_round_trip() {
        let rows = vec![ScoreRow {
            env: "chase".into(),
            config_name: "bbf".into(),
            seed: 3,
            env_steps: 100,
            episode_index: 0,
            ret: 2.5,
        }];
        let mut out = Vec::new();
        write_scores(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("env,config_name,seed,env_steps,episode_index,return\n"));
        assert_eq!(read_scores(&text).unwrap(), rows);
        assert!(read_scores("a,b\n1,2\n").is_err());
    }

    #[test]
    fn metrics_header_is_exact() {
        let mut out = Vec::new();
        write_metrics(&mut out, &[]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "grad_step,env_steps,n,gamma,td_loss,spr_loss,grad_norm,param_norm,reset_flag\n"
        );
    }

    #[test]
    fn suite_matrix_parsing() {
        let m = SuiteMatrix::parse(
            "envs = chase,dodge\nseeds = 0,1,2\narms = a,b\ncommon.env_steps = 50\narm.b.width_scale = 1\n",
        )
        .unwrap();
        let jobs = m.jobs().unwrap();
        assert_eq!(jobs.len(), 12);
        assert!(jobs.iter().all(|j| j.env_steps == 50));
        assert_eq!(jobs.iter().filter(|j| j.arch.width_scale == 1).count(), 6);
        assert!(SuiteMatrix::parse("envs = chase\nseeds = 0\narms = a\nstray = 1\n").is_err());
        assert!(SuiteMatrix::parse("envs = pong\nseeds = 0\narms = a\n").is_err());
    }
}
