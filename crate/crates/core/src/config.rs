//! Agent configuration as flat `key = value` text.
//!
//! A file may start from a `preset` (`desk` or `canonical`) and override
//! any key listed in [`KEYS`]. Unknown keys are rejected.

use bbf_autodiff::AdamWConfig;

use crate::envs;
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::losses::LossConfig;
use crate::network::{ArchitectureSpec, ResetPolicy};
use crate::replay::ReplayConfig;
use crate::schedules::ScheduleConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub name: String,
    pub preset: String,
    pub env: String,
    pub seed: u64,
    pub env_steps: u64,
    pub arch: ArchitectureSpec,
    pub schedule: ScheduleConfig,
    pub optimizer: AdamWConfig,
    pub replay: ReplayConfig,
    pub loss: LossConfig,
    pub batch_size: usize,
    pub ema_tau: f64,
    pub resets: bool,
    pub alpha_encoder: f64,
    pub reset_policy: ResetPolicy,
    pub fixed_n: Option<usize>,
    pub fixed_gamma: Option<f64>,
    pub warmup: u64,
    pub sticky_prob: f64,
    pub eval_episodes: usize,
    pub eval_epsilon: f64,
    /// Env steps between evaluations; 0 evaluates only at the end.
    pub eval_every: u64,
    /// Env steps between resumable checkpoints; 0 disables them.
    pub checkpoint_every: u64,
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("preset", "starting values: desk or canonical"),
    ("name", "config name written to score files"),
    ("env", "environment name (chase, dodge)"),
    ("seed", "run seed; every random stream derives from it"),
    ("env_steps", "environment steps to collect"),
    ("width_scale", "encoder channel multiplier"),
    ("base_channels", "stage channels before scaling, comma separated"),
    ("latent_dim", "head hidden width and projection size"),
    ("num_atoms", "categorical support size"),
    ("v_min", "lowest support atom"),
    ("v_max", "highest support atom"),
    ("dueling", "dueling head on/off"),
    ("use_spr", "self-prediction loss and heads on/off"),
    ("spr_horizon", "future steps predicted by the transition model"),
    ("frame_stack", "frames stacked into one observation"),
    ("n_start", "update horizon right after a reset"),
    ("n_end", "update horizon after annealing"),
    ("gamma_start", "discount right after a reset"),
    ("gamma_end", "discount after annealing"),
    ("anneal_steps", "gradient steps to anneal n and gamma"),
    ("reset_period", "gradient steps between resets"),
    ("replay_ratio", "gradient steps per env step (integer, or 1/k)"),
    ("epsilon_start", "exploration rate at the first env step"),
    ("epsilon_end", "exploration rate after decay"),
    ("epsilon_decay_steps", "env steps of linear exploration decay"),
    ("lr", "AdamW learning rate"),
    ("beta1", "AdamW first moment decay"),
    ("beta2", "AdamW second moment decay"),
    ("adam_eps", "AdamW epsilon"),
    ("weight_decay", "AdamW decoupled weight decay"),
    ("batch_size", "samples per gradient step"),
    ("ema_tau", "target network EMA decay; 0 copies the online network"),
    ("resets", "periodic shrink-and-perturb resets on/off"),
    ("alpha_encoder", "fraction moved towards the random template on reset"),
    ("reset_interpolate", "parameter name prefixes interpolated on reset, comma separated"),
    ("fixed_n", "constant update horizon instead of the schedule (none to disable)"),
    ("fixed_gamma", "constant discount instead of the schedule (none to disable)"),
    ("warmup", "uniform-random env steps before learning starts"),
    ("replay_capacity", "replay ring size"),
    ("prioritized", "proportional prioritized sampling on/off"),
    ("priority_omega", "priority sampling exponent"),
    ("priority_beta", "importance weight exponent"),
    ("priority_eps", "priority floor added to the TD error"),
    ("lambda_spr", "weight of the self-prediction loss"),
    ("double_q", "online-argmax / target-evaluate bootstrap"),
    ("augment", "random shift and intensity augmentation on/off"),
    ("augment_pad", "maximum shift in pixels applied by augmentation"),
    ("sticky_prob", "probability of repeating the previous action"),
    ("eval_episodes", "episodes per evaluation"),
    ("eval_epsilon", "exploration rate during evaluation"),
    ("eval_every", "env steps between evaluations; 0 for end only"),
    ("checkpoint_every", "env steps between resumable checkpoints; 0 disables"),
];

impl AgentConfig {
    pub fn canonical() -> Self {
        let env = envs::spec_of("chase").expect("built-in env");
        AgentConfig {
            name: "bbf".into(),
            preset: "canonical".into(),
            env: "chase".into(),
            seed: 0,
            env_steps: 100_000,
            arch: ArchitectureSpec {
                input_channels: env.channels * 4,
                input_height: env.height,
                input_width: env.width,
                num_actions: env.num_actions,
                ..ArchitectureSpec::default()
            },
            schedule: ScheduleConfig::canonical(),
            optimizer: AdamWConfig::default(),
            replay: ReplayConfig::default(),
            loss: LossConfig::default(),
            batch_size: 32,
            ema_tau: 0.995,
            resets: true,
            alpha_encoder: 0.5,
            reset_policy: ResetPolicy::default(),
            fixed_n: None,
            fixed_gamma: None,
            warmup: 2_000,
            sticky_prob: 0.25,
            eval_episodes: 100,
            eval_epsilon: 0.001,
            eval_every: 0,
            checkpoint_every: 0,
        }
    }

    /// Short clocks and a small network for single-core runs.
    pub fn desk() -> Self {
        let mut c = Self::canonical();
        c.preset = "desk".into();
        c.env_steps = 10_000;
        c.schedule = ScheduleConfig::desk();
        c.warmup = 400;
        c.eval_episodes = 20;
        c.arch.width_scale = 2;
        c.arch.latent_dim = 128;
        c.arch.spr_horizon = 2;
        c.batch_size = 8;
        c.optimizer.lr = 1e-3;
        c.loss.augment_pad = 1;
        c.replay.capacity = 20_000;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "canonical" => Ok(Self::canonical()),
            other => Err(Error::config(format!("unknown preset `{other}`"))),
        }
    }

    pub fn from_kv(map: &KvMap) -> Result<Self> {
        let mut c = Self::preset(map.get("preset").unwrap_or("desk"))?;
        for (k, v) in map.iter() {
            if k != "preset" {
                c.apply(k, v)?;
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KvMap::parse(text)?)
    }

    /// Sets one key from its text form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::config(format!("bad value for `{key}`: `{v}`")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "on" | "1" | "yes" => Ok(true),
                "false" | "off" | "0" | "no" => Ok(false),
                _ => Err(Error::config(format!("bad flag for `{key}`: `{v}`"))),
            }
        }
        fn opt<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
            if v == "none" || v.is_empty() {
                Ok(None)
            } else {
                num(key, v).map(Some)
            }
        }
        let (a, s, o) = (&mut self.arch, &mut self.schedule, &mut self.optimizer);
        match key {
            "name" => self.name = value.to_string(),
            "env" => {
                let spec = envs::spec_of(value)?;
                self.env = spec.name.to_string();
                let depth = a.input_channels / spec.channels.max(1);
                a.input_channels = spec.channels * depth.max(1);
                a.input_height = spec.height;
                a.input_width = spec.width;
                a.num_actions = spec.num_actions;
            }
            "seed" => self.seed = num(key, value)?,
            "env_steps" => self.env_steps = num(key, value)?,
            "width_scale" => a.width_scale = num(key, value)?,
            "base_channels" => {
                let parts: Vec<usize> = value.split(',').map(|p| num(key, p.trim())).collect::<Result<_>>()?;
                a.base_channels = parts
                    .try_into()
                    .map_err(|_| Error::config("base_channels needs three values"))?;
            }
            "latent_dim" => a.latent_dim = num(key, value)?,
            "num_atoms" => a.num_atoms = num(key, value)?,
            "v_min" => a.v_min = num(key, value)?,
            "v_max" => a.v_max = num(key, value)?,
            "dueling" => a.dueling = flag(key, value)?,
            "use_spr" => a.use_spr = flag(key, value)?,
            "spr_horizon" => a.spr_horizon = num(key, value)?,
            "frame_stack" => {
                let depth: usize = num(key, value)?;
                let planes = envs::spec_of(&self.env)?.channels;
                a.input_channels = planes * depth;
                self.replay.stack_depth = depth;
            }
            "n_start" => s.n_start = num(key, value)?,
            "n_end" => s.n_end = num(key, value)?,
            "gamma_start" => s.gamma_start = num(key, value)?,
            "gamma_end" => s.gamma_end = num(key, value)?,
            "anneal_steps" => s.anneal_steps = num(key, value)?,
            "reset_period" => s.reset_period = num(key, value)?,
            "replay_ratio" => s.replay_ratio = num(key, value)?,
            "epsilon_start" => s.epsilon_start = num(key, value)?,
            "epsilon_end" => s.epsilon_end = num(key, value)?,
            "epsilon_decay_steps" => s.epsilon_decay_steps = num(key, value)?,
            "lr" => o.lr = num(key, value)?,
            "beta1" => o.beta1 = num(key, value)?,
            "beta2" => o.beta2 = num(key, value)?,
            "adam_eps" => o.eps = num(key, value)?,
            "weight_decay" => o.weight_decay = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "ema_tau" => self.ema_tau = num(key, value)?,
            "resets" => self.resets = flag(key, value)?,
            "alpha_encoder" => self.alpha_encoder = num(key, value)?,
            "reset_interpolate" => {
                self.reset_policy.interpolate_prefixes =
                    value.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect()
            }
            "fixed_n" => self.fixed_n = opt(key, value)?,
            "fixed_gamma" => self.fixed_gamma = opt(key, value)?,
            "warmup" => self.warmup = num(key, value)?,
            "replay_capacity" => self.replay.capacity = num(key, value)?,
            "prioritized" => self.replay.prioritized = flag(key, value)?,
            "priority_omega" => self.replay.omega = num(key, value)?,
            "priority_beta" => self.replay.beta = num(key, value)?,
            "priority_eps" => self.replay.priority_eps = num(key, value)?,
            "lambda_spr" => self.loss.lambda_spr = num(key, value)?,
            "double_q" => self.loss.double_q = flag(key, value)?,
            "augment" => self.loss.augment = flag(key, value)?,
            "augment_pad" => self.loss.augment_pad = num(key, value)?,
            "sticky_prob" => self.sticky_prob = num(key, value)?,
            "eval_episodes" => self.eval_episodes = num(key, value)?,
            "eval_epsilon" => self.eval_epsilon = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = num(key, value)?,
            "preset" => return Err(Error::config("`preset` must come from the config file")),
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn frame_stack(&self) -> usize {
        self.replay.stack_depth
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.schedule.validate()?;
        let env = envs::spec_of(&self.env)?;
        if self.arch.input_channels != env.channels * self.replay.stack_depth {
            return Err(Error::config("input_channels must equal planes x frame_stack"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.loss.augment && self.loss.augment_pad > env.height.min(env.width) {
            return Err(Error::config("augment_pad exceeds the frame size"));
        }
        for (k, v) in [
            ("ema_tau", self.ema_tau),
            ("alpha_encoder", self.alpha_encoder),
            ("sticky_prob", self.sticky_prob),
            ("eval_epsilon", self.eval_epsilon),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{k} = {v} outside [0, 1]")));
            }
        }
        if let Some(n) = self.fixed_n {
            if n < 1 {
                return Err(Error::config("fixed_n must be >= 1"));
            }
        }
        if let Some(g) = self.fixed_gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::config("fixed_gamma outside (0, 1)"));
            }
        }
        if !(self.optimizer.lr > 0.0) || self.optimizer.weight_decay < 0.0 {
            return Err(Error::config("lr must be positive and weight_decay non-negative"));
        }
        Ok(())
    }

    /// Full key listing; parsing it reproduces this config.
    pub fn to_kv(&self) -> KvMap {
        let (a, s, o) = (&self.arch, &self.schedule, &self.optimizer);
        let mut m = KvMap::new();
        let mut put = |k: &str, v: String| m.set(k, v);
        put("preset", self.preset.clone());
        put("name", self.name.clone());
        put("env", self.env.clone());
        put("seed", self.seed.to_string());
        put("env_steps", self.env_steps.to_string());
        put("frame_stack", self.replay.stack_depth.to_string());
        put("width_scale", a.width_scale.to_string());
        put("base_channels", a.base_channels.map(|c| c.to_string()).join(","));
        put("latent_dim", a.latent_dim.to_string());
        put("num_atoms", a.num_atoms.to_string());
        put("v_min", a.v_min.to_string());
        put("v_max", a.v_max.to_string());
        put("dueling", a.dueling.to_string());
        put("use_spr", a.use_spr.to_string());
        put("spr_horizon", a.spr_horizon.to_string());
        put("n_start", s.n_start.to_string());
        put("n_end", s.n_end.to_string());
        put("gamma_start", s.gamma_start.to_string());
        put("gamma_end", s.gamma_end.to_string());
        put("anneal_steps", s.anneal_steps.to_string());
        put("reset_period", s.reset_period.to_string());
        put("replay_ratio", s.replay_ratio.to_string());
        put("epsilon_start", s.epsilon_start.to_string());
        put("epsilon_end", s.epsilon_end.to_string());
        put("epsilon_decay_steps", s.epsilon_decay_steps.to_string());
        put("lr", o.lr.to_string());
        put("beta1", o.beta1.to_string());
        put("beta2", o.beta2.to_string());
        put("adam_eps", o.eps.to_string());
        put("weight_decay", o.weight_decay.to_string());
        put("batch_size", self.batch_size.to_string());
        put("ema_tau", self.ema_tau.to_string());
        put("resets", self.resets.to_string());
        put("alpha_encoder", self.alpha_encoder.to_string());
        put("reset_interpolate", self.reset_policy.interpolate_prefixes.join(","));
        put("fixed_n", self.fixed_n.map_or("none".into(), |n| n.to_string()));
        put("fixed_gamma", self.fixed_gamma.map_or("none".into(), |g| g.to_string()));
        put("warmup", self.warmup.to_string());
        put("replay_capacity", self.replay.capacity.to_string());
        put("prioritized", self.replay.prioritized.to_string());
        put("priority_omega", self.replay.omega.to_string());
        put("priority_beta", self.replay.beta.to_string());
        put("priority_eps", self.replay.priority_eps.to_string());
        put("lambda_spr", self.loss.lambda_spr.to_string());
        put("double_q", self.loss.double_q.to_string());
        put("augment", self.loss.augment.to_string());
        put("augment_pad", self.loss.augment_pad.to_string());
        put("sticky_prob", self.sticky_prob.to_string());
        put("eval_episodes", self.eval_episodes.to_string());
        put("eval_epsilon", self.eval_epsilon.to_string());
        put("eval_every", self.eval_every.to_string());
        put("checkpoint_every", self.checkpoint_every.to_string());
        m
    }

    /// Human-readable list of keys and their meaning.
    pub fn key_reference() -> String {
        KEYS.iter().map(|(k, d)| format!("{k:<22} {d}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_text() {
        let mut c = AgentConfig::desk();
        c.fixed_n = Some(3);
        c.env = "dodge".into();
        c.arch.num_actions = 3;
        c.loss.double_q = false;
        let back = AgentConfig::parse(&c.to_kv().to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn every_documented_key_is_accepted() {
        let c = AgentConfig::desk();
        let dump = c.to_kv();
        for (k, _) in KEYS {
            assert!(dump.get(k).is_some(), "{k} missing from dump");
        }
        assert_eq!(dump.len(), KEYS.len());
    }

    #[test]
    fn overrides_and_errors() {
        let c = AgentConfig::parse("preset = canonical\nwidth_scale = 2\nenv = dodge\nframe_stack = 2\n").unwrap();
        assert_eq!(c.arch.width_scale, 2);
        assert_eq!(c.arch.num_actions, 3);
        assert_eq!(c.arch.input_channels, 8);
        assert_eq!(c.optimizer.weight_decay, 0.1);
        assert!(AgentConfig::parse("bogus = 1\n").is_err());
        assert!(AgentConfig::parse("alpha_encoder = 2\n").is_err());
        assert!(AgentConfig::parse("preset = huge\n").is_err());
        assert!(AgentConfig::parse("resets = maybe\n").is_err());
    }

    #[test]
    fn canonical_anneal_fraction() {
        assert_eq!(AgentConfig::canonical().schedule.anneal_fraction(), 0.25);
        assert_eq!(AgentConfig::desk().schedule.anneal_fraction(), 0.25);
    }
}
