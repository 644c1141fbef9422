//! Annealed update horizon and discount, reset clock, exploration and
//! replay-ratio accounting. Everything here is a pure function of the
//! config and a [`ScheduleState`].

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleConfig {
    pub n_start: usize,
    pub n_end: usize,
    pub gamma_start: f64,
    pub gamma_end: f64,
    pub anneal_steps: u64,
    /// Gradient steps between resets; 0 disables resets.
    pub reset_period: u64,
    pub replay_ratio: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: u64,
}

impl ScheduleConfig {
    /// Full-scale values.
    pub fn canonical() -> Self {
        ScheduleConfig {
            n_start: 10,
            n_end: 3,
            gamma_start: 0.97,
            gamma_end: 0.997,
            anneal_steps: 10_000,
            reset_period: 40_000,
            replay_ratio: 8.0,
            epsilon_start: 1.0,
            epsilon_end: 0.01,
            epsilon_decay_steps: 2_000,
        }
    }

    /// Shortened clocks for small runs, keeping the 25% anneal fraction.
    pub fn desk() -> Self {
        ScheduleConfig {
            anneal_steps: 1_000,
            reset_period: 4_000,
            replay_ratio: 2.0,
            ..Self::canonical()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(format!("schedule: {m}")));
        if self.n_end < 1 || self.n_start < self.n_end {
            return bad(format!("need n_start >= n_end >= 1, got {} and {}", self.n_start, self.n_end));
        }
        for g in [self.gamma_start, self.gamma_end] {
            if !(g > 0.0 && g < 1.0) {
                return bad(format!("discount {g} outside (0, 1)"));
            }
        }
        if self.gamma_end < self.gamma_start {
            return bad("gamma_end must be >= gamma_start".into());
        }
        if !(self.replay_ratio > 0.0 && self.replay_ratio.is_finite()) {
            return bad(format!("replay_ratio {} must be positive", self.replay_ratio));
        }
        if self.replay_ratio >= 1.0 && self.replay_ratio.fract() != 0.0 {
            return bad(format!("replay_ratio {} above 1 must be an integer", self.replay_ratio));
        }
        if self.replay_ratio < 1.0 {
            let inv = 1.0 / self.replay_ratio;
            if (inv - inv.round()).abs() > 1e-9 {
                return bad(format!("replay_ratio {} below 1 must be 1/k", self.replay_ratio));
            }
        }
        for e in [self.epsilon_start, self.epsilon_end] {
            if !(0.0..=1.0).contains(&e) {
                return bad(format!("epsilon {e} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn anneal_fraction(&self) -> f64 {
        self.anneal_steps as f64 / self.reset_period as f64
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScheduleState {
    pub gradient_steps_total: u64,
    pub gradient_steps_since_reset: u64,
    pub env_steps: u64,
    pub reset_count: u64,
}

impl ScheduleState {
    pub fn record_gradient_step(&mut self) {
        self.gradient_steps_total += 1;
        self.gradient_steps_since_reset += 1;
    }

    pub fn record_reset(&mut self) {
        self.gradient_steps_since_reset = 0;
        self.reset_count += 1;
    }

    pub fn to_kv(&self) -> crate::kv::KvMap {
        let mut m = crate::kv::KvMap::default();
        m.set("gradient_steps_total", self.gradient_steps_total.to_string());
        m.set("gradient_steps_since_reset", self.gradient_steps_since_reset.to_string());
        m.set("env_steps", self.env_steps.to_string());
        m.set("reset_count", self.reset_count.to_string());
        m
    }

    pub fn from_kv(m: &crate::kv::KvMap) -> Result<Self> {
        Ok(ScheduleState {
            gradient_steps_total: m.parse_value("gradient_steps_total")?,
            gradient_steps_since_reset: m.parse_value("gradient_steps_since_reset")?,
            env_steps: m.parse_value("env_steps")?,
            reset_count: m.parse_value("reset_count")?,
        })
    }
}

/// Anneal progress `u = min(k, K_a) / K_a`.
pub fn progress(k: u64, anneal_steps: u64) -> f64 {
    if anneal_steps == 0 {
        return 1.0;
    }
    k.min(anneal_steps) as f64 / anneal_steps as f64
}

/// `round_half_even(n_start * (n_end / n_start)^u)` clamped to `[n_end, n_start]`.
pub fn n_at(k: u64, c: &ScheduleConfig) -> usize {
    let u = progress(k, c.anneal_steps);
    if u == 0.0 {
        return c.n_start;
    }
    if u >= 1.0 {
        return c.n_end;
    }
    let (a, b) = (c.n_start as f64, c.n_end as f64);
    let n = (a * (b / a).powf(u)).round_ties_even() as usize;
    n.clamp(c.n_end, c.n_start)
}

/// Geometric interpolation of the effective horizon `1 / (1 - gamma)`.
pub fn gamma_at(k: u64, c: &ScheduleConfig) -> f64 {
    let u = progress(k, c.anneal_steps);
    if u == 0.0 {
        return c.gamma_start;
    }
    if u >= 1.0 {
        return c.gamma_end;
    }
    let h1 = 1.0 / (1.0 - c.gamma_start);
    let h2 = 1.0 / (1.0 - c.gamma_end);
    let h = h1 * (h2 / h1).powf(u);
    (1.0 - 1.0 / h).clamp(c.gamma_start, c.gamma_end)
}

pub fn current_n(state: &ScheduleState, c: &ScheduleConfig) -> usize {
    n_at(state.gradient_steps_since_reset, c)
}

pub fn current_gamma(state: &ScheduleState, c: &ScheduleConfig) -> f64 {
    gamma_at(state.gradient_steps_since_reset, c)
}

pub fn should_reset(state: &ScheduleState, c: &ScheduleConfig) -> bool {
    c.reset_period > 0 && state.gradient_steps_total > 0 && state.gradient_steps_total % c.reset_period == 0
}

/// Linear decay from `epsilon_start` to `epsilon_end`, then constant.
pub fn epsilon(env_steps: u64, c: &ScheduleConfig) -> f64 {
    if c.epsilon_decay_steps == 0 || env_steps >= c.epsilon_decay_steps {
        return c.epsilon_end;
    }
    let f = env_steps as f64 / c.epsilon_decay_steps as f64;
    c.epsilon_start + (c.epsilon_end - c.epsilon_start) * f
}

/// Updates owed after completing an environment step. `learning_steps`
/// counts env steps since learning began, including the one just taken.
pub fn gradient_steps_due(learning_steps: u64, c: &ScheduleConfig) -> u64 {
    if learning_steps == 0 {
        return 0;
    }
    if c.replay_ratio >= 1.0 {
        return c.replay_ratio as u64;
    }
    let every = (1.0 / c.replay_ratio).round() as u64;
    u64::from(learning_steps % every == 0)
}
