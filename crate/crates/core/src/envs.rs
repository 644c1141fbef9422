//! Small deterministic pixel games, a sticky-action wrapper and frame
//! stacking.
//!
//! Both games render four binary 10x10 planes. Any external simulator can
//! take part in training by implementing [`Environment`].

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::rng::{self, Rng};

pub const GRID: usize = 10;
pub const PLANES: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub num_actions: usize,
    pub max_episode_length: u64,
    pub reference_random_score: f64,
    pub reference_expert_score: f64,
}

impl EnvSpec {
    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub observation: Vec<f32>,
    pub reward: f32,
    pub terminal: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;
    /// Starts a new episode; the game's random stream is reseeded from `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f32>;
    fn step(&mut self, action: usize) -> Result<Step>;
    fn steps(&self) -> u64;
    fn is_terminal(&self) -> bool;
    /// Action of the shipped scripted policy in the current state.
    fn expert_action(&self) -> usize;
    fn save_state(&self) -> KvMap;
    fn load_state(&mut self, state: &KvMap) -> Result<()>;
}

pub const NAMES: [&str; 2] = ["chase", "dodge"];

pub fn make(name: &str) -> Result<Box<dyn Environment>> {
    match name.to_ascii_lowercase().as_str() {
        "chase" => Ok(Box::new(Chase::new())),
        "dodge" => Ok(Box::new(Dodge::new())),
        other => Err(Error::Env(format!("unknown environment `{other}` (known: {})", NAMES.join(", ")))),
    }
}

pub fn spec_of(name: &str) -> Result<EnvSpec> {
    Ok(make(name)?.spec().clone())
}

type Cell = (i32, i32);

fn set(frame: &mut [f32], plane: usize, (r, c): Cell) {
    frame[plane * GRID * GRID + r as usize * GRID + c as usize] = 1.0;
}

fn parse_cell(text: &str) -> Result<Cell> {
    let bad = || Error::Env(format!("bad cell `{text}`"));
    let (r, c) = text.split_once(':').ok_or_else(bad)?;
    let cell: Cell = (r.parse().map_err(|_| bad())?, c.parse().map_err(|_| bad())?);
    if !(0..GRID as i32).contains(&cell.0) || !(0..GRID as i32).contains(&cell.1) {
        return Err(bad());
    }
    Ok(cell)
}

fn fmt_cell((r, c): Cell) -> String {
    format!("{r}:{c}")
}

fn clamp_move((r, c): Cell, dr: i32, dc: i32) -> Cell {
    let lim = GRID as i32 - 1;
    ((r + dr).clamp(0, lim), (c + dc).clamp(0, lim))
}

fn check_action(spec: &EnvSpec, done: bool, action: usize) -> Result<()> {
    if done {
        return Err(Error::Env("step after terminal".into()));
    }
    if action >= spec.num_actions {
        return Err(Error::Env(format!("action {action} outside [0, {})", spec.num_actions)));
    }
    Ok(())
}

/// Pursuit game: move onto a randomly wandering target; each catch scores
/// one point and respawns the target at least four cells away. Between
/// catches every step also pays 0.1 per cell of distance closed.
///
/// Actions: 0 stay, 1 up, 2 down, 3 left, 4 right. Planes: agent, target,
/// previous target cell, previous agent cell.
#[derive(Clone, Debug)]
pub struct Chase {
    spec: EnvSpec,
    rng: Rng,
    agent: Cell,
    target: Cell,
    prev_agent: Cell,
    prev_target: Cell,
    steps: u64,
    done: bool,
}

const MOVES: [(i32, i32); 5] = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)];
const CHASE_MIN_RESPAWN: i32 = 4;
const CHASE_TARGET_MOVE_PROB: f64 = 0.5;
const CHASE_APPROACH_REWARD: f32 = 0.1;

fn manhattan(a: Cell, b: Cell) -> i32 {
    (a.0 - b.0).abs() + (a.1 - b.1).abs()
}

impl Chase {
    pub fn new() -> Self {
        Chase {
            spec: EnvSpec {
                name: "chase",
                channels: PLANES,
                height: GRID,
                width: GRID,
                num_actions: 5,
                max_episode_length: 100,
                reference_random_score: 0.768,
                reference_expert_score: 21.43,
            },
            rng: rng::stream(0, 0),
            agent: (0, 0),
            target: (0, 0),
            prev_agent: (0, 0),
            prev_target: (0, 0),
            steps: 0,
            done: true,
        }
    }

    fn random_cell(&mut self) -> Cell {
        (self.rng.random_range(0..GRID as i32), self.rng.random_range(0..GRID as i32))
    }

    fn respawn_target(&mut self) {
        loop {
            let c = self.random_cell();
            if manhattan(c, self.agent) >= CHASE_MIN_RESPAWN {
                self.target = c;
                return;
            }
        }
    }

    fn render(&self) -> Vec<f32> {
        let mut f = vec![0.0; PLANES * GRID * GRID];
        set(&mut f, 0, self.agent);
        set(&mut f, 1, self.target);
        set(&mut f, 2, self.prev_target);
        set(&mut f, 3, self.prev_agent);
        f
    }
}

impl Default for Chase {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Chase {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f32> {
        self.rng = rng::stream(seed, 0);
        self.agent = self.random_cell();
        self.respawn_target();
        self.prev_agent = self.agent;
        self.prev_target = self.target;
        self.steps = 0;
        self.done = false;
        self.render()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        check_action(&self.spec, self.done, action)?;
        self.prev_agent = self.agent;
        self.prev_target = self.target;
        let (dr, dc) = MOVES[action];
        self.agent = clamp_move(self.agent, dr, dc);
        let before = manhattan(self.prev_agent, self.prev_target);
        let mut caught = self.agent == self.target;
        if !caught && self.rng.random::<f64>() < CHASE_TARGET_MOVE_PROB {
            let (dr, dc) = MOVES[self.rng.random_range(1..5)];
            self.target = clamp_move(self.target, dr, dc);
            caught = self.agent == self.target;
        }
        let reward = if caught {
            self.respawn_target();
            1.0
        } else {
            CHASE_APPROACH_REWARD * (before - manhattan(self.agent, self.target)) as f32
        };
        self.steps += 1;
        self.done = self.steps >= self.spec.max_episode_length;
        Ok(Step {
            observation: self.render(),
            reward,
            terminal: self.done,
        })
    }

    fn steps(&self) -> u64 {
        self.steps
    }

    fn is_terminal(&self) -> bool {
        self.done
    }

    /// Closes the larger axis gap first, vertical on ties.
    fn expert_action(&self) -> usize {
        let dr = self.target.0 - self.agent.0;
        let dc = self.target.1 - self.agent.1;
        if dr == 0 && dc == 0 {
            0
        } else if dr.abs() >= dc.abs() {
            if dr < 0 {
                1
            } else {
                2
            }
        } else if dc < 0 {
            3
        } else {
            4
        }
    }

    fn save_state(&self) -> KvMap {
        let mut m = KvMap::new();
        m.set("game", "chase");
        m.set("rng", rng::save(&self.rng));
        m.set("agent", fmt_cell(self.agent));
        m.set("target", fmt_cell(self.target));
        m.set("prev_agent", fmt_cell(self.prev_agent));
        m.set("prev_target", fmt_cell(self.prev_target));
        m.set("steps", self.steps.to_string());
        m.set("done", self.done.to_string());
        m
    }

    fn load_state(&mut self, s: &KvMap) -> Result<()> {
        if s.require("game")? != "chase" {
            return Err(Error::Env("state is not a chase state".into()));
        }
        self.rng = rng::restore(s.require("rng")?)?;
        self.agent = parse_cell(s.require("agent")?)?;
        self.target = parse_cell(s.require("target")?)?;
        self.prev_agent = parse_cell(s.require("prev_agent")?)?;
        self.prev_target = parse_cell(s.require("prev_target")?)?;
        self.steps = s.parse_value("steps")?;
        self.done = s.parse_value("done")?;
        Ok(())
    }
}

/// Avoidance game: objects fall one row per step; every object reaching
/// the bottom row away from the agent scores one point, a hit ends the
/// episode.
///
/// Actions: 0 stay, 1 left, 2 right. Planes: agent, objects, previous
/// object cells, previous agent cell.
#[derive(Clone, Debug)]
pub struct Dodge {
    spec: EnvSpec,
    rng: Rng,
    agent: i32,
    prev_agent: i32,
    objects: Vec<Cell>,
    prev_objects: Vec<Cell>,
    steps: u64,
    done: bool,
}

const DODGE_SPAWN_PROB: f64 = 0.3;
const BOTTOM: i32 = GRID as i32 - 1;

impl Dodge {
    pub fn new() -> Self {
        Dodge {
            spec: EnvSpec {
                name: "dodge",
                channels: PLANES,
                height: GRID,
                width: GRID,
                num_actions: 3,
                max_episode_length: 200,
                reference_random_score: 8.97,
                reference_expert_score: 57.29,
            },
            rng: rng::stream(0, 0),
            agent: 0,
            prev_agent: 0,
            objects: Vec::new(),
            prev_objects: Vec::new(),
            steps: 0,
            done: true,
        }
    }

    fn render(&self) -> Vec<f32> {
        let mut f = vec![0.0; PLANES * GRID * GRID];
        set(&mut f, 0, (BOTTOM, self.agent));
        for &o in &self.objects {
            set(&mut f, 1, o);
        }
        for &o in &self.prev_objects {
            set(&mut f, 2, o);
        }
        set(&mut f, 3, (BOTTOM, self.prev_agent));
        f
    }

    fn moved(col: i32, action: usize) -> i32 {
        match action {
            1 => (col - 1).max(0),
            2 => (col + 1).min(GRID as i32 - 1),
            _ => col,
        }
    }
}

impl Default for Dodge {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Dodge {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f32> {
        self.rng = rng::stream(seed, 0);
        self.agent = self.rng.random_range(0..GRID as i32);
        self.prev_agent = self.agent;
        self.objects.clear();
        self.prev_objects.clear();
        self.steps = 0;
        self.done = false;
        self.render()
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        check_action(&self.spec, self.done, action)?;
        self.prev_agent = self.agent;
        self.prev_objects = self.objects.clone();
        self.agent = Self::moved(self.agent, action);
        let mut reward = 0.0;
        let mut hit = false;
        let mut kept = Vec::with_capacity(self.objects.len() + 1);
        for &(r, c) in &self.objects {
            let r = r + 1;
            if r == BOTTOM {
                if c == self.agent {
                    hit = true;
                } else {
                    reward += 1.0;
                }
            } else {
                kept.push((r, c));
            }
        }
        self.objects = kept;
        if self.rng.random::<f64>() < DODGE_SPAWN_PROB {
            let c = self.rng.random_range(0..GRID as i32);
            self.objects.push((0, c));
        }
        self.steps += 1;
        self.done = hit || self.steps >= self.spec.max_episode_length;
        Ok(Step {
            observation: self.render(),
            reward,
            terminal: self.done,
        })
    }

    fn steps(&self) -> u64 {
        self.steps
    }

    fn is_terminal(&self) -> bool {
        self.done
    }

    /// Avoids the columns about to land, preferring to stay, then the move
    /// that keeps the next row clear too.
    fn expert_action(&self) -> usize {
        let landing = |row: i32| -> Vec<i32> {
            self.objects.iter().filter(|o| o.0 == row).map(|o| o.1).collect()
        };
        let next = landing(BOTTOM - 1);
        let after = landing(BOTTOM - 2);
        let safe = |a: usize| !next.contains(&Self::moved(self.agent, a));
        let mut best = None;
        for a in [0usize, 1, 2] {
            if !safe(a) {
                continue;
            }
            let col = Self::moved(self.agent, a);
            let future_ok = [0usize, 1, 2].iter().any(|&b| !after.contains(&Self::moved(col, b)));
            let score = u8::from(future_ok);
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((a, score));
            }
        }
        best.map_or(0, |(a, _)| a)
    }

    fn save_state(&self) -> KvMap {
        let cells = |v: &[Cell]| v.iter().map(|&c| fmt_cell(c)).collect::<Vec<_>>().join(";");
        let mut m = KvMap::new();
        m.set("game", "dodge");
        m.set("rng", rng::save(&self.rng));
        m.set("agent", self.agent.to_string());
        m.set("prev_agent", self.prev_agent.to_string());
        m.set("objects", cells(&self.objects));
        m.set("prev_objects", cells(&self.prev_objects));
        m.set("steps", self.steps.to_string());
        m.set("done", self.done.to_string());
        m
    }

    fn load_state(&mut self, s: &KvMap) -> Result<()> {
        if s.require("game")? != "dodge" {
            return Err(Error::Env("state is not a dodge state".into()));
        }
        let cells = |t: &str| -> Result<Vec<Cell>> {
            t.split(';').filter(|p| !p.is_empty()).map(parse_cell).collect()
        };
        let col = |k: &str| -> Result<i32> {
            let c: i32 = s.parse_value(k)?;
            if !(0..GRID as i32).contains(&c) {
                return Err(Error::Env(format!("bad column {c}")));
            }
            Ok(c)
        };
        self.rng = rng::restore(s.require("rng")?)?;
        self.agent = col("agent")?;
        self.prev_agent = col("prev_agent")?;
        self.objects = cells(s.require("objects")?)?;
        self.prev_objects = cells(s.require("prev_objects")?)?;
        self.steps = s.parse_value("steps")?;
        self.done = s.parse_value("done")?;
        Ok(())
    }
}

/// With probability `repeat_prob` the previously executed action replaces
/// the agent's choice. The first step of each episode never repeats.
pub struct Sticky<E> {
    pub inner: E,
    repeat_prob: f64,
    rng: Rng,
    previous: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StickyStep {
    pub step: Step,
    pub executed_action: usize,
    pub repeated: bool,
}

impl<E: Environment> Sticky<E> {
    pub fn new(inner: E, repeat_prob: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&repeat_prob) {
            return Err(Error::config(format!("repeat_prob {repeat_prob} outside [0, 1]")));
        }
        Ok(Sticky {
            inner,
            repeat_prob,
            rng: rng::stream(seed, 1),
            previous: None,
        })
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f32> {
        self.previous = None;
        self.inner.reset(seed)
    }

    pub fn step(&mut self, action: usize) -> Result<StickyStep> {
        let coin = self.rng.random::<f64>() < self.repeat_prob;
        let (executed, repeated) = match self.previous {
            Some(p) if coin => (p, true),
            _ => (action, false),
        };
        let step = self.inner.step(executed)?;
        self.previous = Some(executed);
        Ok(StickyStep {
            step,
            executed_action: executed,
            repeated,
        })
    }

    pub fn save_state(&self) -> KvMap {
        let mut m = self.inner.save_state();
        m.set("sticky.rng", rng::save(&self.rng));
        m.set("sticky.previous", self.previous.map_or("none".into(), |p| p.to_string()));
        m
    }

    pub fn load_state(&mut self, s: &KvMap) -> Result<()> {
        self.inner.load_state(s)?;
        self.rng = rng::restore(s.require("sticky.rng")?)?;
        self.previous = match s.require("sticky.previous")? {
            "none" => None,
            p => Some(p.parse().map_err(|_| Error::Env(format!("bad previous action `{p}`")))?),
        };
        Ok(())
    }
}

impl Environment for Box<dyn Environment> {
    fn spec(&self) -> &EnvSpec {
        (**self).spec()
    }
    fn reset(&mut self, seed: u64) -> Vec<f32> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: usize) -> Result<Step> {
        (**self).step(action)
    }
    fn steps(&self) -> u64 {
        (**self).steps()
    }
    fn is_terminal(&self) -> bool {
        (**self).is_terminal()
    }
    fn expert_action(&self) -> usize {
        (**self).expert_action()
    }
    fn save_state(&self) -> KvMap {
        (**self).save_state()
    }
    fn load_state(&mut self, state: &KvMap) -> Result<()> {
        (**self).load_state(state)
    }
}

/// Channel concatenation of the last `depth` frames, earliest first,
/// repeating the oldest available frame when history is short.
pub fn stack_frames(history: &[Vec<f32>], depth: usize) -> Vec<f32> {
    assert!(!history.is_empty() && depth >= 1, "stack_frames needs a frame and depth >= 1");
    let mut out = Vec::with_capacity(depth * history[0].len());
    let len = history.len();
    for j in (0..depth).rev() {
        let idx = len.saturating_sub(1 + j);
        out.extend_from_slice(&history[idx]);
    }
    out
}

/// Rolling history of the last `depth` frames.
#[derive(Clone, Debug)]
pub struct FrameStack {
    depth: usize,
    frames: VecDeque<Vec<f32>>,
}

impl FrameStack {
    pub fn new(depth: usize) -> Self {
        FrameStack {
            depth: depth.max(1),
            frames: VecDeque::new(),
        }
    }

    pub fn reset(&mut self, frame: Vec<f32>) {
        self.frames.clear();
        self.frames.push_back(frame);
    }

    pub fn push(&mut self, frame: Vec<f32>) {
        if self.frames.len() == self.depth {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
    }

    pub fn stacked(&self) -> Vec<f32> {
        let h: Vec<Vec<f32>> = self.frames.iter().cloned().collect();
        stack_frames(&h, self.depth)
    }

    pub fn frames(&self) -> impl Iterator<Item = &Vec<f32>> {
        self.frames.iter()
    }
}

/// Mean episode returns of the uniform-random and scripted policies.
pub fn calibrate(name: &str, random_episodes: usize, expert_episodes: usize, seed: u64) -> Result<(f64, f64)> {
    let mut env = make(name)?;
    let mut policy_rng = rng::stream(seed, 7);
    let a = env.spec().num_actions;
    let mut total = 0.0;
    for ep in 0..random_episodes {
        env.reset(seed.wrapping_mul(1_000_003).wrapping_add(ep as u64));
        while !env.is_terminal() {
            total += env.step(policy_rng.random_range(0..a))?.reward as f64;
        }
    }
    let random = total / random_episodes.max(1) as f64;
    let mut total = 0.0;
    for ep in 0..expert_episodes {
        env.reset(seed.wrapping_mul(1_000_003).wrapping_add((random_episodes + ep) as u64));
        while !env.is_terminal() {
            let act = env.expert_action();
            total += env.step(act)?.reward as f64;
        }
    }
    Ok((random, total / expert_episodes.max(1) as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub step: u64,
    pub action: usize,
    pub executed_action: usize,
    pub reward: f32,
    pub terminal: bool,
}

/// Writes `step,action,executed_action,reward,terminal` rows.
pub fn write_trajectory<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "action", "executed_action", "reward", "terminal"])
        .map_err(|e| Error::Env(e.to_string()))?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.action.to_string(),
            r.executed_action.to_string(),
            r.reward.to_string(),
            u8::from(r.terminal).to_string(),
        ])
        .map_err(|e| Error::Env(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_is_deterministic() {
        for name in NAMES {
            let mut a = make(name).unwrap();
            let mut b = make(name).unwrap();
            let oa = a.reset(11);
            assert_eq!(oa, b.reset(11));
            assert_eq!(a.steps(), 0);
            assert_eq!(oa.len(), a.spec().frame_len());
            assert!(oa.iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn max_length_forces_terminal() {
        let mut env = Chase::new();
        env.reset(3);
        for _ in 0..env.spec().max_episode_length {
            assert!(!env.is_terminal());
            env.step(0).unwrap();
        }
        assert!(env.is_terminal());
        assert!(env.step(0).is_err());
    }

    #[test]
    fn invalid_action_is_rejected() {
        let mut env = Dodge::new();
        env.reset(0);
        assert!(env.step(3).is_err());
    }

    #[test]
    fn state_round_trip_continues_identically() {
        for name in NAMES {
            let mut env = make(name).unwrap();
            env.reset(5);
            for t in 0..7 {
                if !env.is_terminal() {
                    env.step(t % env.spec().num_actions).unwrap();
                }
            }
            let snap = env.save_state();
            let mut other = make(name).unwrap();
            other.load_state(&KvMap::parse(&snap.to_text()).unwrap()).unwrap();
            for t in 0..20 {
                if env.is_terminal() {
                    break;
                }
                assert_eq!(env.step(t % 3).unwrap(), other.step(t % 3).unwrap());
            }
        }
    }

    #[test]
    fn stacking_rules() {
        let f = |v: f32| vec![v, v];
        assert_eq!(stack_frames(&[f(1.0), f(2.0)], 1), f(2.0));
        assert_eq!(stack_frames(&[f(1.0)], 4), vec![1.0; 8]);
        let s = stack_frames(&[f(1.0), f(2.0), f(3.0)], 4);
        assert_eq!(s, vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let mut fs = FrameStack::new(2);
        fs.reset(f(0.0));
        fs.push(f(1.0));
        fs.push(f(2.0));
        assert_eq!(fs.stacked(), vec![1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn sticky_limits() {
        let mut s = Sticky::new(Chase::new(), 1.0, 0).unwrap();
        s.reset(1);
        let first = s.step(3).unwrap();
        assert!(!first.repeated);
        for a in [1, 2, 4, 0] {
            assert_eq!(s.step(a).unwrap().executed_action, 3);
        }
        assert!(Sticky::new(Chase::new(), 1.5, 0).is_err());
    }

    #[test]
    fn trajectory_csv_header() {
        let mut out = Vec::new();
        let rows = [TrajectoryRow {
            step: 0,
            action: 1,
            executed_action: 1,
            reward: 0.0,
            terminal: false,
        }];
        write_trajectory(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "step,action,executed_action,reward,terminal\n0,1,1,0,0\n");
    }
}
