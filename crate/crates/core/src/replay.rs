//! Ring-buffer replay storing single frames, assembling stacked
//! observations, variable-horizon returns and K-step subsequences at
//! sample time.
//!
//! Records are addressed by a global insertion index; slot `g % capacity`
//! holds record `g` until it is overwritten. Record `g` is the observation
//! the agent acted on, the action, the reward that followed and whether
//! the episode ended after it.

use bbf_autodiff::checkpoint::Container;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::rng::Rng;

/// Array-backed binary sum tree over `capacity` leaves.
#[derive(Clone, Debug, PartialEq)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        SumTree {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, value: f64) {
        let mut k = self.leaves + i;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative interval contains `mass`, skipping zero leaves.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if mass < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                mass -= left;
                k = 2 * k + 1;
            }
        }
        k - self.leaves
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub stack_depth: usize,
    pub prioritized: bool,
    /// Sampling exponent on stored priorities.
    pub omega: f64,
    /// Importance-weight exponent.
    pub beta: f64,
    pub priority_eps: f64,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            capacity: 100_000,
            stack_depth: 4,
            prioritized: true,
            omega: 0.5,
            beta: 0.5,
            priority_eps: 1e-6,
        }
    }
}

/// `sum_{k<n'} gamma^k r_k + [no terminal] gamma^n bootstrap`, where
/// `terminal_within` is the index of the first reward after which the
/// episode ended and `n' = min(n, terminal_within + 1)`.
pub fn nstep_return(rewards: &[f64], gamma: f64, n: usize, bootstrap: f64, terminal_within: Option<usize>) -> Result<f64> {
    if n < 1 {
        return Err(Error::Replay("n must be >= 1".into()));
    }
    let (steps, bootstraps) = match terminal_within {
        Some(j) if j < n => (j + 1, false),
        _ => (n, true),
    };
    if rewards.len() < steps {
        return Err(Error::Replay(format!("{} rewards for horizon {steps}", rewards.len())));
    }
    let mut g = 0.0;
    let mut discount = 1.0;
    for &r in &rewards[..steps] {
        g += discount * r;
        discount *= gamma;
    }
    if bootstraps {
        g += discount * bootstrap;
    }
    Ok(g)
}

/// A training batch. Observation arrays are flattened `[B, C*depth, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub obs_len: usize,
    pub observations: Vec<f32>,
    pub actions: Vec<usize>,
    pub n_used: Vec<usize>,
    pub returns: Vec<f64>,
    pub next_observations: Vec<f32>,
    pub nonterminal: Vec<bool>,
    /// `gamma^n_used`, already zeroed where the bootstrap is masked.
    pub discounts: Vec<f64>,
    /// `spr_observations[k]` holds `s_{t+k+1}` for the batch.
    pub spr_observations: Vec<Vec<f32>>,
    /// `spr_actions[k]` holds `a_{t+k}`.
    pub spr_actions: Vec<Vec<usize>>,
    pub spr_valid: Vec<Vec<bool>>,
    pub weights: Vec<f64>,
    pub indices: Vec<u64>,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    config: ReplayConfig,
    frame_len: usize,
    frames: Vec<f32>,
    actions: Vec<u32>,
    rewards: Vec<f32>,
    terminals: Vec<bool>,
    episodes: Vec<u64>,
    episode_steps: Vec<u32>,
    tree: SumTree,
    max_priority: f64,
    inserted: u64,
}

const MAX_REJECTIONS: usize = 10_000;

impl ReplayBuffer {
    pub fn new(config: ReplayConfig, frame_len: usize) -> Result<Self> {
        if config.capacity < 1 || config.stack_depth < 1 || frame_len < 1 {
            return Err(Error::config("replay: capacity, stack_depth and frame size must be positive"));
        }
        if !(config.priority_eps > 0.0) || config.omega < 0.0 || config.beta < 0.0 {
            return Err(Error::config("replay: priority_eps must be positive, omega and beta non-negative"));
        }
        let cap = config.capacity;
        Ok(ReplayBuffer {
            frame_len,
            frames: vec![0.0; cap * frame_len],
            actions: vec![0; cap],
            rewards: vec![0.0; cap],
            terminals: vec![false; cap],
            episodes: vec![0; cap],
            episode_steps: vec![0; cap],
            tree: SumTree::new(cap),
            max_priority: 1.0,
            inserted: 0,
            config,
        })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        (self.inserted as usize).min(self.config.capacity)
    }

    pub fn is_empty(&self) -> bool {
        self.inserted == 0
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn stacked_len(&self) -> usize {
        self.frame_len * self.config.stack_depth
    }

    fn oldest(&self) -> u64 {
        self.inserted - self.len() as u64
    }

    fn slot(&self, g: u64) -> usize {
        (g % self.config.capacity as u64) as usize
    }

    fn stored(&self, g: u64) -> bool {
        g >= self.oldest() && g < self.inserted
    }

    pub fn total_priority(&self) -> f64 {
        self.tree.total()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Stores one step. The new record enters with the current maximum priority.
    pub fn append(&mut self, frame: &[f32], action: usize, reward: f32, terminal: bool, episode_id: u64) -> Result<()> {
        if frame.len() != self.frame_len {
            return Err(Error::Replay(format!("frame of {} values, expected {}", frame.len(), self.frame_len)));
        }
        let g = self.inserted;
        let step = if g > 0 && self.stored(g - 1) {
            let p = self.slot(g - 1);
            if self.episodes[p] == episode_id && !self.terminals[p] {
                self.episode_steps[p].saturating_add(1)
            } else {
                0
            }
        } else {
            0
        };
        let s = self.slot(g);
        self.frames[s * self.frame_len..(s + 1) * self.frame_len].copy_from_slice(frame);
        self.actions[s] = action as u32;
        self.rewards[s] = reward;
        self.terminals[s] = terminal;
        self.episodes[s] = episode_id;
        self.episode_steps[s] = step;
        let p = if self.config.prioritized {
            self.max_priority.powf(self.config.omega)
        } else {
            1.0
        };
        self.tree.set(s, p);
        self.inserted += 1;
        Ok(())
    }

    /// Overrides a stored record's sampling mass directly.
    pub fn set_sampling_mass(&mut self, g: u64, mass: f64) {
        if self.stored(g) {
            let s = self.slot(g);
            self.tree.set(s, mass.max(0.0));
        }
    }

    /// Stores `(|td| + eps)` as the priority of each still-present index.
    pub fn update_priorities(&mut self, indices: &[u64], td_errors: &[f64]) {
        if !self.config.prioritized {
            return;
        }
        for (&g, &td) in indices.iter().zip(td_errors) {
            if !self.stored(g) {
                log::debug!("skipping priority update for overwritten index {g}");
                continue;
            }
            let p = td.abs() + self.config.priority_eps;
            if !p.is_finite() {
                continue;
            }
            self.max_priority = self.max_priority.max(p);
            let s = self.slot(g);
            self.tree.set(s, p.powf(self.config.omega));
        }
    }

    /// Writes the stacked observation of record `g` (earliest frame first,
    /// padding with the episode's first frame).
    fn stack_into(&self, g: u64, out: &mut Vec<f32>) {
        let d = self.config.stack_depth as u64;
        let back = (self.episode_steps[self.slot(g)] as u64).min(d - 1);
        for j in (0..d).rev() {
            let src = g - j.min(back);
            let s = self.slot(src);
            out.extend_from_slice(&self.frames[s * self.frame_len..(s + 1) * self.frame_len]);
        }
    }

    /// Stacked observation for record `g`, if its history is still stored.
    pub fn stacked(&self, g: u64) -> Option<Vec<f32>> {
        if !self.stack_available(g) {
            return None;
        }
        let mut v = Vec::with_capacity(self.stacked_len());
        self.stack_into(g, &mut v);
        Some(v)
    }

    fn stack_available(&self, g: u64) -> bool {
        if !self.stored(g) {
            return false;
        }
        let d = self.config.stack_depth as u64;
        let back = (self.episode_steps[self.slot(g)] as u64).min(d - 1);
        g - back >= self.oldest()
    }

    /// `(n_used, terminal_within)` if `g` can anchor an `n`-step target.
    fn anchor(&self, g: u64, n: usize) -> Option<(usize, Option<usize>)> {
        if !self.stack_available(g) {
            return None;
        }
        let ep = self.episodes[self.slot(g)];
        for j in 0..n as u64 {
            let t = g + j;
            if !self.stored(t) || self.episodes[self.slot(t)] != ep {
                return None;
            }
            if self.terminals[self.slot(t)] {
                return Some((j as usize + 1, Some(j as usize)));
            }
        }
        let b = g + n as u64;
        (self.stored(b) && self.episodes[self.slot(b)] == ep).then_some((n, None))
    }

    /// True when `s_{g+k}` exists in the same episode for `k >= 1`.
    fn future_valid(&self, g: u64, k: u64) -> bool {
        let ep = self.episodes[self.slot(g)];
        for j in 0..k {
            if self.terminals[self.slot(g + j)] {
                return false;
            }
        }
        let t = g + k;
        self.stored(t) && self.episodes[self.slot(t)] == ep
    }

    pub fn is_sampleable(&self, g: u64, n: usize) -> bool {
        self.anchor(g, n).is_some()
    }

    fn draw(&self, rng: &mut Rng) -> u64 {
        let size = self.len();
        let slot = if self.config.prioritized {
            let total = self.tree.total();
            self.tree.find(rng.random::<f64>() * total).min(self.config.capacity - 1)
        } else {
            rng.random_range(0..size)
        };
        // Map the slot back to its global index.
        let cap = self.config.capacity as u64;
        let oldest = self.oldest();
        let base = oldest - oldest % cap;
        let g = base + slot as u64;
        if g < oldest {
            g + cap
        } else {
            g
        }
    }

    /// Draws `batch_size` anchors and assembles `n`-step targets with
    /// discount `gamma` plus `spr_horizon` future steps.
    pub fn sample(&self, batch_size: usize, n: usize, gamma: f64, spr_horizon: usize, rng: &mut Rng) -> Result<Batch> {
        if n < 1 {
            return Err(Error::Replay("n must be >= 1".into()));
        }
        if self.is_empty() || (self.config.prioritized && self.tree.total() <= 0.0) {
            return Err(Error::Replay("insufficient data: buffer is empty".into()));
        }
        let obs_len = self.stacked_len();
        let mut b = Batch {
            size: batch_size,
            obs_len,
            observations: Vec::with_capacity(batch_size * obs_len),
            actions: Vec::with_capacity(batch_size),
            n_used: Vec::with_capacity(batch_size),
            returns: Vec::with_capacity(batch_size),
            next_observations: Vec::with_capacity(batch_size * obs_len),
            nonterminal: Vec::with_capacity(batch_size),
            discounts: Vec::with_capacity(batch_size),
            spr_observations: vec![Vec::with_capacity(batch_size * obs_len); spr_horizon],
            spr_actions: vec![Vec::with_capacity(batch_size); spr_horizon],
            spr_valid: vec![Vec::with_capacity(batch_size); spr_horizon],
            weights: Vec::with_capacity(batch_size),
            indices: Vec::with_capacity(batch_size),
        };
        let mut rewards = Vec::with_capacity(n);
        let mut rejections = 0;
        while b.indices.len() < batch_size {
            let g = self.draw(rng);
            let Some((n_used, term)) = self.anchor(g, n) else {
                rejections += 1;
                if rejections > MAX_REJECTIONS {
                    return Err(Error::Replay(format!("insufficient data: no valid anchor for n = {n}")));
                }
                continue;
            };
            rewards.clear();
            rewards.extend((0..n_used as u64).map(|j| self.rewards[self.slot(g + j)] as f64));
            let ret = nstep_return(&rewards, gamma, n, 0.0, term)?;
            let nonterminal = term.is_none();
            b.indices.push(g);
            b.actions.push(self.actions[self.slot(g)] as usize);
            b.n_used.push(n_used);
            b.returns.push(ret);
            b.nonterminal.push(nonterminal);
            b.discounts.push(if nonterminal { gamma.powi(n_used as i32) } else { 0.0 });
            self.stack_into(g, &mut b.observations);
            let boot = if nonterminal { g + n_used as u64 } else { g };
            self.stack_into(boot, &mut b.next_observations);
            let mut last_valid = g;
            for k in 0..spr_horizon {
                let t = g + k as u64 + 1;
                let valid = self.future_valid(g, k as u64 + 1);
                if valid {
                    last_valid = t;
                }
                self.stack_into(last_valid, &mut b.spr_observations[k]);
                let a_src = g + k as u64;
                let act = if self.stored(a_src) && (k == 0 || self.future_valid(g, k as u64)) {
                    self.actions[self.slot(a_src)] as usize
                } else {
                    0
                };
                b.spr_actions[k].push(act);
                b.spr_valid[k].push(valid);
            }
            let w = if self.config.prioritized {
                let p = self.tree.get(self.slot(g)) / self.tree.total();
                (self.len() as f64 * p).powf(-self.config.beta)
            } else {
                1.0
            };
            b.weights.push(w);
        }
        let max_w = b.weights.iter().cloned().fold(0.0, f64::max);
        if max_w > 0.0 && max_w.is_finite() {
            b.weights.iter_mut().for_each(|w| *w /= max_w);
        }
        Ok(b)
    }

    /// Serializes the buffer into container sections under `prefix`.
    pub fn dump(&self, c: &mut Container, prefix: &str) {
        let mut meta = KvMap::new();
        meta.set("capacity", self.config.capacity.to_string());
        meta.set("stack_depth", self.config.stack_depth.to_string());
        meta.set("prioritized", self.config.prioritized.to_string());
        meta.set("omega", format!("{:e}", self.config.omega));
        meta.set("beta", format!("{:e}", self.config.beta));
        meta.set("priority_eps", format!("{:e}", self.config.priority_eps));
        meta.set("frame_len", self.frame_len.to_string());
        meta.set("inserted", self.inserted.to_string());
        meta.set("max_priority", format!("{:e}", self.max_priority));
        c.put(&format!("{prefix}.meta"), meta.to_text().into_bytes());
        let n = self.len();
        let slots: Vec<usize> = (self.oldest()..self.inserted).map(|g| self.slot(g)).collect();
        let mut frames = Vec::with_capacity(n * self.frame_len * 4);
        let mut rec = Vec::with_capacity(n * 26);
        for &s in &slots {
            for v in &self.frames[s * self.frame_len..(s + 1) * self.frame_len] {
                frames.extend_from_slice(&v.to_le_bytes());
            }
            rec.extend_from_slice(&self.actions[s].to_le_bytes());
            rec.extend_from_slice(&self.rewards[s].to_le_bytes());
            rec.push(self.terminals[s] as u8);
            rec.extend_from_slice(&self.episodes[s].to_le_bytes());
            rec.extend_from_slice(&self.episode_steps[s].to_le_bytes());
            rec.extend_from_slice(&self.tree.get(s).to_le_bytes());
        }
        c.put(&format!("{prefix}.frames"), frames);
        c.put(&format!("{prefix}.records"), rec);
    }

    pub fn restore(c: &Container, prefix: &str) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(format!("replay: {m}"));
        let meta_bytes = c.require(&format!("{prefix}.meta"))?;
        let meta = KvMap::parse(std::str::from_utf8(meta_bytes).map_err(|_| bad("meta is not utf-8"))?)?;
        let config = ReplayConfig {
            capacity: meta.parse_value("capacity")?,
            stack_depth: meta.parse_value("stack_depth")?,
            prioritized: meta.parse_value("prioritized")?,
            omega: meta.parse_value("omega")?,
            beta: meta.parse_value("beta")?,
            priority_eps: meta.parse_value("priority_eps")?,
        };
        let frame_len: usize = meta.parse_value("frame_len")?;
        let mut buf = ReplayBuffer::new(config, frame_len)?;
        let inserted: u64 = meta.parse_value("inserted")?;
        let n = (inserted as usize).min(buf.config.capacity);
        let frames = c.require(&format!("{prefix}.frames"))?;
        let rec = c.require(&format!("{prefix}.records"))?;
        const REC: usize = 4 + 4 + 1 + 8 + 4 + 8;
        if Some(frames.len()) != n.checked_mul(frame_len).and_then(|v| v.checked_mul(4)) || rec.len() != n * REC {
            return Err(bad("section sizes do not match the record count"));
        }
        buf.inserted = inserted;
        buf.max_priority = meta.parse_value("max_priority")?;
        let oldest = buf.oldest();
        for i in 0..n {
            let s = buf.slot(oldest + i as u64);
            let fsrc = &frames[i * frame_len * 4..(i + 1) * frame_len * 4];
            for (dst, ch) in buf.frames[s * frame_len..(s + 1) * frame_len].iter_mut().zip(fsrc.chunks_exact(4)) {
                *dst = f32::from_le_bytes(ch.try_into().unwrap());
            }
            let r = &rec[i * REC..(i + 1) * REC];
            buf.actions[s] = u32::from_le_bytes(r[0..4].try_into().unwrap());
            buf.rewards[s] = f32::from_le_bytes(r[4..8].try_into().unwrap());
            buf.terminals[s] = r[8] != 0;
            buf.episodes[s] = u64::from_le_bytes(r[9..17].try_into().unwrap());
            buf.episode_steps[s] = u32::from_le_bytes(r[17..21].try_into().unwrap());
            buf.tree.set(s, f64::from_le_bytes(r[21..29].try_into().unwrap()));
        }
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn cfg(capacity: usize, prioritized: bool) -> ReplayConfig {
        ReplayConfig {
            capacity,
            stack_depth: 1,
            prioritized,
            omega: 1.0,
            ..Default::default()
        }
    }

    #[test]
    fn nstep_examples() {
        assert_eq!(nstep_return(&[1.0, 0.0, 2.0], 0.5, 3, 4.0, None).unwrap(), 2.0);
        assert_eq!(nstep_return(&[3.5], 0.9, 1, 100.0, Some(0)).unwrap(), 3.5);
        assert_eq!(nstep_return(&[1.0, 5.0, 5.0], 0.9, 3, 100.0, Some(0)).unwrap(), 1.0);
        assert!(nstep_return(&[1.0], 0.9, 0, 0.0, None).is_err());
    }

    #[test]
    fn ring_semantics() {
        let mut b = ReplayBuffer::new(cfg(3, false), 1).unwrap();
        b.append(&[0.0], 0, 0.0, false, 0).unwrap();
        assert_eq!(b.len(), 1);
        for i in 1..4 {
            b.append(&[i as f32], 0, 0.0, false, 0).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert!(b.stacked(0).is_none());
        assert_eq!(b.stacked(1).unwrap(), vec![1.0]);
    }

    #[test]
    fn anchors_need_successors() {
        let mut b = ReplayBuffer::new(cfg(10, false), 1).unwrap();
        b.append(&[0.0], 0, 1.0, false, 0).unwrap();
        assert!(!b.is_sampleable(0, 1));
        b.append(&[1.0], 0, 1.0, false, 0).unwrap();
        assert!(b.is_sampleable(0, 1));
        assert!(!b.is_sampleable(0, 2));
    }

    #[test]
    fn single_positive_mass_is_always_drawn() {
        let mut b = ReplayBuffer::new(cfg(8, true), 1).unwrap();
        for i in 0..8 {
            b.append(&[i as f32], 0, 0.0, false, 0).unwrap();
        }
        for g in 0..8 {
            b.set_sampling_mass(g, if g == 2 { 1.0 } else { 0.0 });
        }
        let mut rng = stream(1, 0);
        let batch = b.sample(64, 1, 0.9, 0, &mut rng).unwrap();
        assert!(batch.indices.iter().all(|&g| g == 2));
        assert!(batch.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn zero_td_error_keeps_index_sampleable() {
        let mut b = ReplayBuffer::new(cfg(4, true), 1).unwrap();
        b.append(&[0.0], 0, 0.0, false, 0).unwrap();
        b.update_priorities(&[0], &[0.0]);
        assert!(b.tree().get(0) > 0.0);
        b.update_priorities(&[99], &[5.0]);
        assert!((b.total_priority() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn doubling_a_leaf_doubles_its_contribution() {
        let mut t = SumTree::new(5);
        for (i, v) in [1.0, 2.0, 3.0, 4.0, 5.0].iter().enumerate() {
            t.set(i, *v);
        }
        t.set(2, 6.0);
        assert_eq!(t.total(), 18.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(3.0), 2);
        assert_eq!(t.find(17.9), 4);
    }

    #[test]
    fn terminal_truncates_and_masks() {
        let mut b = ReplayBuffer::new(cfg(16, false), 1).unwrap();
        b.append(&[0.0], 1, 1.0, false, 0).unwrap();
        b.append(&[1.0], 2, 2.0, true, 0).unwrap();
        b.append(&[2.0], 3, 7.0, false, 1).unwrap();
        b.append(&[3.0], 4, 7.0, false, 1).unwrap();
        let mut rng = stream(2, 0);
        let batch = b.sample(32, 3, 0.5, 2, &mut rng).unwrap();
        for i in 0..batch.size {
            match batch.indices[i] {
                0 => {
                    assert_eq!(batch.n_used[i], 2);
                    assert_eq!(batch.returns[i], 2.0);
                    assert!(!batch.nonterminal[i]);
                    assert_eq!(batch.discounts[i], 0.0);
                    assert_eq!(batch.spr_valid[0][i], true);
                    assert_eq!(batch.spr_valid[1][i], false);
                }
                1 => {
                    assert_eq!(batch.returns[i], 2.0);
                    assert!(!batch.spr_valid[0][i]);
                }
                g => panic!("anchor {g} crosses an episode boundary"),
            }
        }
    }

    #[test]
    fn frame_stack_pads_with_episode_start() {
        let c = ReplayConfig {
            stack_depth: 3,
            ..cfg(16, false)
        };
        let mut b = ReplayBuffer::new(c, 1).unwrap();
        b.append(&[9.0], 0, 0.0, true, 0).unwrap();
        for i in 0..3 {
            b.append(&[i as f32], 0, 0.0, false, 1).unwrap();
        }
        assert_eq!(b.stacked(1).unwrap(), vec![0.0, 0.0, 0.0]);
        assert_eq!(b.stacked(2).unwrap(), vec![0.0, 0.0, 1.0]);
        assert_eq!(b.stacked(3).unwrap(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn dump_restore_round_trip() {
        let mut b = ReplayBuffer::new(cfg(5, true), 2).unwrap();
        for i in 0..7u64 {
            b.append(&[i as f32, -(i as f32)], i as usize % 3, i as f32, i == 3, i / 4).unwrap();
        }
        b.update_priorities(&[4, 5], &[0.3, 2.0]);
        let mut c = Container::new();
        b.dump(&mut c, "replay");
        let r = ReplayBuffer::restore(&c, "replay").unwrap();
        let mut r1 = stream(5, 0);
        let mut r2 = stream(5, 0);
        assert_eq!(b.sample(8, 1, 0.9, 1, &mut r1).unwrap(), r.sample(8, 1, 0.9, 1, &mut r2).unwrap());
        assert_eq!(r.tree(), b.tree());
    }
}
