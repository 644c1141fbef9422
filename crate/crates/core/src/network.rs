//! Width-scaled residual encoder, dueling categorical Q-head, latent
//! transition/projection/prediction heads, and the parameter-space
//! operations applied between gradient steps (resets and EMA tracking).
//!
//! Parameter names:
//!
//! | prefix                          | role                                   |
//! |---------------------------------|----------------------------------------|
//! | `encoder.stage{i}.conv`         | stage entry conv                       |
//! | `encoder.stage{i}.res{j}.conv{k}` | residual block convs                 |
//! | `head.fc`, `head.value`, `head.advantage` | Q-head                       |
//! | `transition.conv{k}`            | action-conditioned latent dynamics     |
//! | `spr.projection`, `spr.prediction.fc{k}` | self-prediction heads         |
//!
//! Each layer has a `.w` and a `.b` entry.

use std::fmt::Write as _;

use bbf_autodiff::{Graph, ParameterSet, Real, Tensor, Var};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const STAGES: usize = 3;
pub const BLOCKS_PER_STAGE: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchitectureSpec {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub width_scale: usize,
    pub base_channels: [usize; STAGES],
    pub latent_dim: usize,
    pub num_actions: usize,
    pub num_atoms: usize,
    pub v_min: f64,
    pub v_max: f64,
    pub dueling: bool,
    pub use_spr: bool,
    pub spr_horizon: usize,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        ArchitectureSpec {
            input_channels: 16,
            input_height: 10,
            input_width: 10,
            width_scale: 4,
            base_channels: [16, 32, 32],
            latent_dim: 512,
            num_actions: 5,
            num_atoms: 51,
            v_min: -10.0,
            v_max: 10.0,
            dueling: true,
            use_spr: true,
            spr_horizon: 5,
        }
    }
}

impl ArchitectureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(format!("architecture: {m}")));
        if self.width_scale < 1 {
            return bad("width_scale must be >= 1");
        }
        if self.num_atoms < 2 {
            return bad("num_atoms must be >= 2");
        }
        if !(self.v_min < self.v_max) {
            return bad("v_min must be < v_max");
        }
        if self.spr_horizon < 1 {
            return bad("spr_horizon must be >= 1");
        }
        if self.num_actions < 1 || self.latent_dim < 1 || self.input_channels < 1 {
            return bad("num_actions, latent_dim and input_channels must be positive");
        }
        if self.input_height < 1 || self.input_width < 1 {
            return bad("input extents must be positive");
        }
        if self.base_channels.contains(&0) {
            return bad("base_channels must be positive");
        }
        Ok(())
    }

    pub fn stage_channels(&self) -> [usize; STAGES] {
        self.base_channels.map(|c| c * self.width_scale)
    }

    /// Spatial extents after each stage (SAME 3x3/2 pooling).
    pub fn stage_extents(&self) -> [(usize, usize); STAGES] {
        let mut hw = (self.input_height, self.input_width);
        let mut out = [(0, 0); STAGES];
        for o in &mut out {
            hw = (hw.0.div_ceil(2), hw.1.div_ceil(2));
            *o = hw;
        }
        out
    }

    /// `(channels, height, width)` of the encoder output.
    pub fn latent_shape(&self) -> (usize, usize, usize) {
        let (h, w) = self.stage_extents()[STAGES - 1];
        (self.stage_channels()[STAGES - 1], h, w)
    }

    pub fn flat_dim(&self) -> usize {
        let (c, h, w) = self.latent_shape();
        c * h * w
    }

    pub fn observation_shape(&self) -> [usize; 3] {
        [self.input_channels, self.input_height, self.input_width]
    }

    /// Evenly spaced support atoms.
    pub fn support(&self) -> Vec<f64> {
        let m = self.num_atoms;
        (0..m)
            .map(|j| {
                if j == m - 1 {
                    self.v_max
                } else {
                    self.v_min + (self.v_max - self.v_min) * j as f64 / (m - 1) as f64
                }
            })
            .collect()
    }

    /// `(name, shape)` of every entry, in initialization order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut conv = |name: String, oc: usize, ic: usize| {
            out.push((format!("{name}.w"), vec![oc, ic, 3, 3]));
            out.push((format!("{name}.b"), vec![oc]));
        };
        let chans = self.stage_channels();
        let mut ic = self.input_channels;
        for (i, &c) in chans.iter().enumerate() {
            conv(format!("encoder.stage{i}.conv"), c, ic);
            for j in 0..BLOCKS_PER_STAGE {
                conv(format!("encoder.stage{i}.res{j}.conv0"), c, c);
                conv(format!("encoder.stage{i}.res{j}.conv1"), c, c);
            }
            ic = c;
        }
        let (lc, _, _) = self.latent_shape();
        if self.use_spr {
            conv("transition.conv0".into(), lc, lc + self.num_actions);
            conv("transition.conv1".into(), lc, lc);
        }
        let mut dense = |name: &str, i: usize, o: usize| {
            out.push((format!("{name}.w"), vec![i, o]));
            out.push((format!("{name}.b"), vec![o]));
        };
        let (flat, hid, z, a) = (self.flat_dim(), self.latent_dim, self.num_atoms, self.num_actions);
        dense("head.fc", flat, hid);
        if self.dueling {
            dense("head.value", hid, z);
        }
        dense("head.advantage", hid, a * z);
        if self.use_spr {
            dense("spr.projection", flat, self.latent_dim);
            dense("spr.prediction.fc0", self.latent_dim, self.latent_dim);
            dense("spr.prediction.fc1", self.latent_dim, self.latent_dim);
        }
        out
    }

    pub fn conv_layer_count(&self) -> usize {
        self.layout()
            .iter()
            .filter(|(n, s)| n.starts_with("encoder.") && n.ends_with(".w") && s.len() == 4)
            .count()
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Plain-text table of layers and parameter counts.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let chans = self.stage_channels();
        let ext = self.stage_extents();
        let _ = writeln!(
            s,
            "input {}x{}x{}  width_scale {}  stage channels {:?}  stage extents {:?}",
            self.input_channels, self.input_height, self.input_width, self.width_scale, chans, ext
        );
        let _ = writeln!(s, "{:<36} {:>18} {:>12}", "parameter", "shape", "count");
        for (name, shape) in self.layout() {
            let n: usize = shape.iter().product();
            let _ = writeln!(s, "{:<36} {:>18} {:>12}", name, format!("{shape:?}"), n);
        }
        let _ = writeln!(s, "encoder convolutions: {}", self.conv_layer_count());
        let _ = writeln!(s, "total parameters: {}", self.parameter_count());
        s
    }
}

/// Residual block output convs start at zero so fresh blocks are identities.
fn zero_initialized(name: &str) -> bool {
    name.starts_with("encoder.") && name.contains(".res") && name.contains(".conv1.")
}

/// Fresh parameters: fan-in-scaled uniform weights, zero biases.
pub fn init_params<R: Real>(spec: &ArchitectureSpec, seed: u64) -> Result<ParameterSet<R>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParameterSet::new(seed);
    for (name, shape) in spec.layout() {
        let n: usize = shape.iter().product();
        let data: Vec<R> = if name.ends_with(".b") || zero_initialized(&name) {
            vec![R::zero(); n]
        } else {
            let fan_in: usize = if shape.len() == 4 {
                shape[1..].iter().product()
            } else {
                shape[0]
            };
            let bound = (1.0 / fan_in as f64).sqrt();
            (0..n).map(|_| R::lit(rng.random_range(-bound..bound))).collect()
        };
        set.insert(&name, Tensor::new(shape, data)?)?;
    }
    Ok(set)
}

/// A parameter set bound for one forward pass.
#[derive(Clone, Copy)]
pub struct Weights<'a, R: Real> {
    pub set: &'a ParameterSet<R>,
    pub trainable: bool,
}

impl<'a, R: Real> Weights<'a, R> {
    pub fn trainable(set: &'a ParameterSet<R>) -> Self {
        Weights { set, trainable: true }
    }

    pub fn frozen(set: &'a ParameterSet<R>) -> Self {
        Weights { set, trainable: false }
    }

    fn get(&self, g: &mut Graph<'a, R>, name: &str) -> Result<Var> {
        Ok(g.param(self.set, name, self.trainable)?)
    }

    fn conv(&self, g: &mut Graph<'a, R>, x: Var, layer: &str) -> Result<Var> {
        let w = self.get(g, &format!("{layer}.w"))?;
        let b = self.get(g, &format!("{layer}.b"))?;
        Ok(g.conv2d(x, w, Some(b), 1, 1)?)
    }

    fn dense(&self, g: &mut Graph<'a, R>, x: Var, layer: &str) -> Result<Var> {
        let w = self.get(g, &format!("{layer}.w"))?;
        let b = self.get(g, &format!("{layer}.b"))?;
        let y = g.matmul(x, w)?;
        Ok(g.add_bias(y, b)?)
    }
}

fn check_obs<R: Real>(spec: &ArchitectureSpec, g: &Graph<'_, R>, obs: Var) -> Result<()> {
    let s = g.shape(obs);
    let want = spec.observation_shape();
    if s.len() != 4 || s[1..] != want {
        return Err(bbf_autodiff::TensorError::ShapeMismatch {
            op: "encode",
            left: s.to_vec(),
            right: want.to_vec(),
        }
        .into());
    }
    Ok(())
}

/// One encoder stage: conv, pool, then the residual blocks. Returns the
/// stage output and the pooled tensor feeding the first block.
pub fn encode_stage<'a, R: Real>(
    g: &mut Graph<'a, R>,
    w: Weights<'a, R>,
    x: Var,
    stage: usize,
) -> Result<(Var, Var)> {
    let mut x = w.conv(g, x, &format!("encoder.stage{stage}.conv"))?;
    x = g.maxpool2d(x, 3, 2)?;
    let pooled = x;
    for j in 0..BLOCKS_PER_STAGE {
        let prefix = format!("encoder.stage{stage}.res{j}");
        let mut h = g.relu(x)?;
        h = w.conv(g, h, &format!("{prefix}.conv0"))?;
        h = g.relu(h)?;
        h = w.conv(g, h, &format!("{prefix}.conv1"))?;
        x = g.add(x, h)?;
    }
    Ok((x, pooled))
}

/// Observation batch `[B, C, H, W]` to the latent feature map.
pub fn encode<'a, R: Real>(g: &mut Graph<'a, R>, w: Weights<'a, R>, spec: &ArchitectureSpec, obs: Var) -> Result<Var> {
    check_obs(spec, g, obs)?;
    let mut x = obs;
    for i in 0..STAGES {
        x = encode_stage(g, w, x, i)?.0;
    }
    Ok(g.relu(x)?)
}

/// Atom logits `[B, A, Z]` from a latent map.
pub fn q_logits<'a, R: Real>(g: &mut Graph<'a, R>, w: Weights<'a, R>, spec: &ArchitectureSpec, latent: Var) -> Result<Var> {
    let flat = g.flatten(latent)?;
    let b = g.shape(flat)[0];
    let mut h = w.dense(g, flat, "head.fc")?;
    h = g.relu(h)?;
    let adv = w.dense(g, h, "head.advantage")?;
    let adv = g.reshape(adv, &[b, spec.num_actions, spec.num_atoms])?;
    if spec.dueling {
        let value = w.dense(g, h, "head.value")?;
        Ok(g.dueling(value, adv)?)
    } else {
        Ok(adv)
    }
}

/// Converts observations to a `[B, C, H, W]` tensor.
pub fn observation_tensor<R: Real>(spec: &ArchitectureSpec, batch: &[&[f32]]) -> Result<Tensor<R>> {
    let [c, h, w] = spec.observation_shape();
    let per = c * h * w;
    let mut data = Vec::with_capacity(batch.len() * per);
    for obs in batch {
        if obs.len() != per {
            return Err(bbf_autodiff::TensorError::ShapeMismatch {
                op: "observation",
                left: vec![obs.len()],
                right: vec![per],
            }
            .into());
        }
        data.extend(obs.iter().map(|&v| R::lit(v as f64)));
    }
    Ok(Tensor::new(vec![batch.len(), c, h, w], data)?)
}

/// Per-action categorical distributions `[B, A, Z]` (no gradient).
pub fn q_distribution<R: Real>(params: &ParameterSet<R>, spec: &ArchitectureSpec, obs: &Tensor<R>) -> Result<Tensor<R>> {
    let mut g = Graph::new();
    let w = Weights::frozen(params);
    let x = g.constant_ref(obs)?;
    let latent = encode(&mut g, w, spec, x)?;
    let logits = q_logits(&mut g, w, spec, latent)?;
    let probs = g.softmax(logits)?;
    Ok(g.value(probs).detached())
}

/// Expected values `sum_j p_j z_j` for a `[B, A, Z]` distribution tensor,
/// returned row-major as `[B * A]`.
pub fn expected_values<R: Real>(probs: &Tensor<R>, support: &[f64]) -> Vec<f64> {
    probs
        .data()
        .chunks(support.len())
        .map(|row| row.iter().zip(support).map(|(p, z)| p.to_f64().unwrap() * z).sum())
        .collect()
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Online parameters plus their EMA-tracked target copy.
#[derive(Clone, Debug)]
pub struct NetworkBundle<R: Real> {
    pub online: ParameterSet<R>,
    pub target: ParameterSet<R>,
    pub spec: ArchitectureSpec,
}

impl<R: Real> NetworkBundle<R> {
    pub fn new(spec: ArchitectureSpec, seed: u64) -> Result<Self> {
        let online = init_params(&spec, seed)?;
        let mut target = online.clone();
        target.iter_mut().for_each(|(_, t)| t.set_requires_grad(false));
        Ok(NetworkBundle { online, target, spec })
    }

    /// Epsilon-greedy action under the target parameters.
    pub fn select_action(&self, observation: &[f32], epsilon: f64, rng: &mut Rng) -> Result<usize> {
        let explore = rng.random::<f64>() < epsilon;
        let uniform = rng.random_range(0..self.spec.num_actions);
        if explore {
            return Ok(uniform);
        }
        let obs = observation_tensor::<R>(&self.spec, &[observation])?;
        let probs = q_distribution(&self.target, &self.spec, &obs)?;
        Ok(argmax(&expected_values(&probs, &self.spec.support())))
    }
}

/// Predicted projections for `K` steps of latent dynamics.
///
/// `actions[k][b]` is the action taken at step `k` by batch element `b`.
/// Returns `K` tensors of shape `[B, latent_dim]`.
pub fn spr_rollout<'a, R: Real>(
    g: &mut Graph<'a, R>,
    w: Weights<'a, R>,
    spec: &ArchitectureSpec,
    latent: Var,
    actions: &[Vec<usize>],
) -> Result<Vec<Var>> {
    if actions.len() != spec.spr_horizon {
        return Err(Error::config(format!(
            "spr_rollout: expected {} action steps, got {}",
            spec.spr_horizon,
            actions.len()
        )));
    }
    let mut z = latent;
    let mut out = Vec::with_capacity(actions.len());
    for step in actions {
        z = transition(g, w, spec, z, step)?;
        let p = project(g, w, z)?;
        out.push(predict(g, w, p)?);
    }
    Ok(out)
}

/// One action-conditioned latent step: `z + conv1(relu(conv0([z, onehot(a)])))`.
pub fn transition<'a, R: Real>(
    g: &mut Graph<'a, R>,
    w: Weights<'a, R>,
    spec: &ArchitectureSpec,
    latent: Var,
    actions: &[usize],
) -> Result<Var> {
    let s = g.shape(latent).to_vec();
    let (b, h, wd) = (s[0], s[2], s[3]);
    if actions.len() != b {
        return Err(Error::config(format!("transition: {} actions for batch {b}", actions.len())));
    }
    let a = spec.num_actions;
    let mut planes = vec![R::zero(); b * a * h * wd];
    for (i, &act) in actions.iter().enumerate() {
        if act >= a {
            return Err(Error::config(format!("transition: action {act} out of range")));
        }
        let off = (i * a + act) * h * wd;
        planes[off..off + h * wd].iter_mut().for_each(|v| *v = R::one());
    }
    let onehot = g.constant(Tensor::new(vec![b, a, h, wd], planes)?)?;
    let x = g.concat_channels(latent, onehot)?;
    let mut r = w.conv(g, x, "transition.conv0")?;
    r = g.relu(r)?;
    r = w.conv(g, r, "transition.conv1")?;
    Ok(g.add(latent, r)?)
}

/// Linear projection of a flattened latent map to `[B, latent_dim]`.
pub fn project<'a, R: Real>(g: &mut Graph<'a, R>, w: Weights<'a, R>, latent: Var) -> Result<Var> {
    let flat = g.flatten(latent)?;
    w.dense(g, flat, "spr.projection")
}

/// Two-layer prediction MLP.
pub fn predict<'a, R: Real>(g: &mut Graph<'a, R>, w: Weights<'a, R>, projected: Var) -> Result<Var> {
    let mut h = w.dense(g, projected, "spr.prediction.fc0")?;
    h = g.relu(h)?;
    w.dense(g, h, "spr.prediction.fc1")
}

/// Which entries are interpolated towards the random template on reset;
/// everything else is replaced by it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResetPolicy {
    pub interpolate_prefixes: Vec<String>,
}

impl Default for ResetPolicy {
    fn default() -> Self {
        ResetPolicy {
            interpolate_prefixes: vec!["encoder.".into(), "transition.".into()],
        }
    }
}

impl ResetPolicy {
    pub fn interpolates(&self, name: &str) -> bool {
        self.interpolate_prefixes.iter().any(|p| name.starts_with(p.as_str()))
    }
}

/// Shrink-and-perturb: interpolated entries become
/// `(1 - alpha) * theta + alpha * template`, all others become the template.
pub fn shrink_and_perturb<R: Real>(
    params: &ParameterSet<R>,
    template: &ParameterSet<R>,
    alpha: f64,
    policy: &ResetPolicy,
) -> Result<ParameterSet<R>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("reset alpha {alpha} outside [0, 1]")));
    }
    params.check_congruent(template)?;
    let keep = R::lit(1.0 - alpha);
    let mix = R::lit(alpha);
    let mut out = params.clone();
    for ((name, dst), (_, rand)) in out.iter_mut().zip(template.iter()) {
        if policy.interpolates(name) {
            for (d, &r) in dst.data_mut().iter_mut().zip(rand.data()) {
                *d = keep * *d + mix * r;
            }
        } else {
            dst.data_mut().copy_from_slice(rand.data());
        }
        dst.zero_grad();
    }
    Ok(out)
}

/// `target <- tau * target + (1 - tau) * online`, elementwise.
pub fn ema_update<R: Real>(target: &mut ParameterSet<R>, online: &ParameterSet<R>, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::config(format!("ema tau {tau} outside [0, 1]")));
    }
    target.check_congruent(online)?;
    let (t, o) = (R::lit(tau), R::lit(1.0 - tau));
    for ((_, dst), (_, src)) in target.iter_mut().zip(online.iter()) {
        for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
            *d = t * *d + o * s;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(width: usize) -> ArchitectureSpec {
        ArchitectureSpec {
            input_channels: 4,
            width_scale: width,
            latent_dim: 16,
            num_actions: 3,
            num_atoms: 5,
            spr_horizon: 2,
            ..Default::default()
        }
    }

    #[test]
    fn fifteen_convolutions_at_every_width() {
        for w in [1, 2, 4, 8] {
            assert_eq!(small(w).conv_layer_count(), 15);
        }
    }

    #[test]
    fn stage_shapes_follow_ceil_pooling() {
        let s = small(1);
        assert_eq!(s.stage_channels(), [16, 32, 32]);
        assert_eq!(s.stage_extents(), [(5, 5), (3, 3), (2, 2)]);
        assert_eq!(small(4).stage_channels(), [64, 128, 128]);
        assert!(small(4).parameter_count() > small(1).parameter_count());
    }

    #[test]
    fn encoder_stage_outputs_have_expected_shapes() {
        let spec = small(1);
        let params = init_params::<f64>(&spec, 0).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[2, 4, 10, 10], 0.5)).unwrap();
        let w = Weights::frozen(&params);
        let mut v = x;
        let mut shapes = Vec::new();
        for i in 0..STAGES {
            v = encode_stage(&mut g, w, v, i).unwrap().0;
            shapes.push(g.shape(v).to_vec());
        }
        assert_eq!(shapes, vec![vec![2, 16, 5, 5], vec![2, 32, 3, 3], vec![2, 32, 2, 2]]);
    }

    #[test]
    fn zero_residual_convs_make_blocks_identities() {
        let spec = small(1);
        let params = init_params::<f64>(&spec, 1).unwrap();
        for (name, t) in params.iter() {
            if zero_initialized(name) {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 4, 10, 10])).unwrap();
        let (out, pooled) = encode_stage(&mut g, Weights::frozen(&params), x, 0).unwrap();
        assert_eq!(g.data(out), g.data(pooled));
    }

    #[test]
    fn wrong_observation_shape_is_rejected() {
        let spec = small(1);
        let params = init_params::<f32>(&spec, 0).unwrap();
        let obs = Tensor::zeros(&[1, 3, 10, 10]);
        assert!(q_distribution(&params, &spec, &obs).is_err());
    }

    #[test]
    fn reset_arithmetic() {
        let mut p = ParameterSet::<f64>::new(0);
        p.insert("encoder.x.w", Tensor::from_f64(&[2], &[2.0, 4.0]).unwrap()).unwrap();
        p.insert("head.fc.w", Tensor::from_f64(&[1], &[3.0]).unwrap()).unwrap();
        let mut t = ParameterSet::<f64>::new(1);
        t.insert("encoder.x.w", Tensor::zeros(&[2])).unwrap();
        t.insert("head.fc.w", Tensor::from_f64(&[1], &[-1.0]).unwrap()).unwrap();
        let pol = ResetPolicy::default();
        let half = shrink_and_perturb(&p, &t, 0.5, &pol).unwrap();
        assert_eq!(half.get("encoder.x.w").unwrap().data(), &[1.0, 2.0]);
        assert_eq!(half.get("head.fc.w").unwrap().data(), &[-1.0]);
        let none = shrink_and_perturb(&p, &t, 0.0, &pol).unwrap();
        assert_eq!(none.get("encoder.x.w").unwrap().data(), &[2.0, 4.0]);
        let full = shrink_and_perturb(&p, &t, 1.0, &pol).unwrap();
        assert_eq!(full.get("encoder.x.w").unwrap().data(), &[0.0, 0.0]);
        assert!(shrink_and_perturb(&p, &t, 1.5, &pol).is_err());
    }

    #[test]
    fn ema_arithmetic() {
        let mut tgt = ParameterSet::<f64>::new(0);
        tgt.insert("w", Tensor::zeros(&[1])).unwrap();
        let mut on = ParameterSet::<f64>::new(0);
        on.insert("w", Tensor::full(&[1], 1.0)).unwrap();
        ema_update(&mut tgt, &on, 0.9).unwrap();
        assert!((tgt.get("w").unwrap().data()[0] - 0.1).abs() < 1e-15);
        ema_update(&mut tgt, &on, 1.0).unwrap();
        assert!((tgt.get("w").unwrap().data()[0] - 0.1).abs() < 1e-15);
        ema_update(&mut tgt, &on, 0.0).unwrap();
        assert_eq!(tgt.get("w").unwrap().data()[0], 1.0);
    }

    #[test]
    fn describe_reports_counts() {
        let text = small(2).describe();
        assert!(text.contains("encoder convolutions: 15"));
        assert!(text.contains(&format!("total parameters: {}", small(2).parameter_count())));
    }
}
