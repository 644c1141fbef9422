//! Categorical multi-step TD loss, latent self-prediction loss and the
//! shift/intensity augmentation feeding both.

use bbf_autodiff::{Gradients, Graph, ParameterSet, Real, Tensor, Var};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::network::{self, ArchitectureSpec, Weights};
use crate::replay::Batch;
use crate::rng::Rng;

pub const AUGMENT_PAD: usize = 4;
pub const INTENSITY_SCALE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    pub atoms: Vec<f64>,
    pub v_min: f64,
    pub v_max: f64,
    pub delta: f64,
}

impl Support {
    pub fn new(v_min: f64, v_max: f64, num_atoms: usize) -> Result<Self> {
        if num_atoms < 2 || !(v_min < v_max) {
            return Err(Error::config("support needs >= 2 atoms and v_min < v_max"));
        }
        let delta = (v_max - v_min) / (num_atoms - 1) as f64;
        let atoms = (0..num_atoms)
            .map(|j| if j == num_atoms - 1 { v_max } else { v_min + delta * j as f64 })
            .collect();
        Ok(Support { atoms, v_min, v_max, delta })
    }

    pub fn of(spec: &ArchitectureSpec) -> Result<Self> {
        Self::new(spec.v_min, spec.v_max, spec.num_atoms)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Moves the mass `probs[j]` sitting at `shifted[j]` onto the support,
/// splitting each atom linearly between its two neighbours after clipping.
pub fn categorical_projection(probs: &[f64], shifted: &[f64], support: &Support) -> Vec<f64> {
    let m = support.len();
    let mut out = vec![0.0; m];
    for (&p, &z) in probs.iter().zip(shifted) {
        let tz = z.clamp(support.v_min, support.v_max);
        let b = ((tz - support.v_min) / support.delta).clamp(0.0, (m - 1) as f64);
        let l = b.floor() as usize;
        let u = b.ceil() as usize;
        if l == u {
            out[l] += p;
        } else {
            out[l] += p * (u as f64 - b);
            out[u] += p * (b - l as f64);
        }
    }
    out
}

/// Replicate-pads by `pad`, crops back at a uniform offset, then scales
/// intensity by `1 + 0.05 * clip(N(0,1), -2, 2)`, per sample.
/// `obs` is a flattened `[batch, channels, height, width]` array.
pub fn augment(
    obs: &[f32],
    channels: usize,
    height: usize,
    width: usize,
    pad: usize,
    rng: &mut Rng,
) -> Result<Vec<f32>> {
    if height < pad || width < pad {
        return Err(Error::config(format!(
            "augment: spatial extent {height}x{width} smaller than pad {pad}"
        )));
    }
    let per = channels * height * width;
    if per == 0 || obs.len() % per != 0 {
        return Err(Error::config("augment: observation length does not match the shape"));
    }
    let mut out = vec![0.0f32; obs.len()];
    let pad = pad as i64;
    for (src, dst) in obs.chunks(per).zip(out.chunks_mut(per)) {
        let dy = rng.random_range(0..=2 * pad) - pad;
        let dx = rng.random_range(0..=2 * pad) - pad;
        let g: f64 = rng.sample::<f64, _>(StandardNormal).clamp(-2.0, 2.0);
        let scale = (1.0 + INTENSITY_SCALE * g) as f32;
        for c in 0..channels {
            let plane = &src[c * height * width..(c + 1) * height * width];
            for y in 0..height {
                let sy = (y as i64 + dy).clamp(0, height as i64 - 1) as usize;
                for x in 0..width {
                    let sx = (x as i64 + dx).clamp(0, width as i64 - 1) as usize;
                    dst[c * height * width + y * width + x] = plane[sy * width + sx] * scale;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda_spr: f64,
    pub double_q: bool,
    pub augment: bool,
    pub augment_pad: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_spr: 2.0,
            double_q: true,
            augment: true,
            augment_pad: AUGMENT_PAD,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub td_loss: f64,
    pub spr_loss: f64,
    pub total: f64,
    /// Per-sample cross-entropy, used as the priority signal.
    pub td_errors: Vec<f64>,
}

fn obs_tensor<R: Real>(spec: &ArchitectureSpec, data: &[f32], batch: usize) -> Result<Tensor<R>> {
    let [c, h, w] = spec.observation_shape();
    Ok(Tensor::new(vec![batch, c, h, w], data.iter().map(|&v| R::lit(v as f64)).collect())?)
}

fn maybe_augment(spec: &ArchitectureSpec, cfg: &LossConfig, obs: &[f32], rng: &mut Rng) -> Result<Vec<f32>> {
    if cfg.augment {
        let [c, h, w] = spec.observation_shape();
        augment(obs, c, h, w, cfg.augment_pad, rng)
    } else {
        Ok(obs.to_vec())
    }
}

/// Projected targets `[B, Z]` from the target distributions
/// `target_probs` (`[B, A, Z]`) at the bootstrap observations.
fn td_targets<R: Real>(
    batch: &Batch,
    next_obs: &Tensor<R>,
    target_probs: Vec<f64>,
    online: &ParameterSet<R>,
    spec: &ArchitectureSpec,
    support: &Support,
    double_q: bool,
) -> Result<Vec<f64>> {
    let (b, a, z) = (batch.size, spec.num_actions, spec.num_atoms);
    let selector = if double_q {
        network::q_distribution(online, spec, next_obs)?.to_f64_vec()
    } else {
        target_probs.clone()
    };
    let mut out = Vec::with_capacity(b * z);
    let mut shifted = vec![0.0; z];
    for i in 0..b {
        let q: Vec<f64> = (0..a)
            .map(|k| {
                let row = &selector[(i * a + k) * z..(i * a + k + 1) * z];
                row.iter().zip(&support.atoms).map(|(p, zj)| p * zj).sum()
            })
            .collect();
        let best = network::argmax(&q);
        let probs = &target_probs[(i * a + best) * z..(i * a + best + 1) * z];
        for (s, zj) in shifted.iter_mut().zip(&support.atoms) {
            *s = batch.returns[i] + batch.discounts[i] * zj;
        }
        out.extend(categorical_projection(probs, &shifted, support));
    }
    Ok(out)
}

/// Importance-weighted cross-entropy between projected targets and the
/// online log-probabilities of the taken actions. Returns the scalar loss
/// node and the per-sample cross-entropies.
pub fn td_loss<'a, R: Real>(
    g: &mut Graph<'a, R>,
    online_logits: Var,
    actions: &[usize],
    projected: &[f64],
    weights: &[f64],
) -> Result<(Var, Vec<f64>)> {
    let s = g.shape(online_logits).to_vec();
    let (b, z) = (s[0], s[2]);
    if projected.len() != b * z || weights.len() != b || actions.len() != b {
        return Err(Error::config("td_loss: batch arrays disagree in length"));
    }
    let logp = g.log_softmax(online_logits)?;
    let taken = g.gather(logp, actions)?;
    let m = g.constant(Tensor::new(vec![b, z], projected.iter().map(|&v| R::lit(v)).collect())?)?;
    let prod = g.mul(taken, m)?;
    let neg_ce = g.sum_last(prod)?;
    let td_errors: Vec<f64> = g.data(neg_ce).iter().map(|v| -v.to_f64().unwrap()).collect();
    let w = g.constant(Tensor::new(vec![b], weights.iter().map(|&v| R::lit(-v / b as f64)).collect())?)?;
    let weighted = g.mul(neg_ce, w)?;
    Ok((g.sum(weighted)?, td_errors))
}

/// `mean over valid (b, k) of (1 - cos(pred[k][b], target[k][b]))`; zero
/// when nothing is valid.
pub fn spr_loss<'a, R: Real>(
    g: &mut Graph<'a, R>,
    predictions: &[Var],
    targets: &[Tensor<R>],
    valid: &[Vec<bool>],
) -> Result<Option<Var>> {
    if predictions.len() != targets.len() || predictions.len() != valid.len() {
        return Err(Error::config("spr_loss: horizon mismatch"));
    }
    let count: usize = valid.iter().flatten().filter(|&&v| v).count();
    if count == 0 {
        return Ok(None);
    }
    let mut acc: Option<Var> = None;
    for ((&p, t), mask) in predictions.iter().zip(targets).zip(valid) {
        if !mask.iter().any(|&v| v) {
            continue;
        }
        let tv = g.constant(t.detached())?;
        let cos = g.cosine_similarity(p, tv)?;
        let coef = mask.iter().map(|&v| if v { R::lit(-1.0 / count as f64) } else { R::zero() }).collect();
        let mv = g.constant(Tensor::new(vec![mask.len()], coef)?)?;
        let prod = g.mul(cos, mv)?;
        let term = g.sum(prod)?;
        acc = Some(match acc {
            Some(a) => g.add(a, term)?,
            None => term,
        });
    }
    let one = g.constant(Tensor::scalar(R::one()))?;
    Ok(Some(g.add(one, acc.expect("count > 0"))?))
}

/// One target-network pass over the bootstrap observations followed by
/// the `K` future steps. Returns the bootstrap distributions `[B, A, Z]`
/// and, when `futures` is non-empty, the projections `K x [B, latent_dim]`.
fn target_pass<R: Real>(
    batch: &Batch,
    next: &[f32],
    futures: &[Vec<f32>],
    target: &ParameterSet<R>,
    spec: &ArchitectureSpec,
) -> Result<(Vec<f64>, Vec<Tensor<R>>)> {
    if futures.is_empty() {
        let obs = obs_tensor::<R>(spec, next, batch.size)?;
        return Ok((network::q_distribution(target, spec, &obs)?.to_f64_vec(), Vec::new()));
    }
    let k = futures.len();
    let mut all = Vec::with_capacity((k + 1) * batch.size * batch.obs_len);
    all.extend_from_slice(next);
    futures.iter().for_each(|f| all.extend_from_slice(f));
    let obs = obs_tensor::<R>(spec, &all, (k + 1) * batch.size)?;
    let mut g = Graph::new();
    let w = Weights::frozen(target);
    let x = g.constant_ref(&obs)?;
    let latent = network::encode(&mut g, w, spec, x)?;
    let logits = network::q_logits(&mut g, w, spec, latent)?;
    let probs = g.softmax(logits)?;
    let proj = network::project(&mut g, w, latent)?;
    let per = spec.num_actions * spec.num_atoms;
    let probs = g.data(probs)[..batch.size * per].iter().map(|v| v.to_f64().unwrap()).collect();
    let d = spec.latent_dim;
    let data = &g.data(proj)[batch.size * d..];
    let projections = (0..k)
        .map(|i| Ok(Tensor::new(vec![batch.size, d], data[i * batch.size * d..(i + 1) * batch.size * d].to_vec())?))
        .collect::<Result<_>>()?;
    Ok((probs, projections))
}

/// `td + lambda_spr * spr` and its gradients with respect to `online`.
/// Random draws: TD branch (anchor, bootstrap) first, then SPR futures.
pub fn total_loss<R: Real>(
    batch: &Batch,
    online: &ParameterSet<R>,
    target: &ParameterSet<R>,
    spec: &ArchitectureSpec,
    cfg: &LossConfig,
    rng: &mut Rng,
) -> Result<(LossReport, Gradients<R>)> {
    let support = Support::of(spec)?;
    let use_spr = spec.use_spr && cfg.lambda_spr != 0.0 && !batch.spr_observations.is_empty();
    if use_spr && batch.spr_observations.len() != spec.spr_horizon {
        return Err(Error::config(format!(
            "batch carries {} SPR steps, architecture expects {}",
            batch.spr_observations.len(),
            spec.spr_horizon
        )));
    }
    let obs = obs_tensor::<R>(spec, &maybe_augment(spec, cfg, &batch.observations, rng)?, batch.size)?;
    let next_aug = maybe_augment(spec, cfg, &batch.next_observations, rng)?;
    let futures = if use_spr {
        batch
            .spr_observations
            .iter()
            .map(|step| maybe_augment(spec, cfg, step, rng))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let (target_probs, spr_t) = target_pass(batch, &next_aug, &futures, target, spec)?;
    let next = obs_tensor::<R>(spec, &next_aug, batch.size)?;
    let projected = td_targets(batch, &next, target_probs, online, spec, &support, cfg.double_q)?;
    let spr_t = use_spr.then_some(spr_t);

    let mut g = Graph::new();
    let w = Weights::trainable(online);
    let x = g.constant_ref(&obs)?;
    let latent = network::encode(&mut g, w, spec, x)?;
    let logits = network::q_logits(&mut g, w, spec, latent)?;
    let (td, td_errors) = td_loss(&mut g, logits, &batch.actions, &projected, &batch.weights)?;
    let mut total = td;
    let mut spr_value = 0.0;
    if let Some(targets) = spr_t {
        let preds = network::spr_rollout(&mut g, w, spec, latent, &batch.spr_actions)?;
        if let Some(spr) = spr_loss(&mut g, &preds, &targets, &batch.spr_valid)? {
            spr_value = g.data(spr)[0].to_f64().unwrap();
            let scaled = g.scale(spr, R::lit(cfg.lambda_spr))?;
            total = g.add(td, scaled)?;
        }
    }
    let td_value = g.data(td)[0].to_f64().unwrap();
    let total_value = g.data(total)[0].to_f64().unwrap();
    if !total_value.is_finite() {
        return Err(bbf_autodiff::TensorError::NumericFault { op: "total_loss" }.into());
    }
    let grads = g.backward(total)?;
    Ok((
        LossReport {
            td_loss: td_value,
            spr_loss: spr_value,
            total: total_value,
            td_errors,
        },
        grads,
    ))
}
