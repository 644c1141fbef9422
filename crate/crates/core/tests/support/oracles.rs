//! Brute-force oracles for multi-step returns, the categorical projection
//! and the sum tree. Each check returns a description of the first
//! disagreement, if any.

use bbf_core::losses::{categorical_projection, Support};
use bbf_core::replay::{nstep_return, ReplayBuffer, ReplayConfig, SumTree};
use bbf_core::rng::stream;
use rand::Rng as _;

/// Walks the raw reward/terminal arrays forward from `start`.
pub fn brute_force_return(
    rewards: &[f64],
    terminals: &[bool],
    start: usize,
    n: usize,
    gamma: f64,
    bootstrap: f64,
) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for t in start..start + n {
        total += discount * rewards[t];
        discount *= gamma;
        if terminals[t] {
            return total;
        }
    }
    total + discount * bootstrap
}

/// Bit-exact comparison on `trials` random trajectories with terminals.
pub fn nstep_against_brute_force(trials: usize) -> Result<(), String> {
    let mut rng = stream(11, 0);
    for trial in 0..trials {
        let n = rng.random_range(1..=12);
        let len = n + rng.random_range(0..4);
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-3.0..3.0)).collect();
        let terminals: Vec<bool> = (0..len).map(|_| rng.random_bool(0.15)).collect();
        let gamma = rng.random_range(0.5..1.0);
        let bootstrap = rng.random_range(-10.0..10.0);
        let first_terminal = terminals.iter().position(|&t| t);
        let got = nstep_return(&rewards, gamma, n, bootstrap, first_terminal).map_err(|e| e.to_string())?;
        let want = brute_force_return(&rewards, &terminals, 0, n, gamma, bootstrap);
        if got.to_bits() != want.to_bits() {
            return Err(format!("trial {trial}: n = {n}, got {got}, want {want}"));
        }
    }
    Ok(())
}

/// Returns, terminal flags, discounts and bootstrap indices of batches
/// sampled from a buffer, checked against the stored stream.
pub fn sampled_returns_against_brute_force() -> Result<(), String> {
    let mut rng = stream(12, 0);
    let cfg = ReplayConfig {
        capacity: 4096,
        stack_depth: 1,
        prioritized: false,
        ..ReplayConfig::default()
    };
    let mut buffer = ReplayBuffer::new(cfg, 1).map_err(|e| e.to_string())?;
    let (mut rewards, mut terminals) = (Vec::new(), Vec::new());
    let mut episode = 0;
    for t in 0..3000 {
        let r = rng.random_range(-1.0f32..1.0);
        let term = rng.random_bool(0.05);
        buffer.append(&[t as f32], 0, r, term, episode).map_err(|e| e.to_string())?;
        rewards.push(r as f64);
        terminals.push(term);
        if term {
            episode += 1;
        }
    }
    let gamma = 0.97;
    for n in [1, 3, 10] {
        let batch = buffer.sample(256, n, gamma, 0, &mut rng).map_err(|e| e.to_string())?;
        for i in 0..batch.size {
            let g = batch.indices[i] as usize;
            let want = brute_force_return(&rewards, &terminals, g, n, gamma, 0.0);
            if batch.returns[i].to_bits() != want.to_bits() {
                return Err(format!("n = {n}, index {g}: return {} vs {want}", batch.returns[i]));
            }
            let ended = terminals[g..g + batch.n_used[i]].iter().any(|&t| t);
            if batch.nonterminal[i] == ended {
                return Err(format!("n = {n}, index {g}: terminal flag"));
            }
            let boot = batch.next_observations[i] as usize;
            let ok = if ended {
                batch.discounts[i] == 0.0
            } else {
                boot == g + n && batch.discounts[i] == gamma.powi(n as i32)
            };
            if !ok {
                return Err(format!("n = {n}, index {g}: bootstrap {boot}, discount {}", batch.discounts[i]));
            }
        }
    }
    Ok(())
}

/// Mass at each atom from the triangular kernel around every clipped,
/// shifted atom.
pub fn brute_force_projection(probs: &[f64], shifted: &[f64], support: &Support) -> Vec<f64> {
    support
        .atoms
        .iter()
        .map(|&zj| {
            probs
                .iter()
                .zip(shifted)
                .map(|(&p, &z)| {
                    let tz = z.clamp(support.v_min, support.v_max);
                    p * (1.0 - (tz - zj).abs() / support.delta).max(0.0)
                })
                .sum()
        })
        .collect()
}

/// Largest absolute difference from the brute-force projector over `cases`
/// random supports, distributions, rewards and discounts.
pub fn projection_max_error(cases: usize) -> f64 {
    let mut rng = stream(13, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let atoms = rng.random_range(2..=61);
        let v_min = rng.random_range(-20.0..-0.5);
        let v_max = rng.random_range(0.5..20.0);
        let support = Support::new(v_min, v_max, atoms).expect("valid support");
        let raw: Vec<f64> = (0..atoms).map(|_| rng.random::<f64>()).collect();
        let sum: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|p| p / sum).collect();
        let reward = rng.random_range(-5.0..5.0);
        let gamma = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..1.0) };
        let shifted: Vec<f64> = support.atoms.iter().map(|z| reward + gamma * z).collect();
        let got = categorical_projection(&probs, &shifted, &support);
        let want = brute_force_projection(&probs, &shifted, &support);
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
        worst = worst.max((got.iter().sum::<f64>() - 1.0).abs());
    }
    worst
}

/// Largest gap between the root and the leaf sum over `ops` interleaved
/// updates and lookups; lookups must land on a positive leaf whose
/// cumulative range contains the query.
pub fn sum_tree_max_error(ops: usize) -> Result<f64, String> {
    let mut rng = stream(14, 0);
    let capacity = 1000;
    let mut tree = SumTree::new(capacity);
    let mut leaves = vec![0.0f64; capacity];
    let mut worst: f64 = 0.0;
    for op in 0..ops {
        if op % 3 == 2 && tree.total() > 0.0 {
            let mass = rng.random::<f64>() * tree.total();
            let i = tree.find(mass);
            let before: f64 = leaves[..i].iter().sum();
            if leaves[i] <= 0.0 || before > mass + 1e-6 || mass > before + leaves[i] + 1e-6 {
                return Err(format!("op {op}: find({mass}) returned leaf {i}"));
            }
        } else {
            let i = rng.random_range(0..capacity);
            let v = if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..10.0) };
            tree.set(i, v);
            leaves[i] = v;
        }
        let sum: f64 = leaves.iter().sum();
        worst = worst.max((tree.total() - sum).abs());
    }
    Ok(worst)
}
