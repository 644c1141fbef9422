use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MetricsError, Result};
use crate::matrix::ScoreMatrix;
use crate::stats::Statistic;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            resamples: 2000,
            level: 0.95,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Every game had a single run, so the interval is the point itself.
    pub degenerate: bool,
}

/// Linear-interpolation percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Percentile interval of `statistic` under resampling of runs with
/// replacement within each game. Resample `r` draws from its own ChaCha
/// stream `r` of `seed`, so results do not depend on evaluation order.
pub fn stratified_bootstrap_ci(matrix: &ScoreMatrix, statistic: Statistic, cfg: &BootstrapConfig) -> Result<Interval> {
    if cfg.resamples == 0 {
        return Err(MetricsError::Bootstrap("at least one resample is required".into()));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(MetricsError::Bootstrap(format!("level {} outside (0, 1)", cfg.level)));
    }
    let per_game = matrix.normalized();
    if matrix.is_degenerate() {
        let point = statistic.compute(&per_game)?;
        return Ok(Interval {
            lo: point,
            hi: point,
            degenerate: true,
        });
    }
    let mut values = Vec::with_capacity(cfg.resamples);
    let mut sample: Vec<Vec<f64>> = per_game.iter().map(|g| Vec::with_capacity(g.len())).collect();
    for r in 0..cfg.resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        for (dst, runs) in sample.iter_mut().zip(&per_game) {
            dst.clear();
            dst.extend((0..runs.len()).map(|_| runs[rng.random_range(0..runs.len())]));
        }
        values.push(statistic.compute(&sample)?);
    }
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - cfg.level) / 2.0;
    Ok(Interval {
        lo: percentile(&values, tail),
        hi: percentile(&values, 1.0 - tail),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::GameScores;

    fn game(name: &str, runs: &[f64]) -> GameScores {
        GameScores {
            name: name.into(),
            random: 0.0,
            expert: 1.0,
            runs: runs.to_vec(),
        }
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(percentile(&v, 0.0), 0.0);
        assert_eq!(percentile(&v, 1.0), 40.0);
        assert_eq!(percentile(&v, 0.125), 5.0);
    }

    #[test]
    fn identical_runs_collapse() {
        let m = ScoreMatrix::new(vec![game("a", &[0.4; 5]), game("b", &[0.7; 3])], true).unwrap();
        for s in Statistic::ALL {
            let ci = stratified_bootstrap_ci(&m, s, &BootstrapConfig::default()).unwrap();
            let point = s.compute(&m.normalized()).unwrap();
            assert!((ci.lo - point).abs() < 1e-12 && (ci.hi - point).abs() < 1e-12);
            assert!(!ci.degenerate);
        }
    }

    #[test]
    fn single_runs_are_flagged_degenerate() {
        let m = ScoreMatrix::new(vec![game("a", &[0.4]), game("b", &[0.9])], true).unwrap();
        let ci = stratified_bootstrap_ci(&m, Statistic::Mean, &BootstrapConfig::default()).unwrap();
        assert!(ci.degenerate);
        assert!((ci.lo - 0.65).abs() < 1e-12 && ci.lo == ci.hi);
    }

    #[test]
    fn deterministic_per_seed() {
        let m = ScoreMatrix::new(vec![game("a", &[0.1, 0.5, 0.9, 1.3]), game("b", &[2.0, 0.0, 1.0])], true).unwrap();
        let cfg = BootstrapConfig {
            resamples: 300,
            ..Default::default()
        };
        let a = stratified_bootstrap_ci(&m, Statistic::Iqm, &cfg).unwrap();
        let b = stratified_bootstrap_ci(&m, Statistic::Iqm, &cfg).unwrap();
        assert_eq!(a, b);
        let c = stratified_bootstrap_ci(&m, Statistic::Iqm, &BootstrapConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a, c);
    }
}
