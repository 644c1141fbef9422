use crate::bootstrap::{stratified_bootstrap_ci, BootstrapConfig, Interval};
use crate::error::Result;
use crate::matrix::ScoreMatrix;
use crate::stats::{profile, Statistic};

pub const PROFILE_STEP: f64 = 0.05;
pub const PROFILE_TAU_MAX: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub point: f64,
    pub ci: Interval,
}

/// `None` marks a statistic that needs run-level scores the matrix lacks.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateReport {
    pub iqm: Option<Estimate>,
    pub optimality_gap: Option<Estimate>,
    pub median: Estimate,
    pub mean: Estimate,
    /// Games whose mean normalized score is strictly above 1.
    pub games_above_reference: usize,
    pub profile: Option<Vec<(f64, f64)>>,
}

impl AggregateReport {
    pub fn get(&self, s: Statistic) -> Option<Estimate> {
        match s {
            Statistic::Iqm => self.iqm,
            Statistic::OptimalityGap => self.optimality_gap,
            Statistic::Median => Some(self.median),
            Statistic::Mean => Some(self.mean),
        }
    }
}

pub fn tau_grid() -> Vec<f64> {
    let steps = (PROFILE_TAU_MAX / PROFILE_STEP).round() as usize;
    (0..=steps).map(|i| i as f64 * PROFILE_STEP).collect()
}

pub fn aggregate(matrix: &ScoreMatrix, bootstrap: &BootstrapConfig) -> Result<AggregateReport> {
    let per_game = matrix.normalized();
    let estimate = |s: Statistic| -> Result<Estimate> {
        Ok(Estimate {
            point: s.compute(&per_game)?,
            ci: stratified_bootstrap_ci(matrix, s, bootstrap)?,
        })
    };
    let run_level = matrix.is_run_level();
    let games_above_reference = per_game
        .iter()
        .filter(|g| g.iter().sum::<f64>() / g.len() as f64 > 1.0)
        .count();
    let pooled: Vec<f64> = per_game.iter().flatten().copied().collect();
    Ok(AggregateReport {
        iqm: run_level.then(|| estimate(Statistic::Iqm)).transpose()?,
        optimality_gap: run_level.then(|| estimate(Statistic::OptimalityGap)).transpose()?,
        median: estimate(Statistic::Median)?,
        mean: estimate(Statistic::Mean)?,
        games_above_reference,
        profile: run_level.then(|| profile(&pooled, &tau_grid())).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::GameScores;

    #[test]
    fn single_expert_run() {
        let m = ScoreMatrix::new(
            vec![GameScores {
                name: "g".into(),
                random: 2.0,
                expert: 6.0,
                runs: vec![6.0],
            }],
            true,
        )
        .unwrap();
        let r = aggregate(&m, &BootstrapConfig::default()).unwrap();
        assert_eq!(r.iqm.unwrap().point, 1.0);
        assert_eq!(r.median.point, 1.0);
        assert_eq!(r.mean.point, 1.0);
        assert_eq!(r.optimality_gap.unwrap().point, 0.0);
        assert_eq!(r.games_above_reference, 0);
        assert!(r.mean.ci.degenerate);
    }

    #[test]
    fn table_means_hide_run_statistics() {
        let m = ScoreMatrix::new(
            vec![GameScores {
                name: "g".into(),
                random: 0.0,
                expert: 1.0,
                runs: vec![3.0],
            }],
            false,
        )
        .unwrap();
        let r = aggregate(&m, &BootstrapConfig::default()).unwrap();
        assert!(r.iqm.is_none() && r.optimality_gap.is_none() && r.profile.is_none());
        assert_eq!(r.games_above_reference, 1);
    }

    #[test]
    fn grid_spans_zero_to_eight() {
        let g = tau_grid();
        assert_eq!(g.len(), 161);
        assert_eq!(g[0], 0.0);
        assert!((g[160] - 8.0).abs() < 1e-12);
    }
}
