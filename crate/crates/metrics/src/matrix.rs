use crate::error::{MetricsError, Result};
use crate::stats::normalize;

#[derive(Clone, Debug, PartialEq)]
pub struct GameScores {
    pub name: String,
    pub random: f64,
    pub expert: f64,
    /// Raw final returns, one per run.
    pub runs: Vec<f64>,
}

/// Raw scores per game with their reference anchors. `run_level` is false
/// when each entry is already a per-game mean (as in a published table), in
/// which case run-pooled statistics are not defined.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    games: Vec<GameScores>,
    run_level: bool,
}

impl ScoreMatrix {
    pub fn new(games: Vec<GameScores>, run_level: bool) -> Result<Self> {
        if games.is_empty() {
            return Err(MetricsError::Empty("score matrix"));
        }
        for g in &games {
            if g.runs.is_empty() {
                return Err(MetricsError::NoRuns(g.name.clone()));
            }
            if g.runs.iter().any(|r| !r.is_finite()) || !g.random.is_finite() || !g.expert.is_finite() {
                return Err(MetricsError::NonFinite(g.name.clone()));
            }
            if g.random == g.expert {
                return Err(MetricsError::EqualReferences(g.random));
            }
        }
        Ok(ScoreMatrix { games, run_level })
    }

    pub fn games(&self) -> &[GameScores] {
        &self.games
    }

    pub fn is_run_level(&self) -> bool {
        self.run_level
    }

    /// True when no game has more than one run.
    pub fn is_degenerate(&self) -> bool {
        self.games.iter().all(|g| g.runs.len() < 2)
    }

    pub fn normalized(&self) -> Vec<Vec<f64>> {
        self.games
            .iter()
            .map(|g| {
                g.runs
                    .iter()
                    .map(|&r| normalize(r, g.random, g.expert).expect("references checked at construction"))
                    .collect()
            })
            .collect()
    }
}
