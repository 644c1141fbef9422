use crate::error::{MetricsError, Result};

/// `(score - random) / (expert - random)`.
pub fn normalize(score: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    if expert_ref == random_ref {
        return Err(MetricsError::EqualReferences(random_ref));
    }
    Ok((score - random_ref) / (expert_ref - random_ref))
}

fn sorted(scores: &[f64], what: &'static str) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(MetricsError::Empty(what));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn mean(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(MetricsError::Empty("mean"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

pub fn median(scores: &[f64]) -> Result<f64> {
    let v = sorted(scores, "median")?;
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Mean of the sorted scores after removing `trim` of the mass from each
/// end. Sample `i` covers `[i, i + 1)`; a sample straddling a cut point
/// keeps the fraction of its unit that lies inside `[trim * n, (1 - trim) * n]`.
pub fn trimmed_mean(scores: &[f64], trim: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&trim) {
        return Err(MetricsError::BadTrim(trim));
    }
    let v = sorted(scores, "trimmed mean")?;
    let n = v.len() as f64;
    let (lo, hi) = (trim * n, (1.0 - trim) * n);
    let mut total = 0.0;
    for (i, &s) in v.iter().enumerate() {
        let w = ((i + 1) as f64).min(hi) - (i as f64).max(lo);
        if w > 0.0 {
            total += w * s;
        }
    }
    Ok(total / (hi - lo))
}

/// Interquartile mean: [`trimmed_mean`] with 25% cut from each end.
pub fn iqm(scores: &[f64]) -> Result<f64> {
    trimmed_mean(scores, 0.25)
}

/// Mean shortfall below a normalized score of 1.
pub fn optimality_gap(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(MetricsError::Empty("optimality gap"));
    }
    Ok(scores.iter().map(|s| (1.0 - s).max(0.0)).sum::<f64>() / scores.len() as f64)
}

/// Fraction of scores strictly above each `tau`.
pub fn profile(scores: &[f64], taus: &[f64]) -> Result<Vec<(f64, f64)>> {
    let v = sorted(scores, "profile")?;
    let n = v.len() as f64;
    Ok(taus
        .iter()
        .map(|&t| {
            let at_or_below = v.partition_point(|&s| s <= t);
            (t, (v.len() - at_or_below) as f64 / n)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Statistic {
    /// Pooled over runs.
    Iqm,
    /// Pooled over runs.
    OptimalityGap,
    /// Over per-game means.
    Median,
    /// Over per-game means.
    Mean,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Statistic::Iqm, Statistic::OptimalityGap, Statistic::Median, Statistic::Mean];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Iqm => "iqm",
            Statistic::OptimalityGap => "optimality_gap",
            Statistic::Median => "median",
            Statistic::Mean => "mean",
        }
    }

    pub fn is_run_level(self) -> bool {
        matches!(self, Statistic::Iqm | Statistic::OptimalityGap)
    }

    /// Evaluates on normalized scores grouped by game.
    pub fn compute(self, per_game: &[Vec<f64>]) -> Result<f64> {
        if self.is_run_level() {
            let pooled: Vec<f64> = per_game.iter().flatten().copied().collect();
            match self {
                Statistic::Iqm => iqm(&pooled),
                _ => optimality_gap(&pooled),
            }
        } else {
            let means = per_game.iter().map(|g| mean(g)).collect::<Result<Vec<_>>>()?;
            match self {
                Statistic::Median => median(&means),
                _ => mean(&means),
            }
        }
    }
}
