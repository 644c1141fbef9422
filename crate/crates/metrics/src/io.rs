//! Readers for the per-game table, run score files and reference files, and
//! CSV writers for reports and profiles.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{MetricsError, Result};
use crate::matrix::{GameScores, ScoreMatrix};
use crate::report::AggregateReport;
use crate::stats::Statistic;

pub const SCORE_COLUMNS: [&str; 6] = ["env", "config_name", "seed", "env_steps", "episode_index", "return"];
pub const REFERENCE_COLUMNS: [&str; 3] = ["game", "random", "reference"];
pub const REPORT_COLUMNS: [&str; 6] = ["method", "statistic", "value", "ci_lo", "ci_hi", "note"];
pub const PROFILE_COLUMNS: [&str; 3] = ["method", "tau", "fraction"];

fn records(text: &str) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = r
        .headers()
        .map_err(|e| MetricsError::Parse { line: 1, msg: e.to_string() })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| MetricsError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok((header, rows))
}

fn number(line: usize, cell: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| MetricsError::Parse {
        line,
        msg: format!("`{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(MetricsError::Parse {
            line,
            msg: format!("`{cell}` is not finite"),
        });
    }
    Ok(v)
}

fn expect_header(header: &[String], expected: &[&str]) -> Result<()> {
    if header.len() < expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(MetricsError::Parse {
            line: 1,
            msg: format!("expected header `{}`, found `{}`", expected.join(","), header.join(",")),
        });
    }
    Ok(())
}

/// A per-game table: `game,random,human,<method>...`, one mean score per
/// cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GameTable {
    /// Every score column, including `random` and `human`.
    pub columns: Vec<String>,
    pub games: Vec<String>,
    /// `values[column][game]`.
    pub values: Vec<Vec<f64>>,
}

impl GameTable {
    pub fn parse(text: &str) -> Result<Self> {
        let (header, rows) = records(text)?;
        expect_header(&header, &["game", "random", "human"])?;
        let columns: Vec<String> = header[1..].to_vec();
        let mut values = vec![Vec::new(); columns.len()];
        let mut games = Vec::new();
        for (line, row) in rows {
            if row.len() != header.len() {
                return Err(MetricsError::Parse {
                    line,
                    msg: format!("expected {} cells, found {}", header.len(), row.len()),
                });
            }
            games.push(row[0].clone());
            for (col, cell) in values.iter_mut().zip(&row[1..]) {
                col.push(number(line, cell)?);
            }
        }
        if games.is_empty() {
            return Err(MetricsError::Empty("table"));
        }
        Ok(GameTable { columns, games, values })
    }

    /// Per-game means of one column, anchored on the `random` and `human`
    /// columns. Not run-level.
    pub fn matrix(&self, column: &str) -> Result<ScoreMatrix> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| MetricsError::UnknownColumn(column.to_string()))?;
        let games = self
            .games
            .iter()
            .enumerate()
            .map(|(i, name)| GameScores {
                name: name.clone(),
                random: self.values[0][i],
                expert: self.values[1][i],
                runs: vec![self.values[idx][i]],
            })
            .collect();
        ScoreMatrix::new(games, false)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub env: String,
    pub config_name: String,
    pub seed: u64,
    pub env_steps: u64,
    pub episode_index: u64,
    pub ret: f64,
}

pub fn parse_scores(text: &str) -> Result<Vec<ScoreRecord>> {
    let (header, rows) = records(text)?;
    if header != SCORE_COLUMNS {
        expect_header(&header, &SCORE_COLUMNS)?;
        return Err(MetricsError::Parse {
            line: 1,
            msg: "unexpected extra columns".into(),
        });
    }
    rows.into_iter()
        .map(|(line, row)| {
            if row.len() != SCORE_COLUMNS.len() {
                return Err(MetricsError::Parse {
                    line,
                    msg: format!("expected 6 cells, found {}", row.len()),
                });
            }
            let int = |cell: &str| -> Result<u64> {
                cell.parse().map_err(|_| MetricsError::Parse {
                    line,
                    msg: format!("`{cell}` is not a non-negative integer"),
                })
            };
            Ok(ScoreRecord {
                env: row[0].clone(),
                config_name: row[1].clone(),
                seed: int(&row[2])?,
                env_steps: int(&row[3])?,
                episode_index: int(&row[4])?,
                ret: number(line, &row[5])?,
            })
        })
        .collect()
}

/// `game,random,reference` rows.
pub fn parse_references(text: &str) -> Result<BTreeMap<String, (f64, f64)>> {
    let (header, rows) = records(text)?;
    expect_header(&header, &REFERENCE_COLUMNS)?;
    let mut out = BTreeMap::new();
    for (line, row) in rows {
        if row.len() != 3 {
            return Err(MetricsError::Parse {
                line,
                msg: format!("expected 3 cells, found {}", row.len()),
            });
        }
        out.insert(row[0].clone(), (number(line, &row[1])?, number(line, &row[2])?));
    }
    Ok(out)
}

/// One score per run: the mean return of the episodes at the run's last
/// evaluated `env_steps`. Keyed by config name, then env, then seed.
pub fn final_run_scores(records: &[ScoreRecord]) -> BTreeMap<String, BTreeMap<String, BTreeMap<u64, f64>>> {
    let mut last: BTreeMap<(&str, &str, u64), u64> = BTreeMap::new();
    for r in records {
        let e = last.entry((&r.config_name, &r.env, r.seed)).or_insert(r.env_steps);
        *e = (*e).max(r.env_steps);
    }
    let mut sums: BTreeMap<(&str, &str, u64), (f64, usize)> = BTreeMap::new();
    for r in records {
        let key = (r.config_name.as_str(), r.env.as_str(), r.seed);
        if last[&key] == r.env_steps {
            let s = sums.entry(key).or_insert((0.0, 0));
            s.0 += r.ret;
            s.1 += 1;
        }
    }
    let mut out: BTreeMap<String, BTreeMap<String, BTreeMap<u64, f64>>> = BTreeMap::new();
    for ((cfg, env, seed), (sum, n)) in sums {
        out.entry(cfg.to_string())
            .or_default()
            .entry(env.to_string())
            .or_default()
            .insert(seed, sum / n as f64);
    }
    out
}

/// Run-level matrices per config name.
pub fn run_matrices(
    records: &[ScoreRecord],
    references: &BTreeMap<String, (f64, f64)>,
) -> Result<Vec<(String, ScoreMatrix)>> {
    final_run_scores(records)
        .into_iter()
        .map(|(cfg, envs)| {
            let games = envs
                .into_iter()
                .map(|(env, seeds)| {
                    let &(random, expert) =
                        references.get(&env).ok_or_else(|| MetricsError::MissingReference(env.clone()))?;
                    Ok(GameScores {
                        name: env,
                        random,
                        expert,
                        runs: seeds.into_values().collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((cfg, ScoreMatrix::new(games, true)?))
        })
        .collect()
}

fn io_err(e: impl std::fmt::Display) -> MetricsError {
    MetricsError::Parse { line: 0, msg: e.to_string() }
}

pub fn write_report<W: Write>(out: W, reports: &[(String, AggregateReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS).map_err(io_err)?;
    for (method, r) in reports {
        for s in Statistic::ALL {
            let row = match r.get(s) {
                Some(e) => {
                    let note = if e.ci.degenerate { "degenerate interval: single run per game" } else { "" };
                    [
                        method.clone(),
                        s.name().into(),
                        format!("{:.6}", e.point),
                        format!("{:.6}", e.ci.lo),
                        format!("{:.6}", e.ci.hi),
                        note.into(),
                    ]
                }
                None => [
                    method.clone(),
                    s.name().into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    "unavailable: needs run-level scores".into(),
                ],
            };
            w.write_record(&row).map_err(io_err)?;
        }
        w.write_record([
            method.as_str(),
            "games_above_reference",
            &r.games_above_reference.to_string(),
            "",
            "",
            "",
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

pub fn write_profile<W: Write>(out: W, reports: &[(String, AggregateReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PROFILE_COLUMNS).map_err(io_err)?;
    for (method, r) in reports {
        for (tau, frac) in r.profile.iter().flatten() {
            w.write_record([method.clone(), format!("{tau:.2}"), format!("{frac:.6}")])
                .map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_parse_and_matrix() {
        let t = GameTable::parse("game,random,human,A\nx,0,10,5\ny,1,3,7\n").unwrap();
        assert_eq!(t.columns, ["random", "human", "A"]);
        let m = t.matrix("A").unwrap();
        assert!(!m.is_run_level());
        assert_eq!(m.normalized(), vec![vec![0.5], vec![3.0]]);
        assert!(t.matrix("B").is_err());
        assert!(GameTable::parse("game,random,human\nx,0\n").is_err());
        assert!(GameTable::parse("game,random,human,A\nx,0,1,nan\n").is_err());
        assert!(GameTable::parse("name,random,human\n").is_err());
    }

    #[test]
    fn final_scores_use_last_evaluation() {
        let text = "env,config_name,seed,env_steps,episode_index,return\n\
                    chase,a,0,500,0,100\nchase,a,0,1000,0,2\nchase,a,0,1000,1,4\nchase,a,1,1000,0,1\n";
        let recs = parse_scores(text).unwrap();
        let f = final_run_scores(&recs);
        assert_eq!(f["a"]["chase"][&0], 3.0);
        assert_eq!(f["a"]["chase"][&1], 1.0);
        let mut refs = BTreeMap::new();
        refs.insert("chase".to_string(), (1.0, 5.0));
        let ms = run_matrices(&recs, &refs).unwrap();
        assert_eq!(ms[0].1.normalized(), vec![vec![0.5, 0.0]]);
        assert!(run_matrices(&recs, &BTreeMap::new()).is_err());
    }

    #[test]
    fn score_header_must_match() {
        assert!(parse_scores("env,config,seed,env_steps,episode_index,return\n").is_err());
        assert!(parse_scores("env,config_name,seed,env_steps,episode_index,return\nc,a,-1,0,0,1\n").is_err());
    }

    #[test]
    fn references_parse() {
        let r = parse_references("game,random,reference\nchase,0.5,12\n").unwrap();
        assert_eq!(r["chase"], (0.5, 12.0));
        assert!(parse_references("game,random\n").is_err());
    }
}
