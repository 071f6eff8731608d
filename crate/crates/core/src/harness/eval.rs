//! Paired evaluation of several policies over the same scenarios.

use std::fmt::Write as _;
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, EnvConfig, EpisodeError, EpisodeResult};
use crate::catalog::{PreparedCatalog, Scenario};
use crate::heuristics::Policy;

/// Builds a fresh policy for one episode.
pub type PolicyFactory<'a> = Box<dyn Fn(&Scenario) -> Box<dyn Policy> + Send + Sync + 'a>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub policy: String,
    pub scenario: String,
    pub steps: usize,
    pub compactness: f64,
    pub close_pairs: usize,
    pub violation: bool,
    pub fragile_count: usize,
    pub mean_pressure: f64,
}

impl EpisodeRow {
    pub fn new(policy: &str, r: &EpisodeResult) -> Self {
        EpisodeRow {
            policy: policy.to_string(),
            scenario: r.scenario.clone(),
            steps: r.steps,
            compactness: r.compactness,
            close_pairs: r.close_pairs,
            violation: r.violation,
            fragile_count: r.pressures.len(),
            mean_pressure: r.mean_pressure,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub episodes: usize,
    pub mean_compactness: f64,
    /// Share of episodes ending without any close avoidance pair.
    pub avoidance_accuracy: f64,
    /// Mean over episodes that packed at least one fragile object.
    pub mean_pressure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<EpisodeRow>,
    pub summaries: Vec<PolicySummary>,
}

pub fn summarize(policy: &str, rows: &[&EpisodeRow]) -> PolicySummary {
    let n = rows.len();
    let with_fragile: Vec<f64> = rows.iter().filter(|r| r.fragile_count > 0).map(|r| r.mean_pressure).collect();
    PolicySummary {
        policy: policy.to_string(),
        episodes: n,
        mean_compactness: if n == 0 { 0.0 } else { rows.iter().map(|r| r.compactness).sum::<f64>() / n as f64 },
        avoidance_accuracy: if n == 0 { 0.0 } else { rows.iter().filter(|r| r.close_pairs == 0).count() as f64 / n as f64 },
        mean_pressure: if with_fragile.is_empty() {
            0.0
        } else {
            with_fragile.iter().sum::<f64>() / with_fragile.len() as f64
        },
    }
}

impl Report {
    /// Aggregates rows per policy, keeping first-appearance order.
    pub fn from_rows(rows: Vec<EpisodeRow>) -> Self {
        let mut names: Vec<String> = Vec::new();
        for r in &rows {
            if !names.contains(&r.policy) {
                names.push(r.policy.clone());
            }
        }
        let summaries = names
            .iter()
            .map(|n| summarize(n, &rows.iter().filter(|r| &r.policy == n).collect::<Vec<_>>()))
            .collect();
        Report { rows, summaries }
    }

    pub fn summary(&self, policy: &str) -> Option<&PolicySummary> {
        self.summaries.iter().find(|s| s.policy == policy)
    }

    pub fn write_csv(&self, w: impl io::Write) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl io::Read) -> csv::Result<Vec<EpisodeRow>> {
        csv::Reader::from_reader(r).deserialize().collect()
    }

    /// Fixed-width summary table, one line per policy.
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>8} {:>12} {:>12} {:>10}", "method", "episodes", "compactness", "avoid. acc.", "pressure");
        for p in &self.summaries {
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>12.4} {:>11.2}% {:>10.3}",
                p.policy,
                p.episodes,
                p.mean_compactness,
                100.0 * p.avoidance_accuracy,
                p.mean_pressure
            );
        }
        s
    }
}

/// Runs every policy on every scenario (same scenarios for all policies).
pub fn evaluate(policies: &[(String, PolicyFactory<'_>)], scenarios: &[Scenario], catalog: &PreparedCatalog, env: &EnvConfig) -> Result<Report, EpisodeError> {
    let mut rows = Vec::with_capacity(policies.len() * scenarios.len());
    for (name, make) in policies {
        let results: Vec<Result<EpisodeResult, EpisodeError>> = scenarios
            .par_iter()
            .map(|s| {
                let mut p = make(s);
                run_episode(catalog, s, p.as_mut(), env)
            })
            .collect();
        for r in results {
            rows.push(EpisodeRow::new(name, &r?));
        }
    }
    Ok(Report::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: &str, c: f64, pairs: usize, fragile: usize, p: f64) -> EpisodeRow {
        EpisodeRow {
            policy: policy.into(),
            scenario: "s".into(),
            steps: 1,
            compactness: c,
            close_pairs: pairs,
            violation: pairs > 0,
            fragile_count: fragile,
            mean_pressure: p,
        }
    }

    #[test]
    fn accuracy_ratio() {
        let mut rows: Vec<_> = (0..19).map(|_| row("a", 0.3, 0, 0, 0.0)).collect();
        rows.push(row("a", 0.3, 2, 0, 0.0));
        let r = Report::from_rows(rows);
        assert!((r.summaries[0].avoidance_accuracy - 0.95).abs() < 1e-12);
        assert_eq!(r.summaries[0].mean_pressure, 0.0);
    }

    #[test]
    fn single_episode_aggregates() {
        let r = Report::from_rows(vec![row("x", 0.41, 0, 2, 3.5)]);
        let s = &r.summaries[0];
        assert_eq!((s.mean_compactness, s.avoidance_accuracy, s.mean_pressure), (0.41, 1.0, 3.5));
        assert!(r.summary_table().contains("x"));
    }

    #[test]
    fn csv_round_trip_recomputes() {
        let r = Report::from_rows(vec![row("a", 0.2, 1, 1, 2.0), row("b", 0.5, 0, 0, 0.0), row("a", 0.4, 0, 1, 1.0)]);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = Report::from_rows(Report::read_csv(buf.as_slice()).unwrap());
        assert_eq!(back, r);
        assert!((r.summary("a").unwrap().mean_pressure - 1.5).abs() < 1e-12);
    }
}
