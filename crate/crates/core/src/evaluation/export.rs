//! CSV exports. Every file opens with a `#` comment carrying the seed and
//! config hash of the run that produced it.

use std::io::Write;

use crate::error::Result;
use crate::evaluation::{AggregateStats, EpisodeRecord, HeatmapGrid};
use crate::learner::TrainLogRow;
use crate::stabilizer::RefineLogRow;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvHeader {
    pub seed: u64,
    pub config_hash: String,
    /// Extra `# ` lines after the seed line (policy provenance).
    pub notes: Vec<String>,
}

impl CsvHeader {
    pub fn new(seed: u64, config_hash: impl Into<String>) -> Self {
        Self { seed, config_hash: config_hash.into(), notes: Vec::new() }
    }

    fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# seed={} config_hash={}", self.seed, self.config_hash)?;
        for note in &self.notes {
            writeln!(w, "# {note}")?;
        }
        Ok(())
    }
}

fn writer<W: Write>(header: &CsvHeader, mut w: W) -> Result<csv::Writer<W>> {
    header.write_to(&mut w)?;
    Ok(csv::Writer::from_writer(w))
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Artifact(format!("csv: {other:?}")),
    }
}

/// One summary row per episode. `runs` pairs a policy label with its records.
pub fn write_episodes<W: Write>(w: W, header: &CsvHeader, runs: &[(&str, &[EpisodeRecord])]) -> Result<()> {
    let mut out = writer(header, w)?;
    out.write_record(["policy", "episode", "goal_x", "goal_y", "outcome", "steps", "final_distance", "fallback_count", "effort"])
        .map_err(csv_err)?;
    for (label, records) in runs {
        for (i, r) in records.iter().enumerate() {
            out.write_record([
                label.to_string(),
                i.to_string(),
                r.goal.x.to_string(),
                r.goal.y.to_string(),
                r.outcome.as_str().to_string(),
                r.steps.to_string(),
                r.final_distance.to_string(),
                r.fallback_count.to_string(),
                r.effort.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One row per trajectory sample.
pub fn write_trajectories<W: Write>(w: W, header: &CsvHeader, runs: &[(&str, &[EpisodeRecord])]) -> Result<()> {
    let mut out = writer(header, w)?;
    out.write_record([
        "policy", "episode", "t", "x", "y", "theta", "v", "omega", "a_v", "a_omega", "d", "e", "fallback", "action", "state",
        "goal_x", "goal_y",
    ])
    .map_err(csv_err)?;
    for (label, records) in runs {
        for (i, r) in records.iter().enumerate() {
            for s in &r.trajectory {
                out.write_record([
                    label.to_string(),
                    i.to_string(),
                    s.t.to_string(),
                    s.x.to_string(),
                    s.y.to_string(),
                    s.theta.to_string(),
                    s.v.to_string(),
                    s.omega.to_string(),
                    s.a_v.to_string(),
                    s.a_omega.to_string(),
                    s.d.to_string(),
                    s.e.to_string(),
                    (s.fallback as u8).to_string(),
                    s.action.map_or_else(String::new, |a| a.to_string()),
                    s.state.to_string(),
                    s.goal_x.to_string(),
                    s.goal_y.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Long-format grid. Visitation grids also get `log10(count + 1)`.
pub fn write_heatmap<W: Write>(w: W, header: &CsvHeader, grid: &HeatmapGrid, visitation: bool) -> Result<()> {
    let mut out = writer(header, w)?;
    let mut cols = vec!["i_d", "i_e", "i_v", "i_omega", "value"];
    if visitation {
        cols.push("log10_value");
    }
    out.write_record(&cols).map_err(csv_err)?;
    for i_d in 0..grid.n_d {
        for i_e in 0..grid.n_e {
            let v = grid.get(i_d, i_e);
            let mut row = vec![i_d.to_string(), i_e.to_string(), grid.i_v.to_string(), grid.i_omega.to_string(), v.to_string()];
            if visitation {
                row.push((v + 1.0).log10().to_string());
            }
            out.write_record(&row).map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_train_log<W: Write>(w: W, header: &CsvHeader, rows: &[TrainLogRow]) -> Result<()> {
    let mut out = writer(header, w)?;
    out.write_record(["episode", "outcome", "steps", "return", "epsilon"]).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.episode.to_string(),
            r.outcome.as_str().to_string(),
            r.steps.to_string(),
            r.ret.to_string(),
            r.epsilon.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Accepted-update ledger, one row per refinement rollout.
pub fn write_refine_log<W: Write>(w: W, header: &CsvHeader, rows: &[RefineLogRow]) -> Result<()> {
    let mut out = writer(header, w)?;
    out.write_record([
        "episode", "outcome", "steps", "q_ref0", "budget", "accepted", "fallbacks", "transfers", "decrease_violations",
        "bound_violations",
    ])
    .map_err(csv_err)?;
    for r in rows {
        let a = &r.audit;
        out.write_record([
            r.episode.to_string(),
            r.outcome.as_str().to_string(),
            r.steps.to_string(),
            a.q_ref0.to_string(),
            a.budget.to_string(),
            a.accepted.to_string(),
            a.fallbacks.to_string(),
            a.transfers.to_string(),
            a.decrease_violations.to_string(),
            a.bound_violations.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

const NA: &str = "n/a";

fn fixed(v: Option<f64>, places: usize) -> String {
    v.map_or_else(|| NA.to_string(), |x| format!("{x:.places$}"))
}

/// Table 3 rows for each policy column.
pub fn stats_rows(stats: &AggregateStats) -> Vec<(&'static str, String)> {
    let s = stats;
    vec![
        ("Success rate (%)", fixed(Some(s.success_pct), 1)),
        ("Goal end (%)", fixed(Some(s.success_pct), 1)),
        ("Timeout end (%)", fixed(Some(s.timeout_pct), 1)),
        ("Out of bounds end (%)", fixed(Some(s.oob_pct), 1)),
        ("Steps (all eps), median", fixed(Some(s.steps_median), 0)),
        ("Steps (all eps), mean", fixed(Some(s.steps_mean), 1)),
        ("Steps, median (success)", fixed(s.steps_success_median, 0)),
        ("Steps, mean (success)", fixed(s.steps_success_mean, 1)),
        ("Final dis, median (all)", fixed(Some(s.final_dist_median), 3)),
        ("Final dis, mean (all)", fixed(Some(s.final_dist_mean), 3)),
        ("Final dis, median (fail)", fixed(s.final_dist_fail_median, 3)),
        ("Final dis, mean (fail)", fixed(s.final_dist_fail_mean, 3)),
        ("Fallbacks, median", fixed(s.fallbacks_median, 0)),
        ("Fallbacks, mean", fixed(s.fallbacks_mean, 1)),
        ("Fallbacks/steps, mean", fixed(s.fallback_ratio_mean, 3)),
        ("Control effort, mean", fixed(Some(s.effort_mean), 3)),
    ]
}

/// Table 3 layout: one row per metric, one column per policy.
pub fn write_stats<W: Write>(w: W, header: &CsvHeader, columns: &[(&str, &AggregateStats)]) -> Result<()> {
    let mut out = writer(header, w)?;
    let mut head = vec!["Metric".to_string()];
    head.extend(columns.iter().map(|(label, _)| label.to_string()));
    out.write_record(&head).map_err(csv_err)?;
    let rows: Vec<_> = columns.iter().map(|(_, s)| stats_rows(s)).collect();
    let n_rows = rows.first().map_or(0, Vec::len);
    for i in 0..n_rows {
        let mut row = vec![rows[0][i].0.to_string()];
        row.extend(rows.iter().map(|r| r[i].1.clone()));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
