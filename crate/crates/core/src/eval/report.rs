//! Results and summary CSVs.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use super::harness::{Mode, Scope};
use super::metrics::MetricsRecord;
use crate::error::{Error, Result};

pub const RESULTS_HEADER: [&str; 8] = [
    "experiment_id",
    "dataset",
    "mode",
    "scope",
    "agent_id",
    "epoch",
    "macro_f1",
    "mean_loss",
];

/// Identifies one run in result files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMeta {
    pub experiment_id: String,
    pub dataset: String,
    pub mode: Mode,
    pub scope: Scope,
}

/// One row of a results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment_id: String,
    pub dataset: String,
    pub mode: Mode,
    pub scope: Scope,
    pub agent_id: usize,
    pub epoch: u64,
    pub macro_f1: f64,
    pub mean_loss: f64,
}

impl ResultRow {
    pub fn from_record(meta: &RunMeta, r: &MetricsRecord) -> Self {
        Self {
            experiment_id: meta.experiment_id.clone(),
            dataset: meta.dataset.clone(),
            mode: meta.mode,
            scope: meta.scope,
            agent_id: r.agent_id,
            epoch: r.epoch,
            macro_f1: r.macro_f1,
            mean_loss: r.mean_loss,
        }
    }
}

/// Rows sorted by `(epoch, agent_id)`. Reals use Rust's shortest
/// round-trip formatting, so identical values give identical bytes.
pub fn write_results_csv<W: Write>(w: W, meta: &RunMeta, records: &[MetricsRecord]) -> Result<()> {
    let mut rows: Vec<ResultRow> = records
        .iter()
        .map(|r| ResultRow::from_record(meta, r))
        .collect();
    rows.sort_by_key(|r| (r.epoch, r.agent_id));
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(RESULTS_HEADER)?;
    for r in rows {
        wr.write_record([
            r.experiment_id,
            r.dataset,
            r.mode.to_string(),
            r.scope.to_string(),
            r.agent_id.to_string(),
            r.epoch.to_string(),
            r.macro_f1.to_string(),
            r.mean_loss.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    if !headers.iter().eq(RESULTS_HEADER) {
        return Err(Error::Compare(format!(
            "unexpected results header [{}]",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = |field: &str| {
            Error::Compare(format!(
                "row {}: bad {field} `{}`",
                i + 2,
                &rec[RESULTS_HEADER.iter().position(|h| *h == field).unwrap()]
            ))
        };
        out.push(ResultRow {
            experiment_id: rec[0].to_string(),
            dataset: rec[1].to_string(),
            mode: rec[2].parse().map_err(|_| bad("mode"))?,
            scope: rec[3].parse().map_err(|_| bad("scope"))?,
            agent_id: rec[4].parse().map_err(|_| bad("agent_id"))?,
            epoch: rec[5].parse().map_err(|_| bad("epoch"))?,
            macro_f1: rec[6].parse().map_err(|_| bad("macro_f1"))?,
            mean_loss: rec[7].parse().map_err(|_| bad("mean_loss"))?,
        });
    }
    Ok(out)
}

/// Network-average curve and final-epoch table of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    /// `(epoch, unweighted mean macro-F1 over agents, agents averaged)`.
    pub curve: Vec<(u64, f64, usize)>,
    /// `(agent_id, macro-F1)` at the final epoch.
    pub final_table: Vec<(usize, f64)>,
    pub final_epoch: u64,
}

impl Summary {
    pub fn final_average(&self) -> f64 {
        self.curve.last().map(|c| c.1).unwrap_or(f64::NAN)
    }

    pub fn average_at(&self, epoch: u64) -> Option<f64> {
        self.curve.iter().find(|c| c.0 == epoch).map(|c| c.1)
    }
}

/// Averages `(agent_id, epoch, macro_f1)` triples.
pub fn summarize_points(points: impl IntoIterator<Item = (usize, u64, f64)>) -> Result<Summary> {
    let mut by_epoch: BTreeMap<u64, BTreeMap<usize, f64>> = BTreeMap::new();
    for (agent, epoch, f1) in points {
        by_epoch.entry(epoch).or_default().insert(agent, f1);
    }
    let (&final_epoch, last) = by_epoch
        .iter()
        .next_back()
        .ok_or_else(|| Error::Usage("summarize of an empty history".into()))?;
    let curve = by_epoch
        .iter()
        .map(|(&e, agents)| {
            (
                e,
                agents.values().sum::<f64>() / agents.len() as f64,
                agents.len(),
            )
        })
        .collect();
    Ok(Summary {
        curve,
        final_table: last.iter().map(|(&a, &f)| (a, f)).collect(),
        final_epoch,
    })
}

pub fn summarize(history: &[MetricsRecord]) -> Result<Summary> {
    summarize_points(history.iter().map(|r| (r.agent_id, r.epoch, r.macro_f1)))
}

/// `experiment_id,dataset,mode,scope,epoch,avg_macro_f1,num_agents`.
pub fn write_summary_csv<W: Write>(w: W, meta: &RunMeta, summary: &Summary) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "experiment_id",
        "dataset",
        "mode",
        "scope",
        "epoch",
        "avg_macro_f1",
        "num_agents",
    ])?;
    for (epoch, avg, n) in &summary.curve {
        wr.write_record([
            meta.experiment_id.clone(),
            meta.dataset.clone(),
            meta.mode.to_string(),
            meta.scope.to_string(),
            epoch.to_string(),
            avg.to_string(),
            n.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// `agent_id,epoch,macro_f1` at the final epoch.
pub fn write_final_table_csv<W: Write>(w: W, summary: &Summary) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["agent_id", "epoch", "macro_f1"])?;
    for (agent, f1) in &summary.final_table {
        wr.write_record([
            agent.to_string(),
            summary.final_epoch.to_string(),
            f1.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ConfusionMatrix;

    fn rec(agent_id: usize, epoch: u64, f1: f64) -> MetricsRecord {
        MetricsRecord {
            agent_id,
            epoch,
            macro_f1: f1,
            per_class_f1: vec![],
            confusion: ConfusionMatrix::new(1),
            mean_loss: 0.5,
        }
    }

    fn meta() -> RunMeta {
        RunMeta {
            experiment_id: "x".into(),
            dataset: "synthetic".into(),
            mode: Mode::Collab,
            scope: Scope::Global,
        }
    }

    #[test]
    fn averages_agents() {
        let s = summarize(&[rec(0, 1, 0.2), rec(1, 1, 0.6)]).unwrap();
        assert!((s.final_average() - 0.4).abs() < 1e-12);
        assert_eq!(s.final_table, vec![(0, 0.2), (1, 0.6)]);
    }

    #[test]
    fn single_agent_curve() {
        let s = summarize(&[rec(0, 1, 0.1), rec(0, 2, 0.7)]).unwrap();
        assert_eq!(s.curve, vec![(1, 0.1, 1), (2, 0.7, 1)]);
        assert_eq!(s.final_epoch, 2);
    }

    #[test]
    fn empty_history_is_usage_error() {
        assert!(matches!(summarize(&[]), Err(Error::Usage(_))));
    }

    #[test]
    fn results_csv_round_trip() {
        let mut buf = Vec::new();
        let recs = [rec(1, 1, 0.25), rec(0, 1, 1.0 / 3.0)];
        write_results_csv(&mut buf, &meta(), &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .starts_with("experiment_id,dataset,mode,scope,agent_id,epoch,macro_f1,mean_loss\n"));
        let rows = read_results_csv(&buf[..]).unwrap();
        assert_eq!(rows[0].agent_id, 0);
        assert_eq!(rows[0].macro_f1, 1.0 / 3.0);
        assert_eq!(rows[1].mode, Mode::Collab);
    }
}
