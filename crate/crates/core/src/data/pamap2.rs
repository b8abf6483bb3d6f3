//! PAMAP2 protocol recordings: `subject1NN.dat`, whitespace separated, one
//! sample per line. Column 0 is the timestamp, column 1 the activity id,
//! column 2 the heart rate, followed by three 17-column IMU blocks (hand,
//! chest, ankle): temperature, 16g accelerometer ×3, 6g accelerometer ×3,
//! gyroscope ×3, magnetometer ×3, orientation ×4.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::series::SubjectSeries;
use crate::error::{Error, Result};

pub const SAMPLE_RATE_HZ: f64 = 100.0;
pub const MISSING_TOKEN: &str = "NaN";

/// Transient / unlabeled activity id.
pub const NULL_ACTIVITY: i64 = 0;

const IMU_BLOCK_STARTS: [usize; 3] = [3, 20, 37];

/// The 36 accelerometer, gyroscope and magnetometer columns of the three
/// IMUs (temperature and orientation columns excluded).
pub fn default_columns() -> Vec<usize> {
    IMU_BLOCK_STARTS
        .iter()
        .flat_map(|&base| base + 1..=base + 12)
        .collect()
}

/// The 12 protocol activities: lying, sitting, standing, walking, running,
/// cycling, Nordic walking, ascending stairs, descending stairs, vacuum
/// cleaning, ironing, rope jumping.
pub fn default_activities() -> Vec<i64> {
    vec![1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24]
}

pub fn subject_file(dir: &Path, subject_id: u32) -> PathBuf {
    dir.join(format!("subject{}.dat", 100 + subject_id))
}

pub fn load_pamap2(
    dir: &Path,
    subject_ids: &[u32],
    columns: &[usize],
    activity_whitelist: &[i64],
) -> Result<Vec<SubjectSeries>> {
    subject_ids
        .par_iter()
        .map(|&id| load_subject(&subject_file(dir, id), id, columns, activity_whitelist))
        .collect()
}

fn load_subject(
    path: &Path,
    subject_id: u32,
    columns: &[usize],
    whitelist: &[i64],
) -> Result<SubjectSeries> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Ingestion(format!(
            "PAMAP2 subject {subject_id}: cannot read {}: {e}",
            path.display()
        ))
    })?;
    let needed = columns.iter().copied().max().unwrap_or(1).max(1) + 1;

    let mut series = SubjectSeries {
        subject_id,
        sample_rate_hz: SAMPLE_RATE_HZ,
        timestamps: Vec::new(),
        channels: vec![Vec::new(); columns.len()],
        labels: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.len() < needed {
            return Err(parse_err(
                path,
                lineno,
                format!("expected at least {needed} columns, found {}", cells.len()),
            ));
        }
        let activity = cells[1]
            .parse::<f64>()
            .ok()
            .filter(|a| a.is_finite() && a.fract() == 0.0)
            .ok_or_else(|| parse_err(path, lineno, format!("bad activity id `{}`", cells[1])))?
            as i64;
        if !whitelist.contains(&activity) {
            continue;
        }
        let ts = cell(cells[0], path, lineno, 0)?;
        if ts.is_nan() {
            return Err(parse_err(path, lineno, "missing timestamp".into()));
        }
        series.timestamps.push(ts);
        series.labels.push(activity);
        for (ch, &col) in series.channels.iter_mut().zip(columns) {
            ch.push(cell(cells[col], path, lineno, col)?);
        }
    }
    Ok(series)
}

fn cell(s: &str, path: &Path, line: usize, col: usize) -> Result<f64> {
    if s == MISSING_TOKEN {
        return Ok(f64::NAN);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(parse_err(
            path,
            line,
            format!("column {col}: non-numeric cell `{s}`"),
        )),
    }
}

fn parse_err(path: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

/// Number of non-empty lines across the given files, before any filtering.
pub fn count_raw_instances(paths: &[PathBuf]) -> Result<usize> {
    paths
        .iter()
        .map(|p| {
            Ok(fs::read_to_string(p)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .count())
        })
        .sum()
}
