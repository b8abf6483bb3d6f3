//! HARTH recordings: one `S0NN.csv` per subject with a header row naming a
//! timestamp, six accelerometer axes (lower back and thigh, in g) and an
//! activity label. Extra columns, such as a leading row index, are ignored.
//!
//! Subjects are addressed by 1-based ordinal over the sorted file names, so
//! subject 1 is the first `S*.csv` in the directory.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use rayon::prelude::*;

use super::series::SubjectSeries;
use crate::error::{Error, Result};

pub const SAMPLE_RATE_HZ: f64 = 50.0;

pub const EXPECTED_COLUMNS: [&str; 8] = [
    "timestamp",
    "back_x",
    "back_y",
    "back_z",
    "thigh_x",
    "thigh_y",
    "thigh_z",
    "label",
];

pub const WALKING: i64 = 1;
pub const RUNNING: i64 = 2;
pub const STANDING: i64 = 6;
pub const SITTING: i64 = 7;
pub const LYING: i64 = 8;

/// The five locomotion activities.
pub fn default_activities() -> Vec<i64> {
    vec![WALKING, RUNNING, STANDING, SITTING, LYING]
}

/// Subject files in the directory, sorted by name.
pub fn subject_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| Error::Ingestion(format!("HARTH directory {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with('S') && name.ends_with(".csv")
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_harth(
    dir: &Path,
    subject_ids: &[u32],
    activity_whitelist: &[i64],
) -> Result<Vec<SubjectSeries>> {
    if subject_ids.is_empty() {
        return Ok(Vec::new());
    }
    let files = subject_files(dir)?;
    subject_ids
        .par_iter()
        .map(|&id| {
            let path = id
                .checked_sub(1)
                .and_then(|i| files.get(i as usize))
                .ok_or_else(|| {
                    Error::Ingestion(format!(
                        "HARTH subject {id}: no such subject ({} files in {})",
                        files.len(),
                        dir.display()
                    ))
                })?;
            load_subject(path, id, activity_whitelist)
        })
        .collect()
}

fn load_subject(path: &Path, subject_id: u32, whitelist: &[i64]) -> Result<SubjectSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Ingestion(format!("HARTH subject {subject_id}: {e}")))?;
    let headers = reader.headers()?.clone();
    let idx: Vec<usize> = EXPECTED_COLUMNS
        .iter()
        .map(|name| headers.iter().position(|h| h.trim() == *name))
        .collect::<Option<_>>()
        .ok_or_else(|| {
            Error::Ingestion(format!(
                "{}: header [{}] does not contain expected columns [{}]",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(", "),
                EXPECTED_COLUMNS.join(", ")
            ))
        })?;

    let mut series = SubjectSeries {
        subject_id,
        sample_rate_hz: SAMPLE_RATE_HZ,
        timestamps: Vec::new(),
        channels: vec![Vec::new(); 6],
        labels: Vec::new(),
    };
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: msg,
        };
        let label_cell = &record[idx[7]];
        let label: i64 = label_cell
            .trim()
            .parse()
            .map_err(|_| err(format!("bad label `{label_cell}`")))?;
        if !whitelist.contains(&label) {
            continue;
        }
        let ts = parse_timestamp(&record[idx[0]])
            .ok_or_else(|| err(format!("bad timestamp `{}`", &record[idx[0]])))?;
        series.timestamps.push(ts);
        series.labels.push(label);
        for (c, ch) in series.channels.iter_mut().enumerate() {
            let cell = record[idx[c + 1]].trim();
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        err(format!(
                            "{}: non-numeric cell `{cell}`",
                            EXPECTED_COLUMNS[c + 1]
                        ))
                    })?
            };
            ch.push(v);
        }
    }
    Ok(series)
}

/// Seconds since the Unix epoch for `YYYY-MM-DD HH:MM:SS[.fff]`, or a plain
/// number of seconds.
fn parse_timestamp(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|dt| {
            let utc = dt.and_utc();
            utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9
        })
}
