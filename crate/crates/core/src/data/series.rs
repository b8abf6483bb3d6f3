use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::SensorWindow;

/// Longest run of missing samples that is filled by interpolation, in seconds.
pub const MAX_INTERPOLATION_GAP_SECS: f64 = 1.0;

/// Raw recording of one subject. Missing samples are stored as `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectSeries {
    pub subject_id: u32,
    pub sample_rate_hz: f64,
    /// Seconds, non-decreasing.
    pub timestamps: Vec<f64>,
    /// `channels[c][t]`.
    pub channels: Vec<Vec<f64>>,
    /// Raw activity id per time step.
    pub labels: Vec<i64>,
}

impl SubjectSeries {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn has_missing(&self) -> bool {
        self.channels.iter().flatten().any(|v| v.is_nan())
    }

    fn period(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    fn retain_rows(&mut self, keep: &[bool]) {
        fn filter<T: Copy>(v: &[T], keep: &[bool]) -> Vec<T> {
            v.iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(x, _)| *x)
                .collect()
        }
        self.timestamps = filter(&self.timestamps, keep);
        self.labels = filter(&self.labels, keep);
        for ch in &mut self.channels {
            *ch = filter(ch, keep);
        }
    }
}

/// Fills gaps of at most [`MAX_INTERPOLATION_GAP_SECS`] by linear
/// interpolation in time and drops the rows of longer gaps (and of gaps at
/// either end of the recording, which have no bracketing sample).
pub fn clean(series: &SubjectSeries) -> Result<SubjectSeries> {
    let mut out = series.clone();
    let n = out.len();
    if out.timestamps.len() != n || out.channels.iter().any(|c| c.len() != n) {
        return Err(Error::Ingestion(format!(
            "subject {}: channels, timestamps and labels differ in length",
            out.subject_id
        )));
    }
    if n == 0 {
        return Ok(out);
    }

    let period = out.period();
    let mut keep = vec![true; n];
    for (c, ch) in out.channels.iter_mut().enumerate() {
        if ch.iter().all(|v| v.is_nan()) {
            return Err(Error::Ingestion(format!(
                "subject {}: channel {c} is entirely missing",
                series.subject_id
            )));
        }
        let mut t = 0;
        while t < n {
            if !ch[t].is_nan() {
                t += 1;
                continue;
            }
            let start = t;
            while t < n && ch[t].is_nan() {
                t += 1;
            }
            let end = t; // first valid index after the gap, or n
            let fillable = start > 0 && end < n && {
                let (t0, t1) = (series.timestamps[start - 1], series.timestamps[end]);
                t1 - t0 - period <= MAX_INTERPOLATION_GAP_SECS + 1e-9
            };
            if fillable {
                let (t0, t1) = (series.timestamps[start - 1], series.timestamps[end]);
                let (v0, v1) = (ch[start - 1], ch[end]);
                for i in start..end {
                    let frac = (series.timestamps[i] - t0) / (t1 - t0);
                    ch[i] = v0 + frac * (v1 - v0);
                }
            } else {
                keep[start..end].fill(false);
            }
        }
    }
    out.retain_rows(&keep);
    Ok(out)
}

/// Raw activity id → contiguous class index, ordered by activity id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassMap(BTreeMap<i64, usize>);

impl ClassMap {
    pub fn from_activities(ids: impl IntoIterator<Item = i64>) -> Self {
        let mut ids: Vec<i64> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        Self(ids.into_iter().enumerate().map(|(i, a)| (a, i)).collect())
    }

    pub fn class_of(&self, activity: i64) -> Option<usize> {
        self.0.get(&activity).copied()
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn activities(&self) -> impl Iterator<Item = i64> + '_ {
        self.0.keys().copied()
    }

    /// `activity:class` pairs joined by commas.
    pub fn to_manifest_value(&self) -> String {
        self.0
            .iter()
            .map(|(a, c)| format!("{a}:{c}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_manifest_value(s: &str) -> Option<Self> {
        let mut ids = Vec::new();
        for (expected, pair) in s.split(',').filter(|p| !p.is_empty()).enumerate() {
            let (a, c) = pair.split_once(':')?;
            if c.trim().parse::<usize>().ok()? != expected {
                return None;
            }
            ids.push(a.trim().parse::<i64>().ok()?);
        }
        let map = Self::from_activities(ids.iter().copied());
        (map.num_classes() == ids.len()).then_some(map)
    }
}

/// Cuts windows from maximal label-homogeneous, time-contiguous runs.
///
/// Runs whose activity is not in `class_map` are skipped, and the trailing
/// partial window of each run is discarded.
pub fn make_windows(
    series: &SubjectSeries,
    window_length: usize,
    stride: usize,
    class_map: &ClassMap,
) -> Vec<SensorWindow> {
    assert!(
        window_length >= 1 && stride >= 1,
        "window length and stride must be positive"
    );
    let n = series.len();
    let max_step = 1.5 * series.period();
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let label = series.labels[start];
        let mut end = start + 1;
        while end < n
            && series.labels[end] == label
            && series.timestamps[end] - series.timestamps[end - 1] <= max_step
        {
            end += 1;
        }
        if let Some(class) = class_map.class_of(label) {
            let mut w = start;
            while w + window_length <= end {
                let mut data = Vec::with_capacity(series.num_channels() * window_length);
                for ch in &series.channels {
                    data.extend_from_slice(&ch[w..w + window_length]);
                }
                out.push(SensorWindow::new(
                    data,
                    series.num_channels(),
                    class,
                    series.subject_id,
                ));
                w += stride;
            }
        }
        start = end;
    }
    out
}
