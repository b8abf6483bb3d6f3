use rand::seq::SliceRandom;

use super::series::ClassMap;
use crate::error::{Error, Result};
use crate::nn::SensorWindow;
use crate::seed::rng_from_seed;

/// Standard deviations below this are treated as zero.
pub const MIN_STD: f64 = 1e-12;

/// Private data of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDataset {
    pub agent_id: usize,
    pub train: Vec<SensorWindow>,
    pub test: Vec<SensorWindow>,
    pub class_map: ClassMap,
}

impl AgentDataset {
    /// `|D_i|`, the agent's interaction weight.
    pub fn size_weight(&self) -> usize {
        self.train.len()
    }
}

/// Seeded uniform permutation; the first `⌈ratio·N⌉` windows go to train.
pub fn split_train_test(
    windows: &[SensorWindow],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<SensorWindow>, Vec<SensorWindow>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Usage(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let n_train = train_count(windows.len(), ratio);
    let train = order[..n_train]
        .iter()
        .map(|&i| windows[i].clone())
        .collect();
    let test = order[n_train..]
        .iter()
        .map(|&i| windows[i].clone())
        .collect();
    Ok((train, test))
}

fn train_count(n: usize, ratio: f64) -> usize {
    // tolerance absorbs representation error such as 0.7·10 = 7.000000000000001
    (((n as f64) * ratio - 1e-9).ceil().max(0.0) as usize).min(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ChannelStats {
    /// Per-channel population mean and standard deviation over all steps of
    /// all windows.
    pub fn from_windows(windows: &[SensorWindow]) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::Usage("channel statistics of an empty window set".into()))?;
        let c = first.channels;
        let mut sum = vec![0.0; c];
        let mut count = 0usize;
        for w in windows {
            for (ch, s) in sum.iter_mut().enumerate() {
                *s += w.channel(ch).iter().sum::<f64>();
            }
            count += w.length();
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; c];
        for w in windows {
            for (ch, s) in sq.iter_mut().enumerate() {
                *s += w
                    .channel(ch)
                    .iter()
                    .map(|v| (v - mean[ch]).powi(2))
                    .sum::<f64>();
            }
        }
        let std = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }
}

/// `(x − mean) / std` per channel; channels with `std < MIN_STD` are only
/// centered.
pub fn standardize(windows: &[SensorWindow], stats: &ChannelStats) -> Vec<SensorWindow> {
    windows.iter().map(|w| standardize_one(w, stats)).collect()
}

pub fn standardize_one(w: &SensorWindow, stats: &ChannelStats) -> SensorWindow {
    let len = w.length();
    let mut data = w.data.to_vec();
    for (c, chunk) in data.chunks_mut(len).enumerate() {
        let (m, s) = (stats.mean[c], stats.std[c]);
        for v in chunk {
            *v = if s < MIN_STD { *v - m } else { (*v - m) / s };
        }
    }
    SensorWindow::new(data, w.channels, w.label, w.source)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn windows(n: usize) -> Vec<SensorWindow> {
        (0..n)
            .map(|i| SensorWindow::new(vec![i as f64; 2], 1, 0, 0))
            .collect()
    }

    #[test]
    fn eighty_twenty() {
        let (tr, te) = split_train_test(&windows(10), 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (8, 2));
        let (tr, te) = split_train_test(&windows(1), 0.8, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (1, 0));
        assert_eq!(train_count(10, 0.7), 7);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let w = windows(50);
        let a = split_train_test(&w, 0.8, 5).unwrap();
        assert_eq!(a, split_train_test(&w, 0.8, 5).unwrap());
        assert_ne!(a.0, split_train_test(&w, 0.8, 6).unwrap().0);
        let mut all: Vec<f64> = a.0.iter().chain(&a.1).map(|w| w.data[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..50).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn bad_ratio() {
        assert!(split_train_test(&windows(3), 1.0, 0).is_err());
        assert!(split_train_test(&windows(3), 0.0, 0).is_err());
    }

    #[test]
    fn standardize_cases() {
        let constant = SensorWindow::new(vec![5.0; 4], 1, 0, 0);
        let stats = ChannelStats::from_windows(std::slice::from_ref(&constant)).unwrap();
        assert_eq!(stats.std[0], 0.0);
        assert_eq!(&*standardize_one(&constant, &stats).data, &[0.0; 4]);

        let unit = ChannelStats {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let w = SensorWindow::new(vec![0.3, -2.0], 1, 0, 0);
        assert_eq!(standardize_one(&w, &unit), w);

        let w = SensorWindow::new(vec![0.0, 2.0], 1, 0, 0);
        let stats = ChannelStats::from_windows(std::slice::from_ref(&w)).unwrap();
        assert_eq!((stats.mean[0], stats.std[0]), (1.0, 1.0));
        assert_eq!(&*standardize_one(&w, &stats).data, &[-1.0, 1.0]);
    }
}
