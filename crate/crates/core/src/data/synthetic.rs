//! Seeded non-IID multi-agent datasets.
//!
//! Class `k` is the waveform `A_k · sin(2π f_k t / L + φ_c)` on channel `c`,
//! with `f_k = k + 1` cycles per window, `A_k = 1 + k/4` and
//! `φ_c = π c / channels`, plus i.i.d. Gaussian noise of standard deviation
//! `noise_level`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use super::series::ClassMap;
use super::split::{split_train_test, AgentDataset};
use crate::error::{Error, Result};
use crate::nn::SensorWindow;
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub channels: usize,
    pub window_length: usize,
    /// `profile[agent][class]` = number of windows of that class.
    pub profile: Vec<Vec<usize>>,
    pub noise_level: f64,
    /// `None` puts every window in the training set.
    pub train_ratio: Option<f64>,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn num_agents(&self) -> usize {
        self.profile.len()
    }
}

/// Agent `i` holds `classes_per_agent` consecutive classes starting at
/// `i mod num_classes`, with `windows_per_class` windows each.
pub fn rotated_profile(
    num_agents: usize,
    num_classes: usize,
    classes_per_agent: usize,
    windows_per_class: usize,
) -> Vec<Vec<usize>> {
    (0..num_agents)
        .map(|i| {
            let mut row = vec![0; num_classes];
            for j in 0..classes_per_agent.min(num_classes) {
                row[(i + j) % num_classes] = windows_per_class;
            }
            row
        })
        .collect()
}

/// Noise-free value of `class` on `channel` at step `t`.
pub fn class_waveform(
    class: usize,
    channel: usize,
    channels: usize,
    t: usize,
    length: usize,
) -> f64 {
    let freq = (class + 1) as f64;
    let amp = 1.0 + class as f64 / 4.0;
    let phase = PI * channel as f64 / channels as f64;
    amp * (2.0 * PI * freq * t as f64 / length as f64 + phase).sin()
}

/// `counts[class]` windows per class, in class order, tagged with `source`.
pub fn synthesize_windows(
    counts: &[usize],
    channels: usize,
    window_length: usize,
    noise_level: f64,
    source: u32,
    seed: u64,
) -> Vec<SensorWindow> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(counts.iter().sum());
    for (class, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let mut data = Vec::with_capacity(channels * window_length);
            for c in 0..channels {
                for t in 0..window_length {
                    let noise: f64 = if noise_level > 0.0 {
                        noise_level * rng.sample::<f64, _>(StandardNormal)
                    } else {
                        0.0
                    };
                    data.push(class_waveform(class, c, channels, t, window_length) + noise);
                }
            }
            out.push(SensorWindow::new(data, channels, class, source));
        }
    }
    out
}

/// One dataset per profile row. Agent `i`'s windows carry source id `i`.
pub fn synthesize_network_data(cfg: &SyntheticConfig) -> Result<Vec<AgentDataset>> {
    if cfg.profile.iter().all(|row| row.iter().all(|&n| n == 0)) {
        return Err(Error::Usage(
            "synthetic profile assigns no windows to any agent".into(),
        ));
    }
    if let Some(row) = cfg.profile.iter().find(|r| r.len() != cfg.num_classes) {
        return Err(Error::Usage(format!(
            "profile row has {} entries, expected {} classes",
            row.len(),
            cfg.num_classes
        )));
    }
    let class_map = ClassMap::from_activities(0..cfg.num_classes as i64);
    cfg.profile
        .iter()
        .enumerate()
        .map(|(i, counts)| {
            let windows = synthesize_windows(
                counts,
                cfg.channels,
                cfg.window_length,
                cfg.noise_level,
                i as u32,
                derive_seed(cfg.seed, "synthetic-agent", i as u64),
            );
            let (train, test) = match cfg.train_ratio {
                Some(r) => split_train_test(&windows, r, derive_seed(cfg.seed, "split", i as u64))?,
                None => (windows, Vec::new()),
            };
            Ok(AgentDataset {
                agent_id: i,
                train,
                test,
                class_map: class_map.clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(profile: Vec<Vec<usize>>, noise: f64) -> SyntheticConfig {
        SyntheticConfig {
            num_classes: profile[0].len(),
            channels: 2,
            window_length: 16,
            profile,
            noise_level: noise,
            train_ratio: None,
            seed: 3,
        }
    }

    #[test]
    fn single_class_agent() {
        let d = synthesize_network_data(&cfg(vec![vec![5, 0, 0], vec![2, 2, 2]], 0.3)).unwrap();
        assert!(d[0].train.iter().all(|w| w.label == 0));
        assert_eq!(d[0].size_weight(), 5);
        assert_eq!(d[1].size_weight(), 6);
        assert!(d[1].train.iter().all(|w| w.source == 1));
    }

    #[test]
    fn noiseless_windows_identical_within_class() {
        let d = synthesize_network_data(&cfg(vec![vec![3, 3]], 0.0)).unwrap();
        assert_eq!(d[0].train[0], d[0].train[1]);
        assert_ne!(d[0].train[0].data, d[0].train[3].data);
    }

    #[test]
    fn deterministic_per_seed() {
        let c = cfg(vec![vec![4, 4], vec![0, 4]], 0.5);
        assert_eq!(
            synthesize_network_data(&c).unwrap(),
            synthesize_network_data(&c).unwrap()
        );
        let mut c2 = c.clone();
        c2.seed = 4;
        assert_ne!(
            synthesize_network_data(&c).unwrap(),
            synthesize_network_data(&c2).unwrap()
        );
    }

    #[test]
    fn all_zero_profile_rejected() {
        assert!(matches!(
            synthesize_network_data(&cfg(vec![vec![0, 0], vec![0, 0]], 0.1)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn split_applied_per_agent() {
        let mut c = cfg(vec![vec![5, 5]], 0.1);
        c.train_ratio = Some(0.8);
        let d = synthesize_network_data(&c).unwrap();
        assert_eq!((d[0].train.len(), d[0].test.len()), (8, 2));
    }

    #[test]
    fn rotation() {
        let p = rotated_profile(6, 4, 2, 10);
        assert_eq!(p[0], vec![10, 10, 0, 0]);
        assert_eq!(p[3], vec![10, 0, 0, 10]);
        assert_eq!(p[5], vec![0, 10, 10, 0]);
    }
}
