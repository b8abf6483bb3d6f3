use std::sync::Arc;

use super::arch::ModelArchitecture;
use super::params::{LayerViews, ParamLayout, ParameterVector};
use crate::error::{Error, Result};

/// One fixed-length multichannel segment with a single activity label.
///
/// `data` is channel-major: value of channel `c` at step `t` lives at
/// `c * length + t`. `source` tags the subject the window was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorWindow {
    pub data: Arc<[f64]>,
    pub channels: usize,
    pub label: usize,
    pub source: u32,
}

impl SensorWindow {
    pub fn new(data: Vec<f64>, channels: usize, label: usize, source: u32) -> Self {
        debug_assert!(channels > 0 && data.len().is_multiple_of(channels));
        Self {
            data: data.into(),
            channels,
            label,
            source,
        }
    }

    pub fn length(&self) -> usize {
        self.data.len() / self.channels
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let l = self.length();
        &self.data[c * l..(c + 1) * l]
    }

    fn check(&self, arch: &ModelArchitecture) -> Result<()> {
        if self.channels != arch.input_channels || self.length() != arch.window_length {
            return Err(Error::Architecture(format!(
                "window is {}×{}, architecture expects {}×{}",
                self.channels,
                self.length(),
                arch.input_channels,
                arch.window_length
            )));
        }
        if self.label >= arch.num_classes {
            return Err(Error::Usage(format!(
                "label {} outside [0, {})",
                self.label, arch.num_classes
            )));
        }
        Ok(())
    }
}

/// Intermediate activations kept for the backward pass.
struct Activations {
    /// Pre-activation conv output, `conv_out × conv_len`.
    conv: Vec<f64>,
    /// Pooled ReLU output, `conv_out × pool_len` (the dense input).
    pooled: Vec<f64>,
    /// Index into `conv` that won each pooling window.
    argmax: Vec<usize>,
    logits: Vec<f64>,
}

fn forward_cached(l: &LayerViews<'_>, arch: &ModelArchitecture, x: &[f64]) -> Activations {
    let c_in = arch.input_channels;
    let k = arch.conv_kernel;
    let len = arch.window_length;
    let conv_len = arch.conv_output_length();
    let pool_len = arch.pool_output_length();
    let pk = arch.pool_kernel;
    let c_out = arch.conv_out_channels;

    let mut conv = vec![0.0; c_out * conv_len];
    for o in 0..c_out {
        let row = &mut conv[o * conv_len..(o + 1) * conv_len];
        row.fill(l.conv_biases[o]);
        for c in 0..c_in {
            let xs = &x[c * len..(c + 1) * len];
            let ws = &l.conv_weights[(o * c_in + c) * k..(o * c_in + c + 1) * k];
            for (kk, &w) in ws.iter().enumerate() {
                for (t, out) in row.iter_mut().enumerate() {
                    *out += w * xs[t + kk];
                }
            }
        }
    }

    let mut pooled = vec![0.0; c_out * pool_len];
    let mut argmax = vec![0; c_out * pool_len];
    for o in 0..c_out {
        for q in 0..pool_len {
            let start = o * conv_len + q * pk;
            let mut best = start;
            for i in start + 1..start + pk {
                if conv[i] > conv[best] {
                    best = i;
                }
            }
            // max and ReLU commute
            pooled[o * pool_len + q] = conv[best].max(0.0);
            argmax[o * pool_len + q] = best;
        }
    }

    let d = arch.dense_input_size();
    let logits = (0..arch.num_classes)
        .map(|cls| {
            let w = &l.dense_weights[cls * d..(cls + 1) * d];
            l.dense_biases[cls] + w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect();

    Activations {
        conv,
        pooled,
        argmax,
        logits,
    }
}

/// Class scores for one window: valid conv → ReLU → max-pool → flatten → dense.
pub fn forward(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    window: &SensorWindow,
) -> Result<Vec<f64>> {
    let l = params.layers(arch)?;
    window.check(arch)?;
    Ok(forward_cached(&l, arch, &window.data).logits)
}

/// Argmax of the logits, lowest index on ties.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

pub fn predict(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    window: &SensorWindow,
) -> Result<usize> {
    Ok(argmax(&forward(params, arch, window)?))
}

/// `-log softmax(logits)[label]`, computed with the log-sum-exp shift.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Mean softmax cross-entropy over `batch` and its gradient with respect to
/// every parameter.
pub fn loss_and_grad(
    params: &ParameterVector,
    arch: &ModelArchitecture,
    batch: &[SensorWindow],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Usage("loss_and_grad on an empty batch".into()));
    }
    let l = params.layers(arch)?;
    for w in batch {
        w.check(arch)?;
    }

    let layout = ParamLayout::new(arch);
    let mut grad = vec![0.0; arch.param_count()];
    let (g_conv_w, rest) = grad.split_at_mut(layout.conv_biases.start);
    let (g_conv_b, rest) = rest.split_at_mut(layout.conv_biases.len());
    let (g_dense_w, g_dense_b) = rest.split_at_mut(layout.dense_weights.len());

    let c_in = arch.input_channels;
    let k = arch.conv_kernel;
    let len = arch.window_length;
    let conv_len = arch.conv_output_length();
    let d = arch.dense_input_size();
    let scale = 1.0 / batch.len() as f64;

    let mut total_loss = 0.0;
    let mut d_pooled = vec![0.0; d];
    let mut d_conv = vec![0.0; arch.conv_out_channels * conv_len];

    for w in batch {
        let x = &w.data[..];
        let act = forward_cached(&l, arch, x);
        total_loss += cross_entropy(&act.logits, w.label);

        // softmax - onehot, scaled for the mean
        let m = act.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = act.logits.iter().map(|z| (z - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        let d_logits: Vec<f64> = exps
            .iter()
            .enumerate()
            .map(|(cls, e)| (e / z - if cls == w.label { 1.0 } else { 0.0 }) * scale)
            .collect();

        d_pooled.fill(0.0);
        for (cls, &dl) in d_logits.iter().enumerate() {
            g_dense_b[cls] += dl;
            let gw = &mut g_dense_w[cls * d..(cls + 1) * d];
            let ww = &l.dense_weights[cls * d..(cls + 1) * d];
            for j in 0..d {
                gw[j] += dl * act.pooled[j];
                d_pooled[j] += dl * ww[j];
            }
        }

        d_conv.fill(0.0);
        for (j, &idx) in act.argmax.iter().enumerate() {
            if act.conv[idx] > 0.0 {
                d_conv[idx] += d_pooled[j];
            }
        }

        for o in 0..arch.conv_out_channels {
            let dc = &d_conv[o * conv_len..(o + 1) * conv_len];
            g_conv_b[o] += dc.iter().sum::<f64>();
            for c in 0..c_in {
                let xs = &x[c * len..(c + 1) * len];
                let gw = &mut g_conv_w[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                for (kk, g) in gw.iter_mut().enumerate() {
                    *g += dc.iter().zip(&xs[kk..]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
        }
    }

    Ok((total_loss * scale, grad))
}
