use std::ops::Range;

use rand::Rng;

use super::arch::ModelArchitecture;
use crate::error::{Error, Result};
use crate::seed::{checksum_f64, rng_from_seed};

/// Flat parameter vector of one model.
///
/// Layout, in order:
///
/// | block        | shape                                   | index                    |
/// |--------------|-----------------------------------------|--------------------------|
/// | conv weights | `conv_out × input_channels × kernel`    | `(o·C + c)·K + k`        |
/// | conv biases  | `conv_out`                              | `o`                      |
/// | dense weights| `num_classes × dense_input`             | `class·D + (o·P + t)`    |
/// | dense biases | `num_classes`                           | `class`                  |
///
/// where `P` is the pooled length and `D = conv_out · P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(arch: &ModelArchitecture) -> Self {
        Self(vec![0.0; arch.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Hash of the exact bit pattern; equal checksums mean identical parameters.
    pub fn checksum(&self) -> u64 {
        checksum_f64(&self.0)
    }

    pub fn check_arch(&self, arch: &ModelArchitecture) -> Result<()> {
        if self.0.len() != arch.param_count() {
            return Err(Error::Architecture(format!(
                "parameter vector has length {}, architecture expects {}",
                self.0.len(),
                arch.param_count()
            )));
        }
        Ok(())
    }

    pub fn layers<'a>(&'a self, arch: &ModelArchitecture) -> Result<LayerViews<'a>> {
        self.check_arch(arch)?;
        let l = ParamLayout::new(arch);
        Ok(LayerViews {
            conv_weights: &self.0[l.conv_weights.clone()],
            conv_biases: &self.0[l.conv_biases.clone()],
            dense_weights: &self.0[l.dense_weights.clone()],
            dense_biases: &self.0[l.dense_biases],
        })
    }

    /// Concatenates layer blocks back into a flat vector.
    pub fn from_layers(arch: &ModelArchitecture, layers: LayerViews<'_>) -> Result<Self> {
        let l = ParamLayout::new(arch);
        let blocks = [
            (layers.conv_weights, &l.conv_weights, "conv weights"),
            (layers.conv_biases, &l.conv_biases, "conv biases"),
            (layers.dense_weights, &l.dense_weights, "dense weights"),
            (layers.dense_biases, &l.dense_biases, "dense biases"),
        ];
        let mut out = Vec::with_capacity(arch.param_count());
        for (block, range, name) in blocks {
            if block.len() != range.len() {
                return Err(Error::Architecture(format!(
                    "{name}: got {} values, expected {}",
                    block.len(),
                    range.len()
                )));
            }
            out.extend_from_slice(block);
        }
        Ok(Self(out))
    }
}

/// Borrowed per-layer views into a [`ParameterVector`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerViews<'a> {
    pub conv_weights: &'a [f64],
    pub conv_biases: &'a [f64],
    pub dense_weights: &'a [f64],
    pub dense_biases: &'a [f64],
}

/// Index ranges of each block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub conv_weights: Range<usize>,
    pub conv_biases: Range<usize>,
    pub dense_weights: Range<usize>,
    pub dense_biases: Range<usize>,
}

impl ParamLayout {
    pub fn new(arch: &ModelArchitecture) -> Self {
        let cw = arch.conv_weight_count();
        let cb = cw + arch.conv_out_channels;
        let dw = cb + arch.dense_weight_count();
        let db = dw + arch.num_classes;
        Self {
            conv_weights: 0..cw,
            conv_biases: cw..cb,
            dense_weights: cb..dw,
            dense_biases: dw..db,
        }
    }
}

/// Uniform fan-in initialization: weights in `[-1/√fan_in, 1/√fan_in]`,
/// biases zero. Deterministic in `seed`.
pub fn init_params(arch: &ModelArchitecture, seed: u64) -> ParameterVector {
    let mut rng = rng_from_seed(seed);
    let layout = ParamLayout::new(arch);
    let mut values = vec![0.0; arch.param_count()];

    let conv_bound = 1.0 / ((arch.input_channels * arch.conv_kernel) as f64).sqrt();
    for v in &mut values[layout.conv_weights] {
        *v = rng.random_range(-conv_bound..=conv_bound);
    }
    let dense_bound = 1.0 / (arch.dense_input_size() as f64).sqrt();
    for v in &mut values[layout.dense_weights] {
        *v = rng.random_range(-dense_bound..=dense_bound);
    }
    ParameterVector(values)
}

const PARAM_MAGIC: &[u8; 4] = b"CLPV";

/// Encodes `magic | fingerprint: u64 | len: u64 | values: [f64; len]`, all
/// little endian.
pub fn encode_params(params: &ParameterVector, arch: &ModelArchitecture) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 8 * params.len());
    out.extend_from_slice(PARAM_MAGIC);
    out.extend_from_slice(&arch.fingerprint().to_le_bytes());
    write_f64_array(&mut out, params.as_slice());
    out
}

/// Inverse of [`encode_params`]. Returns the vector and the number of bytes
/// consumed.
pub fn decode_params(bytes: &[u8], arch: &ModelArchitecture) -> Result<(ParameterVector, usize)> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != PARAM_MAGIC {
        return Err(Error::Codec("bad parameter vector magic".into()));
    }
    let fp = r.u64()?;
    if fp != arch.fingerprint() {
        return Err(Error::Architecture(format!(
            "fingerprint {fp:016x} does not match architecture {:016x}",
            arch.fingerprint()
        )));
    }
    let values = r.f64_array()?;
    let params = ParameterVector(values);
    params.check_arch(arch)?;
    Ok((params, r.position()))
}

pub(crate) fn write_f64_array(out: &mut Vec<u8>, values: &[f64]) {
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Codec(format!("truncated input at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64_array(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let remaining = (self.bytes.len() - self.pos) / 8;
        if n > remaining {
            return Err(Error::Codec(format!(
                "array length {n} exceeds remaining {remaining} values"
            )));
        }
        (0..n).map(|_| self.f64()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelArchitecture {
        ModelArchitecture {
            input_channels: 2,
            window_length: 6,
            conv_out_channels: 3,
            conv_kernel: 2,
            pool_kernel: 2,
            num_classes: 2,
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = small();
        assert_eq!(init_params(&a, 7), init_params(&a, 7));
        assert_ne!(init_params(&a, 7), init_params(&a, 8));
    }

    #[test]
    fn init_biases_zero_and_weights_bounded() {
        let a = small();
        let p = init_params(&a, 3);
        let l = p.layers(&a).unwrap();
        assert!(l.conv_biases.iter().all(|&b| b == 0.0));
        assert!(l.dense_biases.iter().all(|&b| b == 0.0));
        let cb = 1.0 / 4f64.sqrt();
        assert!(l.conv_weights.iter().all(|w| w.abs() <= cb));
        let db = 1.0 / (a.dense_input_size() as f64).sqrt();
        assert!(l.dense_weights.iter().all(|w| w.abs() <= db));
    }

    #[test]
    fn layer_views_round_trip() {
        let a = small();
        let p = init_params(&a, 11);
        let back = ParameterVector::from_layers(&a, p.layers(&a).unwrap()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn codec_round_trip_and_fingerprint_check() {
        let a = small();
        let p = init_params(&a, 1);
        let bytes = encode_params(&p, &a);
        let (q, used) = decode_params(&bytes, &a).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(p, q);

        let mut other = a;
        other.num_classes = 3;
        assert!(matches!(
            decode_params(&bytes, &other),
            Err(Error::Architecture(_))
        ));
        assert!(decode_params(&bytes[..bytes.len() - 1], &a).is_err());
    }

    #[test]
    fn wrong_length_is_architecture_error() {
        let a = small();
        let p = ParameterVector::new(vec![0.0; a.param_count() + 1]);
        assert!(matches!(p.layers(&a), Err(Error::Architecture(_))));
    }
}
