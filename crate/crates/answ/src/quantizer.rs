//! Symmetric uniform quantizer with a zero-point.
//!
//! An odd number of bins guarantees one reconstruction level sits exactly at
//! zero, which is where trained-network weight mass concentrates. Rounding is
//! half away from zero so the map is exactly odd-symmetric.

use crate::error::{Error, Result};

/// How the half-range `a` of a quantizer is chosen from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalePolicy {
    /// `a = max |w|`.
    MaxAbs,
    /// `a` = the q-th percentile of `|w|`, `q` in (0, 100].
    Percentile(f64),
}

/// Bin count, half-range and layer identity of one quantizer.
///
/// Reconstruction levels are `{-a + k * step : k = 0..bins-1}` with
/// `step = 2a / (bins - 1)`; the middle level is exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerSpec {
    bins: usize,
    scale: f64,
    layer_id: String,
}

impl QuantizerSpec {
    pub fn new(bins: usize, scale: f64, layer_id: impl Into<String>) -> Result<Self> {
        if bins < 3 || bins > 255 || bins % 2 == 0 {
            return Err(Error::InvalidBins(bins));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::DegenerateScale);
        }
        Ok(Self {
            bins,
            scale,
            layer_id: layer_id.into(),
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Quantization step `2a / (bins - 1)`.
    pub fn step(&self) -> f64 {
        2.0 * self.scale / (self.bins - 1) as f64
    }

    pub fn layer_id(&self) -> &str {
        &self.layer_id
    }

    /// Symbol id of the zero level.
    pub fn zero_symbol(&self) -> u8 {
        ((self.bins - 1) / 2) as u8
    }
}

/// Empirical percentile of a sample: the smallest value `v` such that at
/// least `ceil(q/100 * n)` sample points are `<= v` (nearest-rank method).
/// Ranks that land on an integer up to representation noise are snapped to
/// it so that e.g. q = 99.9 over 10000 points selects rank 9990, not 9991.
fn percentile_of(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let t = q / 100.0 * n as f64;
    let rounded = t.round();
    let k = if (t - rounded).abs() < 1e-6 {
        rounded as usize
    } else {
        t.ceil() as usize
    };
    sorted[k.clamp(1, n) - 1]
}

/// Derives a quantizer from a weight tensor under the given scale policy.
pub fn make_quantizer(
    weights: &[f32],
    bins: usize,
    policy: ScalePolicy,
    layer_id: &str,
) -> Result<QuantizerSpec> {
    if weights.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let scale = match policy {
        ScalePolicy::MaxAbs => weights
            .iter()
            .map(|&w| f64::from(w).abs())
            .fold(0.0f64, f64::max),
        ScalePolicy::Percentile(q) => {
            if !(q > 0.0 && q <= 100.0) {
                return Err(Error::InvalidPercentile(q));
            }
            let mut mags: Vec<f64> = weights.iter().map(|&w| f64::from(w).abs()).collect();
            mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
            percentile_of(&mags, q)
        }
    };
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::DegenerateScale);
    }
    QuantizerSpec::new(bins, scale, layer_id)
}

/// Maps weights to symbol ids in `[0, bins)`.
///
/// `symbol = clamp(round(w / step), -(bins-1)/2, (bins-1)/2) + (bins-1)/2`,
/// rounding half away from zero. Zero maps to the middle symbol.
pub fn quantize(weights: &[f32], spec: &QuantizerSpec) -> Vec<u8> {
    let step = spec.step();
    let half = ((spec.bins - 1) / 2) as f64;
    weights
        .iter()
        .map(|&w| {
            // f64::round rounds half away from zero.
            let q = (f64::from(w) / step).round();
            (q.clamp(-half, half) + half) as u8
        })
        .collect()
}

/// Maps symbol ids back to reconstruction levels.
pub fn dequantize(symbols: &[u8], spec: &QuantizerSpec) -> Result<Vec<f32>> {
    let step = spec.step();
    let half = ((spec.bins - 1) / 2) as f64;
    symbols
        .iter()
        .enumerate()
        .map(|(index, &s)| {
            if (s as usize) >= spec.bins {
                return Err(Error::SymbolOutOfRange {
                    index,
                    symbol: s as usize,
                    alphabet_size: spec.bins,
                });
            }
            Ok(((f64::from(s) - half) * step) as f32)
        })
        .collect()
}

/// Mean squared reconstruction error of quantize-then-dequantize.
pub fn quantization_mse(weights: &[f32], spec: &QuantizerSpec) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::EmptyTensor);
    }
    let step = spec.step();
    let half = ((spec.bins - 1) / 2) as f64;
    let mut sum = 0.0f64;
    for &w in weights {
        let w = f64::from(w);
        let q = (w / step).round().clamp(-half, half);
        let err = w - f64::from((q * step) as f32);
        sum += err * err;
    }
    Ok(sum / weights.len() as f64)
}

/// 256-level mid-rise quantizer used for layers kept in raw 8-bit form.
///
/// Cells are uniform over `[-a, a]`; levels sit at cell centers, so no level
/// is exactly zero. This is the plain affine byte quantization applied to
/// layers that bypass entropy coding.
pub fn quantize_u8(weights: &[f32], scale: f64) -> Vec<u8> {
    let cell = scale / 128.0;
    weights
        .iter()
        .map(|&w| (f64::from(w) / cell + 128.0).floor().clamp(0.0, 255.0) as u8)
        .collect()
}

/// Inverse of [`quantize_u8`].
pub fn dequantize_u8(symbols: &[u8], scale: f64) -> Vec<f32> {
    let cell = scale / 128.0;
    symbols
        .iter()
        .map(|&s| (((f64::from(s) - 128.0) + 0.5) * cell) as f32)
        .collect()
}
