//! Mixed-precision bin allocation driven by an entropy target.
//!
//! Each layer carries a fractional precision parameter `lambda` whose
//! integer grid points index odd bin counts `bins = 2*lambda + 1`
//! (`lambda = 6` is 13 bins, `lambda = 15` is 31 bins). The loss measures
//! the relative gap between the interpolated total entropy and a target,
//! and projected gradient descent trades per-layer precision against a
//! quantization-MSE proxy standing in for a task loss.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::par::try_map_indexed;
use crate::quantizer::{self, make_quantizer, ScalePolicy};
use crate::{distributions, Tensor};

pub const DEFAULT_LAMBDA_MIN: f64 = 1.0;
pub const DEFAULT_LAMBDA_MAX: f64 = 15.0;
pub const DEFAULT_LEARNING_RATE: f64 = 2.0;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_BETA: f64 = 1.0;

/// Convergence gate: relative entropy gap the final iterate must meet.
pub const CONVERGENCE_REL_GAP: f64 = 0.05;

/// Odd bin count at an integer grid point.
fn bins_for_grid(grid: i64) -> usize {
    (2 * grid + 1) as usize
}

/// Odd bin count for an arbitrary lambda: nearest grid point, halves round up.
pub fn bins_for_lambda(lambda: f64) -> usize {
    bins_for_grid((lambda + 0.5).floor() as i64)
}

/// Per-layer precision state: current lambda, weight count, and measured
/// entropy / distortion tables over the candidate bin grid.
#[derive(Debug, Clone)]
pub struct LayerPrecision {
    pub name: String,
    pub lambda: f64,
    pub weight_count: u64,
    pub entropy_by_bins: BTreeMap<usize, f64>,
    pub mse_by_bins: BTreeMap<usize, f64>,
}

/// The full allocation state: one [`LayerPrecision`] per layer plus the
/// shared lambda bounds.
#[derive(Debug, Clone)]
pub struct PrecisionParams {
    pub layers: Vec<LayerPrecision>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

/// Optimizer settings. The target is stored in bytes; internally all
/// entropy arithmetic happens in bits.
#[derive(Debug, Clone)]
pub struct AllocationConfig {
    pub target_entropy_bytes: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub max_iters: usize,
}

impl AllocationConfig {
    pub fn new(target_entropy_bytes: f64) -> Self {
        Self {
            target_entropy_bytes,
            beta: DEFAULT_BETA,
            learning_rate: DEFAULT_LEARNING_RATE,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn target_bits(&self) -> f64 {
        self.target_entropy_bytes * 8.0
    }

    fn validate(&self) -> Result<()> {
        if !(self.target_entropy_bytes.is_finite() && self.target_entropy_bytes > 0.0) {
            return Err(Error::InvalidConfig("target entropy must be positive"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidConfig("beta must be nonnegative"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("iteration budget must be at least 1"));
        }
        Ok(())
    }
}

impl PrecisionParams {
    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("at least one layer is required"));
        }
        if self.lambda_min.fract() != 0.0
            || self.lambda_max.fract() != 0.0
            || self.lambda_min < 1.0
            || self.lambda_max < self.lambda_min + 1.0
        {
            return Err(Error::InvalidConfig(
                "lambda bounds must be integers with 1 <= min < max",
            ));
        }
        for layer in &self.layers {
            if layer.weight_count == 0 {
                return Err(Error::InvalidConfig("layer weight count must be positive"));
            }
            if !(layer.lambda >= self.lambda_min && layer.lambda <= self.lambda_max) {
                return Err(Error::InvalidConfig("lambda outside its bounds"));
            }
        }
        Ok(())
    }

    fn grid(&self) -> std::ops::RangeInclusive<i64> {
        (self.lambda_min as i64)..=(self.lambda_max as i64)
    }

    fn require_full_tables(&self, need_mse: bool) -> Result<()> {
        for layer in &self.layers {
            for g in self.grid() {
                let bins = bins_for_grid(g);
                if !layer.entropy_by_bins.contains_key(&bins) {
                    return Err(Error::MissingEntropyEntry { bins });
                }
                if need_mse && !layer.mse_by_bins.contains_key(&bins) {
                    return Err(Error::MissingEntropyEntry { bins });
                }
            }
        }
        Ok(())
    }
}

fn table_value(table: &BTreeMap<usize, f64>, bins: usize) -> Result<f64> {
    table
        .get(&bins)
        .copied()
        .ok_or(Error::MissingEntropyEntry { bins })
}

/// Linear interpolation of a per-bins table at fractional lambda. At grid
/// points this is exactly the stored value; no interpolation artifact.
fn interp(table: &BTreeMap<usize, f64>, lambda: f64) -> Result<f64> {
    let lf = lambda.floor();
    let frac = lambda - lf;
    let lo = table_value(table, bins_for_grid(lf as i64))?;
    if frac == 0.0 {
        return Ok(lo);
    }
    let hi = table_value(table, bins_for_grid(lf as i64 + 1))?;
    Ok((1.0 - frac) * lo + frac * hi)
}

/// Bracketing grid cell used for gradients. Interior points use their unit
/// cell; integral points take the right-hand difference, except at the top
/// bound where only the left-hand cell exists.
fn grad_cell(lambda: f64, lambda_max: f64) -> (i64, i64) {
    let lf = lambda.floor() as i64;
    if lambda > lf as f64 {
        (lf, lf + 1)
    } else if lambda < lambda_max {
        (lf, lf + 1)
    } else {
        (lf - 1, lf)
    }
}

/// Interpolated total entropy over all layers, in bits.
pub fn interpolated_total_bits(params: &PrecisionParams) -> Result<f64> {
    let mut total = 0.0f64;
    for layer in &params.layers {
        total += layer.weight_count as f64 * interp(&layer.entropy_by_bins, layer.lambda)?;
    }
    Ok(total)
}

/// Entropy criterion: relative gap between the interpolated entropy total
/// and the target, `|sum - target| / target`. Dimensionless; zero exactly
/// when the interpolated total hits the target.
pub fn entropy_loss(params: &PrecisionParams, cfg: &AllocationConfig) -> Result<f64> {
    cfg.validate()?;
    let target = cfg.target_bits();
    Ok((interpolated_total_bits(params)? - target).abs() / target)
}

/// Per-layer gradient of [`entropy_loss`] with respect to lambda:
/// `sign(sum - target) * |W| / target * (H_hi - H_lo)` over the bracketing
/// cell. The sign factor descends the absolute-value objective.
pub fn entropy_loss_grad(params: &PrecisionParams, cfg: &AllocationConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let target = cfg.target_bits();
    let diff = interpolated_total_bits(params)? - target;
    let sgn = if diff > 0.0 {
        1.0
    } else if diff < 0.0 {
        -1.0
    } else {
        0.0
    };
    params
        .layers
        .iter()
        .map(|layer| {
            let (lo, hi) = grad_cell(layer.lambda, params.lambda_max);
            let h_lo = table_value(&layer.entropy_by_bins, bins_for_grid(lo))?;
            let h_hi = table_value(&layer.entropy_by_bins, bins_for_grid(hi))?;
            Ok(sgn * layer.weight_count as f64 / target * (h_hi - h_lo))
        })
        .collect()
}

fn mse_term_and_grad(params: &PrecisionParams) -> Result<(f64, Vec<f64>)> {
    let total_weights: f64 = params
        .layers
        .iter()
        .map(|l| l.weight_count as f64)
        .sum();
    let mut term = 0.0f64;
    let mut grads = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let w = layer.weight_count as f64 / total_weights;
        term += w * interp(&layer.mse_by_bins, layer.lambda)?;
        let (lo, hi) = grad_cell(layer.lambda, params.lambda_max);
        let m_lo = table_value(&layer.mse_by_bins, bins_for_grid(lo))?;
        let m_hi = table_value(&layer.mse_by_bins, bins_for_grid(hi))?;
        grads.push(w * (m_hi - m_lo));
    }
    Ok((term, grads))
}

/// Measured entropies of `weights` quantized at each candidate bin count.
pub fn entropy_table(
    weights: &[f32],
    bin_candidates: &[usize],
    policy: ScalePolicy,
) -> Result<BTreeMap<usize, f64>> {
    let mut table = BTreeMap::new();
    for &bins in bin_candidates {
        let spec = make_quantizer(weights, bins, policy, "")?;
        let symbols = quantizer::quantize(weights, &spec);
        let dist = distributions::histogram(&symbols, bins)?;
        table.insert(bins, distributions::shannon_entropy(&dist)?);
    }
    Ok(table)
}

/// Quantization MSE of `weights` at each candidate bin count.
pub fn mse_table(
    weights: &[f32],
    bin_candidates: &[usize],
    policy: ScalePolicy,
) -> Result<BTreeMap<usize, f64>> {
    let mut table = BTreeMap::new();
    for &bins in bin_candidates {
        let spec = make_quantizer(weights, bins, policy, "")?;
        table.insert(bins, quantizer::quantization_mse(weights, &spec)?);
    }
    Ok(table)
}

/// Builds the precision state for a set of layers: lambda initialized at the
/// top of its range (the widest bin count), tables measured over the whole
/// grid. Layers are processed in parallel when the `parallel` feature is on.
pub fn build_precision_params(
    layers: &[Tensor],
    policy: ScalePolicy,
    lambda_min: f64,
    lambda_max: f64,
) -> Result<PrecisionParams> {
    if layers.is_empty() {
        return Err(Error::InvalidConfig("at least one layer is required"));
    }
    let grid_bins: Vec<usize> = ((lambda_min as i64)..=(lambda_max as i64))
        .map(bins_for_grid)
        .collect();
    let built = try_map_indexed(layers, |_, tensor| {
        Ok(LayerPrecision {
            name: tensor.name.clone(),
            lambda: lambda_max,
            weight_count: tensor.data.len() as u64,
            entropy_by_bins: entropy_table(&tensor.data, &grid_bins, policy)?,
            mse_by_bins: mse_table(&tensor.data, &grid_bins, policy)?,
        })
    })?;
    let params = PrecisionParams {
        layers: built,
        lambda_min,
        lambda_max,
    };
    params.validate()?;
    Ok(params)
}

/// Outcome of one allocation run.
#[derive(Debug, Clone)]
pub struct AllocationResult {
    pub per_layer: Vec<LayerAllocation>,
    pub achieved_bits: f64,
    pub target_bits: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct LayerAllocation {
    pub name: String,
    pub weight_count: u64,
    pub lambda: f64,
    pub bins: usize,
    /// Measured entropy at the chosen bin count, bits per weight.
    pub entropy_bits_per_weight: f64,
}

/// Projected gradient descent on the per-layer lambdas.
///
/// Starts from the lambdas stored in `params`, descends
/// `entropy_loss + beta * distortion`, and projects into the lambda bounds
/// after every step. Infeasible targets (outside what the entropy tables can
/// reach anywhere in the bounds) fail up front rather than silently clamping.
pub fn allocate(params: &PrecisionParams, cfg: &AllocationConfig) -> Result<AllocationResult> {
    cfg.validate()?;
    params.validate()?;
    params.require_full_tables(cfg.beta > 0.0)?;

    let target = cfg.target_bits();
    let mut min_bits = 0.0f64;
    let mut max_bits = 0.0f64;
    for layer in &params.layers {
        let vals: Vec<f64> = params
            .grid()
            .map(|g| layer.entropy_by_bins[&bins_for_grid(g)])
            .collect();
        min_bits += layer.weight_count as f64 * vals.iter().cloned().fold(f64::INFINITY, f64::min);
        max_bits += layer.weight_count as f64
            * vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    if target < min_bits || target > max_bits {
        return Err(Error::InfeasibleTarget {
            target_bits: target,
            min_bits,
            max_bits,
        });
    }

    let mut state = params.clone();
    for _ in 0..cfg.max_iters {
        let g_entropy = entropy_loss_grad(&state, cfg)?;
        let g_mse = if cfg.beta > 0.0 {
            mse_term_and_grad(&state)?.1
        } else {
            vec![0.0; state.layers.len()]
        };
        for (i, layer) in state.layers.iter_mut().enumerate() {
            let g = g_entropy[i] + cfg.beta * g_mse[i];
            layer.lambda =
                (layer.lambda - cfg.learning_rate * g).clamp(params.lambda_min, params.lambda_max);
        }
    }

    let achieved = interpolated_total_bits(&state)?;
    let converged = (achieved - target).abs() / target <= CONVERGENCE_REL_GAP;
    let per_layer = state
        .layers
        .iter()
        .map(|layer| {
            let bins = bins_for_lambda(layer.lambda);
            Ok(LayerAllocation {
                name: layer.name.clone(),
                weight_count: layer.weight_count,
                lambda: layer.lambda,
                bins,
                entropy_bits_per_weight: table_value(&layer.entropy_by_bins, bins)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AllocationResult {
        per_layer,
        achieved_bits: achieved,
        target_bits: target,
        converged,
        iterations: cfg.max_iters,
    })
}

/// Convenience wrapper: measure tables for raw weight tensors and run
/// [`allocate`] with default bounds.
pub fn allocate_weights(
    layers: &[Tensor],
    policy: ScalePolicy,
    cfg: &AllocationConfig,
) -> Result<AllocationResult> {
    let params = build_precision_params(layers, policy, DEFAULT_LAMBDA_MIN, DEFAULT_LAMBDA_MAX)?;
    allocate(&params, cfg)
}
