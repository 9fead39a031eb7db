//! Weight-update rules.
//!
//! Every rule is built on multiplicative STDP: the size of an update shrinks
//! exponentially as the weight approaches the bound it is moving toward.
//! The supervised rules only differ in the error that scales it:
//!
//! * SSTDP: distance to a desired time *range* (zero inside the range).
//! * S2-STDP: signed distance to a desired *timestamp* around the layer mean.
//! * R-STDP: a bare polarity, +1 for a correct prediction and -1 otherwise.

use crate::encoding::SpikeTrain;
use crate::neuron::WeightMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdpParams {
    pub a_plus: f64,
    /// Stored negative.
    pub a_minus: f64,
    pub beta: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl StdpParams {
    pub fn new(a_plus: f64, a_minus: f64, beta: f64, w_min: f64, w_max: f64) -> Result<Self> {
        if !(a_plus > 0.0) {
            return Err(Error::Parameter(format!("A+ must be positive, got {a_plus}")));
        }
        if !(a_minus < 0.0) {
            return Err(Error::Parameter(format!("A- must be negative, got {a_minus}")));
        }
        if !(beta >= 0.0) {
            return Err(Error::Parameter(format!("beta must be non-negative, got {beta}")));
        }
        if !(w_min < w_max) {
            return Err(Error::Parameter(format!("w_min {w_min} must be below w_max {w_max}")));
        }
        Ok(StdpParams {
            a_plus,
            a_minus,
            beta,
            w_min,
            w_max,
        })
    }

    /// Same as [`StdpParams::new`] with `A-` given as a magnitude.
    pub fn with_magnitudes(a_plus: f64, a_minus: f64, beta: f64, w_min: f64, w_max: f64) -> Result<Self> {
        StdpParams::new(a_plus, -a_minus.abs(), beta, w_min, w_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingParams {
    pub t_max: f64,
    /// S2-STDP time gap.
    pub gap: f64,
    /// SSTDP target gap.
    pub gap1: f64,
    /// SSTDP non-target gap.
    pub gap2: f64,
    pub class_count: usize,
}

impl TimingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > 0.0) {
            return Err(Error::Parameter(format!("t_max must be positive, got {}", self.t_max)));
        }
        for (name, g) in [("gap", self.gap), ("gap1", self.gap1), ("gap2", self.gap2)] {
            if !(g >= 0.0) {
                return Err(Error::Parameter(format!("{name} must be non-negative, got {g}")));
            }
        }
        if self.class_count < 2 {
            return Err(Error::Parameter(format!(
                "need at least two classes, got {}",
                self.class_count
            )));
        }
        Ok(())
    }
}

/// Multiplicative STDP weight change for one synapse.
#[inline]
pub fn stdp_delta(w: f64, causal: bool, p: &StdpParams) -> f64 {
    let range = p.w_max - p.w_min;
    if causal {
        p.a_plus * (-p.beta * (w - p.w_min) / range).exp()
    } else {
        p.a_minus * (-p.beta * (p.w_max - w) / range).exp()
    }
}

#[inline]
pub fn modulated_stdp_delta(w: f64, causal: bool, e: f64, p: &StdpParams) -> f64 {
    e * stdp_delta(w, causal, p)
}

/// SSTDP error in time units: positive only for a target neuron firing after
/// `t_mean - gap1`, negative only for a non-target firing before `t_mean + gap2`.
pub fn sstdp_error(t_j: f64, t_mean: f64, is_target: bool, p: &TimingParams) -> f64 {
    if is_target {
        (t_j - (t_mean - p.gap1)).max(0.0)
    } else {
        (t_j - (t_mean + p.gap2)).min(0.0)
    }
}

/// S2-STDP desired timestamp before clamping to `[0, t_max]`.
///
/// With one target and `N - 1` non-targets the desired timestamps average to
/// `t_mean`.
pub fn s2stdp_desired_unclamped(t_mean: f64, is_target: bool, p: &TimingParams) -> f64 {
    let n = p.class_count as f64;
    if is_target {
        t_mean - (n - 1.0) / n * p.gap
    } else {
        t_mean + p.gap / n
    }
}

pub fn s2stdp_desired(t_mean: f64, is_target: bool, p: &TimingParams) -> f64 {
    s2stdp_desired_unclamped(t_mean, is_target, p).clamp(0.0, p.t_max)
}

/// Signed S2-STDP error, normalized by `t_max`.
pub fn s2stdp_error(t_j: f64, t_desired: f64, t_max: f64) -> f64 {
    (t_j - t_desired) / t_max
}

/// +1 (reward) when the prediction is right, -1 (punishment) otherwise.
pub fn rstdp_polarity(predicted_class: usize, true_class: usize) -> f64 {
    if predicted_class == true_class {
        1.0
    } else {
        -1.0
    }
}

/// Applies an error-modulated STDP update to one neuron and clips its weights.
///
/// `input_times` is indexed by input; inputs that never spiked must be `+inf`
/// and are treated as non-causal. Returns 1 if an update was made (`e != 0`).
pub fn apply_update_dense(
    weights: &mut WeightMatrix,
    neuron: usize,
    input_times: &[f64],
    t_j: f64,
    e: f64,
    p: &StdpParams,
) -> usize {
    if e == 0.0 {
        return 0;
    }
    debug_assert_eq!(input_times.len(), weights.inputs());
    for (w, &t_i) in weights.row_mut(neuron).iter_mut().zip(input_times) {
        let dw = modulated_stdp_delta(*w, t_j >= t_i, e, p);
        *w = (*w + dw).clamp(p.w_min, p.w_max);
    }
    1
}

/// [`apply_update_dense`] taking the input spike train directly.
pub fn apply_update(
    weights: &mut WeightMatrix,
    neuron: usize,
    train: &SpikeTrain,
    t_j: f64,
    e: f64,
    p: &StdpParams,
) -> Result<usize> {
    if train.source_count() != weights.inputs() {
        return Err(Error::structural("spike train sources vs weight inputs", weights.inputs(), train.source_count()));
    }
    if neuron >= weights.neurons() {
        return Err(Error::structural("neuron index", format!("< {}", weights.neurons()), neuron));
    }
    Ok(apply_update_dense(weights, neuron, &train.dense_times(), t_j, e, p))
}

/// Heterosynaptic normalization: rescales the neuron's weights so they sum to
/// its initial sum. Weights are not clipped afterwards.
pub fn normalize_weights(weights: &mut WeightMatrix, neuron: usize) -> Result<()> {
    let f_norm = weights.f_norm()[neuron];
    let row = weights.row_mut(neuron);
    let sum: f64 = row.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::Normalization { neuron, sum });
    }
    let scale = f_norm / sum;
    row.iter_mut().for_each(|w| *w *= scale);
    Ok(())
}
