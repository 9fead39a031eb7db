//! Convolutional feature extraction with unsupervised STDP.
//!
//! One trainable convolutional SSIF layer followed by non-trainable max
//! pooling over spike timestamps. Training is winner-takes-all: per sample,
//! only the filter owning the globally earliest output spike learns, against
//! the input spikes in the receptive field of that spike.
//!
//! Threshold homeostasis has two terms. The winner's threshold moves by
//! `homeostasis_rate * (target_time - t_winner)`, and on top of that the
//! winner pays `competition_rate` while the other filters share an equal
//! decrease, so no single filter can keep winning. It plays the role of the
//! adaptation used in STDP-trained CSNNs but is not a reproduction of any
//! specific published model.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::encoding::SpikeTrain;
use crate::neuron::WeightMatrix;
use crate::plasticity::{apply_update_dense, normalize_weights, StdpParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvConfig {
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub filter_count: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub initial_threshold: f64,
    pub homeostasis_rate: f64,
    pub target_time: f64,
    /// Floor applied to every threshold after a homeostasis step.
    pub threshold_min: f64,
    /// Winner threshold rises by this much per win while the other filters
    /// share an equal decrease, so every filter keeps winning now and then.
    pub competition_rate: f64,
}

impl ConvConfig {
    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel;
        if self.filter_count == 0 || self.stride == 0 || kh == 0 || kw == 0 || self.input_channels == 0 {
            return Err(Error::Parameter("filter count, stride, kernel and channels must be positive".into()));
        }
        if kh > self.input_height || kw > self.input_width {
            return Err(Error::Dimension(format!(
                "kernel {kh}x{kw} does not fit input {}x{}",
                self.input_height, self.input_width
            )));
        }
        if !(self.homeostasis_rate >= 0.0) || !(self.competition_rate >= 0.0) {
            return Err(Error::Parameter("homeostasis and competition rates must be non-negative".into()));
        }
        if !(self.initial_threshold > 0.0) {
            return Err(Error::Parameter("initial threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn output_height(&self) -> usize {
        (self.input_height - self.kernel.0) / self.stride + 1
    }

    pub fn output_width(&self) -> usize {
        (self.input_width - self.kernel.1) / self.stride + 1
    }

    pub fn receptive_field(&self) -> usize {
        self.input_channels * self.kernel.0 * self.kernel.1
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_height * self.input_width
    }
}

/// Extractor sizes used for classifier experiments. The classifier threshold
/// tuned for the largest extractor is scaled down for the smaller ones since
/// they produce fewer input spikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsnnPreset {
    Csnn16,
    Csnn64,
    Csnn128,
}

impl CsnnPreset {
    pub fn filter_count(self) -> usize {
        match self {
            CsnnPreset::Csnn16 => 16,
            CsnnPreset::Csnn64 => 64,
            CsnnPreset::Csnn128 => 128,
        }
    }

    pub fn classifier_threshold_scale(self) -> f64 {
        match self {
            CsnnPreset::Csnn16 => 0.25,
            CsnnPreset::Csnn64 => 0.5,
            CsnnPreset::Csnn128 => 1.0,
        }
    }
}

/// Spike timestamps (and the potentials that produced them) per `(filter, y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub filters: usize,
    pub height: usize,
    pub width: usize,
    pub times: Vec<Option<f64>>,
    pub potentials: Vec<f64>,
    pub t_max: f64,
}

impl FeatureMaps {
    #[inline]
    pub fn index(&self, filter: usize, y: usize, x: usize) -> usize {
        (filter * self.height + y) * self.width + x
    }

    pub fn time(&self, filter: usize, y: usize, x: usize) -> Option<f64> {
        self.times[self.index(filter, y, x)]
    }

    pub fn spike_count(&self) -> usize {
        self.times.iter().filter(|t| t.is_some()).count()
    }

    /// Flattens the maps into a spike train indexed `(filter, y, x)`.
    pub fn to_spike_train(&self) -> Result<SpikeTrain> {
        SpikeTrain::from_times(&self.times, self.t_max)
    }
}

/// The convolutional layer: shared weights (one row per filter) plus per-filter thresholds.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub config: ConvConfig,
    pub weights: WeightMatrix,
    pub thresholds: Vec<f64>,
    pub stdp: StdpParams,
    pub normalize: bool,
}

impl ConvLayer {
    pub fn new<R: Rng>(config: ConvConfig, stdp: StdpParams, init: (f64, f64), rng: &mut R) -> Result<Self> {
        config.validate()?;
        let weights = WeightMatrix::random(config.receptive_field(), config.filter_count, stdp.w_min, stdp.w_max, init, rng)?;
        Ok(ConvLayer {
            thresholds: vec![config.initial_threshold; config.filter_count],
            config,
            weights,
            stdp,
            normalize: true,
        })
    }
}

/// Dense `(channel, y, x)` spike-time grid; silent inputs are `+inf`.
fn dense_input(train: &SpikeTrain, config: &ConvConfig) -> Result<Vec<f64>> {
    if train.source_count() != config.input_len() {
        return Err(Error::structural("conv input size", config.input_len(), train.source_count()));
    }
    Ok(train.dense_times())
}

/// Spike times of the receptive field at output `(oy, ox)`, ordered `(c, ky, kx)`.
fn receptive_field_times(dense: &[f64], config: &ConvConfig, oy: usize, ox: usize) -> Vec<f64> {
    let (kh, kw) = config.kernel;
    let (h, w) = (config.input_height, config.input_width);
    let mut out = Vec::with_capacity(config.receptive_field());
    for c in 0..config.input_channels {
        for ky in 0..kh {
            let row = (c * h + oy * config.stride + ky) * w + ox * config.stride;
            out.extend_from_slice(&dense[row..row + kw]);
        }
    }
    out
}

/// Runs every spatial position as an independent SSIF integration over its
/// receptive field, with weights shared across positions.
pub fn conv_forward(train: &SpikeTrain, layer: &ConvLayer) -> Result<FeatureMaps> {
    let config = &layer.config;
    if layer.weights.inputs() != config.receptive_field() || layer.weights.neurons() != config.filter_count {
        return Err(Error::structural(
            "conv weights (inputs x filters)",
            format!("{}x{}", config.receptive_field(), config.filter_count),
            format!("{}x{}", layer.weights.inputs(), layer.weights.neurons()),
        ));
    }
    if layer.thresholds.len() != config.filter_count {
        return Err(Error::structural("conv thresholds", config.filter_count, layer.thresholds.len()));
    }
    let dense = dense_input(train, config)?;
    let (oh, ow) = (config.output_height(), config.output_width());
    let mut maps = FeatureMaps {
        filters: config.filter_count,
        height: oh,
        width: ow,
        times: vec![None; config.filter_count * oh * ow],
        potentials: vec![0.0; config.filter_count * oh * ow],
        t_max: train.t_max(),
    };

    let mut local: Vec<(f64, usize)> = Vec::with_capacity(config.receptive_field());
    for oy in 0..oh {
        for ox in 0..ow {
            local.clear();
            local.extend(
                receptive_field_times(&dense, config, oy, ox)
                    .into_iter()
                    .enumerate()
                    .filter(|(_, t)| t.is_finite())
                    .map(|(i, t)| (t, i)),
            );
            if local.is_empty() {
                continue;
            }
            local.sort_by(|a, b| a.0.total_cmp(&b.0));
            for f in 0..config.filter_count {
                let row = layer.weights.row(f);
                let th = layer.thresholds[f];
                let mut v = 0.0;
                let mut fired = None;
                for group in local.chunk_by(|a, b| a.0 == b.0) {
                    v += group.iter().map(|&(_, i)| row[i]).sum::<f64>();
                    if v >= th {
                        fired = Some(group[0].0);
                        break;
                    }
                }
                let idx = maps.index(f, oy, ox);
                maps.times[idx] = fired;
                maps.potentials[idx] = v;
            }
        }
    }
    Ok(maps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Winner {
    pub filter: usize,
    pub y: usize,
    pub x: usize,
    pub time: f64,
}

/// Earliest output spike; ties go to the highest potential, then the lowest
/// filter index, then scanline order.
pub fn find_winner(maps: &FeatureMaps) -> Option<Winner> {
    let mut best: Option<(Winner, f64)> = None;
    for f in 0..maps.filters {
        for y in 0..maps.height {
            for x in 0..maps.width {
                let idx = maps.index(f, y, x);
                let Some(t) = maps.times[idx] else { continue };
                let p = maps.potentials[idx];
                let better = match &best {
                    None => true,
                    Some((w, bp)) => t < w.time || (t == w.time && p > *bp),
                };
                if better {
                    best = Some((Winner { filter: f, y, x, time: t }, p));
                }
            }
        }
    }
    best.map(|(w, _)| w)
}

/// Winner-takes-all STDP step: the winning filter receives one unmodulated
/// STDP update against its receptive field, is clipped, then normalized.
/// Returns `None` (and changes nothing) when the layer stayed silent.
pub fn wta_train_step(maps: &FeatureMaps, train: &SpikeTrain, layer: &mut ConvLayer) -> Result<Option<Winner>> {
    let Some(winner) = find_winner(maps) else {
        return Ok(None);
    };
    let dense = dense_input(train, &layer.config)?;
    let field = receptive_field_times(&dense, &layer.config, winner.y, winner.x);
    apply_update_dense(&mut layer.weights, winner.filter, &field, winner.time, 1.0, &layer.stdp);
    if layer.normalize {
        normalize_weights(&mut layer.weights, winner.filter)?;
    }
    Ok(Some(winner))
}

/// Threshold adaptation after a win: the winner moves toward firing at the
/// target time, and the competition term shifts threshold from the winner to
/// the other filters.
pub fn homeostasis_step(thresholds: &mut [f64], winner: usize, winner_time: f64, config: &ConvConfig) {
    thresholds[winner] += config.homeostasis_rate * (config.target_time - winner_time);
    if thresholds.len() > 1 && config.competition_rate > 0.0 {
        let share = config.competition_rate / (thresholds.len() - 1) as f64;
        for (f, th) in thresholds.iter_mut().enumerate() {
            *th += if f == winner { config.competition_rate } else { -share };
        }
    }
    for th in thresholds.iter_mut() {
        *th = th.max(config.threshold_min);
    }
}

/// Max pooling over spike timestamps: each output keeps the earliest spike of
/// its window (earliest = most strongly activated).
pub fn max_pool(maps: &FeatureMaps, window: (usize, usize), stride: usize) -> Result<FeatureMaps> {
    let (wh, ww) = window;
    if wh == 0 || ww == 0 || stride == 0 || wh > maps.height || ww > maps.width {
        return Err(Error::Dimension(format!(
            "pool window {wh}x{ww} (stride {stride}) does not fit {}x{} maps",
            maps.height, maps.width
        )));
    }
    let oh = (maps.height - wh) / stride + 1;
    let ow = (maps.width - ww) / stride + 1;
    let mut out = FeatureMaps {
        filters: maps.filters,
        height: oh,
        width: ow,
        times: vec![None; maps.filters * oh * ow],
        potentials: vec![0.0; maps.filters * oh * ow],
        t_max: maps.t_max,
    };
    for f in 0..maps.filters {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best: Option<(f64, f64)> = None;
                for dy in 0..wh {
                    for dx in 0..ww {
                        let idx = maps.index(f, oy * stride + dy, ox * stride + dx);
                        if let Some(t) = maps.times[idx] {
                            if best.map_or(true, |(bt, _)| t < bt) {
                                best = Some((t, maps.potentials[idx]));
                            }
                        }
                    }
                }
                let idx = out.index(f, oy, ox);
                if let Some((t, p)) = best {
                    out.times[idx] = Some(t);
                    out.potentials[idx] = p;
                }
            }
        }
    }
    Ok(out)
}

/// Convolution + pooling, trained layer-wise before any classifier.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub conv: ConvLayer,
    pub pool_window: (usize, usize),
    pub pool_stride: usize,
}

/// Per-epoch summary of extractor training.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractorEpoch {
    pub epoch: usize,
    pub updates: usize,
    pub samples: usize,
    pub mean_winner_time: f64,
}

impl FeatureExtractor {
    pub fn new(conv: ConvLayer, pool_window: (usize, usize), pool_stride: usize) -> Result<Self> {
        let c = &conv.config;
        if pool_window.0 == 0 || pool_window.1 == 0 || pool_stride == 0 || pool_window.0 > c.output_height() || pool_window.1 > c.output_width() {
            return Err(Error::Dimension(format!(
                "pool window {}x{} does not fit {}x{} conv output",
                pool_window.0,
                pool_window.1,
                c.output_height(),
                c.output_width()
            )));
        }
        Ok(FeatureExtractor {
            conv,
            pool_window,
            pool_stride,
        })
    }

    pub fn pooled_dims(&self) -> (usize, usize, usize) {
        let c = &self.conv.config;
        let (wh, ww) = self.pool_window;
        (
            c.filter_count,
            (c.output_height() - wh) / self.pool_stride + 1,
            (c.output_width() - ww) / self.pool_stride + 1,
        )
    }

    /// Number of features (pooled neurons) per sample.
    pub fn output_len(&self) -> usize {
        let (f, h, w) = self.pooled_dims();
        f * h * w
    }

    pub fn forward(&self, train: &SpikeTrain) -> Result<SpikeTrain> {
        let maps = conv_forward(train, &self.conv)?;
        max_pool(&maps, self.pool_window, self.pool_stride)?.to_spike_train()
    }

    /// One WTA + homeostasis step on a sample.
    pub fn train_step(&mut self, train: &SpikeTrain) -> Result<Option<Winner>> {
        let maps = conv_forward(train, &self.conv)?;
        let winner = wta_train_step(&maps, train, &mut self.conv)?;
        if let Some(w) = winner {
            let config = self.conv.config;
            homeostasis_step(&mut self.conv.thresholds, w.filter, w.time, &config);
        }
        Ok(winner)
    }

    /// Trains on `trains` for `epochs` passes, shuffling each pass with `rng`.
    pub fn fit<R: Rng>(&mut self, trains: &[SpikeTrain], epochs: usize, rng: &mut R) -> Result<Vec<ExtractorEpoch>> {
        let mut order: Vec<usize> = (0..trains.len()).collect();
        let mut history = Vec::with_capacity(epochs);
        for epoch in 1..=epochs {
            order.shuffle(rng);
            let mut updates = 0;
            let mut time_sum = 0.0;
            for &i in &order {
                if let Some(w) = self.train_step(&trains[i])? {
                    updates += 1;
                    time_sum += w.time;
                }
            }
            let summary = ExtractorEpoch {
                epoch,
                updates,
                samples: trains.len(),
                mean_winner_time: if updates > 0 { time_sum / updates as f64 } else { f64::NAN },
            };
            log::info!(
                "extractor epoch {epoch}: {updates}/{} updates, mean winner time {:.4}",
                trains.len(),
                summary.mean_winner_time
            );
            history.push(summary);
        }
        Ok(history)
    }

    /// Forward pass over many samples, in input order.
    pub fn forward_all(&self, trains: &[SpikeTrain]) -> Result<Vec<SpikeTrain>> {
        trains.par_iter().map(|t| self.forward(t)).collect()
    }
}
