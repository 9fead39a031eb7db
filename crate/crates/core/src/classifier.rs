//! Fully-connected SSIF output layer with temporal decision making.
//!
//! Every output neuron is labeled with a class and the first neuron to fire
//! predicts the label. Training is online: after each sample, the neurons
//! receive an error-modulated STDP update computed from their firing time and
//! the mean firing time of the layer on that sample.
//!
//! With paired competing neurons (PCN), each class owns two neurons joined by
//! lateral inhibition. Only the first of the pair to fire (the winner) is
//! updated, with the target or non-target role of its class. Nothing assigns
//! a role to a particular member: specialization emerges from competition.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::binio::{put_f64s, Reader};
use crate::encoding::SpikeTrain;
use crate::neuron::{integrate_sample, integrate_with_inhibition, FiringRecord, Threshold, WeightMatrix};
use crate::plasticity::{
    apply_update_dense, normalize_weights, rstdp_polarity, s2stdp_desired, s2stdp_error, sstdp_error, StdpParams,
    TimingParams,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Sstdp,
    S2stdp,
    Rstdp,
}

impl Rule {
    fn code(self) -> u8 {
        match self {
            Rule::Sstdp => 0,
            Rule::S2stdp => 1,
            Rule::Rstdp => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Rule::Sstdp),
            1 => Ok(Rule::S2stdp),
            2 => Ok(Rule::Rstdp),
            other => Err(Error::parse("rule", format!("unknown rule code {other}"))),
        }
    }
}

/// Mapping from output neurons to classes. Neurons of one class are
/// contiguous: neuron `j` belongs to class `j / neurons_per_class`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierLayout {
    pub class_count: usize,
    pub neurons_per_class: usize,
    /// Neurons `2c` and `2c + 1` inhibit each other.
    pub paired: bool,
}

impl ClassifierLayout {
    pub fn plain(class_count: usize) -> Self {
        ClassifierLayout {
            class_count,
            neurons_per_class: 1,
            paired: false,
        }
    }

    pub fn pcn(class_count: usize) -> Self {
        ClassifierLayout {
            class_count,
            neurons_per_class: 2,
            paired: true,
        }
    }

    pub fn grouped(class_count: usize, neurons_per_class: usize) -> Self {
        ClassifierLayout {
            class_count,
            neurons_per_class,
            paired: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::Parameter(format!("need at least two classes, got {}", self.class_count)));
        }
        if self.neurons_per_class == 0 {
            return Err(Error::Parameter("neurons_per_class must be positive".into()));
        }
        if self.paired && self.neurons_per_class != 2 {
            return Err(Error::structural("paired layout neurons per class", 2, self.neurons_per_class));
        }
        Ok(())
    }

    pub fn neuron_count(&self) -> usize {
        self.class_count * self.neurons_per_class
    }

    #[inline]
    pub fn class_of(&self, neuron: usize) -> usize {
        neuron / self.neurons_per_class
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        if self.paired {
            (0..self.class_count).map(|c| (2 * c, 2 * c + 1)).collect()
        } else {
            Vec::new()
        }
    }
}

/// Index of the first neuron to fire; ties go to the highest potential, then
/// the lowest index. If nothing fired, the highest final potential among
/// non-inhibited neurons decides.
pub fn first_neuron(record: &FiringRecord) -> usize {
    let mut best: Option<(usize, f64, f64)> = None;
    for (j, s) in record.neurons.iter().enumerate() {
        if let Some(t) = s.time {
            let better = match best {
                None => true,
                Some((_, bt, bp)) => t < bt || (t == bt && s.potential > bp),
            };
            if better {
                best = Some((j, t, s.potential));
            }
        }
    }
    if let Some((j, _, _)) = best {
        return j;
    }
    let mut fallback = 0;
    let mut best_potential = f64::NEG_INFINITY;
    for (j, s) in record.neurons.iter().enumerate() {
        if !s.inhibited && s.potential > best_potential {
            fallback = j;
            best_potential = s.potential;
        }
    }
    fallback
}

/// Predicted class: class of [`first_neuron`].
pub fn predict(record: &FiringRecord, layout: &ClassifierLayout) -> usize {
    layout.class_of(first_neuron(record))
}

/// Mean firing time over non-inhibited neurons, silent ones counting as `t_max`.
pub fn compute_t_mean(record: &FiringRecord) -> f64 {
    let (sum, n) = record
        .neurons
        .iter()
        .filter(|s| !s.inhibited)
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.time.unwrap_or(record.t_max), n + 1));
    if n == 0 {
        record.t_max
    } else {
        sum / n as f64
    }
}

/// Winner of every pair: the member that fired, or, for a pair where neither
/// fired, the member with the higher potential (lower index on ties).
pub fn pair_winners(record: &FiringRecord, pairs: &[(usize, usize)]) -> Vec<usize> {
    pairs
        .iter()
        .map(|&(a, b)| {
            let (sa, sb) = (&record.neurons[a], &record.neurons[b]);
            match (sa.fired(), sb.fired()) {
                (true, _) => a,
                (_, true) => b,
                _ if sb.potential > sa.potential || (sb.potential == sa.potential && b < a) => b,
                _ => a,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub record: FiringRecord,
    pub t_mean: f64,
    pub prediction: usize,
    /// `(neuron, error)` for every neuron considered for an update.
    pub errors: Vec<(usize, f64)>,
    pub updates: usize,
    pub target_updates: usize,
    pub nontarget_updates: usize,
}

#[derive(Debug, Clone)]
pub struct Classifier {
    pub layout: ClassifierLayout,
    pub rule: Rule,
    pub weights: WeightMatrix,
    pub thresholds: Vec<f64>,
    pub stdp: StdpParams,
    pub timing: TimingParams,
    /// Heterosynaptic normalization after every neuron update.
    pub normalize: bool,
}

impl Classifier {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        layout: ClassifierLayout,
        rule: Rule,
        inputs: usize,
        threshold: f64,
        stdp: StdpParams,
        timing: TimingParams,
        normalize: bool,
        init: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        let weights = WeightMatrix::random(inputs, layout.neuron_count(), stdp.w_min, stdp.w_max, init, rng)?;
        Classifier::from_weights(layout, rule, weights, vec![threshold; layout.neuron_count()], stdp, timing, normalize)
    }

    pub fn from_weights(
        layout: ClassifierLayout,
        rule: Rule,
        weights: WeightMatrix,
        thresholds: Vec<f64>,
        stdp: StdpParams,
        timing: TimingParams,
        normalize: bool,
    ) -> Result<Self> {
        layout.validate()?;
        timing.validate()?;
        if timing.class_count != layout.class_count {
            return Err(Error::structural("timing class count", layout.class_count, timing.class_count));
        }
        if weights.neurons() != layout.neuron_count() {
            return Err(Error::structural("classifier neurons", layout.neuron_count(), weights.neurons()));
        }
        if thresholds.len() != layout.neuron_count() {
            return Err(Error::structural("classifier thresholds", layout.neuron_count(), thresholds.len()));
        }
        if let Some(th) = thresholds.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::Parameter(format!("threshold must be positive, got {th}")));
        }
        match (rule, layout.paired, layout.neurons_per_class) {
            (Rule::S2stdp, true, _) | (Rule::Sstdp | Rule::S2stdp, false, 1) | (Rule::Rstdp, false, _) => {}
            _ => {
                return Err(Error::structural(
                    "rule/layout",
                    "plain layout for SSTDP and S2-STDP, paired only with S2-STDP, groups only with R-STDP",
                    format!("{rule:?} with {layout:?}"),
                ))
            }
        }
        Ok(Classifier {
            layout,
            rule,
            weights,
            thresholds,
            stdp,
            timing,
            normalize,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.inputs()
    }

    /// Forward pass with frozen weights.
    pub fn infer(&self, train: &SpikeTrain) -> Result<FiringRecord> {
        if train.source_count() != self.inputs() {
            return Err(Error::structural("classifier input features", self.inputs(), train.source_count()));
        }
        let threshold = Threshold::PerNeuron(&self.thresholds);
        if self.layout.paired {
            integrate_with_inhibition(train, &self.weights, threshold, &self.layout.pairs())
        } else {
            integrate_sample(train, &self.weights, threshold)
        }
    }

    pub fn predict_sample(&self, train: &SpikeTrain) -> Result<usize> {
        Ok(predict(&self.infer(train)?, &self.layout))
    }

    /// Fraction of correctly predicted samples (0 for an empty set).
    pub fn accuracy(&self, samples: &[(SpikeTrain, usize)]) -> Result<f64> {
        if samples.is_empty() {
            return Ok(0.0);
        }
        let correct: Result<usize> = samples
            .par_iter()
            .map(|(train, label)| Ok(usize::from(self.predict_sample(train)? == *label)))
            .sum();
        Ok(correct? as f64 / samples.len() as f64)
    }

    fn update_neuron(
        &mut self,
        neuron: usize,
        input_times: &[f64],
        t_j: f64,
        e: f64,
        label: usize,
        outcome: &mut SampleOutcome,
    ) -> Result<()> {
        outcome.errors.push((neuron, e));
        let n = apply_update_dense(&mut self.weights, neuron, input_times, t_j, e, &self.stdp);
        if n == 0 {
            return Ok(());
        }
        if self.normalize {
            normalize_weights(&mut self.weights, neuron)?;
        }
        outcome.updates += 1;
        if self.layout.class_of(neuron) == label {
            outcome.target_updates += 1;
        } else {
            outcome.nontarget_updates += 1;
        }
        Ok(())
    }

    /// Presents one labeled sample and applies the rule's updates.
    pub fn train_sample(&mut self, train: &SpikeTrain, label: usize) -> Result<SampleOutcome> {
        if label >= self.layout.class_count {
            return Err(Error::Domain(format!("label {label} outside 0..{}", self.layout.class_count)));
        }
        if self.layout.paired {
            return self.train_sample_pcn(train, label);
        }
        let record = self.infer(train)?;
        let t_mean = compute_t_mean(&record);
        let winner = first_neuron(&record);
        let mut outcome = SampleOutcome {
            prediction: self.layout.class_of(winner),
            t_mean,
            record,
            errors: Vec::new(),
            updates: 0,
            target_updates: 0,
            nontarget_updates: 0,
        };
        let input_times = train.dense_times();
        let t_max = self.timing.t_max;
        match self.rule {
            Rule::Sstdp | Rule::S2stdp => {
                for j in 0..self.layout.neuron_count() {
                    let t_j = outcome.record.time_or_max(j);
                    let is_target = self.layout.class_of(j) == label;
                    let e = if self.rule == Rule::Sstdp {
                        sstdp_error(t_j, t_mean, is_target, &self.timing) / t_max
                    } else {
                        s2stdp_error(t_j, s2stdp_desired(t_mean, is_target, &self.timing), t_max)
                    };
                    self.update_neuron(j, &input_times, t_j, e, label, &mut outcome)?;
                }
            }
            Rule::Rstdp => {
                let t_j = outcome.record.time_or_max(winner);
                let e = rstdp_polarity(outcome.prediction, label);
                self.update_neuron(winner, &input_times, t_j, e, label, &mut outcome)?;
            }
        }
        Ok(outcome)
    }

    /// PCN training step: only pair winners are updated, one per class.
    pub fn train_sample_pcn(&mut self, train: &SpikeTrain, label: usize) -> Result<SampleOutcome> {
        if !self.layout.paired {
            return Err(Error::structural("layout", "paired", "unpaired"));
        }
        let record = self.infer(train)?;
        let winners = pair_winners(&record, &self.layout.pairs());
        let t_mean = winners.iter().map(|&w| record.time_or_max(w)).sum::<f64>() / winners.len() as f64;
        let mut outcome = SampleOutcome {
            prediction: predict(&record, &self.layout),
            t_mean,
            record,
            errors: Vec::new(),
            updates: 0,
            target_updates: 0,
            nontarget_updates: 0,
        };
        let input_times = train.dense_times();
        for w in winners {
            let t_j = outcome.record.time_or_max(w);
            let is_target = self.layout.class_of(w) == label;
            let e = s2stdp_error(t_j, s2stdp_desired(t_mean, is_target, &self.timing), self.timing.t_max);
            self.update_neuron(w, &input_times, t_j, e, label, &mut outcome)?;
        }
        Ok(outcome)
    }

    /// Serializes to the SNNW model format (little-endian):
    ///
    /// ```text
    /// "SNNW" | rule u8 | class_count u32 | neurons_per_class u32 | paired u8
    /// | inputs u32 | w_min f64 | w_max f64 | a_plus f64 | a_minus f64 | beta f64
    /// | t_max f64 | gap f64 | gap1 f64 | gap2 f64 | normalize u8
    /// | thresholds f64 x neurons | f_norm f64 x neurons
    /// | weights f64 x (neurons * inputs), one row per neuron
    /// ```
    pub fn to_bytes(&self) -> Vec<u8> {
        let neurons = self.layout.neuron_count();
        let mut out = Vec::with_capacity(96 + 16 * neurons + 8 * self.weights.as_slice().len());
        out.extend_from_slice(b"SNNW");
        out.push(self.rule.code());
        out.extend_from_slice(&(self.layout.class_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.layout.neurons_per_class as u32).to_le_bytes());
        out.push(u8::from(self.layout.paired));
        out.extend_from_slice(&(self.inputs() as u32).to_le_bytes());
        put_f64s(
            &mut out,
            &[
                self.stdp.w_min,
                self.stdp.w_max,
                self.stdp.a_plus,
                self.stdp.a_minus,
                self.stdp.beta,
                self.timing.t_max,
                self.timing.gap,
                self.timing.gap1,
                self.timing.gap2,
            ],
        );
        out.push(u8::from(self.normalize));
        put_f64s(&mut out, &self.thresholds);
        put_f64s(&mut out, self.weights.f_norm());
        put_f64s(&mut out, self.weights.as_slice());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(b"SNNW", "model magic")?;
        let rule = Rule::from_code(r.u8("rule")?)?;
        let class_count = r.u32_le("class_count")? as usize;
        let neurons_per_class = r.u32_le("neurons_per_class")? as usize;
        let paired = r.u8("paired")? != 0;
        let inputs = r.u32_le("inputs")? as usize;
        let p = r.f64_vec(9, "parameters")?;
        let normalize = r.u8("normalize")? != 0;
        let layout = ClassifierLayout {
            class_count,
            neurons_per_class,
            paired,
        };
        let neurons = class_count
            .checked_mul(neurons_per_class)
            .ok_or_else(|| Error::parse("layout", "neuron count overflow"))?;
        let thresholds = r.f64_vec(neurons, "thresholds")?;
        let f_norm = r.f64_vec(neurons, "f_norm")?;
        let w = r.f64_vec(
            neurons.checked_mul(inputs).ok_or_else(|| Error::parse("weights", "size overflow"))?,
            "weights",
        )?;
        r.finish("model")?;
        let stdp = StdpParams::new(p[2], p[3], p[4], p[0], p[1])?;
        let timing = TimingParams {
            t_max: p[5],
            gap: p[6],
            gap1: p[7],
            gap2: p[8],
            class_count,
        };
        let weights = WeightMatrix::from_parts(inputs, neurons, w, p[0], p[1], f_norm)?;
        Classifier::from_weights(layout, rule, weights, thresholds, stdp, timing, normalize)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Classifier::from_bytes(&fs::read(path)?)
    }
}
