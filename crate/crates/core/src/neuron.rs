//! Single-Spike Integrate-and-Fire layers.
//!
//! Integration is event-driven: the membrane potential of a neuron is the sum
//! of the weights of the input spikes received so far, and a neuron fires once
//! at the first timestamp where that sum reaches its threshold. All events
//! sharing a timestamp are integrated before any threshold is checked, so the
//! outcome does not depend on the order of simultaneous events.

use rand::Rng;

use crate::encoding::SpikeTrain;
use crate::{Error, Result};

/// Dense synaptic weights, one contiguous row of `inputs` weights per neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    inputs: usize,
    neurons: usize,
    w: Vec<f64>,
    w_min: f64,
    w_max: f64,
    f_norm: Vec<f64>,
}

impl WeightMatrix {
    /// `rows[n]` holds the input weights of neuron `n`. The normalization
    /// factor of each neuron is its initial weight sum.
    pub fn from_rows(rows: Vec<Vec<f64>>, w_min: f64, w_max: f64) -> Result<Self> {
        let neurons = rows.len();
        let inputs = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != inputs) {
            return Err(Error::structural("weight row length", inputs, r.len()));
        }
        let w: Vec<f64> = rows.into_iter().flatten().collect();
        let f_norm = w.chunks(inputs.max(1)).map(|r| r.iter().sum()).collect();
        WeightMatrix::from_parts(inputs, neurons, w, w_min, w_max, f_norm)
    }

    /// Weights drawn uniformly from `init` (a sub-range of `[w_min, w_max]`).
    pub fn random<R: Rng>(
        inputs: usize,
        neurons: usize,
        w_min: f64,
        w_max: f64,
        init: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        if !(w_min <= init.0 && init.0 < init.1 && init.1 <= w_max) {
            return Err(Error::Parameter(format!(
                "initial weight range [{}, {}] must lie within [{w_min}, {w_max}]",
                init.0, init.1
            )));
        }
        let rows = (0..neurons)
            .map(|_| (0..inputs).map(|_| rng.gen_range(init.0..init.1)).collect())
            .collect();
        WeightMatrix::from_rows(rows, w_min, w_max)
    }

    /// Reassembles a matrix from its stored parts (used when loading models).
    pub fn from_parts(
        inputs: usize,
        neurons: usize,
        w: Vec<f64>,
        w_min: f64,
        w_max: f64,
        f_norm: Vec<f64>,
    ) -> Result<Self> {
        if !(w_min < w_max) {
            return Err(Error::Parameter(format!("w_min {w_min} must be below w_max {w_max}")));
        }
        if w.len() != inputs * neurons {
            return Err(Error::structural("weight count", inputs * neurons, w.len()));
        }
        if f_norm.len() != neurons {
            return Err(Error::structural("normalization factors", neurons, f_norm.len()));
        }
        // Normalization may push a weight past w_max until the next clip, so
        // only finiteness is checked here.
        if let Some(v) = w.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite weight {v}")));
        }
        if let Some((n, f)) = f_norm.iter().enumerate().find(|(_, f)| !(**f > 0.0)) {
            return Err(Error::Normalization { neuron: n, sum: *f });
        }
        Ok(WeightMatrix {
            inputs,
            neurons,
            w,
            w_min,
            w_max,
            f_norm,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn neurons(&self) -> usize {
        self.neurons
    }

    pub fn w_min(&self) -> f64 {
        self.w_min
    }

    pub fn w_max(&self) -> f64 {
        self.w_max
    }

    pub fn get(&self, input: usize, neuron: usize) -> f64 {
        self.w[neuron * self.inputs + input]
    }

    pub fn row(&self, neuron: usize) -> &[f64] {
        &self.w[neuron * self.inputs..(neuron + 1) * self.inputs]
    }

    pub fn row_mut(&mut self, neuron: usize) -> &mut [f64] {
        &mut self.w[neuron * self.inputs..(neuron + 1) * self.inputs]
    }

    pub fn f_norm(&self) -> &[f64] {
        &self.f_norm
    }

    /// All weights, neuron-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
}

/// Firing threshold of a layer.
#[derive(Debug, Clone, Copy)]
pub enum Threshold<'a> {
    Uniform(f64),
    PerNeuron(&'a [f64]),
}

impl Threshold<'_> {
    #[inline]
    fn of(&self, neuron: usize) -> f64 {
        match self {
            Threshold::Uniform(v) => *v,
            Threshold::PerNeuron(v) => v[neuron],
        }
    }

    fn check(&self, neurons: usize) -> Result<()> {
        match self {
            Threshold::PerNeuron(v) if v.len() != neurons => {
                Err(Error::structural("threshold count", neurons, v.len()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronState {
    /// Firing timestamp, `None` if the neuron stayed silent.
    pub time: Option<f64>,
    /// Potential when the neuron fired, was inhibited, or the input ended.
    pub potential: f64,
    pub inhibited: bool,
}

impl NeuronState {
    pub fn fired(&self) -> bool {
        self.time.is_some()
    }
}

/// Per-sample output of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FiringRecord {
    pub neurons: Vec<NeuronState>,
    pub t_max: f64,
}

impl FiringRecord {
    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    /// Firing time with silent neurons mapped to `t_max`.
    pub fn time_or_max(&self, neuron: usize) -> f64 {
        self.neurons[neuron].time.unwrap_or(self.t_max)
    }
}

fn check_dims(train: &SpikeTrain, weights: &WeightMatrix, threshold: &Threshold) -> Result<()> {
    if train.source_count() != weights.inputs() {
        return Err(Error::structural(
            "spike train sources vs weight inputs",
            weights.inputs(),
            train.source_count(),
        ));
    }
    threshold.check(weights.neurons())
}

/// Integrates one sample through a fully-connected SSIF layer.
pub fn integrate_sample(
    train: &SpikeTrain,
    weights: &WeightMatrix,
    threshold: Threshold,
) -> Result<FiringRecord> {
    check_dims(train, weights, &threshold)?;
    let n = weights.neurons();
    let mut potential = vec![0.0; n];
    let mut time: Vec<Option<f64>> = vec![None; n];
    let mut active: Vec<usize> = (0..n).collect();

    for group in train.time_groups() {
        if active.is_empty() {
            break;
        }
        for ev in group {
            let i = ev.source as usize;
            for &j in &active {
                potential[j] += weights.get(i, j);
            }
        }
        let t = group[0].time;
        active.retain(|&j| {
            if potential[j] >= threshold.of(j) {
                time[j] = Some(t);
                false
            } else {
                true
            }
        });
    }

    Ok(FiringRecord {
        neurons: (0..n)
            .map(|j| NeuronState {
                time: time[j],
                potential: potential[j],
                inhibited: false,
            })
            .collect(),
        t_max: train.t_max(),
    })
}

/// Checks that `pairs` splits `0..neurons` into disjoint two-neuron groups and
/// returns the partner of every neuron.
pub fn partner_table(pairs: &[(usize, usize)], neurons: usize) -> Result<Vec<usize>> {
    let mut partner = vec![usize::MAX; neurons];
    for &(a, b) in pairs {
        if a >= neurons || b >= neurons || a == b {
            return Err(Error::structural("pair", format!("two distinct indices < {neurons}"), format!("({a}, {b})")));
        }
        if partner[a] != usize::MAX || partner[b] != usize::MAX {
            return Err(Error::structural("pair partition", "disjoint pairs", format!("overlap at ({a}, {b})")));
        }
        partner[a] = b;
        partner[b] = a;
    }
    if let Some(j) = partner.iter().position(|&p| p == usize::MAX) {
        return Err(Error::structural("pair partition", "every neuron paired", format!("neuron {j} unpaired")));
    }
    Ok(partner)
}

/// Like [`integrate_sample`], with mutual lateral inhibition inside each pair:
/// the first member to fire silences its partner for the rest of the sample.
/// When both cross on the same timestamp the higher potential wins, then the
/// lower index.
pub fn integrate_with_inhibition(
    train: &SpikeTrain,
    weights: &WeightMatrix,
    threshold: Threshold,
    pairs: &[(usize, usize)],
) -> Result<FiringRecord> {
    check_dims(train, weights, &threshold)?;
    let n = weights.neurons();
    let partner = partner_table(pairs, n)?;
    let mut potential = vec![0.0; n];
    let mut time: Vec<Option<f64>> = vec![None; n];
    let mut inhibited = vec![false; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut crossed: Vec<usize> = Vec::new();

    for group in train.time_groups() {
        if active.is_empty() {
            break;
        }
        for ev in group {
            let i = ev.source as usize;
            for &j in &active {
                potential[j] += weights.get(i, j);
            }
        }
        let t = group[0].time;
        crossed.clear();
        crossed.extend(active.iter().copied().filter(|&j| potential[j] >= threshold.of(j)));
        if crossed.is_empty() {
            continue;
        }
        for &j in &crossed {
            let p = partner[j];
            if inhibited[j] {
                continue;
            }
            let partner_crossed = time[p].is_none() && !inhibited[p] && potential[p] >= threshold.of(p);
            let wins = !partner_crossed
                || potential[j] > potential[p]
                || (potential[j] == potential[p] && j < p);
            if wins {
                time[j] = Some(t);
                inhibited[p] = true;
            }
        }
        active.retain(|&j| time[j].is_none() && !inhibited[j]);
    }

    Ok(FiringRecord {
        neurons: (0..n)
            .map(|j| NeuronState {
                time: time[j],
                potential: potential[j],
                inhibited: inhibited[j],
            })
            .collect(),
        t_max: train.t_max(),
    })
}
