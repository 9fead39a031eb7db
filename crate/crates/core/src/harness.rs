//! Training loops, early stopping, k-fold evaluation, sweeps and per-epoch
//! diagnostics.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::classifier::Classifier;
use crate::config::RunConfig;
use crate::encoding::SpikeTrain;
use crate::{Error, Result};

/// A latency-coded (or extracted) sample and its class.
pub type Sample = (SpikeTrain, usize);

pub const METRICS_HEADER: [&str; 8] = [
    "epoch",
    "update_ratio_target",
    "update_ratio_nontarget",
    "update_ratio_total",
    "avg_firing_time",
    "firing_time_std",
    "train_acc",
    "val_acc",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Target-role updates per target neuron slot.
    pub update_ratio_target: f64,
    /// Non-target-role updates per non-target neuron slot.
    pub update_ratio_nontarget: f64,
    /// Updates per neuron per sample.
    pub update_ratio_total: f64,
    /// Mean over samples of the per-sample mean firing time.
    pub avg_firing_time: f64,
    /// Population standard deviation of the per-sample mean firing time.
    pub firing_time_std: f64,
    /// Online accuracy: predictions made before each sample's update.
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

impl EpochMetrics {
    fn to_record(self) -> Vec<String> {
        let mut rec = vec![self.epoch.to_string()];
        rec.extend(
            [
                self.update_ratio_target,
                self.update_ratio_nontarget,
                self.update_ratio_total,
                self.avg_firing_time,
                self.firing_time_std,
                self.train_accuracy,
                self.val_accuracy,
            ]
            .iter()
            .map(|v| v.to_string()),
        );
        rec
    }

    fn from_record(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != METRICS_HEADER.len() {
            return Err(Error::parse("metrics row", format!("{} columns, expected {}", rec.len(), METRICS_HEADER.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::parse(METRICS_HEADER[i], format!("not a number: `{}`", &rec[i])))
        };
        Ok(EpochMetrics {
            epoch: rec[0]
                .parse()
                .map_err(|_| Error::parse("epoch", format!("not an integer: `{}`", &rec[0])))?,
            update_ratio_target: num(1)?,
            update_ratio_nontarget: num(2)?,
            update_ratio_total: num(3)?,
            avg_firing_time: num(4)?,
            firing_time_std: num(5)?,
            train_accuracy: num(6)?,
            val_accuracy: num(7)?,
        })
    }
}

/// Streams metrics rows to a CSV file, flushing after each epoch.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(METRICS_HEADER)?;
        inner.flush()?;
        Ok(MetricsWriter { inner })
    }

    pub fn write(&mut self, m: &EpochMetrics) -> Result<()> {
        self.inner.write_record(m.to_record())?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Writes rows in the same CSV schema as [`MetricsWriter`].
pub fn write_metrics<W: Write>(out: W, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for m in rows {
        w.write_record(m.to_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(Error::parse("metrics header", format!("unexpected columns {:?}", header.iter().collect::<Vec<_>>())));
    }
    reader.records().map(|r| EpochMetrics::from_record(&r?)).collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Average number of updates per neuron, divided by the number of samples.
pub fn update_ratio(updates: usize, neurons: usize, samples: usize) -> f64 {
    updates as f64 / neurons as f64 / samples as f64
}

/// One pass over `train` in a shuffled order drawn from `rng`, then
/// validation on `val` (0 when `val` is empty).
pub fn run_epoch<R: Rng>(
    classifier: &mut Classifier,
    train: &[Sample],
    val: &[Sample],
    epoch: usize,
    rng: &mut R,
) -> Result<EpochMetrics> {
    if train.is_empty() {
        return Err(Error::config("train_samples", "training set is empty"));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let (mut target, mut nontarget, mut correct) = (0usize, 0usize, 0usize);
    let mut t_means = Vec::with_capacity(train.len());
    for &i in &order {
        let (spikes, label) = &train[i];
        let out = classifier.train_sample(spikes, *label)?;
        target += out.target_updates;
        nontarget += out.nontarget_updates;
        correct += usize::from(out.prediction == *label);
        t_means.push(out.t_mean);
    }
    let layout = classifier.layout;
    let n = train.len();
    let (avg, std) = mean_std(&t_means);
    Ok(EpochMetrics {
        epoch,
        update_ratio_target: update_ratio(target, layout.neurons_per_class, n),
        update_ratio_nontarget: update_ratio(nontarget, (layout.class_count - 1) * layout.neurons_per_class, n),
        update_ratio_total: update_ratio(target + nontarget, layout.neuron_count(), n),
        avg_firing_time: avg,
        firing_time_std: std,
        train_accuracy: correct as f64 / n as f64,
        val_accuracy: classifier.accuracy(val)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl From<&RunConfig> for FitOptions {
    fn from(c: &RunConfig) -> Self {
        FitOptions {
            max_epochs: c.epochs,
            patience: c.patience,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Improved,
    Stale,
    Stop,
}

/// Patience-based early stopping on validation accuracy. Only a strict
/// improvement resets the patience counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best_epoch: 0,
            best_accuracy: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_accuracy: f64) -> Progress {
        if val_accuracy > self.best_accuracy {
            self.best_accuracy = val_accuracy;
            self.best_epoch = epoch;
            self.stale = 0;
            Progress::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Progress::Stop
            } else {
                Progress::Stale
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    /// Weights from the epoch with the best validation accuracy.
    pub classifier: Classifier,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub history: Vec<EpochMetrics>,
}

/// Trains with early stopping. `on_epoch` sees every epoch's metrics as soon
/// as they are available.
pub fn fit<R: Rng>(
    mut classifier: Classifier,
    train: &[Sample],
    val: &[Sample],
    options: FitOptions,
    rng: &mut R,
    mut on_epoch: impl FnMut(&EpochMetrics) -> Result<()>,
) -> Result<FitResult> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::config("val_fraction", "training and validation sets must both be non-empty"));
    }
    if options.patience == 0 || options.max_epochs == 0 {
        return Err(Error::config("patience", "patience and epochs must be at least 1"));
    }
    let mut best = classifier.clone();
    let mut stopping = EarlyStopping::new(options.patience);
    let mut history = Vec::new();
    for epoch in 1..=options.max_epochs {
        let m = run_epoch(&mut classifier, train, val, epoch, rng)?;
        log::info!(
            "epoch {epoch}: update ratio {:.4}, mean time {:.4} (std {:.4}), train {:.4}, val {:.4}",
            m.update_ratio_total,
            m.avg_firing_time,
            m.firing_time_std,
            m.train_accuracy,
            m.val_accuracy
        );
        on_epoch(&m)?;
        history.push(m);
        match stopping.observe(epoch, m.val_accuracy) {
            Progress::Improved => best.clone_from(&classifier),
            Progress::Stale => {}
            Progress::Stop => break,
        }
    }
    Ok(FitResult {
        classifier: best,
        best_epoch: stopping.best_epoch,
        best_val_accuracy: stopping.best_accuracy,
        history,
    })
}

fn by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().map(|l| l + 1).max().unwrap_or(0);
    let mut groups = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    groups
}

/// Splits indices into `(train, val)`, holding out `round(fraction * n_c)`
/// samples of every class `c`.
pub fn stratified_split<R: Rng>(labels: &[usize], fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut group in by_class(labels) {
        group.shuffle(rng);
        let k = (fraction * group.len() as f64).round() as usize;
        val.extend_from_slice(&group[..k]);
        train.extend_from_slice(&group[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// About `n` indices with class proportions preserved, in ascending order.
pub fn stratified_subset<R: Rng>(labels: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    if n == 0 || n >= labels.len() {
        return (0..labels.len()).collect();
    }
    let (_, mut picked) = stratified_split(labels, n as f64 / labels.len() as f64, rng);
    picked.sort_unstable();
    picked
}

/// Class-stratified partition into `k` folds whose sizes differ by at most one.
pub fn stratified_folds<R: Rng>(labels: &[usize], k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::config("folds", "need at least two folds"));
    }
    let groups = by_class(labels);
    if let Some((class, g)) = groups.iter().enumerate().find(|(_, g)| !g.is_empty() && g.len() < k) {
        return Err(Error::config(
            "folds",
            format!("{k} folds but class {class} has only {} samples", g.len()),
        ));
    }
    let mut folds = vec![Vec::new(); k];
    // Deal class by class, continuing the round-robin where the previous
    // class stopped so fold sizes stay balanced overall.
    let mut next = 0;
    for mut group in groups {
        group.shuffle(rng);
        for i in group {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

fn pick(samples: &[Sample], indices: &[usize]) -> Vec<Sample> {
    indices.iter().map(|&i| samples[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KFoldReport {
    pub test_accuracies: Vec<f64>,
    pub best_epochs: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

/// K models, each trained on K-1 folds and validated on the remaining one,
/// each with its own seed (`seed + fold`), all tested on `test`. `build`
/// creates a fresh classifier from a seeded rng.
pub fn kfold_evaluate<F>(
    train: &[Sample],
    test: &[Sample],
    k: usize,
    seed: u64,
    options: FitOptions,
    build: F,
) -> Result<KFoldReport>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Classifier> + Sync,
{
    let labels: Vec<usize> = train.iter().map(|(_, l)| *l).collect();
    let folds = stratified_folds(&labels, k, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let results: Vec<(f64, usize)> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(fold as u64 + 1));
            let val = pick(train, &folds[fold]);
            let rest: Vec<usize> = (0..k).filter(|&f| f != fold).flat_map(|f| folds[f].iter().copied()).collect();
            let classifier = build(&mut rng)?;
            let fitted = fit(classifier, &pick(train, &rest), &val, options, &mut rng, |_| Ok(()))?;
            let acc = fitted.classifier.accuracy(test)?;
            log::info!("fold {}: best epoch {}, test accuracy {acc:.4}", fold + 1, fitted.best_epoch);
            Ok((acc, fitted.best_epoch))
        })
        .collect::<Result<_>>()?;
    let test_accuracies: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (mean, std) = mean_std(&test_accuracies);
    Ok(KFoldReport {
        best_epochs: results.iter().map(|r| r.1).collect(),
        test_accuracies,
        mean,
        std,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub setting: Vec<(String, String)>,
    pub val_accuracy: f64,
}

/// Every combination of the grid's values applied on top of `base`, scored
/// by `evaluate`, sorted by descending accuracy (grid order among ties).
pub fn sweep<F>(base: &RunConfig, grid: &[(String, Vec<String>)], evaluate: F) -> Result<Vec<SweepRow>>
where
    F: Fn(&RunConfig) -> Result<f64> + Sync,
{
    if grid.is_empty() || grid.iter().any(|(_, values)| values.is_empty()) {
        return Err(Error::config("grid", "every swept key needs at least one value"));
    }
    let mut settings: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in grid {
        settings = settings
            .into_iter()
            .flat_map(|s| {
                values.iter().map(move |v| {
                    let mut s = s.clone();
                    s.push((key.clone(), v.clone()));
                    s
                })
            })
            .collect();
    }
    let mut rows: Vec<SweepRow> = settings
        .into_par_iter()
        .map(|setting| {
            let mut config = base.clone();
            for (k, v) in &setting {
                config.set(k, v)?;
            }
            config.validate()?;
            let val_accuracy = evaluate(&config)?;
            Ok(SweepRow { setting, val_accuracy })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| b.val_accuracy.total_cmp(&a.val_accuracy));
    Ok(rows)
}

/// Grid from `key=v1,v2,...` specifications.
pub fn parse_grid(specs: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    specs
        .iter()
        .map(|s| {
            let (k, vs) = s
                .split_once('=')
                .ok_or_else(|| Error::config(s.as_str(), "expected key=v1,v2,..."))?;
            let values: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            Ok((k.trim().to_string(), values))
        })
        .collect()
}
