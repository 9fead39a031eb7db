//! End-to-end data preparation from a [`RunConfig`]: load, subsample, encode,
//! train the extractor and turn every sample into classifier input.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cache::FeatureCache;
use crate::config::{FeatureSource, RunConfig};
use crate::dataset::{encode_dataset, load_split, LabeledDataset, Split};
use crate::feature::FeatureExtractor;
use crate::harness::{
    fit, kfold_evaluate, stratified_split, stratified_subset, sweep, EpochMetrics, FitOptions, FitResult, KFoldReport, Sample,
    SweepRow,
};
use crate::{Error, Result};

/// Seed offsets keep the streams drawn for different purposes independent.
const SUBSET_STREAM: u64 = 0x5eed_0001;
const EXTRACTOR_STREAM: u64 = 0x5eed_0002;
const SPLIT_STREAM: u64 = 0x5eed_0003;

pub fn data_dir(config: &RunConfig) -> PathBuf {
    config
        .data_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("data").join(config.dataset.name()))
}

fn subset(ds: LabeledDataset, n: usize, seed: u64) -> Result<LabeledDataset> {
    if n == 0 || n >= ds.len() {
        return Ok(ds);
    }
    let idx = stratified_subset(&ds.labels(), n, &mut ChaCha8Rng::seed_from_u64(seed));
    ds.select(&idx)
}

/// Train and test splits, reduced to `train_samples` / `test_samples`.
pub fn load_datasets(config: &RunConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = data_dir(config);
    let train = load_split(&dir, config.dataset, Split::Train)?;
    let test = load_split(&dir, config.dataset, Split::Test)?;
    Ok((
        subset(train, config.train_samples, config.seed ^ SUBSET_STREAM)?,
        subset(test, config.test_samples, config.seed ^ SUBSET_STREAM)?,
    ))
}

/// Trains a fresh extractor on the first `extractor_samples` encoded samples.
pub fn train_extractor(config: &RunConfig, encoded: &[Sample], dims: (usize, usize, usize)) -> Result<FeatureExtractor> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ EXTRACTOR_STREAM);
    let mut extractor = config.build_extractor(dims.0, dims.1, dims.2, &mut rng)?;
    let n = if config.extractor_samples == 0 {
        encoded.len()
    } else {
        config.extractor_samples.min(encoded.len())
    };
    let trains: Vec<_> = encoded[..n].iter().map(|(t, _)| t.clone()).collect();
    extractor.fit(&trains, config.extractor_epochs, &mut rng)?;
    Ok(extractor)
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: FeatureCache,
    pub test: FeatureCache,
    pub class_count: usize,
    pub extractor: Option<FeatureExtractor>,
}

/// Classifier-ready train and test samples.
pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    let (train_ds, test_ds) = load_datasets(config)?;
    let first = &train_ds.samples[0].0;
    let dims = (2 * first.channels(), first.height(), first.width());
    let class_count = train_ds.class_count.max(test_ds.class_count);
    let train_enc = encode_dataset(&train_ds, &config.dog, config.t_max)?;
    let test_enc = encode_dataset(&test_ds, &config.dog, config.t_max)?;
    drop((train_ds, test_ds));
    match config.features {
        FeatureSource::Raw => {
            let inputs = dims.0 * dims.1 * dims.2;
            Ok(Prepared {
                train: FeatureCache::new(inputs, config.t_max, train_enc)?,
                test: FeatureCache::new(inputs, config.t_max, test_enc)?,
                class_count,
                extractor: None,
            })
        }
        FeatureSource::Csnn => {
            let extractor = train_extractor(config, &train_enc, dims)?;
            Ok(Prepared {
                train: FeatureCache::extract(&extractor, &train_enc)?,
                test: FeatureCache::extract(&extractor, &test_enc)?,
                class_count,
                extractor: Some(extractor),
            })
        }
    }
}

/// Splits samples into training and validation sets, holding out
/// `val_fraction` of every class.
pub fn split_train_val(config: &RunConfig, samples: &[Sample]) -> (Vec<Sample>, Vec<Sample>) {
    let labels: Vec<usize> = samples.iter().map(|(_, l)| *l).collect();
    let (train, val) = stratified_split(&labels, config.val_fraction, &mut ChaCha8Rng::seed_from_u64(config.seed ^ SPLIT_STREAM));
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| samples[i].clone()).collect::<Vec<_>>();
    (pick(train), pick(val))
}

/// Builds a classifier from `config` (seeded by `config.seed`) and trains it
/// with early stopping.
pub fn fit_config(
    config: &RunConfig,
    train: &[Sample],
    val: &[Sample],
    class_count: usize,
    on_epoch: impl FnMut(&EpochMetrics) -> Result<()>,
) -> Result<FitResult> {
    let inputs = train
        .first()
        .map(|(t, _)| t.source_count())
        .ok_or_else(|| Error::config("train_samples", "training set is empty"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let classifier = config.build_classifier(inputs, class_count, &mut rng)?;
    fit(classifier, train, val, FitOptions::from(config), &mut rng, on_epoch)
}

/// K-fold protocol of `config` on prepared samples.
pub fn kfold_config(config: &RunConfig, train: &[Sample], test: &[Sample], class_count: usize) -> Result<KFoldReport> {
    let inputs = train
        .first()
        .map(|(t, _)| t.source_count())
        .ok_or_else(|| Error::config("train_samples", "training set is empty"))?;
    kfold_evaluate(train, test, config.folds, config.seed, FitOptions::from(config), |rng| {
        config.build_classifier(inputs, class_count, rng)
    })
}

/// Grid sweep over classifier settings on fixed features and a fixed split.
pub fn sweep_config(
    config: &RunConfig,
    grid: &[(String, Vec<String>)],
    train: &[Sample],
    val: &[Sample],
    class_count: usize,
) -> Result<Vec<SweepRow>> {
    sweep(config, grid, |c| Ok(fit_config(c, train, val, class_count, |_| Ok(()))?.best_val_accuracy))
}
