//! Experiment configuration: a plain `key = value` text format.
//!
//! ```text
//! # MNIST, CSNN-16 features, S2-STDP with paired neurons
//! dataset = mnist
//! rule = s2stdp+pcn
//! threshold = 12
//! gap = 0.2
//! ```
//!
//! `dataset`, `rule` and `threshold` are required; every other key has a
//! default. Unknown keys are rejected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;

use crate::classifier::{Classifier, ClassifierLayout, Rule};
use crate::dataset::DatasetKind;
use crate::encoding::DogParams;
use crate::feature::{ConvConfig, ConvLayer, FeatureExtractor};
use crate::plasticity::{StdpParams, TimingParams};
use crate::{Error, Result};

/// Classifier rule together with its output layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleSpec {
    Sstdp,
    S2stdp,
    S2stdpPcn,
    Rstdp,
}

impl RuleSpec {
    pub fn rule(self) -> Rule {
        match self {
            RuleSpec::Sstdp => Rule::Sstdp,
            RuleSpec::S2stdp | RuleSpec::S2stdpPcn => Rule::S2stdp,
            RuleSpec::Rstdp => Rule::Rstdp,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RuleSpec::Sstdp => "sstdp",
            RuleSpec::S2stdp => "s2stdp",
            RuleSpec::S2stdpPcn => "s2stdp+pcn",
            RuleSpec::Rstdp => "rstdp",
        }
    }
}

impl FromStr for RuleSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sstdp" => Ok(RuleSpec::Sstdp),
            "s2stdp" | "s2-stdp" => Ok(RuleSpec::S2stdp),
            "s2stdp+pcn" | "s2-stdp+pcn" | "pcn" => Ok(RuleSpec::S2stdpPcn),
            "rstdp" | "r-stdp" => Ok(RuleSpec::Rstdp),
            other => Err(format!("unknown rule `{other}`")),
        }
    }
}

impl fmt::Display for RuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Input representation fed to the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSource {
    /// DoG-filtered, latency-coded pixels.
    Raw,
    /// Pooled output of a trained convolutional extractor.
    Csnn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    /// Training samples drawn (stratified) from the train split; 0 keeps all.
    pub train_samples: usize,
    pub test_samples: usize,
    /// Fraction of every class held out for validation.
    pub val_fraction: f64,

    pub dog: DogParams,
    pub t_max: f64,

    pub features: FeatureSource,
    pub filters: usize,
    pub kernel: usize,
    pub conv_stride: usize,
    pub conv_threshold: f64,
    pub conv_threshold_min: f64,
    pub competition_rate: f64,
    pub homeostasis_rate: f64,
    pub target_time: f64,
    pub pool: usize,
    pub pool_stride: usize,
    pub extractor_epochs: usize,
    pub extractor_samples: usize,
    pub conv_a_plus: f64,
    pub conv_a_minus: f64,
    pub conv_beta: f64,

    pub rule: RuleSpec,
    /// Neurons per class for R-STDP groups.
    pub neurons_per_class: usize,
    pub threshold: f64,
    pub a_plus: f64,
    /// Magnitude; the sign is applied internally.
    pub a_minus: f64,
    pub beta: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub init_min: f64,
    pub init_max: f64,
    pub gap: f64,
    pub gap1: f64,
    pub gap2: f64,
    /// `None` means the rule's default: on for S2-STDP, off otherwise.
    pub normalize: Option<bool>,

    pub epochs: usize,
    pub patience: usize,
    pub folds: usize,
    pub seed: u64,
}

pub const REQUIRED_KEYS: [&str; 3] = ["dataset", "rule", "threshold"];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| Error::config(key, format!("invalid value `{raw}`: {e}")))
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::config(key, format!("invalid value `{raw}`: expected a boolean"))),
    }
}

impl RunConfig {
    /// Configuration with every optional key at its default.
    pub fn new(dataset: DatasetKind, rule: RuleSpec, threshold: f64) -> Self {
        RunConfig {
            dataset,
            data_dir: None,
            train_samples: 0,
            test_samples: 0,
            val_fraction: 0.1,
            dog: DogParams::default(),
            t_max: 1.0,
            features: FeatureSource::Csnn,
            filters: 16,
            kernel: 5,
            conv_stride: 1,
            conv_threshold: 12.0,
            conv_threshold_min: 1.0,
            competition_rate: 0.5,
            homeostasis_rate: 5.0,
            target_time: 0.5,
            pool: 2,
            pool_stride: 2,
            extractor_epochs: 1,
            extractor_samples: 5000,
            conv_a_plus: 0.05,
            conv_a_minus: 0.05,
            conv_beta: 1.0,
            rule,
            neurons_per_class: 1,
            threshold,
            a_plus: 0.1,
            a_minus: 0.1,
            beta: 1.0,
            w_min: 0.0,
            w_max: 1.0,
            init_min: 0.0,
            init_max: 1.0,
            gap: 0.2,
            gap1: 0.2,
            gap2: 0.2,
            normalize: None,
            epochs: 100,
            patience: 10,
            folds: 10,
            seed: 0,
        }
    }

    /// Parses and validates a configuration file body.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected key=value, got `{line}`")))?;
            pairs.push((key.trim().to_string(), raw.trim().to_string()));
        }
        let lookup = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let required = |key: &str| lookup(key).ok_or_else(|| Error::config(key, "missing required key"));
        let mut config = RunConfig::new(
            DatasetKind::parse(required("dataset")?)?,
            value("rule", required("rule")?)?,
            value("threshold", required("threshold")?)?,
        );
        for (key, raw) in &pairs {
            config.set(key, raw)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        RunConfig::parse(&fs::read_to_string(path)?)
    }

    /// Sets one key from its textual value. Does not re-validate.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = DatasetKind::parse(raw)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(raw)),
            "train_samples" => self.train_samples = value(key, raw)?,
            "test_samples" => self.test_samples = value(key, raw)?,
            "val_fraction" => self.val_fraction = value(key, raw)?,
            "dog_center" => self.dog.center_sigma = value(key, raw)?,
            "dog_surround" => self.dog.surround_sigma = value(key, raw)?,
            "dog_kernel" => self.dog.kernel_size = value(key, raw)?,
            "t_max" => self.t_max = value(key, raw)?,
            "features" => {
                self.features = match raw {
                    "raw" | "none" => FeatureSource::Raw,
                    "csnn" => FeatureSource::Csnn,
                    _ => return Err(Error::config(key, format!("invalid value `{raw}`: expected raw or csnn"))),
                }
            }
            "filters" => self.filters = value(key, raw)?,
            "kernel" => self.kernel = value(key, raw)?,
            "conv_stride" => self.conv_stride = value(key, raw)?,
            "conv_threshold" => self.conv_threshold = value(key, raw)?,
            "conv_threshold_min" => self.conv_threshold_min = value(key, raw)?,
            "competition_rate" => self.competition_rate = value(key, raw)?,
            "homeostasis_rate" => self.homeostasis_rate = value(key, raw)?,
            "target_time" => self.target_time = value(key, raw)?,
            "pool" => self.pool = value(key, raw)?,
            "pool_stride" => self.pool_stride = value(key, raw)?,
            "extractor_epochs" => self.extractor_epochs = value(key, raw)?,
            "extractor_samples" => self.extractor_samples = value(key, raw)?,
            "conv_a_plus" => self.conv_a_plus = value(key, raw)?,
            "conv_a_minus" => self.conv_a_minus = value::<f64>(key, raw)?.abs(),
            "conv_beta" => self.conv_beta = value(key, raw)?,
            "rule" => self.rule = value(key, raw)?,
            "neurons_per_class" => self.neurons_per_class = value(key, raw)?,
            "threshold" => self.threshold = value(key, raw)?,
            "a_plus" => self.a_plus = value(key, raw)?,
            "a_minus" => self.a_minus = value::<f64>(key, raw)?.abs(),
            "beta" => self.beta = value(key, raw)?,
            "w_min" => self.w_min = value(key, raw)?,
            "w_max" => self.w_max = value(key, raw)?,
            "init_min" => self.init_min = value(key, raw)?,
            "init_max" => self.init_max = value(key, raw)?,
            "gap" => self.gap = value(key, raw)?,
            "gap1" => self.gap1 = value(key, raw)?,
            "gap2" => self.gap2 = value(key, raw)?,
            "normalize" => self.normalize = Some(flag(key, raw)?),
            "epochs" => self.epochs = value(key, raw)?,
            "patience" => self.patience = value(key, raw)?,
            "folds" => self.folds = value(key, raw)?,
            "seed" => self.seed = value(key, raw)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, msg: &str| if ok { Ok(()) } else { Err(Error::config(key, msg)) };
        check(self.t_max > 0.0, "t_max", "must be positive")?;
        check(self.threshold > 0.0, "threshold", "must be positive")?;
        check(self.conv_threshold > 0.0, "conv_threshold", "must be positive")?;
        for (key, g) in [("gap", self.gap), ("gap1", self.gap1), ("gap2", self.gap2)] {
            check(g >= 0.0, key, "gaps must be non-negative")?;
        }
        check(self.a_plus > 0.0, "a_plus", "must be positive")?;
        check(self.a_minus > 0.0, "a_minus", "must be non-zero")?;
        check(self.beta >= 0.0, "beta", "must be non-negative")?;
        check(self.w_min < self.w_max, "w_max", "must exceed w_min")?;
        check(
            self.w_min <= self.init_min && self.init_min <= self.init_max && self.init_max <= self.w_max,
            "init_min",
            "initial weight range must lie inside [w_min, w_max]",
        )?;
        check(self.val_fraction > 0.0 && self.val_fraction < 1.0, "val_fraction", "must be in (0, 1)")?;
        check(self.patience >= 1, "patience", "must be at least 1")?;
        check(self.folds >= 2, "folds", "must be at least 2")?;
        check(self.epochs >= 1, "epochs", "must be at least 1")?;
        check(self.neurons_per_class >= 1, "neurons_per_class", "must be positive")?;
        check(
            self.neurons_per_class == 1 || self.rule == RuleSpec::Rstdp,
            "neurons_per_class",
            "neuron groups are only supported with rstdp",
        )?;
        check(self.filters >= 1 && self.kernel >= 1, "filters", "extractor needs filters and a kernel")?;
        check(self.pool >= 1 && self.pool_stride >= 1 && self.conv_stride >= 1, "pool", "must be positive")?;
        self.dog.validate()
    }

    /// Output layout implied by the rule.
    pub fn layout(&self, class_count: usize) -> ClassifierLayout {
        match self.rule {
            RuleSpec::S2stdpPcn => ClassifierLayout::pcn(class_count),
            RuleSpec::Rstdp => ClassifierLayout::grouped(class_count, self.neurons_per_class),
            RuleSpec::Sstdp | RuleSpec::S2stdp => ClassifierLayout::plain(class_count),
        }
    }

    pub fn normalize_enabled(&self) -> bool {
        self.normalize
            .unwrap_or(matches!(self.rule, RuleSpec::S2stdp | RuleSpec::S2stdpPcn))
    }

    pub fn stdp(&self) -> Result<StdpParams> {
        StdpParams::with_magnitudes(self.a_plus, self.a_minus, self.beta, self.w_min, self.w_max)
    }

    pub fn timing(&self, class_count: usize) -> TimingParams {
        TimingParams {
            t_max: self.t_max,
            gap: self.gap,
            gap1: self.gap1,
            gap2: self.gap2,
            class_count,
        }
    }

    /// Freshly initialized classifier over `inputs` features.
    pub fn build_classifier<R: Rng>(&self, inputs: usize, class_count: usize, rng: &mut R) -> Result<Classifier> {
        Classifier::new(
            self.layout(class_count),
            self.rule.rule(),
            inputs,
            self.threshold,
            self.stdp()?,
            self.timing(class_count),
            self.normalize_enabled(),
            (self.init_min, self.init_max),
            rng,
        )
    }

    pub fn conv_config(&self, channels: usize, height: usize, width: usize) -> ConvConfig {
        ConvConfig {
            input_channels: channels,
            input_height: height,
            input_width: width,
            filter_count: self.filters,
            kernel: (self.kernel, self.kernel),
            stride: self.conv_stride,
            initial_threshold: self.conv_threshold,
            homeostasis_rate: self.homeostasis_rate,
            target_time: self.target_time,
            threshold_min: self.conv_threshold_min,
            competition_rate: self.competition_rate,
        }
    }

    /// Untrained extractor for inputs of `channels` planes of `height x width`.
    pub fn build_extractor<R: Rng>(&self, channels: usize, height: usize, width: usize, rng: &mut R) -> Result<FeatureExtractor> {
        let stdp = StdpParams::with_magnitudes(self.conv_a_plus, self.conv_a_minus, self.conv_beta, 0.0, 1.0)?;
        let conv = ConvLayer::new(self.conv_config(channels, height, width), stdp, (0.0, 1.0), rng)?;
        FeatureExtractor::new(conv, (self.pool, self.pool), self.pool_stride)
    }
}
