//! `spikeclass` command-line driver.
//!
//! Every subcommand runs one experiment pipeline from a key=value config file.

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, Parser, Subcommand};
use log::info;

use spikeclass::cache::FeatureCache;
use spikeclass::classifier::Classifier;
use spikeclass::config::RunConfig;
use spikeclass::harness::{parse_grid, read_metrics, write_metrics, MetricsWriter, Sample};
use spikeclass::pipeline::{fit_config, kfold_config, prepare, split_train_val, sweep_config};

#[derive(Parser)]
#[command(name = "spikeclass", version, about = "Single-spike SNN training with supervised STDP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the feature extractor and write train/test feature caches.
    Extract {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
    },
    /// Fit a classifier and write the model and its per-epoch metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Training feature cache; without it the dataset is prepared from the config.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics CSV path (default: model path with a .csv extension).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Report the accuracy of a saved model on a feature cache.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// K-fold protocol: train on K folds, report mean and std test accuracy.
    Kfold {
        #[arg(long)]
        config: PathBuf,
        /// Training feature cache (requires --test).
        #[arg(long, requires = "test")]
        features: Option<PathBuf>,
        #[arg(long, requires = "features")]
        test: Option<PathBuf>,
    },
    /// Grid search over classifier settings, ranked by validation accuracy.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        features: Option<PathBuf>,
        /// `key=v1,v2,...`; repeat for more axes.
        #[arg(long, required = true)]
        grid: Vec<String>,
    },
    /// Validate stored metrics CSVs and print them to stdout.
    Metrics {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("loading config {}", path.display()))
}

fn load_cache(path: &Path) -> Result<FeatureCache> {
    FeatureCache::load(path).with_context(|| format!("loading feature cache {}", path.display()))
}

/// Training samples and class count, from a cache or from raw data.
fn training_samples(config: &RunConfig, features: Option<&Path>) -> Result<(Vec<Sample>, usize)> {
    let cache = match features {
        Some(path) => load_cache(path)?,
        None => prepare(config)?.train,
    };
    let classes = cache.class_count();
    Ok((cache.samples, classes))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Extract {
            config,
            train_out,
            test_out,
        } => {
            let config = load_config(&config)?;
            let prepared = prepare(&config)?;
            prepared.train.save(&train_out)?;
            prepared.test.save(&test_out)?;
            println!(
                "wrote {} train and {} test samples with {} features",
                prepared.train.samples.len(),
                prepared.test.samples.len(),
                prepared.train.feature_count
            );
        }
        Command::Train {
            config,
            features,
            out,
            metrics,
        } => {
            let config = load_config(&config)?;
            let (samples, classes) = training_samples(&config, features.as_deref())?;
            let (train, val) = split_train_val(&config, &samples);
            let metrics = metrics.unwrap_or_else(|| out.with_extension("csv"));
            let mut writer = MetricsWriter::create(&metrics)?;
            let result = fit_config(&config, &train, &val, classes, |m| {
                info!("epoch {} val {:.4} update ratio {:.3}", m.epoch, m.val_accuracy, m.update_ratio_total);
                writer.write(m)
            })?;
            result.classifier.save(&out)?;
            println!(
                "best epoch {} validation accuracy {:.4}; model {} metrics {}",
                result.best_epoch,
                result.best_val_accuracy,
                out.display(),
                metrics.display()
            );
        }
        Command::Eval { model, features } => {
            let classifier =
                Classifier::load(&model).with_context(|| format!("loading model {}", model.display()))?;
            let cache = load_cache(&features)?;
            let accuracy = classifier.accuracy(&cache.samples)?;
            println!("accuracy {accuracy:.4} on {} samples", cache.samples.len());
        }
        Command::Kfold { config, features, test } => {
            let config = load_config(&config)?;
            let (train, test) = match (features, test) {
                (Some(f), Some(t)) => (load_cache(&f)?, load_cache(&t)?),
                _ => {
                    let p = prepare(&config)?;
                    (p.train, p.test)
                }
            };
            let classes = train.class_count().max(test.class_count());
            let report = kfold_config(&config, &train.samples, &test.samples, classes)?;
            for (i, (acc, epoch)) in report.test_accuracies.iter().zip(&report.best_epochs).enumerate() {
                println!("fold {} test accuracy {acc:.4} (best epoch {epoch})", i + 1);
            }
            println!("mean {:.4} std {:.4}", report.mean, report.std);
        }
        Command::Sweep { config, features, grid } => {
            let config = load_config(&config)?;
            let grid = parse_grid(&grid)?;
            let (samples, classes) = training_samples(&config, features.as_deref())?;
            let (train, val) = split_train_val(&config, &samples);
            let rows = sweep_config(&config, &grid, &train, &val, classes)?;
            for row in rows {
                let setting: Vec<String> = row.setting.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{:.4} {}", row.val_accuracy, setting.join(" "));
            }
        }
        Command::Metrics { files } => {
            let mut rows = Vec::new();
            for f in &files {
                rows.extend(read_metrics(f).with_context(|| format!("reading metrics {}", f.display()))?);
            }
            if rows.is_empty() {
                bail!("no metrics rows in {} file(s)", files.len());
            }
            write_metrics(io::stdout().lock(), &rows)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            eprintln!();
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::FAILURE
        }
    }
}
