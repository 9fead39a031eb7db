//! Small synthetic datasets with known structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spikeclass::classifier::{Classifier, ClassifierLayout, Rule};
use spikeclass::encoding::SpikeTrain;
use spikeclass::harness::{fit, stratified_folds, FitOptions, Sample};
use spikeclass::plasticity::{StdpParams, TimingParams};

/// Two classes over two inputs. Class 0 spikes early on input 0 and late on
/// input 1; class 1 the other way round. Classes alternate, `n` samples.
pub fn separable_pairs(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let early = rng.gen_range(0.05..0.35);
            let late = rng.gen_range(0.65..0.95);
            let times = if label == 0 { [Some(early), Some(late)] } else { [Some(late), Some(early)] };
            (SpikeTrain::from_times(&times, 1.0).unwrap(), label)
        })
        .collect()
}

/// Oracle: true if some threshold on one feature's timestamp puts every
/// class-0 sample on one side and every class-1 sample on the other.
/// Candidate thresholds are all midpoints between sorted timestamps.
pub fn separable_by_threshold(samples: &[Sample], feature: usize) -> bool {
    let mut points: Vec<(f64, usize)> = samples.iter().map(|(t, l)| (t.dense_times()[feature], *l)).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    (1..points.len()).any(|k| {
        let cut = (points[k - 1].0 + points[k].0) / 2.0;
        let below = |l: usize| points.iter().filter(|p| p.0 < cut).all(|p| p.1 == l);
        let above = |l: usize| points.iter().filter(|p| p.0 >= cut).all(|p| p.1 == l);
        (below(0) && above(1)) || (below(1) && above(0))
    })
}

pub fn s2stdp_pair_classifier(seed: u64) -> Classifier {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Classifier::new(
        ClassifierLayout::plain(2),
        Rule::S2stdp,
        2,
        0.45,
        StdpParams::new(0.1, -0.1, 1.0, 0.0, 1.0).unwrap(),
        TimingParams {
            t_max: 1.0,
            gap: 0.2,
            gap1: 0.0,
            gap2: 0.0,
            class_count: 2,
        },
        false,
        (0.2, 0.6),
        &mut rng,
    )
    .unwrap()
}

/// K = 2 on a separable set: each fold's model fits its training part.
pub fn check_k2_separable() {
    let samples = separable_pairs(60, 21);
    assert!(separable_by_threshold(&samples, 0));
    let labels: Vec<usize> = samples.iter().map(|s| s.1).collect();
    let folds = stratified_folds(&labels, 2, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    for (k, val_idx) in folds.iter().enumerate() {
        let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
        let train = pick(&folds[1 - k]);
        let val = pick(val_idx);
        assert!(separable_by_threshold(&train, 0));
        let opts = FitOptions {
            max_epochs: 30,
            patience: 30,
        };
        let fitted = fit(s2stdp_pair_classifier(k as u64), &train, &val, opts, &mut ChaCha8Rng::seed_from_u64(k as u64), |_| {
            Ok(())
        })
        .unwrap();
        assert_eq!(fitted.classifier.accuracy(&train).unwrap(), 1.0, "fold {k}");
    }
}
