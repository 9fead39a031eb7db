//! Randomized invariant checks. Each property runs `cases` generated inputs
//! from a fixed-seed runner and returns the minimal failing case on error.

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spikeclass::cache::FeatureCache;
use spikeclass::classifier::{predict, Classifier, ClassifierLayout, Rule};
use spikeclass::dataset::{parse_cifar10, parse_idx, to_idx, LabeledDataset};
use spikeclass::encoding::{encode_image, encode_latency, preprocess_on_off_center, DogParams, ImageTensor, SpikeTrain};
use spikeclass::feature::{max_pool, FeatureMaps};
use spikeclass::harness::{run_epoch, Sample};
use spikeclass::neuron::{integrate_sample, integrate_with_inhibition, FiringRecord, NeuronState, Threshold, WeightMatrix};
use spikeclass::plasticity::{
    apply_update, normalize_weights, s2stdp_desired_unclamped, StdpParams, TimingParams,
};
use spikeclass::Error;

pub type Property = (&'static str, fn(u32) -> Result<(), String>);

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

/// Timestamps on a coarse grid so that simultaneous spikes are common.
fn time() -> impl Strategy<Value = f64> {
    (0u32..=10).prop_map(|k| k as f64 / 10.0)
}

fn spikes(max_inputs: usize) -> impl Strategy<Value = Vec<Option<f64>>> {
    prop::collection::vec(prop::option::weighted(0.8, time()), 1..=max_inputs)
}

/// `(input times, weight rows)` with `neurons` rows.
fn layer(max_inputs: usize, neurons: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = (Vec<Option<f64>>, Vec<Vec<f64>>)> {
    (spikes(max_inputs), neurons).prop_flat_map(|(times, n)| {
        let inputs = times.len();
        (Just(times), prop::collection::vec(prop::collection::vec(0.01f64..1.0, inputs), n))
    })
}

fn train(times: &[Option<f64>]) -> SpikeTrain {
    SpikeTrain::from_times(times, 1.0).unwrap()
}

fn weights(rows: &[Vec<f64>]) -> WeightMatrix {
    WeightMatrix::from_rows(rows.to_vec(), 0.0, 1.0).unwrap()
}

/// Every neuron fires at most once, at the first input timestamp where its
/// running potential reaches threshold, and silent neurons never reached it.
pub fn single_spike_contract(cases: u32) -> Result<(), String> {
    run(cases, (layer(12, 1..=6), 0.1f64..3.0), |((times, rows), th)| {
        let t = train(&times);
        let record = integrate_sample(&t, &weights(&rows), Threshold::Uniform(th)).unwrap();
        prop_assert!(t.events().windows(2).all(|w| w[0].time <= w[1].time));
        for (j, s) in record.neurons.iter().enumerate() {
            let potential_by = |limit: f64| -> f64 {
                times.iter().zip(&rows[j]).filter(|(t, _)| t.is_some_and(|t| t <= limit)).map(|(_, w)| w).sum()
            };
            match s.time {
                Some(tf) => {
                    prop_assert!(times.contains(&Some(tf)));
                    prop_assert!(potential_by(tf) >= th - 1e-12);
                    let before: Vec<f64> = times.iter().flatten().copied().filter(|&x| x < tf).collect();
                    for b in before {
                        prop_assert!(potential_by(b) < th + 1e-12);
                    }
                }
                None => prop_assert!(potential_by(f64::INFINITY) < th + 1e-12),
            }
        }
        Ok(())
    })
}

/// Shifting every input spike by `delta` shifts every output spike by `delta`.
pub fn time_shift_equivariance(cases: u32) -> Result<(), String> {
    run(cases, (layer(12, 1..=6), 0.1f64..3.0, 0.0f64..2.0), |((times, rows), th, delta)| {
        let t = train(&times);
        let w = weights(&rows);
        let base = integrate_sample(&t, &w, Threshold::Uniform(th)).unwrap();
        let moved = integrate_sample(&t.shifted(delta).unwrap(), &w, Threshold::Uniform(th)).unwrap();
        for (a, b) in base.neurons.iter().zip(&moved.neurons) {
            match (a.time, b.time) {
                (Some(x), Some(y)) => prop_assert!((x + delta - y).abs() < 1e-12),
                (None, None) => {}
                other => return Err(TestCaseError::fail(format!("firing changed under shift: {other:?}"))),
            }
            prop_assert!((a.potential - b.potential).abs() < 1e-12);
        }
        Ok(())
    })
}

/// Raising the threshold never makes a neuron fire earlier.
pub fn threshold_monotonicity(cases: u32) -> Result<(), String> {
    run(cases, (layer(12, 1..=6), 0.1f64..3.0, 0.0f64..2.0), |((times, rows), th, extra)| {
        let t = train(&times);
        let w = weights(&rows);
        let low = integrate_sample(&t, &w, Threshold::Uniform(th)).unwrap();
        let high = integrate_sample(&t, &w, Threshold::Uniform(th + extra)).unwrap();
        for (a, b) in low.neurons.iter().zip(&high.neurons) {
            let (ta, tb) = (a.time.unwrap_or(f64::INFINITY), b.time.unwrap_or(f64::INFINITY));
            prop_assert!(tb >= ta);
        }
        Ok(())
    })
}

/// After any update every weight is inside `[w_min, w_max]`.
pub fn clipping_safety(cases: u32) -> Result<(), String> {
    let strategy = (
        layer(10, 1..=3),
        -3.0f64..3.0,
        time(),
        0.001f64..2.0,
        0.001f64..2.0,
        0.0f64..5.0,
        (-1.0f64..0.5, 0.1f64..2.0),
    );
    run(cases, strategy, |((times, rows), e, t_j, a_plus, a_minus, beta, (w_min, width))| {
        let w_max = w_min + width;
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| w_min + v * width).collect()).collect();
        let mut w = WeightMatrix::from_parts(
            times.len(),
            rows.len(),
            rows.concat(),
            w_min,
            w_max,
            vec![1.0; rows.len()],
        )
        .unwrap();
        let p = StdpParams::new(a_plus, -a_minus, beta, w_min, w_max).unwrap();
        for j in 0..rows.len() {
            apply_update(&mut w, j, &train(&times), t_j, e, &p).unwrap();
            prop_assert!(w.row(j).iter().all(|&v| (w_min..=w_max).contains(&v)), "{:?}", w.row(j));
        }
        Ok(())
    })
}

/// Normalizing twice equals normalizing once, and the sum hits `f_norm`.
pub fn normalization_idempotence(cases: u32) -> Result<(), String> {
    let strategy = prop::collection::vec(0.01f64..1.0, 1..20).prop_flat_map(|row| (Just(row), 0.1f64..10.0));
    run(cases, strategy, |(row, f_norm)| {
        let n = row.len();
        let mut w = WeightMatrix::from_parts(n, 1, row, 0.0, 1.0, vec![f_norm]).unwrap();
        normalize_weights(&mut w, 0).unwrap();
        let once = w.row(0).to_vec();
        normalize_weights(&mut w, 0).unwrap();
        let sum: f64 = once.iter().sum();
        prop_assert!((sum - f_norm).abs() <= 1e-12 * f_norm.max(1.0));
        for (a, b) in once.iter().zip(w.row(0)) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
        Ok(())
    })
}

fn pcn_classifier(rows: Vec<Vec<f64>>, th: f64) -> Classifier {
    let classes = rows.len() / 2;
    Classifier::from_weights(
        ClassifierLayout::pcn(classes),
        Rule::S2stdp,
        weights(&rows),
        vec![th; rows.len()],
        StdpParams::new(0.1, -0.1, 1.0, 0.0, 1.0).unwrap(),
        TimingParams {
            t_max: 1.0,
            gap: 0.2,
            gap1: 0.0,
            gap2: 0.0,
            class_count: classes,
        },
        true,
    )
    .unwrap()
}

/// At most one member of each pair fires, the other is inhibited only if its
/// partner fired, and PCN training updates at most one neuron per pair.
pub fn pcn_exclusivity(cases: u32) -> Result<(), String> {
    let strategy = (2usize..=5)
        .prop_flat_map(|c| layer(12, 2 * c..=2 * c))
        .prop_flat_map(|l| (Just(l), 0.1f64..2.0, 0usize..5));
    run(cases, strategy, |((times, rows), th, label)| {
        let mut c = pcn_classifier(rows, th);
        let label = label % c.layout.class_count;
        let t = train(&times);
        let record = integrate_with_inhibition(&t, &c.weights, Threshold::Uniform(th), &c.layout.pairs()).unwrap();
        for (a, b) in c.layout.pairs() {
            let (sa, sb) = (&record.neurons[a], &record.neurons[b]);
            prop_assert!(!(sa.fired() && sb.fired()));
            prop_assert!(!sa.inhibited || sb.fired());
            prop_assert!(!sb.inhibited || sa.fired());
        }
        let out = c.train_sample(&t, label).unwrap();
        for (a, b) in c.layout.pairs() {
            let touched = out.errors.iter().filter(|(j, _)| *j == a || *j == b).count();
            prop_assert!(touched <= 1);
        }
        prop_assert!(out.updates <= c.layout.class_count);
        Ok(())
    })
}

fn random_samples(seed: u64, n: usize, inputs: usize, classes: usize) -> Vec<Sample> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let times: Vec<Option<f64>> =
                (0..inputs).map(|_| rng.gen_bool(0.7).then(|| (rng.gen_range(0..20) as f64) / 20.0)).collect();
            (train(&times), i % classes)
        })
        .collect()
}

/// Same seed and inputs give bit-identical models and metrics.
pub fn determinism(cases: u32) -> Result<(), String> {
    let strategy = (any::<u64>(), 0usize..3, 2usize..4);
    run(cases, strategy, |(seed, rule, classes)| {
        let samples = random_samples(seed, 6, 8, classes);
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (layout, rule) = match rule {
                0 => (ClassifierLayout::plain(classes), Rule::Sstdp),
                1 => (ClassifierLayout::plain(classes), Rule::S2stdp),
                _ => (ClassifierLayout::pcn(classes), Rule::S2stdp),
            };
            let timing = TimingParams {
                t_max: 1.0,
                gap: 0.2,
                gap1: 0.05,
                gap2: 0.05,
                class_count: classes,
            };
            let stdp = StdpParams::new(0.1, -0.1, 1.0, 0.0, 1.0).unwrap();
            let mut c = Classifier::new(layout, rule, 8, 1.0, stdp, timing, true, (0.2, 0.8), &mut rng).unwrap();
            let m = run_epoch(&mut c, &samples, &samples, 1, &mut rng).unwrap();
            (c.to_bytes(), m)
        };
        let (a, b) = (build(), build());
        prop_assert_eq!(&a.0, &b.0);
        prop_assert_eq!(a.1, b.1);
        Ok(())
    })
}

/// Before clamping, one target and `N - 1` non-target desired timestamps
/// average to `t_mean`.
pub fn desired_mean_preservation(cases: u32) -> Result<(), String> {
    run(cases, (0.0f64..1.0, 0.0f64..1.0, 2usize..=100), |(t_mean, gap, n)| {
        let p = TimingParams {
            t_max: 1.0,
            gap,
            gap1: 0.0,
            gap2: 0.0,
            class_count: n,
        };
        let sum = s2stdp_desired_unclamped(t_mean, true, &p) + (n - 1) as f64 * s2stdp_desired_unclamped(t_mean, false, &p);
        prop_assert!((sum / n as f64 - t_mean).abs() <= 1e-12, "mean {} vs {t_mean}", sum / n as f64);
        Ok(())
    })
}

/// Brighter cells fire earlier.
pub fn intensity_reversal(cases: u32) -> Result<(), String> {
    run(cases, (0.0f64..=1.0, 0.0f64..=1.0, 0.1f64..10.0), |(a, b, t_max)| {
        let (ta, tb) = (encode_latency(a, t_max).unwrap(), encode_latency(b, t_max).unwrap());
        prop_assert!((0.0..=t_max).contains(&ta));
        if a > b {
            prop_assert!(ta <= tb);
        }
        Ok(())
    })
}

/// On/off planes lie in `[0, 1]` and never both respond at one pixel.
pub fn dog_planes_exclusive(cases: u32) -> Result<(), String> {
    let strategy = (3usize..10, 3usize..10).prop_flat_map(|(h, w)| (Just(h), Just(w), prop::collection::vec(0.0f64..=1.0, h * w)));
    run(cases, strategy, |(h, w, values)| {
        let planes = preprocess_on_off_center(&ImageTensor::new(h, w, 1, values).unwrap(), &DogParams::default()).unwrap();
        for y in 0..h {
            for x in 0..w {
                let (on, off) = (planes.get(0, y, x), planes.get(1, y, x));
                prop_assert!((0.0..=1.0).contains(&on) && (0.0..=1.0).contains(&off));
                prop_assert!(on == 0.0 || off == 0.0);
            }
        }
        let t = encode_image(&planes, 1.0, true).unwrap();
        let mut seen = vec![false; t.source_count()];
        for e in t.events() {
            prop_assert!(!std::mem::replace(&mut seen[e.source as usize], true));
        }
        Ok(())
    })
}

/// Making any map spike earlier never makes a pooled output later.
pub fn pooling_monotonicity(cases: u32) -> Result<(), String> {
    let cell = prop::option::weighted(0.7, 0.0f64..1.0);
    let strategy = (prop::collection::vec(cell, 16), prop::collection::vec(0.0f64..0.5, 16));
    run(cases, strategy, |(times, earlier)| {
        let maps = |times: Vec<Option<f64>>| FeatureMaps {
            filters: 1,
            height: 4,
            width: 4,
            potentials: vec![0.0; 16],
            times,
            t_max: 1.0,
        };
        let moved: Vec<Option<f64>> =
            times.iter().zip(&earlier).map(|(t, d)| Some(t.map_or(1.0 - d, |t| (t - d).max(0.0)))).collect();
        let a = max_pool(&maps(times), (2, 2), 2).unwrap();
        let b = max_pool(&maps(moved), (2, 2), 2).unwrap();
        for (x, y) in a.times.iter().zip(&b.times) {
            prop_assert!(y.unwrap_or(f64::INFINITY) <= x.unwrap_or(f64::INFINITY));
        }
        Ok(())
    })
}

/// The prediction is the class of the unique earliest spike, and does not
/// change when all firing times are shifted together.
pub fn argmin_invariance(cases: u32) -> Result<(), String> {
    let strategy = (2usize..8).prop_flat_map(|n| {
        (
            Just(n),
            prop::sample::subsequence((0..50).collect::<Vec<u32>>(), n),
            prop::collection::vec(0.0f64..2.0, n),
            0.0f64..1.0,
        )
    });
    run(cases, strategy, |(n, mut ranks, potentials, delta)| {
        use rand::seq::SliceRandom;
        ranks.shuffle(&mut ChaCha8Rng::seed_from_u64(n as u64));
        let record = |shift: f64| FiringRecord {
            neurons: ranks
                .iter()
                .zip(&potentials)
                .map(|(&r, &p)| NeuronState {
                    time: Some(r as f64 / 100.0 + shift),
                    potential: p,
                    inhibited: false,
                })
                .collect(),
            t_max: 2.0,
        };
        let layout = ClassifierLayout::plain(n);
        let first = ranks.iter().enumerate().min_by_key(|(_, r)| **r).unwrap().0;
        prop_assert_eq!(predict(&record(0.0), &layout), first);
        prop_assert_eq!(predict(&record(delta), &layout), first);
        Ok(())
    })
}

/// Serializing a dataset to IDX and parsing it back is the identity.
pub fn idx_round_trip(cases: u32) -> Result<(), String> {
    let strategy = (1usize..6, 1usize..6, 1usize..5).prop_flat_map(|(h, w, n)| {
        (Just(h), Just(w), prop::collection::vec((prop::collection::vec(any::<u8>(), h * w), 0usize..10), n))
    });
    run(cases, strategy, |(h, w, raw)| {
        let samples: Vec<(ImageTensor, usize)> =
            raw.iter().map(|(px, l)| (ImageTensor::from_u8(h, w, 1, px).unwrap(), *l)).collect();
        let classes = samples.iter().map(|s| s.1 + 1).max().unwrap();
        let ds = LabeledDataset::new(samples, classes).unwrap();
        let (images, labels) = to_idx(&ds).unwrap();
        let back = parse_idx(&images, &labels).unwrap();
        prop_assert_eq!(&back.samples, &ds.samples);
        Ok(())
    })
}

/// Every binary parser rejects appended bytes.
pub fn trailing_garbage_rejected(cases: u32) -> Result<(), String> {
    let strategy = (prop::collection::vec(any::<u8>(), 1..8), any::<u64>());
    run(cases, strategy, |(junk, seed)| {
        let is_parse = |r: Result<(), Error>| matches!(r, Err(Error::Parse { .. }));
        let ds = LabeledDataset::new(vec![(ImageTensor::from_u8(2, 2, 1, &[1, 2, 3, 4]).unwrap(), 1)], 2).unwrap();
        let (mut images, mut labels) = to_idx(&ds).unwrap();
        images.extend(&junk);
        prop_assert!(is_parse(parse_idx(&images, &labels).map(drop)));
        images.truncate(images.len() - junk.len());
        labels.extend(&junk);
        prop_assert!(is_parse(parse_idx(&images, &labels).map(drop)));

        let mut cifar = vec![0u8; 3073];
        cifar.extend(&junk);
        prop_assert!(is_parse(parse_cifar10(&cifar).map(drop)));

        let cache = FeatureCache::new(8, 1.0, random_samples(seed, 3, 8, 2)).unwrap();
        let mut bytes = cache.to_bytes();
        bytes.extend(&junk);
        prop_assert!(is_parse(FeatureCache::from_bytes(&bytes).map(drop)));

        let c = pcn_classifier(vec![vec![0.5; 3]; 4], 1.0);
        let mut bytes = c.to_bytes();
        bytes.extend(&junk);
        prop_assert!(is_parse(Classifier::from_bytes(&bytes).map(drop)));
        Ok(())
    })
}

/// The six invariant suites the acceptance criteria name.
pub fn invariant_suites() -> Vec<Property> {
    vec![
        ("single-spike contract", single_spike_contract),
        ("time-shift equivariance", time_shift_equivariance),
        ("clipping safety", clipping_safety),
        ("normalization idempotence", normalization_idempotence),
        ("PCN exclusivity", pcn_exclusivity),
        ("determinism", determinism),
    ]
}

pub fn all() -> Vec<Property> {
    let mut v = invariant_suites();
    v.extend([
        ("threshold monotonicity", threshold_monotonicity as fn(u32) -> Result<(), String>),
        ("desired-time mean preservation", desired_mean_preservation),
        ("intensity reversal", intensity_reversal),
        ("DoG planes exclusive", dog_planes_exclusive),
        ("pooling monotonicity", pooling_monotonicity),
        ("argmin invariance", argmin_invariance),
        ("IDX round trip", idx_round_trip),
        ("trailing garbage rejected", trailing_garbage_rejected),
    ]);
    v
}
