mod common;

use ltlab::analysis::{classifier_norms, compactness, ensemble_predict, NormSource};
use ltlab::arch::Architecture;
use ltlab::baselines::reweight_factors;
use ltlab::bbn::{AdaptorSchedule, BbnModel};
use ltlab::data::{make_counts, Dataset, ImbalanceProfile};
use ltlab::nn::{lr_at, softmax, Network, OptimizerConfig};
use ltlab::sampling::reversed_probs;
use ltlab::Tensor;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-20.0..20.0f64, rows * cols).prop_map(move |v| Tensor::new(vec![rows, cols], v).unwrap())
}

/// Random orthogonal `n × n` matrix by Gram–Schmidt on Gaussian columns.
fn orthogonal(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = common::rng(seed);
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(z in matrix(4, 6)) {
        let p = softmax(&z);
        for i in 0..4 {
            let s: f64 = p.row(i).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.row(i).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn softmax_shift_invariant(z in matrix(3, 5), c in -100.0..100.0f64) {
        let mut shifted = z.clone();
        shifted.values_mut().iter_mut().for_each(|v| *v += c);
        let (p, q) = (softmax(&z), softmax(&shifted));
        for (a, b) in p.values().iter().zip(q.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn counts_monotone(c in 2usize..20, n_max in 1usize..2000, b1 in 1.0..200.0f64, b2 in 1.0..200.0f64) {
        let (lo, hi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let a = make_counts(&ImbalanceProfile { num_classes: c, n_max, beta: lo }).unwrap();
        let b = make_counts(&ImbalanceProfile { num_classes: c, n_max, beta: hi }).unwrap();
        prop_assert_eq!(a[0], n_max);
        prop_assert!(a.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x >= y));
        prop_assert!(b.iter().all(|&n| n >= 1));
    }

    #[test]
    fn dataset_bytes_round_trip(values in prop::collection::vec(-1e6..1e6f64, 12), labels in prop::collection::vec(0usize..3, 4)) {
        let mut labels = labels;
        labels[..3].copy_from_slice(&[0, 1, 2]);
        let ds = Dataset::new(Tensor::new(vec![4, 3], values).unwrap(), labels, 3).unwrap();
        let bytes = ds.to_bytes();
        let back = Dataset::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn reversed_probs_scale_free(counts in prop::collection::vec(1usize..1000, 2..12), k in 1usize..50) {
        let p = reversed_probs(&counts).unwrap().probs;
        let scaled: Vec<usize> = counts.iter().map(|&n| n * k).collect();
        let q = reversed_probs(&scaled).unwrap().probs;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for i in 0..counts.len() {
            for j in 0..counts.len() {
                if counts[i] < counts[j] {
                    prop_assert!(p[i] > p[j]);
                }
            }
        }
    }

    #[test]
    fn reweighting_has_unit_sample_mean(counts in prop::collection::vec(1usize..1000, 2..12)) {
        let w = reweight_factors(&counts).unwrap();
        let n: usize = counts.iter().sum();
        let mean: f64 = counts.iter().zip(&w).map(|(&c, &wi)| c as f64 * wi).sum::<f64>() / n as f64;
        prop_assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalized_compactness_ignores_scale(f in matrix(8, 4), s in 1e-3..1e3f64) {
        let labels = [0, 1, 2, 0, 1, 2, 0, 1];
        let a = compactness(&f, &labels, 3, true).unwrap();
        let b = compactness(&f.scale(s), &labels, 3, true).unwrap();
        for (x, y) in a.per_class_mean_distance.iter().zip(&b.per_class_mean_distance) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn column_norms_rotation_invariant(w in matrix(5, 4), seed in any::<u64>()) {
        let q = orthogonal(5, seed);
        let mut rotated = w.clone();
        for c in 0..4 {
            for i in 0..5 {
                rotated.values_mut()[i * 4 + c] = (0..5).map(|k| q[i][k] * w.get(k, c)).sum();
            }
        }
        let a = classifier_norms(&w, NormSource::CE).unwrap();
        let b = classifier_norms(&rotated, NormSource::CE).unwrap();
        for (x, y) in a.per_class_norm.iter().zip(&b.per_class_norm) {
            prop_assert!((x - y).abs() < 1e-10);
        }
        prop_assert!((a.sigma - b.sigma).abs() < 1e-10);
    }

    #[test]
    fn ensemble_is_symmetric(seed_a in any::<u64>(), seed_b in any::<u64>(), x in matrix(6, 3)) {
        let mut r = common::rng(seed_a);
        let a = Network::mlp(&[3, 5, 4], false, &mut r).unwrap();
        let mut r = common::rng(seed_b);
        let b = Network::mlp(&[3, 4], false, &mut r).unwrap();
        prop_assert_eq!(ensemble_predict(&a, &b, &x).unwrap(), ensemble_predict(&b, &a, &x).unwrap());
    }

    #[test]
    fn decay_schedules_monotone(t_max in 1usize..300) {
        let mut rng = common::rng(0);
        for s in AdaptorSchedule::TABLE {
            if s == AdaptorSchedule::BetaDist {
                continue;
            }
            let a: Vec<f64> = (1..=t_max).map(|t| s.alpha(t, t_max, &mut rng).unwrap()).collect();
            prop_assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
            if s.is_decay() {
                prop_assert!(a.windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(a[t_max - 1].abs() < 1e-12);
            }
            if s == AdaptorSchedule::ParabolicIncrement {
                prop_assert!(a.windows(2).all(|w| w[0] <= w[1]));
                prop_assert_eq!(a[t_max - 1], 1.0);
            }
        }
    }

    #[test]
    fn beta_draws_in_unit_interval(seed in any::<u64>(), t_max in 1usize..50) {
        let mut rng = common::rng(seed);
        for t in 1..=t_max {
            let a = AdaptorSchedule::BetaDist.alpha(t, t_max, &mut rng).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn learning_rate_shape(warm in 0usize..10, m1 in 11usize..40, gap in 1usize..40, e in 0usize..100) {
        let cfg = OptimizerConfig { warmup_epochs: warm, milestones: vec![m1, m1 + gap], ..OptimizerConfig::default() };
        let lr = lr_at(e, &cfg);
        prop_assert!(lr > 0.0 && lr <= cfg.base_lr);
        if e >= warm {
            prop_assert!(lr_at(e + 1, &cfg) <= lr);
        } else {
            prop_assert!(lr_at(e + 1, &cfg) >= lr);
        }
    }

    #[test]
    fn checkpoint_round_trip(trunk in prop::collection::vec(1usize..8, 1..3), branch in prop::collection::vec(1usize..8, 1..3), input in 1usize..6, classes in 2usize..5, seed in any::<u64>()) {
        let arch = Architecture { trunk, branch };
        let m = BbnModel::new(&arch, input, classes, seed).unwrap();
        let back = BbnModel::from_bytes(&m.to_bytes()).unwrap();
        prop_assert_eq!(back, m);
    }
}
