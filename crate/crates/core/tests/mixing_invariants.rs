//! Properties every mixed example must satisfy, whatever the draw.

use openmix::datasets::{one_hot, LabeledSet, UnlabeledSet};
use openmix::numcore::{softmax_rows, Mat};
use openmix::openmix::{
    build_mixed_batch, mix_anchor_at, mix_labeled_at, sample_mix_weight, select_anchors,
    AnchorLabel, ClassLayout, MixPlan, MixSource, MixWeight,
};
use openmix::theory::random_simplex;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mat(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    let data = (0..rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect();
    Mat::from_vec(rows, cols, data).unwrap()
}

fn pools(seed: u64, old: usize, new: usize) -> (LabeledSet, UnlabeledSet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..30).map(|i| i % old).collect();
    let labeled = LabeledSet::new(old, random_mat(30, 4, &mut rng), labels).unwrap();
    let unlabeled = UnlabeledSet::new(new, random_mat(40, 4, &mut rng));
    (labeled, unlabeled)
}

fn on_simplex(v: &[f64]) -> bool {
    v.iter().all(|&p| p >= -1e-12) && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

#[test]
fn ten_thousand_examples_keep_their_block_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (labeled, unlabeled) = pools(1, 3, 4);
    let layout = ClassLayout::new(3, 4);
    let soft = softmax_rows(&random_mat(unlabeled.len(), 4, &mut rng)).unwrap();
    let anchors = select_anchors(&soft, 0.5);
    for i in 0..10_000 {
        let weight = sample_mix_weight(1.0, &mut rng).unwrap();
        assert!((0.5..=1.0).contains(&weight.eta_star));
        let z_u = random_simplex(4, &mut rng);
        let x_u = unlabeled.get(rng.random_range(0..unlabeled.len()));
        let ex = if i % 2 == 0 || anchors.is_empty() {
            let l = labeled.get(rng.random_range(0..labeled.len()));
            let ex = mix_labeled_at(l.x, &l.one_hot(3), x_u, &z_u, layout, weight).unwrap();
            assert_eq!(ex.target.old_mass(layout), weight.eta_star);
            ex
        } else {
            let a = anchors.iter().nth(rng.random_range(0..anchors.len())).unwrap();
            let ex = mix_anchor_at(unlabeled.get(a.id), a, AnchorLabel::OneHot, x_u, &z_u, layout, weight)
                .unwrap();
            assert!(ex.target.old_block(layout).iter().all(|&v| v == 0.0));
            ex
        };
        assert!(on_simplex(ex.target.as_slice()));
    }
}

#[test]
fn uniform_beta_gives_three_quarter_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 100_000;
    let mean: f64 = (0..n)
        .map(|_| sample_mix_weight(1.0, &mut rng).unwrap().eta_star)
        .sum::<f64>()
        / n as f64;
    assert!((mean - 0.75).abs() <= 0.01, "{mean}");
}

#[test]
fn batch_is_deterministic_per_rng_state() {
    let (labeled, unlabeled) = pools(2, 2, 3);
    let probs = softmax_rows(&random_mat(unlabeled.len(), 3, &mut ChaCha8Rng::seed_from_u64(3))).unwrap();
    let anchors = select_anchors(&probs, 0.6);
    let plan = MixPlan {
        size: 16,
        epsilon: 1.0,
        with_anchors: true,
        anchor_label: AnchorLabel::OneHot,
    };
    let predict = |x: &Mat| softmax_rows(&x.matmul(&Mat::from_vec(4, 3, vec![0.3; 12]).unwrap())?);
    let make = |seed| {
        build_mixed_batch(&plan, &labeled, &unlabeled, &anchors, predict, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
    };
    assert_eq!(make(5), make(5));
    assert_ne!(make(5), make(6));
}

#[test]
fn empty_anchor_set_drops_anchor_slots() {
    let (labeled, unlabeled) = pools(3, 2, 3);
    let uniform = Mat::from_vec(unlabeled.len(), 3, vec![1.0 / 3.0; unlabeled.len() * 3]).unwrap();
    let anchors = select_anchors(&uniform, 0.9);
    assert!(anchors.is_empty());
    let plan = MixPlan {
        size: 10,
        epsilon: 1.0,
        with_anchors: true,
        anchor_label: AnchorLabel::OneHot,
    };
    let predict = |x: &Mat| Ok(Mat::from_vec(x.rows(), 3, vec![1.0 / 3.0; x.rows() * 3]).unwrap());
    let batch =
        build_mixed_batch(&plan, &labeled, &unlabeled, &anchors, predict, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
    assert_eq!(batch.len(), 5);
    assert!(batch.sources.iter().all(|&s| s == MixSource::Labeled));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mixed_batches_respect_the_invariants(
        seed in any::<u64>(),
        old in 1usize..5,
        new in 2usize..5,
        size in 1usize..40,
        with_anchors in any::<bool>(),
        soft in any::<bool>(),
        epsilon in 0.1f64..4.0,
    ) {
        let (labeled, unlabeled) = pools(seed, old, new);
        let layout = ClassLayout::new(old, new);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let head = random_mat(4, new, &mut rng);
        let predict = |x: &Mat| softmax_rows(&x.matmul(&head)?);
        let anchors = select_anchors(&predict(unlabeled.features()).unwrap(), 0.6);
        let plan = MixPlan {
            size,
            epsilon,
            with_anchors,
            anchor_label: if soft { AnchorLabel::Soft } else { AnchorLabel::OneHot },
        };
        let batch = build_mixed_batch(&plan, &labeled, &unlabeled, &anchors, predict, &mut rng).unwrap();
        prop_assert_eq!(batch.targets.cols(), layout.total());
        for k in 0..batch.len() {
            let v = batch.targets.row(k);
            let eta_star = batch.eta_star[k];
            prop_assert!(on_simplex(v));
            prop_assert!((0.5..=1.0).contains(&eta_star));
            let old_mass: f64 = v[..old].iter().sum();
            match batch.sources[k] {
                MixSource::Labeled => {
                    // Exactly one old entry is non-zero and it carries η*.
                    let hot: Vec<&f64> = v[..old].iter().filter(|&&p| p != 0.0).collect();
                    prop_assert_eq!(hot.len(), 1);
                    prop_assert_eq!(*hot[0], eta_star);
                }
                MixSource::Anchor => prop_assert_eq!(old_mass, 0.0),
            }
        }
    }

    #[test]
    fn mix_weight_folds_into_the_upper_half(eta in 0.0f64..=1.0) {
        let w = MixWeight::from_eta(eta).unwrap();
        prop_assert!(w.eta_star >= 0.5 && w.eta_star <= 1.0);
        prop_assert!(w.eta_star == eta || w.eta_star == 1.0 - eta);
    }

    #[test]
    fn endpoint_weight_returns_the_known_side(class in 0usize..3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = ClassLayout::new(3, 2);
        let x_l = [1.0, 2.0];
        let x_u = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let z_u = random_simplex(2, &mut rng);
        let w = MixWeight::from_eta(1.0).unwrap();
        let ex = mix_labeled_at(&x_l, &one_hot(class, 3), &x_u, &z_u, layout, w).unwrap();
        prop_assert_eq!(ex.input, x_l.to_vec());
        let mut expected = one_hot(class, 3);
        expected.extend([0.0, 0.0]);
        prop_assert_eq!(ex.target.as_slice(), expected.as_slice());
    }
}
