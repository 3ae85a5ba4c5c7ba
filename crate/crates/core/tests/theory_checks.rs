//! Label-error identities checked by mixing the label vectors themselves and
//! measuring the result, independent of the closed forms in the library.

use openmix::theory::{
    analyze, label_error, mixup_can_worsen, mixup_error, openmix_error, random_case_any_size,
    random_simplex, reference_counterexample, verify_inequality, ErrorCase,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn blend(a: &[f64], b: &[f64], eta: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| eta * x + (1.0 - eta) * y).collect()
}

fn pad(v: &[f64], before: usize, after: usize) -> Vec<f64> {
    let mut out = vec![0.0; before];
    out.extend_from_slice(v);
    out.resize(before + v.len() + after, 0.0);
    out
}

/// Error of the mixed truth against the mixed pseudo-label, both built as
/// full vectors first.
fn mixup_by_mixing(case: &ErrorCase) -> f64 {
    let truth = blend(&case.y_a, &case.y_b, case.eta);
    let guess = blend(&case.y_hat_a, &case.y_hat_b, case.eta);
    label_error(&truth, &guess).unwrap()
}

fn openmix_by_mixing(case: &ErrorCase) -> f64 {
    let (c_l, c_u) = (case.y_c.len(), case.y_b.len());
    let truth = blend(&pad(&case.y_c, 0, c_u), &pad(&case.y_b, c_l, 0), case.eta);
    let guess = blend(&pad(&case.y_hat_c, 0, c_u), &pad(&case.y_hat_b, c_l, 0), case.eta);
    label_error(&truth, &guess).unwrap()
}

#[test]
fn reference_instance_worsens_by_a_fifth() {
    let case = reference_counterexample();
    let m = mixup_error(&case).unwrap();
    assert!((m.difference + 0.2).abs() <= 1e-12);
    assert!((m.mixed - 0.4).abs() <= 1e-12);
    assert!((mixup_by_mixing(&case) - m.mixed).abs() <= 1e-12);
}

#[test]
fn random_search_finds_independent_witnesses() {
    let witnesses = mixup_can_worsen(10_000, 0);
    assert!(witnesses.len() >= 2);
    for w in &witnesses[1..] {
        assert_ne!(w, &reference_counterexample());
        let before = label_error(&w.y_b, &w.y_hat_b).unwrap();
        assert!(before - mixup_by_mixing(w) < 0.0);
    }
}

#[test]
fn both_routes_agree_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5_000 {
        let case = random_case_any_size(&mut rng);
        let m = mixup_error(&case).unwrap();
        assert!((m.mixed - mixup_by_mixing(&case)).abs() <= 1e-12);
        let o = openmix_error(&case).unwrap();
        let mixed = openmix_by_mixing(&case);
        assert!((o.general - mixed).abs() <= 1e-12);
        assert!((o.reduced - mixed).abs() <= 1e-12);
        let ineq = verify_inequality(&case).unwrap();
        assert!(ineq.holds && ineq.routes_agree());
    }
}

#[test]
fn analysis_over_many_cases() {
    let report = analyze(20_000, 9).unwrap();
    assert_eq!(report.holds, report.samples);
    assert_eq!(report.routes_agree, report.samples);
    assert!(report.min_difference >= -1e-12);
    assert!(report.max_route_gap <= 1e-12);
    assert!(report.mixup_negative > 0);
    // One-hot truth against a uniform simplex guess has expected L1 gap
    // 2(1 - 1/C); the expected saving is η times that, with E[η] = 1/2. Class
    // counts vary from 2 to 8, so the mean saving lies strictly inside (0, 1).
    assert!(report.mean_difference > 0.0 && report.mean_difference < 1.0);
}

proptest! {
    #[test]
    fn openmix_saving_is_eta_times_error(
        seed in any::<u64>(),
        eta in 0.0f64..=1.0,
        old in 1usize..6,
        new in 2usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y_c = vec![0.0; old];
        y_c[(seed as usize) % old] = 1.0;
        let mut y_b = vec![0.0; new];
        y_b[(seed as usize / 7) % new] = 1.0;
        let case = ErrorCase {
            y_a: random_simplex(new, &mut rng),
            y_hat_a: random_simplex(new, &mut rng),
            y_hat_b: random_simplex(new, &mut rng),
            y_b,
            y_hat_c: y_c.clone(),
            y_c,
            eta,
        };
        let before = label_error(&case.y_b, &case.y_hat_b).unwrap();
        let after = openmix_by_mixing(&case);
        prop_assert!((before - after - eta * before).abs() <= 1e-12);
        prop_assert!(after <= before + 1e-12);
    }
}
