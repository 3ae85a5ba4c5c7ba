//! Central finite-difference checks of every training loss, taken through
//! the full two-head network down to each parameter.

mod common;

use common::{kink_free_instance, parameter_fd_error, random_mat, rng};
use openmix::baseline_losses::{cross_entropy, pair_labels, pll_loss, ppl_loss, pseudo_labels, similarity_matrix};
use openmix::numcore::{softmax, Mat};
use openmix::openmix::{opm_loss, OpmSoftmax};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-4;
const BATCH: usize = 10;

fn zeros_like(m: &Mat) -> Mat {
    Mat::zeros(m.rows(), m.cols())
}

/// Random simplex targets over the joint class space.
fn random_targets(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut r = rng(seed);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let raw: Vec<f64> = (0..cols).map(|_| r.random_range(-2.0..2.0)).collect();
        data.extend(softmax(&raw).unwrap());
    }
    Mat::from_vec(rows, cols, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn squared_loss_on_both_heads(seed in any::<u64>()) {
        let (model, batch) = kink_free_instance(seed, BATCH);
        let err = parameter_fd_error(&model, &batch, |zl, zu| {
            let value = zl.as_slice().iter().chain(zu.as_slice()).map(|v| v * v).sum::<f64>();
            let mut dl = zl.clone();
            dl.scale(2.0);
            let mut du = zu.clone();
            du.scale(2.0);
            (value, dl, du)
        });
        prop_assert!(err <= TOL, "relative error {err}");
    }

    #[test]
    fn cross_entropy_pretraining(seed in any::<u64>()) {
        let (model, batch) = kink_free_instance(seed, BATCH);
        let mut r = rng(seed ^ 1);
        let labels: Vec<usize> = (0..BATCH).map(|_| r.random_range(0..2)).collect();
        let err = parameter_fd_error(&model, &batch, |zl, zu| {
            let ce = cross_entropy(zl, &labels).unwrap();
            (ce.value, ce.grad, zeros_like(zu))
        });
        prop_assert!(err <= TOL, "relative error {err}");
    }

    #[test]
    fn pseudo_pair_loss(seed in any::<u64>(), theta1 in 0.5f64..0.99) {
        let (model, batch) = kink_free_instance(seed, BATCH);
        let base = model.forward(&batch).unwrap();
        let w = pair_labels(&similarity_matrix(&base.z_u).unwrap(), theta1);
        let err = parameter_fd_error(&model, &batch, |zl, zu| {
            let loss = ppl_loss(&similarity_matrix(zu).unwrap(), &w).unwrap();
            (loss.value, zeros_like(zl), loss.grad)
        });
        prop_assert!(err <= TOL, "relative error {err}");
    }

    #[test]
    fn pseudo_label_loss(seed in any::<u64>()) {
        let (mut model, batch) = kink_free_instance(seed, BATCH);
        // Sharpen the new head so that some examples pass the threshold.
        model.params.new_head.weights.scale(8.0);
        let base = model.forward(&batch).unwrap();
        let mut assigned = pseudo_labels(&base.z_u, 0.6).unwrap();
        if assigned.iter().all(Option::is_none) {
            assigned[0] = Some(1);
        }
        let err = parameter_fd_error(&model, &batch, |zl, zu| {
            let loss = pll_loss(zu, &assigned).unwrap();
            (loss.value, zeros_like(zl), loss.grad)
        });
        prop_assert!(err <= TOL, "relative error {err}");
    }

    #[test]
    fn mixing_loss_joint(seed in any::<u64>()) {
        let (model, batch) = kink_free_instance(seed, BATCH);
        let targets = random_targets(BATCH, 5, seed);
        let err = parameter_fd_error(&model, &batch, |zl, zu| {
            let loss = opm_loss(zl, zu, &targets, OpmSoftmax::Joint).unwrap();
            (loss.value, loss.d_zl, loss.d_zu)
        });
        prop_assert!(err <= TOL, "relative error {err}");
    }

    #[test]
    fn mixing_loss_per_head(seed in any::<u64>()) {
        let (model, batch) = kink_free_instance(seed, BATCH);
        let targets = random_targets(BATCH, 5, seed);
        let err = parameter_fd_error(&model, &batch, |zl, zu| {
            let loss = opm_loss(zl, zu, &targets, OpmSoftmax::PerHead).unwrap();
            (loss.value, loss.d_zl, loss.d_zu)
        });
        prop_assert!(err <= TOL, "relative error {err}");
    }
}

#[test]
fn single_layer_squared_loss_closed_form() {
    // The old head is affine on the features F, so under mean squared error
    // its weight gradient is 2 Fᵀ(F H + b − T)/n.
    let (model, batch) = kink_free_instance(7, BATCH);
    let pass = model.forward(&batch).unwrap();
    let mut r = rng(8);
    let targets = random_mat(BATCH, 2, 1.0, &mut r);
    let n = BATCH as f64;
    let mut resid = pass.z_l.clone();
    let mut neg = targets.clone();
    neg.scale(-1.0);
    resid.add_assign(&neg).unwrap();
    let mut d_zl = resid.clone();
    d_zl.scale(2.0 / n);
    let grads = model.backward(&batch, &pass, &d_zl, &zeros_like(&pass.z_u)).unwrap();

    let f = pass.features();
    let mut closed = f.t_matmul(&resid).unwrap();
    closed.scale(2.0 / n);
    for (a, b) in grads.old_head.weights.as_slice().iter().zip(closed.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
}
