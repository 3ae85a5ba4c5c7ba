#![allow(dead_code)]

use openmix::numcore::{Architecture, Mat, Model};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn small_arch() -> Architecture {
    Architecture {
        input_dim: 4,
        hidden_dims: vec![5, 4],
        feature_dim: 3,
        old_classes: 2,
        new_classes: 3,
    }
}

pub fn random_mat(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Mat {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Mat::from_vec(rows, cols, data).unwrap()
}

/// Smallest |pre-activation| over every backbone unit and sample. Finite
/// differences are only meaningful away from ReLU kinks.
pub fn min_preactivation(model: &Model, batch: &Mat) -> f64 {
    let mut input = batch.clone();
    let mut min = f64::INFINITY;
    for layer in &model.params.backbone {
        let pre = layer.apply(&input).unwrap();
        min = pre.as_slice().iter().fold(min, |m, v| m.min(v.abs()));
        input = pre;
        for v in input.as_mut_slice() {
            *v = v.max(0.0);
        }
    }
    min
}

/// A random model and batch whose pre-activations all stay clear of zero.
pub fn kink_free_instance(seed: u64, rows: usize) -> (Model, Mat) {
    let mut r = rng(seed);
    loop {
        let model = Model::new(small_arch(), r.random()).unwrap();
        let batch = random_mat(rows, 4, 2.0, &mut r);
        if min_preactivation(&model, &batch) > 1e-3 {
            return (model, batch);
        }
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff <= 1e-9 {
        0.0
    } else {
        diff / a.abs().max(b.abs())
    }
}

/// Compares the analytic parameter gradient of a loss defined on the two
/// head outputs against central differences with step `1e-5`. `loss` maps
/// `(z_l, z_u)` to `(value, dL/dz_l, dL/dz_u)`. Returns the worst relative
/// error.
pub fn parameter_fd_error<F>(model: &Model, batch: &Mat, loss: F) -> f64
where
    F: Fn(&Mat, &Mat) -> (f64, Mat, Mat),
{
    let h = 1e-5;
    let pass = model.forward(batch).unwrap();
    let (_, d_zl, d_zu) = loss(&pass.z_l, &pass.z_u);
    let analytic = model.backward(batch, &pass, &d_zl, &d_zu).unwrap().flatten();
    let value_at = |m: &Model| {
        let p = m.forward(batch).unwrap();
        loss(&p.z_l, &p.z_u).0
    };
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    let mut flat_index = 0;
    let tensor_count = probe.params.tensors().len();
    for t in 0..tensor_count {
        let len = probe.params.tensors()[t].1.len();
        for k in 0..len {
            let orig = probe.params.tensors()[t].1[k];
            probe.params.tensors_mut()[t].1[k] = orig + h;
            let plus = value_at(&probe);
            probe.params.tensors_mut()[t].1[k] = orig - h;
            let minus = value_at(&probe);
            probe.params.tensors_mut()[t].1[k] = orig;
            let fd = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[flat_index], fd));
            flat_index += 1;
        }
    }
    worst
}
