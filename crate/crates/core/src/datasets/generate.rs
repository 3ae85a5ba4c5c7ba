use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kv::{parse_value, KvFile};
use crate::numcore::{norm2, Mat};
use crate::rng::{self, Domain};

use super::{Dataset, HiddenTruth, LabeledSet, UnlabeledSet};

/// Parameters of an isotropic Gaussian-blob split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub input_dim: usize,
    pub old_classes: usize,
    pub new_classes: usize,
    pub samples_per_class: usize,
    /// Minimum distance between any two class centers.
    pub separation: f64,
    /// Per-coordinate standard deviation around each center.
    pub sigma: f64,
    pub seed: u64,
    /// Dimension of the random subspace holding the centers; 0 means the
    /// whole input space.
    pub latent_dim: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            input_dim: 16,
            old_classes: 5,
            new_classes: 5,
            samples_per_class: 500,
            separation: 6.0,
            sigma: 1.0,
            seed: 0,
            latent_dim: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.samples_per_class == 0 {
            return Err(Error::InvalidInput(
                "input_dim and samples_per_class must be positive".into(),
            ));
        }
        if self.old_classes < 1 || self.new_classes < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 1 old and 2 new classes, got {} and {}",
                self.old_classes, self.new_classes
            )));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite())
            || !(self.sigma >= 0.0 && self.sigma.is_finite())
        {
            return Err(Error::InvalidInput(
                "separation and sigma must be finite and non-negative".into(),
            ));
        }
        if self.latent_dim > self.input_dim {
            return Err(Error::InvalidInput(format!(
                "latent_dim {} exceeds input_dim {}",
                self.latent_dim, self.input_dim
            )));
        }
        Ok(())
    }

    /// Reads `input_dim`, `old_classes`, `new_classes`, `samples_per_class`,
    /// `separation`, `sigma`, `seed` and `latent_dim`; missing keys keep their defaults.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let mut spec = SplitSpec::default();
        for (key, value) in kv.iter() {
            match key {
                "input_dim" => spec.input_dim = parse_value(key, value)?,
                "old_classes" => spec.old_classes = parse_value(key, value)?,
                "new_classes" => spec.new_classes = parse_value(key, value)?,
                "samples_per_class" => spec.samples_per_class = parse_value(key, value)?,
                "separation" => spec.separation = parse_value(key, value)?,
                "sigma" => spec.sigma = parse_value(key, value)?,
                "seed" => spec.seed = parse_value(key, value)?,
                "latent_dim" => spec.latent_dim = parse_value(key, value)?,
                other => return Err(Error::Config(format!("unknown split key `{other}`"))),
            }
        }
        spec.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(spec)
    }
}

/// A generated dataset together with the true class centers
/// (old classes first).
#[derive(Clone, Debug)]
pub struct Blobs {
    pub dataset: Dataset,
    pub centers: Mat,
}

/// Draws `old_classes + new_classes` Gaussian clusters. The first
/// `old_classes` become the labeled split, the rest the unlabeled split.
/// Rows within each split are shuffled.
pub fn generate_blobs(spec: &SplitSpec) -> Result<Blobs> {
    spec.validate()?;
    let total = spec.old_classes + spec.new_classes;
    let mut rng = rng::stream(spec.seed, Domain::Data, 0);
    let latent = if spec.latent_dim == 0 { spec.input_dim } else { spec.latent_dim };
    let centers = class_centers(total, spec.input_dim, latent, spec.separation, &mut rng);

    let mut draw_split = |first_class: usize, classes: usize| -> (Mat, Vec<usize>) {
        let mut order: Vec<usize> = (0..classes)
            .flat_map(|c| std::iter::repeat_n(c, spec.samples_per_class))
            .collect();
        order.shuffle(&mut rng);
        let mut x = Mat::zeros(order.len(), spec.input_dim);
        for (r, &c) in order.iter().enumerate() {
            let center = centers.row(first_class + c);
            for (v, &m) in x.row_mut(r).iter_mut().zip(center) {
                let noise: f64 = rng.sample(StandardNormal);
                *v = m + spec.sigma * noise;
            }
        }
        (x, order)
    };

    let (xl, yl) = draw_split(0, spec.old_classes);
    let (xu, yu) = draw_split(spec.old_classes, spec.new_classes);
    let dataset = Dataset::new(
        LabeledSet::new(spec.old_classes, xl, yl)?,
        UnlabeledSet::new(spec.new_classes, xu),
        HiddenTruth::new(yu),
    )?;
    Ok(Blobs { dataset, centers })
}

/// `count` random orthonormal directions in `dim` dimensions (`count <= dim`).
fn orthonormal_frame(count: usize, dim: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let n = norm2(&v);
        if n < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    basis
}

/// Centers drawn uniformly from a cube in a random `latent`-dimensional
/// subspace, rejecting any point closer than `separation` to an earlier one.
/// The cube starts at half-width `separation` and grows when it gets crowded.
fn class_centers(count: usize, dim: usize, latent: usize, separation: f64, rng: &mut impl Rng) -> Mat {
    let frame = orthonormal_frame(latent, dim, rng);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut radius = separation;
    let mut misses = 0;
    while points.len() < count {
        let p: Vec<f64> = if radius > 0.0 {
            (0..latent).map(|_| rng.random_range(-radius..radius)).collect()
        } else {
            vec![0.0; latent]
        };
        let ok = points.iter().all(|q| {
            p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= separation
        });
        if ok {
            points.push(p);
        } else {
            misses += 1;
            if misses > 1000 {
                radius *= 1.1;
                misses = 0;
            }
        }
    }
    let mut centers = Mat::zeros(count, dim);
    for (r, p) in points.iter().enumerate() {
        for (k, &w) in p.iter().enumerate() {
            for (o, f) in centers.row_mut(r).iter_mut().zip(&frame[k]) {
                *o += w * f;
            }
        }
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::write_dataset;

    #[test]
    fn degenerate_spec_collapses_to_origin() {
        let spec = SplitSpec {
            separation: 0.0,
            sigma: 0.0,
            samples_per_class: 3,
            ..SplitSpec::default()
        };
        let blobs = generate_blobs(&spec).unwrap();
        assert!(blobs.dataset.labeled.features().as_slice().iter().all(|&v| v == 0.0));
        assert!(blobs.dataset.unlabeled.features().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_gives_identical_bytes() {
        let spec = SplitSpec {
            samples_per_class: 20,
            seed: 99,
            ..SplitSpec::default()
        };
        let a = generate_blobs(&spec).unwrap();
        let b = generate_blobs(&spec).unwrap();
        let mut ba = Vec::new();
        let mut bb = Vec::new();
        write_dataset(&mut ba, &a.dataset).unwrap();
        write_dataset(&mut bb, &b.dataset).unwrap();
        assert_eq!(ba, bb);
        let c = generate_blobs(&SplitSpec { seed: 100, ..spec }).unwrap();
        assert_ne!(c.dataset, a.dataset);
    }

    fn distance(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn centers_keep_minimum_separation() {
        for seed in 0..20 {
            let spec = SplitSpec {
                samples_per_class: 1,
                seed,
                ..SplitSpec::default()
            };
            let c = generate_blobs(&spec).unwrap().centers;
            for i in 0..c.rows() {
                for j in 0..i {
                    assert!(distance(c.row(i), c.row(j)) >= spec.separation);
                }
            }
        }
    }

    #[test]
    fn crowded_low_dimensional_centers_still_separate() {
        let spec = SplitSpec {
            input_dim: 2,
            samples_per_class: 1,
            ..SplitSpec::default()
        };
        let c = generate_blobs(&spec).unwrap().centers;
        for i in 0..c.rows() {
            for j in 0..i {
                assert!(distance(c.row(i), c.row(j)) >= spec.separation);
            }
        }
    }

    #[test]
    fn latent_centers_span_a_subspace() {
        let spec = SplitSpec {
            latent_dim: 2,
            samples_per_class: 1,
            ..SplitSpec::default()
        };
        let c = generate_blobs(&spec).unwrap().centers;
        // Gram-Schmidt on the centers: at most two independent directions.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for r in 0..c.rows() {
            let mut v = c.row(r).to_vec();
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
            let n = norm2(&v);
            if n > 1e-9 * norm2(c.row(r)).max(1.0) {
                basis.push(v.iter().map(|x| x / n).collect());
            }
        }
        assert_eq!(basis.len(), 2);
        let too_big = SplitSpec { latent_dim: 17, ..SplitSpec::default() };
        assert!(generate_blobs(&too_big).is_err());
    }

    #[test]
    fn well_separated_blobs_are_nearest_center_separable() {
        let spec = SplitSpec {
            separation: 10.0,
            sigma: 1.0,
            samples_per_class: 200,
            seed: 3,
            ..SplitSpec::default()
        };
        let blobs = generate_blobs(&spec).unwrap();
        let centers = &blobs.centers;
        let data = &blobs.dataset;
        let nearest = |x: &[f64]| -> usize {
            (0..centers.rows())
                .map(|k| {
                    let d: f64 = x.iter().zip(centers.row(k)).map(|(a, b)| (a - b).powi(2)).sum();
                    (k, d)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        };
        let truth = data.truth.all();
        let correct = (0..data.unlabeled.len())
            .filter(|&i| nearest(data.unlabeled.get(i)) == spec.old_classes + truth[i])
            .count();
        assert!(correct as f64 / data.unlabeled.len() as f64 >= 0.99);
        let correct_l = (0..data.labeled.len())
            .filter(|&i| nearest(data.labeled.get(i).x) == data.labeled.get(i).class)
            .count();
        assert!(correct_l as f64 / data.labeled.len() as f64 >= 0.99);
    }

    #[test]
    fn rejects_non_positive_counts() {
        for spec in [
            SplitSpec { samples_per_class: 0, ..SplitSpec::default() },
            SplitSpec { old_classes: 0, ..SplitSpec::default() },
            SplitSpec { new_classes: 1, ..SplitSpec::default() },
            SplitSpec { input_dim: 0, ..SplitSpec::default() },
            SplitSpec { sigma: -1.0, ..SplitSpec::default() },
        ] {
            assert!(generate_blobs(&spec).is_err(), "{spec:?}");
        }
    }

}
