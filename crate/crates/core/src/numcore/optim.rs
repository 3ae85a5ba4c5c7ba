use crate::error::{Error, Result};

use super::Params;

/// RMSprop without momentum or centering.
///
/// `v ← ρ·v + (1−ρ)·g²`, `p ← p − lr·g / (√v + κ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    square_avg: Option<Vec<Vec<f64>>>,
}

impl RmsProp {
    pub fn new(lr: f64, decay: f64, eps: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::Config(format!("rmsprop decay must be in [0, 1), got {decay}")));
        }
        if !(eps > 0.0) {
            return Err(Error::Config(format!("rmsprop epsilon must be positive, got {eps}")));
        }
        Ok(RmsProp {
            lr,
            decay,
            eps,
            square_avg: None,
        })
    }

    /// Running mean of squared gradients, one buffer per parameter tensor.
    /// `None` until the first step.
    pub fn square_avg(&self) -> Option<&[Vec<f64>]> {
        self.square_avg.as_deref()
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        if !params.same_layout(grads) {
            return Err(Error::shape("gradients matching parameters", "different layout"));
        }
        let state = self.square_avg.get_or_insert_with(|| {
            grads.tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect()
        });
        if state.len() != grads.tensors().len() {
            return Err(Error::shape(
                format!("{} optimizer buffers", state.len()),
                grads.tensors().len(),
            ));
        }
        let (lr, rho, eps) = (self.lr, self.decay, self.eps);
        for (((_, p), (_, g)), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(state.iter_mut())
        {
            if v.len() != g.len() {
                return Err(Error::shape(v.len(), g.len()));
            }
            for ((p, &g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *v = rho * *v + (1.0 - rho) * g * g;
                *p -= lr * g / (v.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{Architecture, Model};

    fn arch() -> Architecture {
        Architecture {
            input_dim: 1,
            hidden_dims: vec![],
            feature_dim: 1,
            old_classes: 1,
            new_classes: 1,
        }
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut model = Model::new(arch(), 5).unwrap();
        let before = model.params.clone();
        let grads = Params::zeros(model.arch());
        let mut opt = RmsProp::new(1e-4, 0.9, 1e-8).unwrap();
        opt.step(&mut model.params, &grads).unwrap();
        assert_eq!(model.params, before);
    }

    #[test]
    fn scalar_recurrence() {
        let mut model = Model::new(arch(), 5).unwrap();
        let before = model.params.flatten();
        let mut grads = Params::zeros(model.arch());
        for (_, t) in grads.tensors_mut() {
            t.fill(1.0);
        }
        let mut opt = RmsProp::new(1e-4, 0.9, 1e-8).unwrap();
        opt.step(&mut model.params, &grads).unwrap();
        let expected = 1e-4 / (0.1f64.sqrt() + 1e-8);
        for (b, a) in before.iter().zip(model.params.flatten()) {
            assert!(((b - a) - expected).abs() < 1e-15);
        }
        for v in opt.square_avg().unwrap() {
            assert!(v.iter().all(|&x| (x - 0.1).abs() < 1e-15));
        }
    }

    #[test]
    fn identical_params_stay_identical() {
        let a = arch();
        let mut params = Params::zeros(&a);
        let mut grads = Params::zeros(&a);
        for (_, t) in params.tensors_mut() {
            t.fill(0.25);
        }
        for (_, t) in grads.tensors_mut() {
            t.fill(-0.3);
        }
        let mut opt = RmsProp::new(1e-3, 0.9, 1e-8).unwrap();
        for _ in 0..10 {
            opt.step(&mut params, &grads).unwrap();
        }
        let flat = params.flatten();
        assert!(flat.iter().all(|&v| v == flat[0]));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(RmsProp::new(0.0, 0.9, 1e-8).is_err());
        assert!(RmsProp::new(1e-3, 1.0, 1e-8).is_err());
        assert!(RmsProp::new(1e-3, 0.9, 0.0).is_err());
    }
}
