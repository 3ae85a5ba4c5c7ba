use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::Mat;

/// Layer sizes of the two-head network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub feature_dim: usize,
    pub old_classes: usize,
    pub new_classes: usize,
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let dims = [self.input_dim, self.feature_dim, self.old_classes, self.new_classes];
        if dims.iter().chain(&self.hidden_dims).any(|&d| d == 0) {
            return Err(Error::InvalidInput(format!(
                "all layer sizes must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each backbone layer, input first.
    pub fn backbone_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.feature_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        let affine = |(i, o): (usize, usize)| i * o + o;
        self.backbone_shapes().into_iter().map(affine).sum::<usize>()
            + affine((self.feature_dim, self.old_classes))
            + affine((self.feature_dim, self.new_classes))
    }
}

/// Affine map `x W + b` with `W` stored as `fan_in × fan_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Mat,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Dense {
            weights: Mat::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    /// Weights uniform in `(-bound, bound)`, zero bias.
    pub fn uniform(fan_in: usize, fan_out: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let mut layer = Dense::zeros(fan_in, fan_out);
        for w in layer.weights.as_mut_slice() {
            *w = rng.random_range(-bound..bound);
        }
        layer
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    pub fn apply(&self, input: &Mat) -> Result<Mat> {
        let mut out = input.matmul(&self.weights)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }
}

/// Which part of the network a parameter tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Backbone,
    OldHead,
    NewHead,
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub backbone: Vec<Dense>,
    pub old_head: Dense,
    pub new_head: Dense,
}

impl Params {
    pub fn zeros(arch: &Architecture) -> Self {
        Params {
            backbone: arch
                .backbone_shapes()
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o))
                .collect(),
            old_head: Dense::zeros(arch.feature_dim, arch.old_classes),
            new_head: Dense::zeros(arch.feature_dim, arch.new_classes),
        }
    }

    fn layers(&self) -> impl Iterator<Item = (ParamGroup, &Dense)> {
        self.backbone
            .iter()
            .map(|l| (ParamGroup::Backbone, l))
            .chain([
                (ParamGroup::OldHead, &self.old_head),
                (ParamGroup::NewHead, &self.new_head),
            ])
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = (ParamGroup, &mut Dense)> {
        self.backbone
            .iter_mut()
            .map(|l| (ParamGroup::Backbone, l))
            .chain([
                (ParamGroup::OldHead, &mut self.old_head),
                (ParamGroup::NewHead, &mut self.new_head),
            ])
    }

    /// Parameter tensors in declaration order: each backbone layer's weights
    /// then bias, then the old head, then the new head.
    pub fn tensors(&self) -> Vec<(ParamGroup, &[f64])> {
        self.layers()
            .flat_map(|(g, l)| [(g, l.weights.as_slice()), (g, l.bias.as_slice())])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<(ParamGroup, &mut [f64])> {
        let mut out = Vec::new();
        for (g, l) in self.layers_mut() {
            out.push((g, l.weights.as_mut_slice()));
            out.push((g, l.bias.as_mut_slice()));
        }
        out
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()).collect()
    }

    pub fn zero_group(&mut self, group: ParamGroup) {
        for (g, t) in self.tensors_mut() {
            if g == group {
                t.fill(0.0);
            }
        }
    }

    pub fn same_layout(&self, other: &Params) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|((ga, ta), (gb, tb))| ga == gb && ta.len() == tb.len())
    }

    pub fn add_assign(&mut self, other: &Params) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::shape("matching parameter layout", "different layout"));
        }
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, t) in self.tensors_mut() {
            for v in t {
                *v *= factor;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// Output of every backbone layer, post-ReLU except the last, which is the
    /// linear feature.
    pub activations: Vec<Mat>,
    pub z_l: Mat,
    pub z_u: Mat,
}

impl ForwardPass {
    pub fn features(&self) -> &Mat {
        self.activations.last().expect("backbone has at least one layer")
    }
}

/// MLP backbone with an old-class head and a new-class head.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: Architecture,
    pub params: Params,
}

const NEW_HEAD_STREAM: u64 = 1;

impl Model {
    /// He-uniform backbone, small-uniform heads, zero biases.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let backbone = arch
            .backbone_shapes()
            .into_iter()
            .map(|(i, o)| Dense::uniform(i, o, (6.0 / i as f64).sqrt(), &mut rng))
            .collect();
        let head_bound = 1.0 / (arch.feature_dim as f64).sqrt();
        let old_head = Dense::uniform(arch.feature_dim, arch.old_classes, head_bound, &mut rng);
        let new_head = new_head_init(arch.feature_dim, arch.new_classes, 1.0, seed);
        Ok(Model {
            arch,
            params: Params {
                backbone,
                old_head,
                new_head,
            },
        })
    }

    pub fn from_params(arch: Architecture, params: Params) -> Result<Self> {
        arch.validate()?;
        if !Params::zeros(&arch).same_layout(&params) {
            return Err(Error::shape("parameters matching the architecture", "different layout"));
        }
        Ok(Model { arch, params })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Replaces the new-class head with a freshly seeded one of `new_classes`
    /// outputs, its weights drawn from `U(±1/√feature_dim)` and multiplied by
    /// `scale`. Backbone and old head are left as they are.
    pub fn attach_new_head(&mut self, new_classes: usize, scale: f64, seed: u64) -> Result<()> {
        if new_classes == 0 {
            return Err(Error::InvalidInput("new head needs at least one class".into()));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!("new head scale must be positive, got {scale}")));
        }
        self.arch.new_classes = new_classes;
        self.params.new_head = new_head_init(self.arch.feature_dim, new_classes, scale, seed);
        Ok(())
    }

    pub fn forward(&self, batch: &Mat) -> Result<ForwardPass> {
        if batch.cols() != self.arch.input_dim {
            return Err(Error::shape(
                format!("{} input columns", self.arch.input_dim),
                batch.cols(),
            ));
        }
        let mut activations: Vec<Mat> = Vec::with_capacity(self.params.backbone.len());
        let last = self.params.backbone.len() - 1;
        for (idx, layer) in self.params.backbone.iter().enumerate() {
            let input = activations.last().unwrap_or(batch);
            let mut out = layer.apply(input)?;
            if idx < last {
                // NaN passes through so divergence stays visible downstream.
                for v in out.as_mut_slice() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            activations.push(out);
        }
        let features = activations.last().expect("backbone has at least one layer");
        let z_l = self.params.old_head.apply(features)?;
        let z_u = self.params.new_head.apply(features)?;
        Ok(ForwardPass {
            activations,
            z_l,
            z_u,
        })
    }

    /// Gradients of a loss w.r.t. every parameter given `dL/dz_l` and `dL/dz_u`.
    pub fn backward(&self, batch: &Mat, pass: &ForwardPass, d_zl: &Mat, d_zu: &Mat) -> Result<Params> {
        d_zl.ensure_shape(pass.z_l.rows(), pass.z_l.cols())?;
        d_zu.ensure_shape(pass.z_u.rows(), pass.z_u.cols())?;
        batch.ensure_shape(pass.z_l.rows(), self.arch.input_dim)?;

        let mut grads = Params::zeros(&self.arch);
        let features = pass.features();
        grads.old_head.weights = features.t_matmul(d_zl)?;
        grads.old_head.bias = d_zl.col_sums();
        grads.new_head.weights = features.t_matmul(d_zu)?;
        grads.new_head.bias = d_zu.col_sums();

        let mut upstream = d_zl.matmul_t(&self.params.old_head.weights)?;
        upstream.add_assign(&d_zu.matmul_t(&self.params.new_head.weights)?)?;

        let last = self.params.backbone.len() - 1;
        for idx in (0..=last).rev() {
            if idx < last {
                let act = &pass.activations[idx];
                for (g, a) in upstream.as_mut_slice().iter_mut().zip(act.as_slice()) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let input = if idx == 0 { batch } else { &pass.activations[idx - 1] };
            grads.backbone[idx].weights = input.t_matmul(&upstream)?;
            grads.backbone[idx].bias = upstream.col_sums();
            if idx > 0 {
                upstream = upstream.matmul_t(&self.params.backbone[idx].weights)?;
            }
        }
        Ok(grads)
    }
}

fn new_head_init(feature_dim: usize, new_classes: usize, scale: f64, seed: u64) -> Dense {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(NEW_HEAD_STREAM);
    let mut head = Dense::uniform(feature_dim, new_classes, 1.0 / (feature_dim as f64).sqrt(), &mut rng);
    if scale != 1.0 {
        head.weights.scale(scale);
    }
    head
}
