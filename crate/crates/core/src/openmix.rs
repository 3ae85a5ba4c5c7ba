//! Joint-label mixing between disjoint class spaces.
//!
//! Labels of old and new classes are zero-padded into one joint
//! distribution over `C^l + C^u` classes (old block first). A labeled
//! example, or a confident unlabeled "anchor", is then mixed with an
//! unlabeled example using a weight `η* = max(η, 1 − η)` with
//! `η ~ Beta(ε, ε)`, so the known side always dominates. The mixed targets
//! are fitted with an L2 loss on the softmax of the concatenated heads.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::baseline_losses::pseudo_labels_from_probs;
use crate::datasets::{LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::numcore::{norm2, softmax_backward, softmax_in_place, Mat};

const SIMPLEX_TOL: f64 = 1e-9;

/// Sizes of the old and new class blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassLayout {
    pub old: usize,
    pub new: usize,
}

impl ClassLayout {
    pub fn new(old: usize, new: usize) -> Self {
        ClassLayout { old, new }
    }

    pub fn total(&self) -> usize {
        self.old + self.new
    }
}

/// A distribution over the joint class space, old classes first.
#[derive(Clone, Debug, PartialEq)]
pub struct JointLabel(Vec<f64>);

impl JointLabel {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn old_block(&self, layout: ClassLayout) -> &[f64] {
        &self.0[..layout.old]
    }

    pub fn new_block(&self, layout: ClassLayout) -> &[f64] {
        &self.0[layout.old..]
    }

    pub fn old_mass(&self, layout: ClassLayout) -> f64 {
        self.old_block(layout).iter().sum()
    }

    /// Convex combination `w·self + (1 − w)·other`.
    fn blend(&self, other: &JointLabel, w: f64) -> JointLabel {
        JointLabel(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| w * a + (1.0 - w) * b)
                .collect(),
        )
    }
}

fn on_simplex(v: &[f64]) -> bool {
    v.iter().all(|&x| x.is_finite() && x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// `[ŷ^l ‖ 0_{C^u}]` for a one-hot old-class label.
pub fn extend_labeled(one_hot: &[f64], layout: ClassLayout) -> Result<JointLabel> {
    if one_hot.len() != layout.old {
        return Err(Error::shape(format!("{} old classes", layout.old), one_hot.len()));
    }
    let ones = one_hot.iter().filter(|&&v| v == 1.0).count();
    let zeros = one_hot.iter().filter(|&&v| v == 0.0).count();
    if ones != 1 || ones + zeros != one_hot.len() {
        return Err(Error::InvalidInput(format!("label is not one-hot: {one_hot:?}")));
    }
    let mut v = one_hot.to_vec();
    v.resize(layout.total(), 0.0);
    Ok(JointLabel(v))
}

/// `[0_{C^l} ‖ ẑ^u]` for a prediction or pseudo-label on the new classes.
pub fn extend_unlabeled(dist: &[f64], layout: ClassLayout) -> Result<JointLabel> {
    if dist.len() != layout.new {
        return Err(Error::shape(format!("{} new classes", layout.new), dist.len()));
    }
    if !on_simplex(dist) {
        return Err(Error::InvalidInput(format!("not a probability vector: {dist:?}")));
    }
    let mut v = vec![0.0; layout.old];
    v.extend_from_slice(dist);
    Ok(JointLabel(v))
}

/// A raw Beta draw and the weight actually used for mixing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixWeight {
    pub eta: f64,
    pub eta_star: f64,
}

impl MixWeight {
    pub fn from_eta(eta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidInput(format!("mixing weight {eta} outside [0, 1]")));
        }
        Ok(MixWeight {
            eta,
            eta_star: eta.max(1.0 - eta),
        })
    }
}

/// Draws `η ~ Beta(ε, ε)` and returns it with `η* = max(η, 1 − η)`.
pub fn sample_mix_weight(epsilon: f64, rng: &mut impl Rng) -> Result<MixWeight> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidInput(format!("Beta parameter must be positive, got {epsilon}")));
    }
    let beta = Beta::new(epsilon, epsilon).map_err(|e| Error::InvalidInput(e.to_string()))?;
    MixWeight::from_eta(beta.sample(rng))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MixSource {
    Labeled,
    Anchor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixedExample {
    pub input: Vec<f64>,
    pub target: JointLabel,
    pub eta_star: f64,
    pub source: MixSource,
}

fn blend_inputs(a: &[f64], b: &[f64], w: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| w * x + (1.0 - w) * y).collect())
}

/// Mixes a labeled example with an unlabeled one at a fixed weight.
pub fn mix_labeled_at(
    x_l: &[f64],
    y_l: &[f64],
    x_u: &[f64],
    z_u: &[f64],
    layout: ClassLayout,
    weight: MixWeight,
) -> Result<MixedExample> {
    let input = blend_inputs(x_l, x_u, weight.eta_star)?;
    let known = extend_labeled(y_l, layout)?;
    let unknown = extend_unlabeled(z_u, layout)?;
    Ok(MixedExample {
        input,
        target: known.blend(&unknown, weight.eta_star),
        eta_star: weight.eta_star,
        source: MixSource::Labeled,
    })
}

pub fn mix_with_labeled(
    x_l: &[f64],
    y_l: &[f64],
    x_u: &[f64],
    z_u: &[f64],
    layout: ClassLayout,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<MixedExample> {
    let weight = sample_mix_weight(epsilon, rng)?;
    mix_labeled_at(x_l, y_l, x_u, z_u, layout, weight)
}

/// A confident unlabeled example and its one-hot pseudo-class.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub id: usize,
    pub class: usize,
    pub probs: Vec<f64>,
}

/// Which label an anchor contributes to a mixture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AnchorLabel {
    #[default]
    OneHot,
    Soft,
}

impl Anchor {
    pub fn label(&self, mode: AnchorLabel) -> Vec<f64> {
        match mode {
            AnchorLabel::OneHot => crate::datasets::one_hot(self.class, self.probs.len()),
            AnchorLabel::Soft => self.probs.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Anchor>,
}

impl AnchorSet {
    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors.iter()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.anchors.iter().map(|a| a.id).collect()
    }
}

/// Every row whose maximum probability is at least `θ2`, keyed by row index.
pub fn select_anchors(probs: &Mat, theta2: f64) -> AnchorSet {
    let anchors = pseudo_labels_from_probs(probs, theta2)
        .into_iter()
        .enumerate()
        .filter_map(|(id, label)| {
            label.map(|class| Anchor {
                id,
                class,
                probs: probs.row(id).to_vec(),
            })
        })
        .collect();
    AnchorSet { anchors }
}

/// Mixes an anchor with an unlabeled example at a fixed weight. Both sides
/// live in the new-class block.
pub fn mix_anchor_at(
    x_a: &[f64],
    anchor: &Anchor,
    mode: AnchorLabel,
    x_u: &[f64],
    z_u: &[f64],
    layout: ClassLayout,
    weight: MixWeight,
) -> Result<MixedExample> {
    let input = blend_inputs(x_a, x_u, weight.eta_star)?;
    let known = extend_unlabeled(&anchor.label(mode), layout)?;
    let unknown = extend_unlabeled(z_u, layout)?;
    Ok(MixedExample {
        input,
        target: known.blend(&unknown, weight.eta_star),
        eta_star: weight.eta_star,
        source: MixSource::Anchor,
    })
}

/// Picks a uniform anchor and mixes it with `(x_u, z_u)`.
/// Fails with [`Error::NoAnchors`] on an empty set.
#[allow(clippy::too_many_arguments)]
pub fn mix_with_anchor(
    anchors: &AnchorSet,
    pool: &UnlabeledSet,
    mode: AnchorLabel,
    x_u: &[f64],
    z_u: &[f64],
    layout: ClassLayout,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<MixedExample> {
    let anchor = anchors.anchors.choose(rng).ok_or(Error::NoAnchors)?;
    let weight = sample_mix_weight(epsilon, rng)?;
    mix_anchor_at(pool.get(anchor.id), anchor, mode, x_u, z_u, layout, weight)
}

/// Mixed inputs stacked row-wise with their joint targets.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedBatch {
    pub inputs: Mat,
    pub targets: Mat,
    pub eta_star: Vec<f64>,
    pub sources: Vec<MixSource>,
}

impl MixedBatch {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    fn from_examples(examples: Vec<MixedExample>, input_dim: usize, classes: usize) -> Result<Self> {
        let inputs = Mat::from_rows(input_dim, examples.iter().map(|e| e.input.as_slice()))?;
        let targets = Mat::from_rows(classes, examples.iter().map(|e| e.target.as_slice()))?;
        Ok(MixedBatch {
            inputs,
            targets,
            eta_star: examples.iter().map(|e| e.eta_star).collect(),
            sources: examples.iter().map(|e| e.source).collect(),
        })
    }
}

/// How a mixed batch is assembled.
#[derive(Clone, Copy, Debug)]
pub struct MixPlan {
    pub size: usize,
    pub epsilon: f64,
    /// When set, the second half of the batch mixes anchors instead of
    /// labeled examples.
    pub with_anchors: bool,
    pub anchor_label: AnchorLabel,
}

/// Builds one mixed batch. Labeled (or anchor) and unlabeled partners are
/// drawn uniformly with replacement. `predict` maps unlabeled inputs to
/// their current new-class probabilities; those are used as constant
/// targets. Anchor slots are dropped when `anchors` is empty.
pub fn build_mixed_batch<F>(
    plan: &MixPlan,
    labeled: &LabeledSet,
    unlabeled: &UnlabeledSet,
    anchors: &AnchorSet,
    mut predict: F,
    rng: &mut impl Rng,
) -> Result<MixedBatch>
where
    F: FnMut(&Mat) -> Result<Mat>,
{
    if labeled.is_empty() || unlabeled.is_empty() {
        return Err(Error::InvalidInput("mixing needs labeled and unlabeled examples".into()));
    }
    let layout = ClassLayout::new(labeled.classes(), unlabeled.classes());
    let anchor_slots = if plan.with_anchors { plan.size / 2 } else { 0 };

    struct Draw {
        source: MixSource,
        known: usize,
        partner: usize,
        weight: MixWeight,
    }
    let mut draws = Vec::with_capacity(plan.size);
    for slot in 0..plan.size {
        let source = if slot >= plan.size - anchor_slots {
            MixSource::Anchor
        } else {
            MixSource::Labeled
        };
        if source == MixSource::Anchor && anchors.is_empty() {
            continue;
        }
        let known = match source {
            MixSource::Labeled => rng.random_range(0..labeled.len()),
            MixSource::Anchor => rng.random_range(0..anchors.len()),
        };
        let partner = rng.random_range(0..unlabeled.len());
        let weight = sample_mix_weight(plan.epsilon, rng)?;
        draws.push(Draw {
            source,
            known,
            partner,
            weight,
        });
    }

    let partners: Vec<usize> = draws.iter().map(|d| d.partner).collect();
    let partner_probs = predict(&unlabeled.features().select_rows(&partners))?;
    partner_probs.ensure_shape(partners.len(), layout.new)?;

    let mut examples = Vec::with_capacity(draws.len());
    for (k, d) in draws.iter().enumerate() {
        let x_u = unlabeled.get(d.partner);
        let z_u = partner_probs.row(k);
        let ex = match d.source {
            MixSource::Labeled => {
                let l = labeled.get(d.known);
                mix_labeled_at(l.x, &l.one_hot(layout.old), x_u, z_u, layout, d.weight)?
            }
            MixSource::Anchor => {
                let a = &anchors.anchors[d.known];
                mix_anchor_at(unlabeled.get(a.id), a, plan.anchor_label, x_u, z_u, layout, d.weight)?
            }
        };
        examples.push(ex);
    }
    MixedBatch::from_examples(examples, unlabeled.input_dim(), layout.total())
}

/// How the two heads' logits are normalized before the L2 comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OpmSoftmax {
    /// One softmax over the concatenated `C^l + C^u` logits.
    #[default]
    Joint,
    /// A softmax per head, concatenated.
    PerHead,
}

/// Value of the mixing loss and its gradients w.r.t. both heads' logits.
#[derive(Clone, Debug)]
pub struct OpmLoss {
    pub value: f64,
    pub d_zl: Mat,
    pub d_zu: Mat,
}

/// `(1/|M|) Σ_i (1/(C^l+C^u)) ‖v_i − SoftMax(z_i^m)‖₂`.
pub fn opm_loss(z_l: &Mat, z_u: &Mat, targets: &Mat, mode: OpmSoftmax) -> Result<OpmLoss> {
    let n = z_l.rows();
    if n == 0 {
        return Err(Error::InvalidInput("mixing loss of an empty batch".into()));
    }
    let (c_l, c_u) = (z_l.cols(), z_u.cols());
    z_u.ensure_shape(n, c_u)?;
    targets.ensure_shape(n, c_l + c_u)?;
    let z = z_l.hconcat(z_u)?;
    if !z.is_finite() {
        return Err(Error::NonFinite("mixing loss logits"));
    }
    let classes = c_l + c_u;
    let scale = 1.0 / (n * classes) as f64;

    let mut value = 0.0;
    let mut d_z = Mat::zeros(n, classes);
    let mut probs = vec![0.0; classes];
    let mut resid = vec![0.0; classes];
    for i in 0..n {
        probs.copy_from_slice(z.row(i));
        match mode {
            OpmSoftmax::Joint => softmax_in_place(&mut probs),
            OpmSoftmax::PerHead => {
                let (a, b) = probs.split_at_mut(c_l);
                softmax_in_place(a);
                softmax_in_place(b);
            }
        }
        for ((r, p), v) in resid.iter_mut().zip(&probs).zip(targets.row(i)) {
            *r = p - v;
        }
        let dist = norm2(&resid);
        value += dist * scale;
        if dist == 0.0 {
            continue;
        }
        let d_p: Vec<f64> = resid.iter().map(|r| r / dist * scale).collect();
        let row = d_z.row_mut(i);
        match mode {
            OpmSoftmax::Joint => softmax_backward(&probs, &d_p, row),
            OpmSoftmax::PerHead => {
                let (ra, rb) = row.split_at_mut(c_l);
                softmax_backward(&probs[..c_l], &d_p[..c_l], ra);
                softmax_backward(&probs[c_l..], &d_p[c_l..], rb);
            }
        }
    }
    let (d_zl, d_zu) = d_z.hsplit(c_l)?;
    Ok(OpmLoss { value, d_zl, d_zu })
}
