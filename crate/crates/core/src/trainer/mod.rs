//! Two-stage training: cross-entropy pretraining on the labeled split, then
//! clustering of the unlabeled split with pseudo-pair and pseudo-label
//! learning plus the mixing loss.
//!
//! Hidden ground truth is only read for evaluation: by [`evaluate`] and by
//! the per-epoch ACC, NMI and anchor accuracy of [`cluster_train`]. No
//! training quantity depends on it.

mod config;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

pub use config::{RunConfig, CLUSTERED_FILE, DATASET_FILE, METRICS_FILE, PRETRAINED_FILE};

use crate::baseline_losses::{cross_entropy, pair_labels, pll_loss, ppl_loss, pseudo_labels_from_probs, similarity_matrix};
use crate::datasets::{epoch_batches, HiddenTruth, LabeledSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsRow};
use crate::numcore::{softmax_rows, Architecture, Mat, Model, ParamGroup, Params, RmsProp};
use crate::openmix::{build_mixed_batch, opm_loss, select_anchors, AnchorSet, MixPlan, MixSource};
use crate::rng::{self, Domain};

/// Fresh model for the given class counts, seeded from the run seed.
pub fn init_model(config: &RunConfig, input_dim: usize, old_classes: usize, new_classes: usize) -> Result<Model> {
    let arch = Architecture {
        input_dim,
        hidden_dims: config.hidden_dims.clone(),
        feature_dim: config.feature_dim,
        old_classes,
        new_classes,
    };
    Model::new(arch, rng::stream(config.seed, Domain::Init, 0).random())
}

fn optimizer(lr: f64, config: &RunConfig) -> Result<RmsProp> {
    RmsProp::new(lr, config.rms_decay, config.rms_eps)
}

fn ensure_finite(value: f64, component: &'static str, epoch: usize, step: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence { component, epoch, step })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainReport {
    pub epochs: usize,
    /// Mean cross-entropy over the last epoch's batches.
    pub final_loss: f64,
    /// Old-head accuracy on the whole labeled split after training.
    pub train_accuracy: f64,
}

/// Fraction of labeled examples whose old-head argmax equals their class.
pub fn labeled_accuracy(model: &Model, labeled: &LabeledSet) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty labeled set".into()));
    }
    let pass = model.forward(labeled.features())?;
    let hits = argmax_rows(&pass.z_l)
        .iter()
        .zip(labeled.labels())
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / labeled.len() as f64)
}

/// Cross-entropy on the old head. Only the backbone and the old head move.
pub fn pretrain(model: &mut Model, labeled: &LabeledSet, config: &RunConfig) -> Result<PretrainReport> {
    if labeled.is_empty() {
        return Err(Error::InvalidInput("pretraining needs labeled examples".into()));
    }
    let mut opt = optimizer(config.pretrain_lr, config)?;
    let mut final_loss = f64::NAN;
    for epoch in 1..=config.pretrain_epochs {
        let batches = epoch_batches(labeled.len(), config.batch_labeled, config.seed, epoch as u64, Domain::LabeledBatches);
        let mut total = 0.0;
        for (step, idx) in batches.iter().enumerate() {
            let x = labeled.features().select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| labeled.labels()[i]).collect();
            let pass = model.forward(&x)?;
            let ce = cross_entropy(&pass.z_l, &y).map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence { component: "cross-entropy", epoch, step },
                other => other,
            })?;
            ensure_finite(ce.value, "cross-entropy", epoch, step)?;
            let d_zu = Mat::zeros(pass.z_u.rows(), pass.z_u.cols());
            let mut grads = model.backward(&x, &pass, &ce.grad, &d_zu)?;
            grads.zero_group(ParamGroup::NewHead);
            if !grads.is_finite() {
                return Err(Error::Divergence { component: "gradient", epoch, step });
            }
            opt.step(&mut model.params, &grads)?;
            total += ce.value;
        }
        final_loss = total / batches.len() as f64;
    }
    Ok(PretrainReport {
        epochs: config.pretrain_epochs,
        final_loss,
        train_accuracy: labeled_accuracy(model, labeled)?,
    })
}

/// Replaces the new-class head with one seeded from the run seed.
pub fn attach_new_head(model: &mut Model, new_classes: usize, config: &RunConfig) -> Result<()> {
    let seed = rng::stream(config.seed, Domain::Init, 1).random();
    model.attach_new_head(new_classes, config.new_head_scale, seed)
}

fn argmax_rows(m: &Mat) -> Vec<usize> {
    m.iter_rows()
        .map(|r| {
            r.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map_or(0, |(j, _)| j)
        })
        .collect()
}

/// New-head softmax for every row of `x`.
pub fn predict_probs(model: &Model, x: &Mat) -> Result<Mat> {
    softmax_rows(&model.forward(x)?.z_u)
}

/// Predicted cluster (new-head argmax) for every row of `x`.
pub fn predict_clusters(model: &Model, x: &Mat) -> Result<Vec<usize>> {
    Ok(argmax_rows(&model.forward(x)?.z_u))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub acc: f64,
    pub nmi: f64,
    pub predictions: Vec<usize>,
    /// Best cluster-to-class mapping behind `acc`.
    pub mapping: Vec<usize>,
}

/// ACC and NMI of the new-head argmax against the hidden truth.
pub fn evaluate(model: &Model, unlabeled: &UnlabeledSet, truth: &HiddenTruth) -> Result<Evaluation> {
    evaluate_predictions(predict_clusters(model, unlabeled.features())?, truth.all())
}

fn evaluate_predictions(predictions: Vec<usize>, labels: &[usize]) -> Result<Evaluation> {
    Ok(Evaluation {
        acc: metrics::acc(&predictions, labels)?,
        nmi: metrics::nmi(&predictions, labels)?,
        mapping: metrics::best_mapping(&predictions, labels)?,
        predictions,
    })
}

/// `id,cluster,class` rows for every unlabeled example.
pub fn write_predictions<W: Write>(mut out: W, eval: &Evaluation, truth: &HiddenTruth) -> std::io::Result<()> {
    writeln!(out, "id,cluster,class")?;
    for (id, (p, t)) in eval.predictions.iter().zip(truth.all()).enumerate() {
        writeln!(out, "{id},{p},{t}")?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Epoch means of `L_ppl`, `λ1·L_pll` and `λ2·L_opm`, the three terms of
    /// the objective as they enter it.
    pub loss_ppl: f64,
    pub loss_pll: f64,
    pub loss_opm: f64,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    /// Anchors selected from the end-of-epoch predictions. They are the
    /// anchors the next epoch mixes with.
    pub anchor_count: usize,
    /// Fraction of anchors whose pseudo-label maps to their true class under
    /// the mapping that defines `acc`.
    pub anchor_acc: Option<f64>,
    pub labeled_mixes: usize,
    pub anchor_mixes: usize,
}

impl EpochReport {
    pub fn metrics_row(&self) -> MetricsRow {
        MetricsRow {
            epoch: self.epoch,
            acc: self.acc,
            nmi: self.nmi,
            loss_ppl: self.loss_ppl,
            loss_pll: self.loss_pll,
            loss_opm: self.loss_opm,
            anchor_count: self.anchor_count,
            anchor_acc: self.anchor_acc,
        }
    }
}

pub fn write_metrics(path: &Path, reports: &[EpochReport]) -> Result<()> {
    let rows: Vec<MetricsRow> = reports.iter().map(EpochReport::metrics_row).collect();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    metrics::write_metrics_csv(&mut w, &rows)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn anchor_accuracy(anchors: &AnchorSet, eval: &Evaluation, labels: &[usize]) -> Option<f64> {
    if anchors.is_empty() {
        return None;
    }
    let hits = anchors
        .iter()
        .filter(|a| eval.mapping[a.class] == labels[a.id])
        .count();
    Some(hits as f64 / anchors.len() as f64)
}

/// Total gradient of one clustering step together with its loss terms.
struct Step {
    grads: Params,
    ppl: f64,
    pll: f64,
    opm: f64,
    labeled_mixes: usize,
    anchor_mixes: usize,
}

struct Ctx<'a> {
    labeled: &'a LabeledSet,
    unlabeled: &'a UnlabeledSet,
    config: &'a RunConfig,
}

fn cluster_step(
    model: &Model,
    ctx: &Ctx<'_>,
    batch: &[usize],
    anchors: &AnchorSet,
    epoch: usize,
    step: usize,
    mix_rng: &mut impl Rng,
) -> Result<Step> {
    let cfg = ctx.config;
    let x = ctx.unlabeled.features().select_rows(batch);
    let pass = model.forward(&x)?;
    if !pass.z_u.is_finite() {
        return Err(Error::Divergence { component: "logits", epoch, step });
    }

    let s = similarity_matrix(&pass.z_u)?;
    let ppl = ppl_loss(&s, &pair_labels(&s, cfg.theta1))?;
    ensure_finite(ppl.value, "pseudo-pair loss", epoch, step)?;
    let assigned = pseudo_labels_from_probs(s.probs(), cfg.theta2);
    let pll = pll_loss(&pass.z_u, &assigned)?;
    ensure_finite(pll.value, "pseudo-label loss", epoch, step)?;

    let mut d_zu = ppl.grad;
    let mut pll_grad = pll.grad;
    pll_grad.scale(cfg.lambda1);
    d_zu.add_assign(&pll_grad)?;
    let d_zl = Mat::zeros(pass.z_l.rows(), pass.z_l.cols());
    let mut grads = model.backward(&x, &pass, &d_zl, &d_zu)?;

    let (mut opm_value, mut labeled_mixes, mut anchor_mixes) = (0.0, 0, 0);

    if cfg.openmix && epoch >= cfg.labeled_mix_epoch {
        let plan = MixPlan {
            size: cfg.batch_mixed,
            epsilon: cfg.epsilon,
            with_anchors: epoch >= cfg.anchor_mix_epoch,
            anchor_label: cfg.anchor_label,
        };
        let mixed = build_mixed_batch(
            &plan,
            ctx.labeled,
            ctx.unlabeled,
            anchors,
            |xu| predict_probs(model, xu),
            mix_rng,
        )?;
        let m_pass = model.forward(&mixed.inputs)?;
        let opm = opm_loss(&m_pass.z_l, &m_pass.z_u, &mixed.targets, cfg.opm_softmax).map_err(|e| match e {
            Error::NonFinite(_) => Error::Divergence { component: "mixing loss", epoch, step },
            other => other,
        })?;
        ensure_finite(opm.value, "mixing loss", epoch, step)?;
        let mut m_grads = model.backward(&mixed.inputs, &m_pass, &opm.d_zl, &opm.d_zu)?;
        m_grads.scale(cfg.lambda2);
        grads.add_assign(&m_grads)?;
        opm_value = cfg.lambda2 * opm.value;
        anchor_mixes = mixed.sources.iter().filter(|s| **s == MixSource::Anchor).count();
        labeled_mixes = mixed.len() - anchor_mixes;
    }

    if !grads.is_finite() {
        return Err(Error::Divergence { component: "gradient", epoch, step });
    }
    Ok(Step {
        grads,
        ppl: ppl.value,
        pll: cfg.lambda1 * pll.value,
        opm: opm_value,
        labeled_mixes,
        anchor_mixes,
    })
}

/// Clustering stage. Each step combines one unlabeled batch's
/// `L_ppl + λ1·L_pll` with, once mixing is active, one mixed batch's
/// `λ2·L_opm`, and takes a single optimizer step. Backbone gradients are
/// zeroed during the first `freeze_epochs` epochs.
///
/// `truth` only feeds the per-epoch ACC, NMI and anchor accuracy; passing
/// `None` leaves the training trajectory unchanged.
pub fn cluster_train(
    model: &mut Model,
    labeled: &LabeledSet,
    unlabeled: &UnlabeledSet,
    truth: Option<&HiddenTruth>,
    config: &RunConfig,
) -> Result<Vec<EpochReport>> {
    if unlabeled.len() < 2 {
        return Err(Error::InvalidInput("clustering needs at least 2 unlabeled examples".into()));
    }
    if model.arch().new_classes != unlabeled.classes() || model.arch().old_classes != labeled.classes() {
        return Err(Error::shape(
            format!("{}+{} classes", labeled.classes(), unlabeled.classes()),
            format!("{}+{}", model.arch().old_classes, model.arch().new_classes),
        ));
    }
    let ctx = Ctx { labeled, unlabeled, config };
    let mut opt = optimizer(config.lr, config)?;
    let pool_probs = |model: &Model, epoch: usize, step: usize| {
        predict_probs(model, unlabeled.features()).map_err(|e| match e {
            Error::NonFinite(_) => Error::Divergence { component: "predictions", epoch, step },
            other => other,
        })
    };
    let mut anchors = select_anchors(&pool_probs(model, 0, 0)?, config.theta2);
    let mut reports = Vec::with_capacity(config.cluster_epochs);

    for epoch in 1..=config.cluster_epochs {
        let mut mix_rng = rng::stream(config.seed, Domain::Mixing, epoch as u64);
        let batches: Vec<Vec<usize>> =
            epoch_batches(unlabeled.len(), config.batch_unlabeled, config.seed, epoch as u64, Domain::UnlabeledBatches)
                .into_iter()
                .filter(|b| b.len() >= 2)
                .collect();
        let frozen = epoch <= config.freeze_epochs;
        let (mut ppl, mut pll, mut opm) = (0.0, 0.0, 0.0);
        let (mut labeled_mixes, mut anchor_mixes) = (0, 0);
        for (step, batch) in batches.iter().enumerate() {
            let mut s = cluster_step(model, &ctx, batch, &anchors, epoch, step, &mut mix_rng)?;
            if frozen {
                s.grads.zero_group(ParamGroup::Backbone);
            }
            opt.step(&mut model.params, &s.grads)?;
            ppl += s.ppl;
            pll += s.pll;
            opm += s.opm;
            labeled_mixes += s.labeled_mixes;
            anchor_mixes += s.anchor_mixes;
        }
        let steps = batches.len().max(1) as f64;

        let probs = pool_probs(model, epoch, batches.len())?;
        anchors = select_anchors(&probs, config.theta2);
        let (acc, nmi, anchor_acc) = match truth {
            Some(truth) => {
                let labels = truth.all();
                let eval = evaluate_predictions(argmax_rows(&probs), labels)?;
                let anchor_acc = anchor_accuracy(&anchors, &eval, labels);
                (Some(eval.acc), Some(eval.nmi), anchor_acc)
            }
            None => (None, None, None),
        };
        reports.push(EpochReport {
            epoch,
            loss_ppl: ppl / steps,
            loss_pll: pll / steps,
            loss_opm: opm / steps,
            acc,
            nmi,
            anchor_count: anchors.len(),
            anchor_acc,
            labeled_mixes,
            anchor_mixes,
        });
    }
    Ok(reports)
}

/// Both stages on one dataset: pretrain, attach a fresh new head, cluster.
pub fn run(
    labeled: &LabeledSet,
    unlabeled: &UnlabeledSet,
    truth: Option<&HiddenTruth>,
    config: &RunConfig,
) -> Result<(Model, PretrainReport, Vec<EpochReport>)> {
    let mut model = init_model(config, labeled.input_dim(), labeled.classes(), unlabeled.classes())?;
    let pre = pretrain(&mut model, labeled, config)?;
    attach_new_head(&mut model, unlabeled.classes(), config)?;
    let reports = cluster_train(&mut model, labeled, unlabeled, truth, config)?;
    Ok((model, pre, reports))
}
