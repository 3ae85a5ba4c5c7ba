//! Self-labeling clustering objective on the new-class head.
//!
//! * pseudo-pair learning: cosine similarities between softmax outputs are
//!   thresholded into same/different pair labels and fitted with binary
//!   cross-entropy;
//! * pseudo-label learning: confident predictions become one-hot targets for
//!   a cross-entropy term.
//!
//! Every loss here returns its value and the gradient w.r.t. the logits it
//! was given. Thresholded labels are constants: no gradient flows through
//! them.

use crate::error::{Error, Result};
use crate::numcore::{dot, log_softmax, norm2, softmax_backward, softmax_rows, Mat};

/// Similarities are clamped into `[S_CLAMP, 1 - S_CLAMP]` before any log.
pub const S_CLAMP: f64 = 1e-7;

/// A scalar loss and its gradient w.r.t. the logits.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Mat,
}

impl LossGrad {
    pub fn zero(rows: usize, cols: usize) -> Self {
        LossGrad {
            value: 0.0,
            grad: Mat::zeros(rows, cols),
        }
    }
}

/// Cosine similarities between the softmax outputs of a batch.
#[derive(Clone, Debug)]
pub struct SimilarityMatrix {
    probs: Mat,
    norms: Vec<f64>,
    s: Mat,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.s.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.s.rows() == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s.get(i, j)
    }

    pub fn as_mat(&self) -> &Mat {
        &self.s
    }

    /// Softmax outputs the similarities were computed from.
    pub fn probs(&self) -> &Mat {
        &self.probs
    }
}

pub fn similarity_matrix(z_u: &Mat) -> Result<SimilarityMatrix> {
    if z_u.rows() < 2 {
        return Err(Error::InvalidInput(format!(
            "pseudo-pair learning needs at least 2 examples, got {}",
            z_u.rows()
        )));
    }
    let probs = softmax_rows(z_u)?;
    let n = probs.rows();
    let norms: Vec<f64> = probs.iter_rows().map(norm2).collect();
    let mut s = Mat::zeros(n, n);
    for i in 0..n {
        s.set(i, i, 1.0);
        for j in 0..i {
            let v = (dot(probs.row(i), probs.row(j)) / (norms[i] * norms[j])).clamp(0.0, 1.0);
            s.set(i, j, v);
            s.set(j, i, v);
        }
    }
    Ok(SimilarityMatrix { probs, norms, s })
}

/// Binary pair labels: `W[i][j] = 1` iff `S[i][j] >= θ1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairLabels {
    n: usize,
    w: Vec<bool>,
}

impl PairLabels {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.w[i * self.n + j]
    }

    pub fn positives(&self) -> usize {
        self.w.iter().filter(|&&b| b).count()
    }
}

pub fn pair_labels(s: &SimilarityMatrix, theta1: f64) -> PairLabels {
    PairLabels {
        n: s.len(),
        w: s.s.as_slice().iter().map(|&v| v >= theta1).collect(),
    }
}

/// Pairwise binary cross-entropy averaged over all `n²` ordered pairs,
/// diagonal included.
pub fn ppl_loss(s: &SimilarityMatrix, w: &PairLabels) -> Result<LossGrad> {
    let n = s.len();
    if w.len() != n {
        return Err(Error::shape(format!("{n}x{n} pair labels"), format!("{0}x{0}", w.len())));
    }
    let c = s.probs.cols();
    let scale = 1.0 / (n * n) as f64;

    // dL/dS, zero where the clamp is active.
    let mut d_s = Mat::zeros(n, n);
    let mut value = 0.0;
    for i in 0..n {
        for j in 0..n {
            let raw = s.get(i, j);
            let clamped = raw.clamp(S_CLAMP, 1.0 - S_CLAMP);
            let positive = w.get(i, j);
            value -= if positive { clamped.ln() } else { (1.0 - clamped).ln() };
            if raw > S_CLAMP && raw < 1.0 - S_CLAMP {
                let g = if positive { -1.0 / clamped } else { 1.0 / (1.0 - clamped) };
                d_s.set(i, j, g * scale);
            }
        }
    }
    value *= scale;

    // S_ij = u_i·u_j with u = p/|p|, so ∂S_ij/∂p_i = (u_j − S_ij u_i)/|p_i|.
    let units: Vec<Vec<f64>> = (0..n)
        .map(|i| s.probs.row(i).iter().map(|p| p / s.norms[i]).collect())
        .collect();
    let mut grad = Mat::zeros(n, c);
    let mut d_p = vec![0.0; c];
    for i in 0..n {
        d_p.fill(0.0);
        for j in 0..n {
            if j == i {
                continue;
            }
            let g = d_s.get(i, j) + d_s.get(j, i);
            if g == 0.0 {
                continue;
            }
            let sij = s.get(i, j);
            for k in 0..c {
                d_p[k] += g * (units[j][k] - sij * units[i][k]);
            }
        }
        for v in &mut d_p {
            *v /= s.norms[i];
        }
        softmax_backward(s.probs.row(i), &d_p, grad.row_mut(i));
    }
    Ok(LossGrad { value, grad })
}

/// Confident-class assignment: `Some(j)` iff `softmax(z)[j] >= θ2`.
///
/// With `θ2 > 0.5` at most one class can pass, so the assignment is the
/// one-hot pseudo-label. For smaller thresholds the arg-max among passing
/// classes is returned.
pub fn pseudo_labels_from_probs(probs: &Mat, theta2: f64) -> Vec<Option<usize>> {
    probs
        .iter_rows()
        .map(|p| {
            let (j, &max) = p
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty row");
            (max >= theta2).then_some(j)
        })
        .collect()
}

pub fn pseudo_labels(z_u: &Mat, theta2: f64) -> Result<Vec<Option<usize>>> {
    Ok(pseudo_labels_from_probs(&softmax_rows(z_u)?, theta2))
}

/// Cross-entropy on the assigned examples only, normalized by their count.
/// No assigned example means a zero loss and zero gradient.
pub fn pll_loss(z_u: &Mat, labels: &[Option<usize>]) -> Result<LossGrad> {
    if labels.len() != z_u.rows() {
        return Err(Error::shape(format!("{} pseudo-labels", z_u.rows()), labels.len()));
    }
    let assigned = labels.iter().filter(|l| l.is_some()).count();
    let mut out = LossGrad::zero(z_u.rows(), z_u.cols());
    if assigned == 0 {
        return Ok(out);
    }
    let scale = 1.0 / assigned as f64;
    for (i, label) in labels.iter().enumerate() {
        let Some(class) = *label else { continue };
        if class >= z_u.cols() {
            return Err(Error::InvalidInput(format!("pseudo-label {class} out of range")));
        }
        let logp = log_softmax(z_u.row(i));
        out.value -= logp[class] * scale;
        for (g, lp) in out.grad.row_mut(i).iter_mut().zip(&logp) {
            *g = lp.exp() * scale;
        }
        out.grad.row_mut(i)[class] -= scale;
    }
    Ok(out)
}

/// `L_uc = L_ppl + λ1 · L_pll`.
pub fn uc_loss(ppl: f64, pll: f64, lambda1: f64) -> f64 {
    ppl + lambda1 * pll
}

/// Mean cross-entropy of labeled logits, used for pretraining.
pub fn cross_entropy(z: &Mat, labels: &[usize]) -> Result<LossGrad> {
    if labels.len() != z.rows() || labels.is_empty() {
        return Err(Error::shape(format!("{} labels", z.rows()), labels.len()));
    }
    if !z.is_finite() {
        return Err(Error::NonFinite("cross-entropy logits"));
    }
    let targets: Vec<Option<usize>> = labels.iter().map(|&c| Some(c)).collect();
    pll_loss(z, &targets)
}
