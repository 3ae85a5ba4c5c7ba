//! Label-error analysis for mixed samples.
//!
//! The error of a label is its L1 distance to the ground truth. Mixing two
//! unlabeled samples can make that error larger than the error of either
//! input, while mixing a cleanly labeled old-class sample with an unlabeled
//! one shrinks the unlabeled error by exactly `η Σ|y_b − ŷ_b|`, because the
//! labeled side contributes nothing in either class block.
//!
//! These functions work on the raw mixing weight `η`. The mixing module uses
//! `η* = max(η, 1 − η)`; passing `η*` here is equally valid.

use std::fmt;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Tolerance used when comparing two routes to the same quantity.
pub const AGREEMENT_TOL: f64 = 1e-12;

/// `E(Y, Ŷ) = Σ_i |y[i] − ŷ[i]|` over classes.
pub fn label_error(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::shape(y.len(), y_hat.len()));
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum())
}

/// Two unlabeled samples `a`, `b` over the new classes and a labeled sample
/// `c` over the old classes, with a mixing weight on the first of each pair.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorCase {
    pub y_a: Vec<f64>,
    pub y_hat_a: Vec<f64>,
    pub y_b: Vec<f64>,
    pub y_hat_b: Vec<f64>,
    pub y_c: Vec<f64>,
    pub y_hat_c: Vec<f64>,
    pub eta: f64,
}

impl ErrorCase {
    fn new_classes(&self) -> usize {
        self.y_b.len()
    }

    fn check_new_block(&self) -> Result<()> {
        let n = self.new_classes();
        for v in [&self.y_a, &self.y_hat_a, &self.y_hat_b] {
            if v.len() != n {
                return Err(Error::shape(format!("{n} new classes"), v.len()));
            }
        }
        Ok(())
    }

    fn check_old_block(&self) -> Result<()> {
        if self.y_c.len() != self.y_hat_c.len() {
            return Err(Error::shape(self.y_c.len(), self.y_hat_c.len()));
        }
        if self.y_c != self.y_hat_c {
            return Err(Error::InvalidInput(
                "labeled sample must have its pseudo-label equal to its label".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixupError {
    /// `E(M_ab, M̂_ab)`.
    pub mixed: f64,
    /// `E(Y_b, Ŷ_b) − E(M_ab, M̂_ab)`; negative means mixing made it worse.
    pub difference: f64,
}

/// Error of the MixUp of `a` and `b` with weight `η` on `a`.
pub fn mixup_error(case: &ErrorCase) -> Result<MixupError> {
    case.check_new_block()?;
    let eta = case.eta;
    let mixed: f64 = (0..case.new_classes())
        .map(|i| {
            let da = case.y_a[i] - case.y_hat_a[i];
            let db = case.y_b[i] - case.y_hat_b[i];
            (eta * da + (1.0 - eta) * db).abs()
        })
        .sum();
    let unmixed = label_error(&case.y_b, &case.y_hat_b)?;
    Ok(MixupError {
        mixed,
        difference: unmixed - mixed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpenmixError {
    /// `Σ_i |(1 − η)(y_b[i] − ŷ_b[i])|` over new classes.
    pub reduced: f64,
    /// The mixed-label error evaluated term by term on the extended
    /// `C^l + C^u` vectors.
    pub general: f64,
}

/// Error of mixing labeled `c` with unlabeled `b`, weight `η` on `c`.
pub fn openmix_error(case: &ErrorCase) -> Result<OpenmixError> {
    case.check_old_block()?;
    if case.y_hat_b.len() != case.y_b.len() {
        return Err(Error::shape(case.y_b.len(), case.y_hat_b.len()));
    }
    let eta = case.eta;
    let reduced = case
        .y_b
        .iter()
        .zip(&case.y_hat_b)
        .map(|(y, p)| ((1.0 - eta) * (y - p)).abs())
        .sum();

    let c_l = case.y_c.len();
    let extend_c = |v: &[f64]| {
        let mut out = v.to_vec();
        out.resize(c_l + case.y_b.len(), 0.0);
        out
    };
    let extend_b = |v: &[f64]| {
        let mut out = vec![0.0; c_l];
        out.extend_from_slice(v);
        out
    };
    let (yc, pc) = (extend_c(&case.y_c), extend_c(&case.y_hat_c));
    let (yb, pb) = (extend_b(&case.y_b), extend_b(&case.y_hat_b));
    let general = (0..yc.len())
        .map(|i| (eta * (yc[i] - pc[i]) + (1.0 - eta) * (yb[i] - pb[i])).abs())
        .sum();
    Ok(OpenmixError { reduced, general })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inequality {
    /// `E(Y_b, Ŷ_b) − E(P_cb, P̂_cb)` computed from the mixed labels.
    pub direct: f64,
    /// `Σ_i η |y_b[i] − ŷ_b[i]|`.
    pub closed_form: f64,
    pub holds: bool,
}

impl Inequality {
    pub fn routes_agree(&self) -> bool {
        (self.direct - self.closed_form).abs() <= AGREEMENT_TOL
    }
}

/// Checks that mixing with a clean labeled sample never increases the
/// unlabeled sample's label error.
pub fn verify_inequality(case: &ErrorCase) -> Result<Inequality> {
    let mixed = openmix_error(case)?;
    let direct = label_error(&case.y_b, &case.y_hat_b)? - mixed.general;
    let closed_form = case
        .y_b
        .iter()
        .zip(&case.y_hat_b)
        .map(|(y, p)| case.eta * (y - p).abs())
        .sum();
    Ok(Inequality {
        direct,
        closed_form,
        holds: direct >= -AGREEMENT_TOL,
    })
}

/// Single new class, `η = 0.6`, `y_a − ŷ_a = −0.8`, `y_b − ŷ_b = 0.2`:
/// MixUp's error difference is `0.2 − |0.6·(−0.8) + 0.4·0.2| = −0.2`.
pub fn reference_counterexample() -> ErrorCase {
    ErrorCase {
        y_a: vec![0.2],
        y_hat_a: vec![1.0],
        y_b: vec![1.0],
        y_hat_b: vec![0.8],
        y_c: vec![1.0],
        y_hat_c: vec![1.0],
        eta: 0.6,
    }
}

fn one_hot_random(classes: usize, rng: &mut impl Rng) -> Vec<f64> {
    crate::datasets::one_hot(rng.random_range(0..classes), classes)
}

/// Uniform point on the simplex from normalized exponential draws.
pub fn random_simplex(classes: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..classes).map(|_| rng.sample(Exp1)).collect();
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

/// Random one-hot truths, uniform simplex pseudo-labels for the unlabeled
/// samples, a clean labeled sample and a uniform `η`.
pub fn random_case(old_classes: usize, new_classes: usize, rng: &mut impl Rng) -> ErrorCase {
    let y_c = one_hot_random(old_classes, rng);
    ErrorCase {
        y_a: one_hot_random(new_classes, rng),
        y_hat_a: random_simplex(new_classes, rng),
        y_b: one_hot_random(new_classes, rng),
        y_hat_b: random_simplex(new_classes, rng),
        y_hat_c: y_c.clone(),
        y_c,
        eta: rng.random::<f64>(),
    }
}

/// Class counts drawn per case: old in `1..=8`, new in `2..=8`.
pub fn random_case_any_size(rng: &mut impl Rng) -> ErrorCase {
    let old = rng.random_range(1..=8);
    let new = rng.random_range(2..=8);
    random_case(old, new, rng)
}

/// Cases where MixUp increases the label error: the reference instance
/// first, then any found among `trials` random cases.
pub fn mixup_can_worsen(trials: usize, seed: u64) -> Vec<ErrorCase> {
    let mut witnesses = vec![reference_counterexample()];
    let mut rng = rng::stream(seed, Domain::Theory, 1);
    for _ in 0..trials {
        let case = random_case_any_size(&mut rng);
        if mixup_error(&case).is_ok_and(|m| m.difference < 0.0) {
            witnesses.push(case);
        }
    }
    witnesses
}

/// Summary printed by the `analyze` command.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisReport {
    pub samples: usize,
    pub seed: u64,
    pub counterexample: MixupError,
    pub mixup_negative: usize,
    pub holds: usize,
    pub routes_agree: usize,
    pub min_difference: f64,
    pub mean_difference: f64,
    pub max_route_gap: f64,
}

impl AnalysisReport {
    pub fn pass_rate(&self) -> f64 {
        if self.samples == 0 {
            1.0
        } else {
            self.holds as f64 / self.samples as f64
        }
    }
}

pub fn analyze(samples: usize, seed: u64) -> Result<AnalysisReport> {
    let counterexample = mixup_error(&reference_counterexample())?;
    let mut rng = rng::stream(seed, Domain::Theory, 0);
    let mut holds = 0;
    let mut routes_agree = 0;
    let mut mixup_negative = 0;
    let mut min_difference = f64::INFINITY;
    let mut sum = 0.0;
    let mut max_route_gap: f64 = 0.0;
    for _ in 0..samples {
        let case = random_case_any_size(&mut rng);
        let ineq = verify_inequality(&case)?;
        holds += ineq.holds as usize;
        routes_agree += ineq.routes_agree() as usize;
        max_route_gap = max_route_gap.max((ineq.direct - ineq.closed_form).abs());
        min_difference = min_difference.min(ineq.direct);
        sum += ineq.direct;
        if mixup_error(&case)?.difference < 0.0 {
            mixup_negative += 1;
        }
    }
    Ok(AnalysisReport {
        samples,
        seed,
        counterexample,
        mixup_negative,
        holds,
        routes_agree,
        min_difference: if samples == 0 { 0.0 } else { min_difference },
        mean_difference: if samples == 0 { 0.0 } else { sum / samples as f64 },
        max_route_gap,
    })
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "label-error analysis (samples = {}, seed = {})", self.samples, self.seed)?;
        writeln!(f, "mixup counterexample: eta = 0.6, deltas = -0.8 / 0.2")?;
        writeln!(f, "  mixed error          {:.12}", self.counterexample.mixed)?;
        writeln!(f, "  error difference     {:.12}", self.counterexample.difference)?;
        writeln!(
            f,
            "mixup worsened error  {} / {} random cases",
            self.mixup_negative, self.samples
        )?;
        writeln!(f, "labeled-mix inequality")?;
        writeln!(f, "  pass rate            {:.6} ({} / {})", self.pass_rate(), self.holds, self.samples)?;
        writeln!(f, "  routes agree         {} / {}", self.routes_agree, self.samples)?;
        writeln!(f, "  max route gap        {:e}", self.max_route_gap)?;
        writeln!(f, "  min difference       {:.12}", self.min_difference)?;
        write!(f, "  mean difference      {:.12}", self.mean_difference)
    }
}
