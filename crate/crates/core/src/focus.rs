//! Focus parameters: scalar functions of a model's parameters evaluated at
//! one covariate row, with their gradients.

use nalgebra::DVector;

use crate::design::CandidateSpec;
use crate::error::{FicError, Result};
use crate::family::GlmFamily;
use crate::fit::FitResult;

#[derive(Debug, Clone, PartialEq)]
pub enum FocusKind {
    /// `xᵀβ`
    LinearPredictor,
    /// Inverse link of the linear predictor.
    MeanResponse,
    /// `P(Y > threshold | x)` for count or binary responses.
    Exceedance { threshold: u64 },
    /// `wᵀβ` over the wide slots; the evaluation point is not used.
    CoefficientCombination { weights: Vec<f64> },
}

/// A focus kind with its evaluation points (wide-design rows) and their
/// relative importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusSpec {
    kind: FocusKind,
    eval_points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocusValue {
    pub mu_hat: f64,
    /// Gradient with respect to the fit's full parameter vector.
    pub gradient: DVector<f64>,
}

impl FocusSpec {
    pub fn new(kind: FocusKind, eval_points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if eval_points.is_empty() {
            return Err(FicError::Focus("at least one evaluation point is needed".into()));
        }
        if weights.len() != eval_points.len() {
            return Err(FicError::InvalidWeights(format!(
                "{} weights for {} points",
                weights.len(),
                eval_points.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(FicError::InvalidWeights("weights must be finite and nonnegative".into()));
        }
        if !(weights.iter().sum::<f64>() > 0.0) {
            return Err(FicError::InvalidWeights("weights sum to zero".into()));
        }
        let width = eval_points[0].len();
        if eval_points.iter().any(|p| p.len() != width) {
            return Err(FicError::Focus("evaluation points differ in width".into()));
        }
        if let FocusKind::CoefficientCombination { weights } = &kind {
            if weights.len() != width {
                return Err(FicError::Focus(format!(
                    "coefficient weights have length {}, design width is {width}",
                    weights.len()
                )));
            }
        }
        Ok(Self {
            kind,
            eval_points,
            weights,
        })
    }

    /// One evaluation point with unit weight.
    pub fn single(kind: FocusKind, point: Vec<f64>) -> Result<Self> {
        Self::new(kind, vec![point], vec![1.0])
    }

    /// `wᵀβ` as a single-point focus.
    pub fn coefficient_combination(weights: Vec<f64>) -> Result<Self> {
        let point = weights.clone();
        Self::single(FocusKind::CoefficientCombination { weights }, point)
    }

    pub fn kind(&self) -> &FocusKind {
        &self.kind
    }

    pub fn point_count(&self) -> usize {
        self.eval_points.len()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.eval_points[k]
    }

    pub fn width(&self) -> usize {
        self.eval_points[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weights scaled to sum to one.
    pub fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Whether the gradient has a closed form.
    pub fn has_analytic_gradient(&self) -> bool {
        !matches!(self.kind, FocusKind::Exceedance { .. })
    }
}

/// Focus value and gradient of a fitted candidate at one evaluation point.
///
/// Off slots of the candidate are held at zero, so only the on-slot entries
/// of the point enter.
pub fn eval_focus(
    spec: &FocusSpec,
    point_index: usize,
    fit: &FitResult,
    candidate: &CandidateSpec,
) -> Result<FocusValue> {
    let (map, family) = prepare(spec, point_index, fit, candidate)?;
    let theta = &fit.theta_hat;
    let mu_hat = map.value(family, theta);
    let gradient = match &spec.kind {
        FocusKind::Exceedance { .. } => map.chain_gradient(family, theta, 1.0),
        _ => map.analytic_gradient(family, theta),
    };
    if !mu_hat.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(FicError::Focus("non-finite focus value or gradient".into()));
    }
    Ok(FocusValue { mu_hat, gradient })
}

/// Largest relative gradient discrepancy at one point.
///
/// For closed-form kinds this compares against central differences in each
/// parameter; for exceedance it compares its difference quotients at two
/// step sizes.
pub fn focus_gradient_check(
    spec: &FocusSpec,
    point_index: usize,
    fit: &FitResult,
    candidate: &CandidateSpec,
) -> Result<f64> {
    let (map, family) = prepare(spec, point_index, fit, candidate)?;
    let theta = &fit.theta_hat;
    let (reference, fd) = if spec.has_analytic_gradient() {
        (
            map.analytic_gradient(family, theta),
            map.fd_gradient(family, theta, 1.0),
        )
    } else {
        (
            map.chain_gradient(family, theta, 1.0),
            map.chain_gradient(family, theta, 10.0),
        )
    };
    Ok(reference
        .iter()
        .zip(fd.iter())
        .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
        .fold(0.0, f64::max))
}

struct FocusMap {
    kind: FocusKind,
    /// Row entries (or combination weights) for the candidate's coefficients.
    row: Vec<f64>,
}

fn prepare(
    spec: &FocusSpec,
    point_index: usize,
    fit: &FitResult,
    candidate: &CandidateSpec,
) -> Result<(FocusMap, GlmFamily)> {
    if point_index >= spec.point_count() {
        return Err(FicError::Focus(format!("no evaluation point {point_index}")));
    }
    let point = spec.point(point_index);
    if point.len() != candidate.indicator().len() {
        return Err(FicError::Focus(format!(
            "evaluation point has width {}, design has {}",
            point.len(),
            candidate.indicator().len()
        )));
    }
    let family = fit.family;
    if fit.coefficient_count() != candidate.coefficient_count() {
        return Err(FicError::Focus("fit does not belong to candidate".into()));
    }
    let source: &[f64] = match &spec.kind {
        FocusKind::CoefficientCombination { weights } => weights,
        _ => point,
    };
    let row = candidate.on_slots().iter().map(|&i| source[i]).collect();
    if let FocusKind::Exceedance { .. } = spec.kind {
        if !family.is_discrete() {
            return Err(FicError::Focus(
                "exceedance focus needs a count or binary family".into(),
            ));
        }
    }
    Ok((
        FocusMap {
            kind: spec.kind.clone(),
            row,
        },
        family,
    ))
}

impl FocusMap {
    fn eta(&self, theta: &DVector<f64>) -> f64 {
        self.row.iter().enumerate().map(|(j, x)| x * theta[j]).sum()
    }

    fn value(&self, family: GlmFamily, theta: &DVector<f64>) -> f64 {
        self.value_at_eta(family, self.eta(theta))
    }

    fn value_at_eta(&self, family: GlmFamily, eta: f64) -> f64 {
        match &self.kind {
            FocusKind::LinearPredictor | FocusKind::CoefficientCombination { .. } => eta,
            FocusKind::MeanResponse => family.mean(eta),
            FocusKind::Exceedance { threshold } => match family {
                GlmFamily::PoissonLog => poisson_upper_tail(eta.exp(), *threshold),
                GlmFamily::BinomialLogit => {
                    if *threshold == 0 {
                        family.mean(eta)
                    } else {
                        0.0
                    }
                }
                GlmFamily::GaussianIdentity => f64::NAN,
            },
        }
    }

    fn analytic_gradient(&self, family: GlmFamily, theta: &DVector<f64>) -> DVector<f64> {
        let factor = match self.kind {
            FocusKind::MeanResponse => family.mean_deriv(self.eta(theta)),
            _ => 1.0,
        };
        let mut g = DVector::zeros(theta.len());
        for (j, x) in self.row.iter().enumerate() {
            g[j] = factor * x;
        }
        g
    }

    /// Every kind depends on the parameters through `η = xᵀθ` only, so the
    /// gradient is `(dμ/dη) x` with `dμ/dη` from a central difference in `η`,
    /// step `scale * 1e-6 * (1 + |η|)`. Differencing in `η` keeps the step
    /// independent of how the design columns are scaled.
    fn chain_gradient(&self, family: GlmFamily, theta: &DVector<f64>, scale: f64) -> DVector<f64> {
        let eta = self.eta(theta);
        let h = scale * 1e-6 * (1.0 + eta.abs());
        let slope = (self.value_at_eta(family, eta + h) - self.value_at_eta(family, eta - h)) / (2.0 * h);
        let mut g = DVector::zeros(theta.len());
        for (j, x) in self.row.iter().enumerate() {
            g[j] = slope * x;
        }
        g
    }

    /// Central differences with step `scale * 1e-6 * (1 + |θ_j|)`.
    fn fd_gradient(&self, family: GlmFamily, theta: &DVector<f64>, scale: f64) -> DVector<f64> {
        let mut g = DVector::zeros(theta.len());
        let mut work = theta.clone();
        for j in 0..theta.len() {
            let h = scale * 1e-6 * (1.0 + theta[j].abs());
            work[j] = theta[j] + h;
            let up = self.value(family, &work);
            work[j] = theta[j] - h;
            let down = self.value(family, &work);
            work[j] = theta[j];
            g[j] = (up - down) / (2.0 * h);
        }
        g
    }
}

/// `P(Y > threshold)` for `Y ~ Poisson(lambda)`.
///
/// Sums the smaller side of the distribution (the lower tail when the
/// threshold is below the mean, the upper tail otherwise), adding terms in
/// increasing order of magnitude.
pub fn poisson_upper_tail(lambda: f64, threshold: u64) -> f64 {
    if !(lambda > 0.0) {
        return 0.0;
    }
    let ln_lambda = lambda.ln();
    let log_pmf = |k: u64, ln_fact: f64| -lambda + k as f64 * ln_lambda - ln_fact;

    if (threshold as f64) < lambda {
        // terms increase with k up to the threshold
        let mut ln_fact = 0.0;
        let mut terms = Vec::with_capacity(threshold as usize + 1);
        for k in 0..=threshold {
            if k > 0 {
                ln_fact += (k as f64).ln();
            }
            terms.push(log_pmf(k, ln_fact).exp());
        }
        let lower: f64 = terms.iter().sum();
        (1.0 - lower).clamp(0.0, 1.0)
    } else {
        let mut ln_fact: f64 = (1..=threshold + 1).map(|j| (j as f64).ln()).sum();
        let mut k = threshold + 1;
        let mut terms = Vec::new();
        loop {
            let t = log_pmf(k, ln_fact).exp();
            terms.push(t);
            let partial: f64 = terms[0] * 2.0;
            if t <= 1e-18 * partial || t == 0.0 || terms.len() > 100_000 {
                break;
            }
            k += 1;
            ln_fact += (k as f64).ln();
        }
        // terms decrease with k beyond the mean
        terms.iter().rev().sum::<f64>().clamp(0.0, 1.0)
    }
}
