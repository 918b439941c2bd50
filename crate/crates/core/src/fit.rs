//! Maximum likelihood fitting of GLM candidates.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::design::{build_design, CandidateSpec, DesignTemplate};
use crate::error::{FicError, Result};
use crate::family::GlmFamily;
use crate::linalg::{check_full_rank, symmetrize_in_place, SpdSolver};

// |eta| beyond this puts a logistic probability within 1e-13 of 0 or 1.
const SEPARATION_ETA: f64 = 30.0;

/// Newton–Raphson controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub max_halvings: usize,
    pub loglik_rel_tol: f64,
    pub score_tol: f64,
    /// Logistic fits whose coefficients exceed this magnitude are declared separated.
    pub separation_limit: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            max_halvings: 30,
            loglik_rel_tol: 1e-12,
            score_tol: 1e-9,
            separation_limit: 1e3,
        }
    }
}

/// Maximum likelihood fit of one model.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub family: GlmFamily,
    /// Regression coefficients, followed by the error standard deviation for
    /// gaussian fits.
    pub theta_hat: DVector<f64>,
    pub loglik: f64,
    /// Row `i` is the score of observation `i` at `theta_hat`.
    pub score_contribs: DMatrix<f64>,
    /// `-(1/n)` times the Hessian of the log-likelihood at `theta_hat`.
    pub obs_info: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub fitted_means: Vec<f64>,
    // Each score is a polynomial in the response: u_i(y) = a_i + lin_i*y + quad_i*y^2.
    pub(crate) score_lin: DMatrix<f64>,
    pub(crate) score_quad: DMatrix<f64>,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.score_contribs.nrows()
    }

    /// Number of estimated parameters.
    pub fn param_count(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn coefficient_count(&self) -> usize {
        self.theta_hat.len() - self.family.extra_params()
    }

    pub fn coefficients(&self) -> DVector<f64> {
        self.theta_hat.rows(0, self.coefficient_count()).into_owned()
    }

    /// Error standard deviation of gaussian fits.
    pub fn sigma(&self) -> Option<f64> {
        match self.family {
            GlmFamily::GaussianIdentity => Some(self.theta_hat[self.theta_hat.len() - 1]),
            _ => None,
        }
    }

    /// Column sums of the score contributions.
    pub fn total_score(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.param_count());
        for row in self.score_contribs.row_iter() {
            s += row.transpose();
        }
        s
    }
}

pub fn aic(fit: &FitResult) -> f64 {
    -2.0 * fit.loglik + 2.0 * fit.param_count() as f64
}

pub fn bic(fit: &FitResult, n: usize) -> f64 {
    -2.0 * fit.loglik + (n as f64).ln() * fit.param_count() as f64
}

pub fn fit_mle(design: &DMatrix<f64>, response: &[f64], family: GlmFamily) -> Result<FitResult> {
    fit_mle_with(design, response, family, &FitOptions::default())
}

/// A candidate together with its fit.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: CandidateSpec,
    pub fit: FitResult,
}

pub fn fit_model(
    dataset: &Dataset,
    template: &DesignTemplate,
    spec: &CandidateSpec,
) -> Result<FittedModel> {
    Ok(FittedModel {
        spec: spec.clone(),
        fit: fit_candidate(dataset, template, spec)?,
    })
}

/// Builds the candidate's design from the template and fits it.
pub fn fit_candidate(
    dataset: &Dataset,
    template: &DesignTemplate,
    spec: &CandidateSpec,
) -> Result<FitResult> {
    let x = build_design(dataset, template, spec)?;
    fit_mle(&x, dataset.response(), spec.family())
}

pub fn fit_mle_with(
    design: &DMatrix<f64>,
    response: &[f64],
    family: GlmFamily,
    opts: &FitOptions,
) -> Result<FitResult> {
    if design.nrows() != response.len() {
        return Err(FicError::InvalidInput(format!(
            "design has {} rows, response has {}",
            design.nrows(),
            response.len()
        )));
    }
    family.validate_response(response)?;
    check_full_rank(design)?;
    match family {
        GlmFamily::GaussianIdentity => fit_gaussian(design, response),
        _ => fit_canonical(design, response, family, opts),
    }
}

fn canonical_loglik(x: &DMatrix<f64>, y: &[f64], family: GlmFamily, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| family.log_density(yi, e, 1.0))
        .sum()
}

fn fit_canonical(
    x: &DMatrix<f64>,
    y: &[f64],
    family: GlmFamily,
    opts: &FitOptions,
) -> Result<FitResult> {
    let (n, p) = x.shape();
    let mut beta = DVector::zeros(p);
    let mut ll = canonical_loglik(x, y, family, &beta);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        let eta = x * &beta;
        let mu = eta.map(|e| family.mean(e));
        let resid = DVector::from_fn(n, |i, _| y[i] - mu[i]);
        let score = x.transpose() * &resid;
        if score.amax() < opts.score_tol {
            converged = true;
            break;
        }
        let weights = mu.map(|m| family.variance(m));
        let hessian = weighted_gram(x, &weights);
        let step = SpdSolver::new(&hessian, "information matrix")?.solve_vec(&score);

        iterations += 1;
        // Newton decrement: twice the predicted log-likelihood gain.
        let decrement = score.dot(&step);
        if decrement <= opts.loglik_rel_tol * (1.0 + ll.abs()) {
            // at the optimum up to rounding; keep a full step unless it loses ground
            let trial = &beta + &step;
            let trial_ll = canonical_loglik(x, y, family, &trial);
            if trial_ll.is_finite() && trial_ll >= ll - 1e-12 * (1.0 + ll.abs()) {
                beta = trial;
            }
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = &beta + &step * t;
            let trial_ll = canonical_loglik(x, y, family, &trial);
            if trial_ll.is_finite() && trial_ll >= ll {
                accepted = Some((trial, trial_ll));
                break;
            }
            t *= 0.5;
        }
        let Some((next, next_ll)) = accepted else {
            // No ascent left in floating point: accept only when the score is small.
            converged = score.amax() <= 1e-6 * (1.0 + beta.amax());
            break;
        };
        beta = next;
        ll = next_ll;
        if family == GlmFamily::BinomialLogit && beta.amax() > opts.separation_limit {
            return Err(FicError::Separation {
                magnitude: beta.amax(),
            });
        }
    }
    if !converged {
        // Check the final iterate before giving up.
        let eta = x * &beta;
        let resid = DVector::from_fn(n, |i, _| y[i] - family.mean(eta[i]));
        let score = x.transpose() * &resid;
        if score.amax() < opts.score_tol {
            converged = true;
        } else {
            return Err(FicError::NonConvergence { iterations });
        }
    }
    if family == GlmFamily::BinomialLogit {
        // Fitted probabilities pinned at 0 or 1 mean the likelihood has no
        // finite maximizer; the iterations above only stalled on rounding.
        let eta_max = (x * &beta).amax();
        if eta_max > SEPARATION_ETA {
            return Err(FicError::Separation {
                magnitude: beta.amax(),
            });
        }
    }
    Ok(canonical_result(x, y, family, beta, iterations, converged))
}

fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let mut g = x.transpose() * xw;
    symmetrize_in_place(&mut g);
    g
}

fn canonical_result(
    x: &DMatrix<f64>,
    y: &[f64],
    family: GlmFamily,
    beta: DVector<f64>,
    iterations: usize,
    converged: bool,
) -> FitResult {
    let (n, p) = x.shape();
    let eta = x * &beta;
    let mu: Vec<f64> = eta.iter().map(|&e| family.mean(e)).collect();
    let mut scores = DMatrix::zeros(n, p);
    for i in 0..n {
        let r = y[i] - mu[i];
        for j in 0..p {
            scores[(i, j)] = r * x[(i, j)];
        }
    }
    let weights = DVector::from_iterator(n, mu.iter().map(|&m| family.variance(m)));
    let obs_info = weighted_gram(x, &weights) / n as f64;
    let loglik = canonical_loglik(x, y, family, &beta);
    FitResult {
        family,
        theta_hat: beta,
        loglik,
        score_contribs: scores,
        obs_info,
        converged,
        iterations,
        fitted_means: mu,
        score_lin: x.clone(),
        score_quad: DMatrix::zeros(n, p),
    }
}

fn fit_gaussian(x: &DMatrix<f64>, y: &[f64]) -> Result<FitResult> {
    let (n, p) = x.shape();
    let yv = DVector::from_column_slice(y);
    let mut gram = x.transpose() * x;
    symmetrize_in_place(&mut gram);
    let solver = SpdSolver::new(&gram, "X'X")?;
    let mut beta = solver.solve_vec(&(x.transpose() * &yv));
    // one step of iterative refinement
    let r = &yv - x * &beta;
    beta += solver.solve_vec(&(x.transpose() * r));

    let mean = x * &beta;
    let resid = &yv - &mean;
    let rss = resid.norm_squared();
    let sigma = (rss / n as f64).sqrt();
    if !(sigma > 0.0) {
        return Err(FicError::Singular {
            what: "gaussian error variance".into(),
            condition: f64::INFINITY,
        });
    }
    let s2 = sigma * sigma;
    let s3 = s2 * sigma;

    let mut scores = DMatrix::zeros(n, p + 1);
    let mut lin = DMatrix::zeros(n, p + 1);
    let mut quad = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        let r = resid[i];
        for j in 0..p {
            scores[(i, j)] = r * x[(i, j)] / s2;
            lin[(i, j)] = x[(i, j)] / s2;
        }
        scores[(i, p)] = -1.0 / sigma + r * r / s3;
        lin[(i, p)] = -2.0 * mean[i] / s3;
        quad[(i, p)] = 1.0 / s3;
    }

    let mut info = DMatrix::zeros(p + 1, p + 1);
    info.view_mut((0, 0), (p, p)).copy_from(&(&gram / s2));
    let cross = x.transpose() * &resid * (2.0 / s3);
    for j in 0..p {
        info[(j, p)] = cross[j];
        info[(p, j)] = cross[j];
    }
    info[(p, p)] = -(n as f64) / s2 + 3.0 * rss / (s2 * s2);
    info /= n as f64;

    let loglik = y
        .iter()
        .zip(mean.iter())
        .map(|(&yi, &m)| GlmFamily::GaussianIdentity.log_density(yi, m, sigma))
        .sum();
    let mut theta = DVector::zeros(p + 1);
    theta.rows_mut(0, p).copy_from(&beta);
    theta[p] = sigma;
    Ok(FitResult {
        family: GlmFamily::GaussianIdentity,
        theta_hat: theta,
        loglik,
        score_contribs: scores,
        obs_info: info,
        converged: true,
        iterations: 1,
        fitted_means: mean.iter().copied().collect(),
        score_lin: lin,
        score_quad: quad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::bird_species;
    use crate::linalg::{asymmetry, min_eigenvalue};

    fn bird(indicator: &str) -> (FitResult, DMatrix<f64>) {
        let d = bird_species();
        let t = DesignTemplate::with_pairwise_interactions(&["x1", "x2", "x3", "x4"]).unwrap();
        let s = t.parse_indicator(indicator, GlmFamily::PoissonLog).unwrap();
        let x = build_design(&d, &t, &s).unwrap();
        (fit_mle(&x, d.response(), GlmFamily::PoissonLog).unwrap(), x)
    }

    #[test]
    fn intercept_only_is_sample_mean() {
        let (f, _) = bird("10000,000000");
        assert!(f.converged);
        assert!((f.theta_hat[0].exp() - 290.0 / 14.0).abs() < 1e-10);
    }

    #[test]
    fn model_five_chiles_mean() {
        let (f, x) = bird("10010,000000");
        let chiles = (x.row(0) * &f.theta_hat)[0].exp();
        assert!((chiles - 38.882).abs() < 5e-4, "{chiles}");
    }

    #[test]
    fn wide_fit_invariants() {
        let (f, _) = bird("11111,111111");
        assert!(f.converged);
        let s = f.total_score();
        assert!(s.amax() <= 1e-6 * (1.0 + f.theta_hat.amax()), "{s}");
        assert!(asymmetry(&f.obs_info) < 1e-10);
        assert!(min_eigenvalue(&f.obs_info) >= -1e-8);
    }

    #[test]
    fn table_information_criteria() {
        let cases = [
            ("10000,000000", 143.26, 143.90),
            ("11111,100000", 91.91, 95.74),
            ("11111,010110", 91.44, 96.55),
        ];
        for (ind, a, b) in cases {
            let (f, _) = bird(ind);
            assert!((aic(&f) - a).abs() < 0.01, "{ind} aic {}", aic(&f));
            assert!((bic(&f, 14) - b).abs() < 0.01, "{ind} bic {}", bic(&f, 14));
        }
    }

    #[test]
    fn gaussian_matches_normal_equations() {
        let x = DMatrix::from_row_slice(
            6,
            2,
            &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0, 1.0, 4.0, 1.0, 5.0],
        );
        let y = [1.1, 2.9, 5.2, 7.1, 8.8, 11.3];
        let f = fit_mle(&x, &y, GlmFamily::GaussianIdentity).unwrap();
        // closed-form simple regression
        let xm = 2.5;
        let ym = y.iter().sum::<f64>() / 6.0;
        let sxy: f64 = (0..6).map(|i| (i as f64 - xm) * (y[i] - ym)).sum();
        let sxx: f64 = (0..6).map(|i| (i as f64 - xm).powi(2)).sum();
        let slope = sxy / sxx;
        let icept = ym - slope * xm;
        assert!((f.theta_hat[0] - icept).abs() < 1e-12);
        assert!((f.theta_hat[1] - slope).abs() < 1e-12);
        let rss: f64 = (0..6)
            .map(|i| (y[i] - icept - slope * i as f64).powi(2))
            .sum();
        assert!((f.sigma().unwrap() - (rss / 6.0).sqrt()).abs() < 1e-12);
        assert_eq!(f.param_count(), 3);
        assert!(f.total_score().amax() < 1e-8);
        assert!(min_eigenvalue(&f.obs_info) > 0.0);
    }

    #[test]
    fn logistic_separation_detected() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, -3.0, 1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let err = fit_mle(&x, &y, GlmFamily::BinomialLogit).unwrap_err();
        assert!(
            matches!(err, FicError::Separation { .. } | FicError::Singular { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            fit_mle(&x, &[1.0, 2.0, 3.0], GlmFamily::PoissonLog),
            Err(FicError::RankDeficient { .. })
        ));
    }
}
