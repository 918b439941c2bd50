//! FIC when the wide model is taken as the true data-generating mechanism.
//!
//! A candidate's estimator aims at its least-false parameter. Its variance
//! and its covariance with the wide estimator come from sandwich matrices
//! built from the two fits' score contributions.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::design::CandidateSpec;
use crate::error::{FicError, Result};
use crate::family::GlmFamily;
use crate::fit::{aic, bic, FitResult, FittedModel};
use crate::focus::{eval_focus, FocusSpec};
use crate::linalg::{bilinear, symmetrize_in_place, SpdSolver};

/// How the score covariance matrices `K_M` and `C_M` are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SandwichPlugin {
    /// Expected outer products with each response distributed as under the
    /// fitted wide model.
    #[default]
    WideModel,
    /// Averages of the observed score outer products.
    Empirical,
}

impl SandwichPlugin {
    pub fn tag(self) -> &'static str {
        match self {
            SandwichPlugin::WideModel => "wide-model",
            SandwichPlugin::Empirical => "empirical",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "wide-model" | "model" => Some(SandwichPlugin::WideModel),
            "empirical" => Some(SandwichPlugin::Empirical),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichSet {
    /// Wide normalized observed information, `p × p`.
    pub j: DMatrix<f64>,
    /// Candidate normalized observed information, `p_M × p_M`.
    pub j_m: DMatrix<f64>,
    /// `(1/n) Σ u_M u_Mᵀ`
    pub k_m: DMatrix<f64>,
    /// `(1/n) Σ u_wide u_Mᵀ`, `p × p_M`.
    pub c_m: DMatrix<f64>,
}

/// Per-point ingredients shared by every FIC variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FicComponents {
    pub mu_hat: f64,
    pub mu_wide: f64,
    pub bias_hat: f64,
    /// Variance of the candidate's focus estimator.
    pub se_sq: f64,
    /// Variance of the bias estimator.
    pub kappa_sq_over_n: f64,
    /// Set when a negative variance estimate was clipped to zero.
    pub kappa_clipped: bool,
}

impl FicComponents {
    /// Unbiased squared-bias estimate, possibly negative.
    pub fn sqbias_raw(&self) -> f64 {
        self.bias_hat * self.bias_hat - self.kappa_sq_over_n
    }

    pub fn fic_u(&self) -> f64 {
        self.se_sq + self.sqbias_raw()
    }

    pub fn fic_adj(&self) -> f64 {
        self.se_sq + self.sqbias_raw().max(0.0)
    }
}

/// Scores of one candidate at one focus point.
#[derive(Debug, Clone, PartialEq)]
pub struct FicRecord {
    pub candidate: CandidateSpec,
    pub mu_hat: f64,
    pub bias_hat: f64,
    /// `sign(b) √max(b² − κ²/n, 0)`
    pub bias_adj: f64,
    pub se: f64,
    pub kappa_sq_over_n: f64,
    pub fic_u: f64,
    pub fic_adj: f64,
    pub rmse: f64,
    pub rmse_u: f64,
    pub aic: f64,
    pub bic: f64,
    pub kappa_clipped: bool,
}

impl FicRecord {
    pub fn from_components(candidate: CandidateSpec, c: &FicComponents, aic: f64, bic: f64) -> Self {
        let fic_u = c.fic_u();
        let fic_adj = c.fic_adj();
        let bias_adj = if c.sqbias_raw() > 0.0 {
            c.bias_hat.signum() * c.sqbias_raw().sqrt()
        } else {
            0.0
        };
        Self {
            candidate,
            mu_hat: c.mu_hat,
            bias_hat: c.bias_hat,
            bias_adj,
            se: c.se_sq.sqrt(),
            kappa_sq_over_n: c.kappa_sq_over_n,
            fic_u,
            fic_adj,
            rmse: fic_adj.sqrt(),
            rmse_u: fic_u.max(0.0).sqrt(),
            aic,
            bic,
            kappa_clipped: c.kappa_clipped,
        }
    }
}

/// Sandwich matrices of a candidate against the wide model.
pub fn sandwich_matrices(
    wide_fit: &FitResult,
    cand_fit: &FitResult,
    plugin: SandwichPlugin,
) -> Result<SandwichSet> {
    let n = wide_fit.n();
    if cand_fit.n() != n {
        return Err(FicError::InvalidInput(format!(
            "wide fit has {n} rows, candidate fit has {}",
            cand_fit.n()
        )));
    }
    let (k_m, c_m) = match plugin {
        SandwichPlugin::Empirical => (
            cross_product(&cand_fit.score_contribs, &cand_fit.score_contribs, n),
            cross_product(&wide_fit.score_contribs, &cand_fit.score_contribs, n),
        ),
        SandwichPlugin::WideModel => model_based(wide_fit, cand_fit),
    };
    let mut k_m = k_m;
    symmetrize_in_place(&mut k_m);
    Ok(SandwichSet {
        j: wide_fit.obs_info.clone(),
        j_m: cand_fit.obs_info.clone(),
        k_m,
        c_m,
    })
}

fn cross_product(a: &DMatrix<f64>, b: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    a.transpose() * b / n as f64
}

/// Scores are polynomials `a + l y + q y²` in the response, so their
/// covariances under the wide model need only the first four moments of `Y`.
fn model_based(wide: &FitResult, cand: &FitResult) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = wide.n();
    let (p, pm) = (wide.param_count(), cand.param_count());
    let sigma = wide.sigma().unwrap_or(1.0);
    let mut k = DMatrix::zeros(pm, pm);
    let mut c = DMatrix::zeros(p, pm);
    for i in 0..n {
        let m = wide.family.moments(wide.fitted_means[i], sigma);
        let (lw, qw) = (wide.score_lin.row(i), wide.score_quad.row(i));
        let (lm, qm) = (cand.score_lin.row(i), cand.score_quad.row(i));
        for b in 0..pm {
            for a in 0..pm {
                k[(a, b)] += lm[a] * lm[b] * m.var_y
                    + (lm[a] * qm[b] + qm[a] * lm[b]) * m.cov_y_y2
                    + qm[a] * qm[b] * m.var_y2;
            }
            for a in 0..p {
                c[(a, b)] += lw[a] * lm[b] * m.var_y
                    + (lw[a] * qm[b] + qw[a] * lm[b]) * m.cov_y_y2
                    + qw[a] * qm[b] * m.var_y2;
            }
        }
    }
    (k / n as f64, c / n as f64)
}

/// Poisson sandwich matrices from their closed forms, with the wide fitted
/// means `ξ_i` as plug-ins: `K_M = (1/n) Σ ξ_i x_M,i x_M,iᵀ` and
/// `C_M = (1/n) Σ ξ_i x_i x_M,iᵀ`.
pub fn poisson_closed_form(
    x_wide: &DMatrix<f64>,
    x_cand: &DMatrix<f64>,
    wide_fit: &FitResult,
    cand_fit: &FitResult,
) -> Result<SandwichSet> {
    if wide_fit.family != GlmFamily::PoissonLog || cand_fit.family != GlmFamily::PoissonLog {
        return Err(FicError::InvalidInput("closed forms are for poisson fits".into()));
    }
    let n = x_wide.nrows() as f64;
    let weighted = |a: &DMatrix<f64>, b: &DMatrix<f64>, w: &[f64]| {
        let mut bw = b.clone();
        for (i, mut row) in bw.row_iter_mut().enumerate() {
            row *= w[i];
        }
        a.transpose() * bw / n
    };
    let xi = &wide_fit.fitted_means;
    let mut k_m = weighted(x_cand, x_cand, xi);
    symmetrize_in_place(&mut k_m);
    let mut j = weighted(x_wide, x_wide, xi);
    symmetrize_in_place(&mut j);
    let mut j_m = weighted(x_cand, x_cand, &cand_fit.fitted_means);
    symmetrize_in_place(&mut j_m);
    Ok(SandwichSet {
        j,
        j_m,
        k_m,
        c_m: weighted(x_wide, x_cand, xi),
    })
}

/// The wide fit and its factorized information, shared across candidates.
pub struct FixedContext<'a> {
    wide: &'a FittedModel,
    j_solver: SpdSolver,
    plugin: SandwichPlugin,
}

impl<'a> FixedContext<'a> {
    pub fn new(wide: &'a FittedModel, plugin: SandwichPlugin) -> Result<Self> {
        Ok(Self {
            j_solver: SpdSolver::new(&wide.fit.obs_info, "wide information matrix")?,
            wide,
            plugin,
        })
    }

    pub fn wide(&self) -> &FittedModel {
        self.wide
    }

    /// Ingredients for every focus point.
    pub fn components(&self, cand: &FittedModel, focus: &FocusSpec) -> Result<Vec<FicComponents>> {
        let n = self.wide.fit.n() as f64;
        let is_wide = cand.spec == self.wide.spec;
        let cand_solver;
        let mut sandwich = None;
        if !is_wide {
            let s = sandwich_matrices(&self.wide.fit, &cand.fit, self.plugin)?;
            cand_solver = Some(SpdSolver::new(&s.j_m, "candidate information matrix")?);
            sandwich = Some(s);
        } else {
            cand_solver = None;
        }

        let mut out = Vec::with_capacity(focus.point_count());
        for k in 0..focus.point_count() {
            let wide_val = eval_focus(focus, k, &self.wide.fit, &self.wide.spec)?;
            let c = &wide_val.gradient;
            let jc = self.j_solver.solve_vec(c);
            let wide_var = c.dot(&jc) / n;
            let (Some(s), Some(solver)) = (&sandwich, &cand_solver) else {
                out.push(FicComponents {
                    mu_hat: wide_val.mu_hat,
                    mu_wide: wide_val.mu_hat,
                    bias_hat: 0.0,
                    se_sq: wide_val.gradient.dot(&jc) / n,
                    kappa_sq_over_n: 0.0,
                    kappa_clipped: false,
                });
                continue;
            };
            let cand_val = eval_focus(focus, k, &cand.fit, &cand.spec)?;
            let jmc: DVector<f64> = solver.solve_vec(&cand_val.gradient);
            let se_sq = bilinear(&jmc, &s.k_m, &jmc) / n;
            let cross = bilinear(&jc, &s.c_m, &jmc) / n;
            let kappa = wide_var + se_sq - 2.0 * cross;
            let kappa_clipped = kappa < 0.0;
            if kappa_clipped {
                warn!(
                    "negative bias variance {kappa:.3e} for candidate {} clipped to zero",
                    cand.spec
                );
            }
            out.push(FicComponents {
                mu_hat: cand_val.mu_hat,
                mu_wide: wide_val.mu_hat,
                bias_hat: cand_val.mu_hat - wide_val.mu_hat,
                se_sq,
                kappa_sq_over_n: kappa.max(0.0),
                kappa_clipped,
            });
        }
        Ok(out)
    }
}

/// Fixed-framework record of one candidate at one focus point.
pub fn fic_fixed_score(
    wide: &FittedModel,
    cand: &FittedModel,
    focus: &FocusSpec,
    point_index: usize,
    plugin: SandwichPlugin,
) -> Result<FicRecord> {
    if point_index >= focus.point_count() {
        return Err(FicError::Focus(format!("no evaluation point {point_index}")));
    }
    let ctx = FixedContext::new(wide, plugin)?;
    let comps = ctx.components(cand, focus)?;
    let n = cand.fit.n();
    Ok(FicRecord::from_components(
        cand.spec.clone(),
        &comps[point_index],
        aic(&cand.fit),
        bic(&cand.fit, n),
    ))
}
