use std::fmt;

use statrs::function::gamma::ln_gamma;

use crate::error::{FicError, Result};

/// GLM family with its canonical link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GlmFamily {
    PoissonLog,
    BinomialLogit,
    /// Normal errors with an identity link. The error standard deviation is
    /// estimated by maximum likelihood and occupies the last parameter slot.
    GaussianIdentity,
}

/// First moments of `Y` and `Y²` under a fitted distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponseMoments {
    pub var_y: f64,
    pub cov_y_y2: f64,
    pub var_y2: f64,
}

impl GlmFamily {
    pub fn tag(self) -> &'static str {
        match self {
            GlmFamily::PoissonLog => "poisson-log",
            GlmFamily::BinomialLogit => "binomial-logit",
            GlmFamily::GaussianIdentity => "gaussian-identity",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "poisson-log" | "poisson" => Some(GlmFamily::PoissonLog),
            "binomial-logit" | "binomial" | "logistic" => Some(GlmFamily::BinomialLogit),
            "gaussian-identity" | "gaussian" | "normal" => Some(GlmFamily::GaussianIdentity),
            _ => None,
        }
    }

    /// Parameters beyond the regression coefficients.
    pub fn extra_params(self) -> usize {
        match self {
            GlmFamily::GaussianIdentity => 1,
            _ => 0,
        }
    }

    /// Whether the response is a count or 0/1 outcome.
    pub fn is_discrete(self) -> bool {
        !matches!(self, GlmFamily::GaussianIdentity)
    }

    pub fn validate_response(self, y: &[f64]) -> Result<()> {
        for (row, &v) in y.iter().enumerate() {
            let ok = match self {
                GlmFamily::PoissonLog => v >= 0.0 && v.fract() == 0.0,
                GlmFamily::BinomialLogit => v == 0.0 || v == 1.0,
                GlmFamily::GaussianIdentity => v.is_finite(),
            };
            if !ok {
                return Err(FicError::InvalidResponse {
                    row: row + 1,
                    value: v,
                    family: self.tag(),
                });
            }
        }
        Ok(())
    }

    pub fn mean(self, eta: f64) -> f64 {
        match self {
            GlmFamily::PoissonLog => eta.exp(),
            GlmFamily::BinomialLogit => logistic(eta),
            GlmFamily::GaussianIdentity => eta,
        }
    }

    /// d mean / d eta
    pub fn mean_deriv(self, eta: f64) -> f64 {
        match self {
            GlmFamily::PoissonLog => eta.exp(),
            GlmFamily::BinomialLogit => {
                let p = logistic(eta);
                p * (1.0 - p)
            }
            GlmFamily::GaussianIdentity => 1.0,
        }
    }

    /// Variance function of the canonical-link families.
    pub(crate) fn variance(self, mean: f64) -> f64 {
        match self {
            GlmFamily::PoissonLog => mean,
            GlmFamily::BinomialLogit => mean * (1.0 - mean),
            GlmFamily::GaussianIdentity => 1.0,
        }
    }

    /// Log-density of one observation. `sigma` is used by the gaussian family only.
    pub fn log_density(self, y: f64, eta: f64, sigma: f64) -> f64 {
        match self {
            GlmFamily::PoissonLog => y * eta - eta.exp() - ln_gamma(y + 1.0),
            GlmFamily::BinomialLogit => y * eta - softplus(eta),
            GlmFamily::GaussianIdentity => {
                let r = (y - eta) / sigma;
                -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln() - 0.5 * r * r
            }
        }
    }

    pub(crate) fn moments(self, mean: f64, sigma: f64) -> ResponseMoments {
        match self {
            GlmFamily::PoissonLog => ResponseMoments {
                var_y: mean,
                cov_y_y2: mean + 2.0 * mean * mean,
                var_y2: mean + 6.0 * mean * mean + 4.0 * mean * mean * mean,
            },
            GlmFamily::BinomialLogit => {
                let v = mean * (1.0 - mean);
                ResponseMoments {
                    var_y: v,
                    cov_y_y2: v,
                    var_y2: v,
                }
            }
            GlmFamily::GaussianIdentity => {
                let s2 = sigma * sigma;
                ResponseMoments {
                    var_y: s2,
                    cov_y_y2: 2.0 * mean * s2,
                    var_y2: 4.0 * mean * mean * s2 + 2.0 * s2 * s2,
                }
            }
        }
    }
}

impl fmt::Display for GlmFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub(crate) fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}
