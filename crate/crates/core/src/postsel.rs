//! Draws from the limit law of post-selection and model-averaged focus
//! estimators, `Λ0 + ωᵀ(δ − Σ_M w(M|D) G_M D)` with `Λ0 ~ N(0, τ0²)`
//! independent of `D ~ N_q(δ, Q)`.
//!
//! Draws are generated in chunks of [`CHUNK`]; chunk `c` uses a ChaCha8
//! generator seeded with the run seed and switched to stream `c`, so the
//! output does not depend on how chunks are spread over threads.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{FicError, Result};
use crate::local::{projection_matrix, LocalFrame};
use crate::search::exponential_weights;

/// Draws per generator stream.
pub const CHUNK: usize = 65_536;

/// How a drawn `D` is turned into model weights.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightScheme {
    /// Always the given subset of open parameters.
    Fixed(Vec<usize>),
    /// All weight on the subset with the smallest adjusted limit FIC.
    FicArgmin(Vec<Vec<usize>>),
    /// Weights `∝ exp(−λ fic_M / fic_wide)` over the subsets.
    Exponential { subsets: Vec<Vec<usize>>, lambda: f64 },
}

/// Precomputed per-candidate quantities for one focus point.
struct Candidate {
    /// `G_Mᵀ ω`
    g_omega: DVector<f64>,
    /// `(I − G_M)ᵀ ω`
    resid: DVector<f64>,
    /// `τ0² + ωᵀ G Q Gᵀ ω`
    variance: f64,
    /// `ωᵀ (I − G) Q (I − G)ᵀ ω`
    kappa: f64,
}

impl Candidate {
    /// Adjusted limit FIC at a drawn `D`.
    fn fic(&self, d: &DVector<f64>) -> f64 {
        let b = self.resid.dot(d);
        self.variance + (b * b - self.kappa).max(0.0)
    }
}

fn candidate(frame: &LocalFrame, point: usize, subset: &[usize]) -> Result<Candidate> {
    let g = projection_matrix(frame, subset)?;
    let pt = frame.point(point);
    let g_omega = g.matrix.transpose() * &pt.omega;
    let resid = &pt.omega - &g_omega;
    Ok(Candidate {
        variance: pt.tau0_sq + g_omega.dot(&(frame.q() * &g_omega)),
        kappa: resid.dot(&(frame.q() * &resid)),
        g_omega,
        resid,
    })
}

/// Analytic mean and variance of the limit for a fixed subset:
/// `ωᵀ(I − G)δ` and `τ0² + ωᵀ G Q Gᵀ ω`.
pub fn fixed_limit_moments(
    frame: &LocalFrame,
    point: usize,
    subset: &[usize],
    delta: &DVector<f64>,
) -> Result<(f64, f64)> {
    check_delta(frame, delta)?;
    let c = candidate(frame, point, subset)?;
    Ok((c.resid.dot(delta), c.variance))
}

fn check_delta(frame: &LocalFrame, delta: &DVector<f64>) -> Result<()> {
    if delta.len() != frame.q_dim() {
        return Err(FicError::InvalidInput(format!(
            "delta has length {}, there are {} open parameters",
            delta.len(),
            frame.q_dim()
        )));
    }
    Ok(())
}

pub fn simulate_post_selection(
    frame: &LocalFrame,
    point: usize,
    scheme: &WeightScheme,
    delta: &DVector<f64>,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    simulate_with(frame, point, scheme, delta, draws, seed, true)
}

/// As [`simulate_post_selection`], optionally on one thread.
pub fn simulate_with(
    frame: &LocalFrame,
    point: usize,
    scheme: &WeightScheme,
    delta: &DVector<f64>,
    draws: usize,
    seed: u64,
    parallel: bool,
) -> Result<Vec<f64>> {
    check_delta(frame, delta)?;
    if point >= frame.point_count() {
        return Err(FicError::Focus(format!("no evaluation point {point}")));
    }
    let subsets: Vec<&Vec<usize>> = match scheme {
        WeightScheme::Fixed(s) => vec![s],
        WeightScheme::FicArgmin(s) | WeightScheme::Exponential { subsets: s, .. } => s.iter().collect(),
    };
    if subsets.is_empty() {
        return Err(FicError::InvalidWeights("no candidate subsets".into()));
    }
    let cands = subsets
        .iter()
        .map(|s| candidate(frame, point, s))
        .collect::<Result<Vec<_>>>()?;
    let full: Vec<usize> = (0..frame.q_dim()).collect();
    let fic_wide = candidate(frame, point, &full)?.variance;
    if let WeightScheme::Exponential { lambda, .. } = scheme {
        // validates lambda once up front
        exponential_weights(&[fic_wide], fic_wide, *lambda)?;
    }

    let chol = Cholesky::new(frame.q().clone()).ok_or_else(|| FicError::Singular {
        what: "open information block".into(),
        condition: f64::INFINITY,
    })?;
    let l: DMatrix<f64> = chol.l();
    let pt = frame.point(point);
    let tau0 = pt.tau0_sq.sqrt();
    let omega_delta = pt.omega.dot(delta);
    let q = frame.q_dim();
    let ctx = Ctx {
        cands: &cands,
        scheme,
        fic_wide,
        l: &l,
        tau0,
        omega_delta,
        delta,
        q,
    };

    let chunks = draws.div_ceil(CHUNK);
    let run = |c: usize| ctx.chunk(seed, c, CHUNK.min(draws - c * CHUNK));
    let parts: Vec<Result<Vec<f64>>> = if parallel {
        (0..chunks).into_par_iter().map(run).collect()
    } else {
        (0..chunks).map(run).collect()
    };
    let mut out = Vec::with_capacity(draws);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

struct Ctx<'a> {
    cands: &'a [Candidate],
    scheme: &'a WeightScheme,
    fic_wide: f64,
    l: &'a DMatrix<f64>,
    tau0: f64,
    omega_delta: f64,
    delta: &'a DVector<f64>,
    q: usize,
}

impl Ctx<'_> {
    fn chunk(&self, seed: u64, index: usize, len: usize) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let std = Normal::standard();
        let mut z = DVector::zeros(self.q);
        let mut out = Vec::with_capacity(len);
        let mut fics = vec![0.0; self.cands.len()];
        for _ in 0..len {
            let lambda0 = self.tau0 * std_normal(&mut rng, &std);
            for zi in z.iter_mut() {
                *zi = std_normal(&mut rng, &std);
            }
            let d = self.delta + self.l * &z;
            let shrink = match self.scheme {
                WeightScheme::Fixed(_) => self.cands[0].g_omega.dot(&d),
                WeightScheme::FicArgmin(_) => {
                    let mut best = 0;
                    let mut best_fic = f64::INFINITY;
                    for (m, c) in self.cands.iter().enumerate() {
                        let f = c.fic(&d);
                        if f < best_fic {
                            best = m;
                            best_fic = f;
                        }
                    }
                    self.cands[best].g_omega.dot(&d)
                }
                WeightScheme::Exponential { lambda, .. } => {
                    for (f, c) in fics.iter_mut().zip(self.cands) {
                        *f = c.fic(&d);
                    }
                    let w = exponential_weights(&fics, self.fic_wide, *lambda)?;
                    check_weights(&w)?;
                    w.iter().zip(self.cands).map(|(w, c)| w * c.g_omega.dot(&d)).sum()
                }
            };
            out.push(lambda0 + self.omega_delta - shrink);
        }
        Ok(out)
    }
}

fn check_weights(w: &[f64]) -> Result<()> {
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(FicError::InvalidWeights("negative or non-finite model weight".into()));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(FicError::InvalidWeights(format!("weights sum to {total}")));
    }
    Ok(())
}

/// Inverse-CDF standard normal from 53 random bits, never 0 or 1.
fn std_normal(rng: &mut ChaCha8Rng, std: &Normal) -> f64 {
    let bits = rng.random::<u64>() >> 11;
    let u = (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    std.inverse_cdf(u)
}
