//! Candidate enumeration, fitting and ranking.

use std::cmp::Ordering;

use log::{debug, info};
use rayon::prelude::*;

use crate::afic::{aggregate, AficRecord, Framework, Scorer};
use crate::data::Dataset;
use crate::design::{CandidateSpec, DesignTemplate};
use crate::error::{FicError, Result};
use crate::family::GlmFamily;
use crate::fit::{aic, bic, fit_model};
use crate::fixed::{FicComponents, FicRecord};
use crate::focus::FocusSpec;

/// Enumerations larger than this are refused unless explicitly allowed.
pub const MAX_CANDIDATES: u128 = 1_000_000;

/// What the ranking minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Criterion {
    #[default]
    FicAdj,
    FicU,
    AficAdj,
    AficU,
}

impl Criterion {
    pub fn tag(self) -> &'static str {
        match self {
            Criterion::FicAdj => "fic_adj",
            Criterion::FicU => "fic_u",
            Criterion::AficAdj => "afic_adj",
            Criterion::AficU => "afic_u",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "fic_adj" => Some(Criterion::FicAdj),
            "fic_u" => Some(Criterion::FicU),
            "afic_adj" => Some(Criterion::AficAdj),
            "afic_u" => Some(Criterion::AficU),
            _ => None,
        }
    }

    /// Whether negative squared-bias estimates are truncated.
    pub fn adjusted(self) -> bool {
        matches!(self, Criterion::FicAdj | Criterion::AficAdj)
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub template: DesignTemplate,
    pub family: GlmFamily,
    pub hierarchy: bool,
    pub framework: Framework,
    pub criterion: Criterion,
    /// Overrides enumeration when set.
    pub candidates: Option<Vec<CandidateSpec>>,
    pub allow_large: bool,
    pub parallel: bool,
}

impl SearchConfig {
    pub fn new(template: DesignTemplate, family: GlmFamily) -> Self {
        Self {
            template,
            family,
            hierarchy: true,
            framework: Framework::Fixed(Default::default()),
            criterion: Criterion::FicAdj,
            candidates: None,
            allow_large: false,
            parallel: true,
        }
    }
}

/// Every indicator containing the protected slots, in counting order: the
/// open slots are read as binary digits, the first open slot being least
/// significant, and the count runs from the narrow model to the wide one.
pub fn enumerate_candidates(config: &SearchConfig) -> Result<Vec<CandidateSpec>> {
    let t = &config.template;
    if let Some(list) = &config.candidates {
        for c in list {
            t.validate(c)?;
        }
        return Ok(list.clone());
    }
    let open: Vec<usize> = (0..t.slot_count()).filter(|&i| !t.protected()[i]).collect();
    let count = 1u128.checked_shl(open.len() as u32).unwrap_or(u128::MAX);
    if count > MAX_CANDIDATES && !config.allow_large {
        return Err(FicError::TooManyCandidates {
            count,
            limit: MAX_CANDIDATES,
        });
    }
    let mut out = Vec::new();
    for m in 0..count as u64 {
        let mut ind = t.protected().to_vec();
        for (bit, &slot) in open.iter().enumerate() {
            ind[slot] = m >> bit & 1 == 1;
        }
        if !config.hierarchy || t.respects_hierarchy(&ind) {
            out.push(t.candidate(ind, config.family)?);
        }
    }
    Ok(out)
}

/// One ranked candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    /// 1-based position in enumeration order.
    pub id: usize,
    pub spec: CandidateSpec,
    pub components: Vec<FicComponents>,
    /// Record at the first focus point.
    pub fic: FicRecord,
    pub afic: AficRecord,
    /// Value of the configured criterion.
    pub value: f64,
    pub rank: usize,
    pub aic_rank: usize,
    pub bic_rank: usize,
}

impl ScoredCandidate {
    pub fn parameter_count(&self) -> usize {
        self.spec.parameter_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateFailure {
    pub id: usize,
    pub spec: CandidateSpec,
    pub reason: FicError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    /// Sorted by the criterion, best first.
    pub entries: Vec<ScoredCandidate>,
    pub failures: Vec<CandidateFailure>,
    pub criterion: Criterion,
    pub framework: Framework,
}

impl RankingResult {
    pub fn selected(&self) -> &ScoredCandidate {
        &self.entries[0]
    }

    pub fn by_id(&self, id: usize) -> Option<&ScoredCandidate> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn by_spec(&self, spec: &CandidateSpec) -> Option<&ScoredCandidate> {
        self.entries.iter().find(|e| &e.spec == spec)
    }

    pub fn wide(&self) -> Option<&ScoredCandidate> {
        self.entries.iter().find(|e| e.spec.is_full())
    }

    pub fn aic_best(&self) -> &ScoredCandidate {
        self.entries.iter().find(|e| e.aic_rank == 1).expect("non-empty ranking")
    }

    pub fn bic_best(&self) -> &ScoredCandidate {
        self.entries.iter().find(|e| e.bic_rank == 1).expect("non-empty ranking")
    }
}

/// Fits and scores every candidate, then ranks.
pub fn run_search(dataset: &Dataset, config: &SearchConfig, focus: &FocusSpec) -> Result<RankingResult> {
    let t = &config.template;
    if focus.width() != t.slot_count() {
        return Err(FicError::Focus(format!(
            "evaluation points have width {}, template has {} slots",
            focus.width(),
            t.slot_count()
        )));
    }
    let candidates = enumerate_candidates(config)?;
    let wide = fit_model(dataset, t, &t.wide(config.family))?;
    info!(
        "wide model fitted in {} iterations, loglik {:.6}",
        wide.fit.iterations, wide.fit.loglik
    );
    let scorer = Scorer::new(config.framework, &wide, focus, t.protected())?;

    let score_one = |(idx, spec): (usize, &CandidateSpec)| {
        let outcome = fit_model(dataset, t, spec).and_then(|cand| {
            let comps = scorer.components(&cand, focus)?;
            Ok((cand, comps))
        });
        (idx + 1, spec.clone(), outcome)
    };
    let results: Vec<_> = if config.parallel {
        candidates.par_iter().enumerate().map(score_one).collect()
    } else {
        candidates.iter().enumerate().map(score_one).collect()
    };

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (id, spec, outcome) in results {
        match outcome {
            Ok((cand, comps)) => {
                let (a, b) = (aic(&cand.fit), bic(&cand.fit, cand.fit.n()));
                let fic = FicRecord::from_components(spec.clone(), &comps[0], a, b);
                let afic = aggregate(spec.clone(), &comps, focus.weights(), a, b);
                let value = match config.criterion {
                    Criterion::FicAdj | Criterion::AficAdj => afic.afic_adj,
                    Criterion::FicU | Criterion::AficU => afic.afic_u,
                };
                debug!("candidate {id} {spec}: criterion {value:.6e}");
                entries.push(ScoredCandidate {
                    id,
                    spec,
                    components: comps,
                    fic,
                    afic,
                    value,
                    rank: 0,
                    aic_rank: 0,
                    bic_rank: 0,
                });
            }
            Err(reason) => {
                info!("candidate {id} {spec} failed: {reason}");
                failures.push(CandidateFailure { id, spec, reason });
            }
        }
    }
    if entries.is_empty() {
        return Err(FicError::InvalidInput("no candidate could be scored".into()));
    }
    assign_ranks(&mut entries, |e| e.afic.aic, |e, r| e.aic_rank = r);
    assign_ranks(&mut entries, |e| e.afic.bic, |e, r| e.bic_rank = r);
    assign_ranks(&mut entries, |e| e.value, |e, r| e.rank = r);
    Ok(RankingResult {
        entries,
        failures,
        criterion: config.criterion,
        framework: config.framework,
    })
}

/// Sorts by `key`, breaking ties by parameter count and indicator string.
fn assign_ranks(
    entries: &mut [ScoredCandidate],
    key: impl Fn(&ScoredCandidate) -> f64,
    set: impl Fn(&mut ScoredCandidate, usize),
) {
    entries.sort_by(|a, b| compare_with_ties(key(a), key(b), a, b));
    for (r, e) in entries.iter_mut().enumerate() {
        set(e, r + 1);
    }
}

fn compare_with_ties(ka: f64, kb: f64, a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    ka.total_cmp(&kb)
        .then(a.parameter_count().cmp(&b.parameter_count()))
        .then_with(|| a.spec.to_string().cmp(&b.spec.to_string()))
}

/// Smoothed FIC weights and the model-averaged focus estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelAverage {
    pub weights: Vec<f64>,
    pub estimate: f64,
}

/// `w_M ∝ exp(−λ fic_M / fic_wide)`, normalized.
pub fn exponential_weights(fic: &[f64], fic_wide: f64, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(FicError::InvalidWeights(format!("lambda must be nonnegative, got {lambda}")));
    }
    if !(fic_wide > 0.0) {
        return Err(FicError::InvalidWeights("wide-model FIC must be positive".into()));
    }
    if fic.is_empty() {
        return Err(FicError::InvalidWeights("no candidates".into()));
    }
    let expo: Vec<f64> = fic.iter().map(|f| -lambda * f / fic_wide).collect();
    let top = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = expo.iter().map(|e| (e - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Weights over `records` using their adjusted FIC, anchored at the wide record.
pub fn model_average_weights(records: &[FicRecord], lambda: f64) -> Result<ModelAverage> {
    let wide = records
        .iter()
        .find(|r| r.candidate.is_full())
        .ok_or_else(|| FicError::InvalidWeights("wide model missing from records".into()))?;
    let fic: Vec<f64> = records.iter().map(|r| r.fic_adj).collect();
    let weights = exponential_weights(&fic, wide.fic_adj, lambda)?;
    let estimate = weights.iter().zip(records).map(|(w, r)| w * r.mu_hat).sum();
    Ok(ModelAverage { weights, estimate })
}
