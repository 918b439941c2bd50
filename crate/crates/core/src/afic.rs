//! Averaged FIC over a weighted set of focus points. The squared-bias
//! estimates are summed before truncation at zero.

use crate::design::CandidateSpec;
use crate::error::Result;
use crate::fit::{aic, bic, FittedModel};
use crate::fixed::{FicComponents, FixedContext, SandwichPlugin};
use crate::focus::FocusSpec;
use crate::local::{build_local_frame, LocalFrame};

/// Which large-sample approximation supplies the FIC ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Framework {
    /// The wide model is the truth; candidates aim at least-false values.
    Fixed(SandwichPlugin),
    /// Open parameters are `O(1/√n)` away from the narrow model.
    Local,
}

impl Framework {
    pub fn tag(self) -> &'static str {
        match self {
            Framework::Fixed(_) => "fixed",
            Framework::Local => "local",
        }
    }
}

/// Framework state computed once from the wide fit.
pub enum Scorer<'a> {
    Fixed(FixedContext<'a>),
    Local(Box<LocalFrame>),
}

impl<'a> Scorer<'a> {
    pub fn new(
        framework: Framework,
        wide: &'a FittedModel,
        focus: &FocusSpec,
        protected_slots: &[bool],
    ) -> Result<Self> {
        Ok(match framework {
            Framework::Fixed(plugin) => Scorer::Fixed(FixedContext::new(wide, plugin)?),
            Framework::Local => {
                Scorer::Local(Box::new(build_local_frame(wide, focus, protected_slots)?))
            }
        })
    }

    /// Per-point ingredients of one candidate.
    pub fn components(&self, cand: &FittedModel, focus: &FocusSpec) -> Result<Vec<FicComponents>> {
        match self {
            Scorer::Fixed(ctx) => ctx.components(cand, focus),
            Scorer::Local(frame) => frame.components(cand, focus),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AficRecord {
    pub candidate: CandidateSpec,
    pub avg_variance: f64,
    /// Weighted sum of `b² − κ²/n`; may be negative.
    pub avg_sqbias_raw: f64,
    pub afic_u: f64,
    pub afic_adj: f64,
    /// Weighted mean of the candidate's focus estimates.
    pub avg_focus: f64,
    pub aic: f64,
    pub bic: f64,
}

/// Aggregates per-point ingredients with the focus weights, normalized to sum one.
pub fn aggregate(
    candidate: CandidateSpec,
    comps: &[FicComponents],
    weights: &[f64],
    aic: f64,
    bic: f64,
) -> AficRecord {
    assert_eq!(comps.len(), weights.len(), "one weight per point");
    let total: f64 = weights.iter().sum();
    let (mut var, mut sq, mut focus) = (0.0, 0.0, 0.0);
    for (c, w) in comps.iter().zip(weights) {
        let w = w / total;
        var += w * c.se_sq;
        sq += w * c.sqbias_raw();
        focus += w * c.mu_hat;
    }
    AficRecord {
        candidate,
        avg_variance: var,
        avg_sqbias_raw: sq,
        afic_u: var + sq,
        afic_adj: var + sq.max(0.0),
        avg_focus: focus,
        aic,
        bic,
    }
}

/// AFIC records for each candidate, in input order.
pub fn afic_scores(
    wide: &FittedModel,
    candidates: &[FittedModel],
    focus: &FocusSpec,
    framework: Framework,
    protected_slots: &[bool],
) -> Result<Vec<AficRecord>> {
    let scorer = Scorer::new(framework, wide, focus, protected_slots)?;
    candidates
        .iter()
        .map(|cand| {
            let comps = scorer.components(cand, focus)?;
            Ok(aggregate(
                cand.spec.clone(),
                &comps,
                focus.weights(),
                aic(&cand.fit),
                bic(&cand.fit, cand.fit.n()),
            ))
        })
        .collect()
}
