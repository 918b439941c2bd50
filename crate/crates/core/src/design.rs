//! Design templates (intercept, main effects, pairwise interactions) and the
//! candidate indicator vectors that pick columns out of them.

use std::fmt;

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{FicError, Result};
use crate::family::GlmFamily;

/// One column of the widest design.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Slot {
    Intercept,
    /// Main effect of the named covariate.
    Main(String),
    /// Product of two main-effect slots, referenced by slot index.
    Interaction(usize, usize),
}

/// Slot layout of the wide model: intercept first, then main effects in
/// covariate order, then pairwise interactions in lexicographic pair order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignTemplate {
    slots: Vec<Slot>,
    protected: Vec<bool>,
}

impl DesignTemplate {
    /// Intercept plus main effects.
    pub fn main_effects<S: AsRef<str>>(covariates: &[S]) -> Result<Self> {
        Self::build(covariates, false)
    }

    /// Intercept, main effects and all pairwise interactions.
    pub fn with_pairwise_interactions<S: AsRef<str>>(covariates: &[S]) -> Result<Self> {
        Self::build(covariates, true)
    }

    fn build<S: AsRef<str>>(covariates: &[S], interactions: bool) -> Result<Self> {
        let names: Vec<String> = covariates.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(FicError::InvalidInput(format!(
                    "covariate {name:?} listed twice"
                )));
            }
        }
        let mut slots = vec![Slot::Intercept];
        slots.extend(names.iter().cloned().map(Slot::Main));
        if interactions {
            for a in 0..names.len() {
                for b in (a + 1)..names.len() {
                    slots.push(Slot::Interaction(1 + a, 1 + b));
                }
            }
        }
        let mut protected = vec![false; slots.len()];
        protected[0] = true;
        Ok(Self { slots, protected })
    }

    /// Replaces the protected mask (the intercept is protected by default).
    pub fn with_protected(mut self, protected: Vec<bool>) -> Result<Self> {
        if protected.len() != self.slots.len() {
            return Err(FicError::IndicatorLength {
                expected: self.slots.len(),
                got: protected.len(),
            });
        }
        self.protected = protected;
        Ok(self)
    }

    /// Protects slots by label, e.g. `["intercept", "x1"]`.
    pub fn with_protected_labels<S: AsRef<str>>(self, labels: &[S]) -> Result<Self> {
        let mut mask = vec![false; self.slots.len()];
        for label in labels {
            let idx = self.slot_index(label.as_ref()).ok_or_else(|| {
                FicError::InvalidInput(format!("unknown slot {:?}", label.as_ref()))
            })?;
            mask[idx] = true;
        }
        self.with_protected(mask)
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn protected(&self) -> &[bool] {
        &self.protected
    }

    /// Number of slots printed before the comma in indicator strings.
    pub fn leading_count(&self) -> usize {
        self.slots
            .iter()
            .take_while(|s| !matches!(s, Slot::Interaction(..)))
            .count()
    }

    pub fn covariate_names(&self) -> Vec<&str> {
        self.slots
            .iter()
            .filter_map(|s| match s {
                Slot::Main(name) => Some(name.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn slot_label(&self, idx: usize) -> String {
        match &self.slots[idx] {
            Slot::Intercept => "intercept".to_string(),
            Slot::Main(name) => name.clone(),
            Slot::Interaction(a, b) => format!("{}:{}", self.slot_label(*a), self.slot_label(*b)),
        }
    }

    pub fn slot_index(&self, label: &str) -> Option<usize> {
        (0..self.slots.len()).find(|&i| self.slot_label(i) == label)
    }

    /// Expands raw covariate values (in template covariate order) into a
    /// wide-design row.
    pub fn expand_row(&self, covariates: &[f64]) -> Result<Vec<f64>> {
        let mains = self.covariate_names().len();
        if covariates.len() != mains {
            return Err(FicError::InvalidInput(format!(
                "expected {mains} covariate values, got {}",
                covariates.len()
            )));
        }
        let mut row = Vec::with_capacity(self.slots.len());
        let mut main_idx = 0;
        for slot in &self.slots {
            let v = match slot {
                Slot::Intercept => 1.0,
                Slot::Main(_) => {
                    main_idx += 1;
                    covariates[main_idx - 1]
                }
                Slot::Interaction(a, b) => row[*a] * row[*b],
            };
            row.push(v);
        }
        Ok(row)
    }

    fn column(&self, dataset: &Dataset, idx: usize) -> Result<Vec<f64>> {
        Ok(match &self.slots[idx] {
            Slot::Intercept => vec![1.0; dataset.n()],
            Slot::Main(name) => dataset
                .column_by_name(name)
                .ok_or_else(|| FicError::InvalidInput(format!("dataset has no column {name:?}")))?
                .to_vec(),
            Slot::Interaction(a, b) => {
                let ca = self.column(dataset, *a)?;
                let cb = self.column(dataset, *b)?;
                ca.iter().zip(&cb).map(|(x, y)| x * y).collect()
            }
        })
    }

    /// All slots switched on.
    pub fn wide(&self, family: GlmFamily) -> CandidateSpec {
        CandidateSpec::new(vec![true; self.slots.len()], family, self.leading_count())
    }

    /// Only protected slots switched on.
    pub fn narrow(&self, family: GlmFamily) -> CandidateSpec {
        CandidateSpec::new(self.protected.clone(), family, self.leading_count())
    }

    pub fn candidate(&self, indicator: Vec<bool>, family: GlmFamily) -> Result<CandidateSpec> {
        if indicator.len() != self.slots.len() {
            return Err(FicError::IndicatorLength {
                expected: self.slots.len(),
                got: indicator.len(),
            });
        }
        Ok(CandidateSpec::new(indicator, family, self.leading_count()))
    }

    /// Parses the `10010,000000` indicator notation (the comma is optional).
    pub fn parse_indicator(&self, text: &str, family: GlmFamily) -> Result<CandidateSpec> {
        let mut bits = Vec::new();
        for ch in text.chars() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                ',' | ' ' => {}
                _ => {
                    return Err(FicError::InvalidInput(format!(
                        "bad indicator character {ch:?} in {text:?}"
                    )))
                }
            }
        }
        self.candidate(bits, family)
    }

    /// Whether every on interaction has both parent main effects on.
    pub fn respects_hierarchy(&self, indicator: &[bool]) -> bool {
        self.first_hierarchy_violation(indicator).is_none()
    }

    fn first_hierarchy_violation(&self, indicator: &[bool]) -> Option<usize> {
        self.slots.iter().enumerate().find_map(|(i, s)| match s {
            Slot::Interaction(a, b) if indicator[i] && !(indicator[*a] && indicator[*b]) => Some(i),
            _ => None,
        })
    }

    /// Checks length, protection and hierarchy of a candidate.
    pub fn validate(&self, spec: &CandidateSpec) -> Result<()> {
        if spec.indicator.len() != self.slots.len() {
            return Err(FicError::IndicatorLength {
                expected: self.slots.len(),
                got: spec.indicator.len(),
            });
        }
        for (i, (&p, &on)) in self.protected.iter().zip(&spec.indicator).enumerate() {
            if p && !on {
                return Err(FicError::ProtectedSlotOff {
                    slot: self.slot_label(i),
                });
            }
        }
        if let Some(i) = self.first_hierarchy_violation(&spec.indicator) {
            return Err(FicError::HierarchyViolation {
                slot: self.slot_label(i),
            });
        }
        Ok(())
    }

    /// The full `n × p` design.
    pub fn wide_design(&self, dataset: &Dataset) -> Result<DMatrix<f64>> {
        let cols = (0..self.slots.len())
            .map(|i| self.column(dataset, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(dataset.n(), cols.len(), |i, j| cols[j][i]))
    }
}

/// Design matrix of a candidate: the on-slot columns of the template, in slot order.
pub fn build_design(
    dataset: &Dataset,
    template: &DesignTemplate,
    spec: &CandidateSpec,
) -> Result<DMatrix<f64>> {
    template.validate(spec)?;
    let cols = spec
        .on_slots()
        .into_iter()
        .map(|i| template.column(dataset, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(dataset.n(), cols.len(), |i, j| cols[j][i]))
}

/// A candidate model: which template slots are estimated, and its family.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CandidateSpec {
    indicator: Vec<bool>,
    family: GlmFamily,
    leading: usize,
}

impl CandidateSpec {
    fn new(indicator: Vec<bool>, family: GlmFamily, leading: usize) -> Self {
        Self {
            indicator,
            family,
            leading,
        }
    }

    pub fn indicator(&self) -> &[bool] {
        &self.indicator
    }

    pub fn family(&self) -> GlmFamily {
        self.family
    }

    pub fn on_slots(&self) -> Vec<usize> {
        (0..self.indicator.len())
            .filter(|&i| self.indicator[i])
            .collect()
    }

    /// Regression coefficients estimated by this candidate.
    pub fn coefficient_count(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }

    /// All estimated parameters, including a gaussian error scale.
    pub fn parameter_count(&self) -> usize {
        self.coefficient_count() + self.family.extra_params()
    }

    pub fn is_full(&self) -> bool {
        self.indicator.iter().all(|&b| b)
    }

    pub fn with_family(&self, family: GlmFamily) -> Self {
        Self {
            family,
            ..self.clone()
        }
    }
}

impl fmt::Display for CandidateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &b) in self.indicator.iter().enumerate() {
            if i == self.leading && self.leading < self.indicator.len() {
                f.write_str(",")?;
            }
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}
