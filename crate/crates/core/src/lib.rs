//! Focused model selection for generalized linear models.
//!
//! Candidate submodels of a wide GLM are scored by the estimated mean squared
//! error of a chosen focus estimate, either with a fixed wide model or under
//! local misspecification around a narrow model.

pub mod afic;
pub mod data;
pub mod design;
pub mod error;
pub mod family;
pub mod fit;
pub mod fixed;
pub mod focus;
pub mod linalg;
pub mod local;
pub mod postsel;
pub mod search;

pub use data::{bird_species, Dataset};
pub use design::{build_design, CandidateSpec, DesignTemplate, Slot};
pub use error::{FicError, Result};
pub use family::GlmFamily;
pub use fit::{
    aic, bic, fit_candidate, fit_mle, fit_mle_with, fit_model, FitOptions, FitResult, FittedModel,
};
pub use fixed::{
    fic_fixed_score, sandwich_matrices, FicComponents, FicRecord, FixedContext, SandwichPlugin,
    SandwichSet,
};
pub use focus::{eval_focus, focus_gradient_check, FocusKind, FocusSpec, FocusValue};
pub use local::{
    build_local_frame, fic_local_score, projection_matrix, LocalFrame, LocalPoint,
    ProjectionDefects, ProjectionG,
};
pub use afic::{afic_scores, aggregate, AficRecord, Framework, Scorer};
pub use search::{
    enumerate_candidates, exponential_weights, model_average_weights, run_search, CandidateFailure,
    Criterion, ModelAverage, RankingResult, ScoredCandidate, SearchConfig, MAX_CANDIDATES,
};
pub use postsel::{fixed_limit_moments, simulate_post_selection, simulate_with, WeightScheme};
