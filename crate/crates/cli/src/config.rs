//! Run configuration: one TOML file, paths relative to the file itself.

use std::path::{Path, PathBuf};

use fic_core::{
    Criterion, DesignTemplate, FocusKind, Framework, GlmFamily, SandwichPlugin,
};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::ingest::Columns;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub model: ModelSection,
    pub focus: FocusSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub seed: u64,
    /// Directory of the config file; relative paths resolve against it.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub response: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    pub id_column: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub family: String,
    pub interactions: bool,
    pub hierarchy: bool,
    pub protected: Vec<String>,
    pub framework: String,
    pub plugin: String,
    pub criterion: String,
    pub candidates: Option<Vec<String>>,
    pub allow_large: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            family: "poisson-log".into(),
            interactions: false,
            hierarchy: true,
            protected: vec!["intercept".into()],
            framework: "local".into(),
            plugin: "wide-model".into(),
            criterion: "fic_adj".into(),
            candidates: None,
            allow_large: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RowSelector {
    /// The string `"all"`.
    Keyword(String),
    Labels(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusSection {
    pub kind: String,
    pub threshold: Option<u64>,
    pub coefficients: Option<Vec<f64>>,
    pub rows: Option<RowSelector>,
    /// Inline covariate values, one list per point.
    pub values: Option<Vec<Vec<f64>>>,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub parallel: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// `fixed`, `fic` or `exponential`.
    pub scheme: String,
    /// Candidate indicators; empty means every enumerated candidate.
    pub subsets: Vec<String>,
    pub lambda: f64,
    /// Local misspecification; zeros when absent.
    pub delta: Option<Vec<f64>>,
    pub draws: usize,
    /// Index of the focus point.
    pub point: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            scheme: "fic".into(),
            subsets: vec![],
            lambda: 1.0,
            delta: None,
            draws: 100_000,
            point: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string().replace('\n', " ")))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_path(&self) -> PathBuf {
        self.resolve(&self.data.path)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn columns(&self) -> Columns {
        Columns {
            response: self.data.response.clone(),
            covariates: self.data.covariates.clone(),
            id_column: self.data.id_column.clone(),
        }
    }

    pub fn family(&self) -> Result<GlmFamily> {
        GlmFamily::from_tag(&self.model.family)
            .ok_or_else(|| CliError::Config(format!("unknown family {:?}", self.model.family)))
    }

    pub fn framework(&self) -> Result<Framework> {
        match self.model.framework.as_str() {
            "local" => Ok(Framework::Local),
            "fixed" => SandwichPlugin::from_tag(&self.model.plugin)
                .map(Framework::Fixed)
                .ok_or_else(|| CliError::Config(format!("unknown plugin {:?}", self.model.plugin))),
            other => Err(CliError::Config(format!("unknown framework {other:?}"))),
        }
    }

    pub fn criterion(&self) -> Result<Criterion> {
        Criterion::from_tag(&self.model.criterion)
            .ok_or_else(|| CliError::Config(format!("unknown criterion {:?}", self.model.criterion)))
    }

    pub fn template(&self, covariates: &[String]) -> Result<DesignTemplate> {
        let t = if self.model.interactions {
            DesignTemplate::with_pairwise_interactions(covariates)
        } else {
            DesignTemplate::main_effects(covariates)
        };
        t.and_then(|t| t.with_protected_labels(&self.model.protected))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Focus kind; coefficient weights are checked against the design width later.
    pub fn focus_kind(&self) -> Result<FocusKind> {
        let f = &self.focus;
        match f.kind.as_str() {
            "linear-predictor" => Ok(FocusKind::LinearPredictor),
            "mean" => Ok(FocusKind::MeanResponse),
            "exceedance" => f
                .threshold
                .map(|threshold| FocusKind::Exceedance { threshold })
                .ok_or_else(|| CliError::Config("exceedance focus needs a threshold".into())),
            "coefficients" => f
                .coefficients
                .clone()
                .map(|weights| FocusKind::CoefficientCombination { weights })
                .ok_or_else(|| CliError::Config("coefficient focus needs coefficients".into())),
            other => Err(CliError::Config(format!("unknown focus kind {other:?}"))),
        }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub framework: Option<String>,
    pub criterion: Option<String>,
    pub sequential: bool,
    pub seed: Option<u64>,
    pub draws: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(d) = &self.output_dir {
            // command-line paths are relative to the working directory
            cfg.output.dir = std::env::current_dir().map(|c| c.join(d)).unwrap_or_else(|_| d.clone());
        }
        if let Some(f) = &self.framework {
            cfg.model.framework = f.clone();
        }
        if let Some(c) = &self.criterion {
            cfg.model.criterion = c.clone();
        }
        if self.sequential {
            cfg.output.parallel = false;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.draws {
            cfg.simulate.draws = n;
        }
    }
}
