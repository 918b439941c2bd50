//! The `run`, `enumerate` and `simulate` commands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fic_core::{
    build_local_frame, enumerate_candidates, fit_model, fixed_limit_moments, run_search,
    simulate_with, CandidateSpec, Dataset, DesignTemplate, FocusKind, FocusSpec, GlmFamily,
    RankingResult, SearchConfig, WeightScheme,
};
use log::info;
use nalgebra::DVector;

use crate::config::{RowSelector, RunConfig};
use crate::error::{CliError, Result};
use crate::ingest::ingest;
use crate::report::{plot_svg, results_text, table_csv, PlotFrame, Row, RunFacts};

pub const TABLE_FILE: &str = "table.csv";
pub const RESULTS_FILE: &str = "results.txt";
pub const PLOT_FILE: &str = "plot.svg";
pub const LOG_FILE: &str = "run.log";
pub const SAMPLE_FILE: &str = "samples.csv";
pub const SUMMARY_FILE: &str = "simulate.txt";

/// Everything a command needs before any model is fitted.
pub struct Setup {
    pub dataset: Dataset,
    pub template: DesignTemplate,
    pub family: GlmFamily,
    pub search: SearchConfig,
    pub focus: FocusSpec,
    pub point_labels: Vec<String>,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    let dataset = ingest(&cfg.data_path(), &cfg.columns())?;
    let template = cfg.template(dataset.names())?;
    let family = cfg.family()?;
    family
        .validate_response(dataset.response())
        .map_err(|e| CliError::from_core(e, CliError::Data))?;
    let mut search = SearchConfig::new(template.clone(), family);
    search.hierarchy = cfg.model.hierarchy;
    search.framework = cfg.framework()?;
    search.criterion = cfg.criterion()?;
    search.allow_large = cfg.model.allow_large;
    search.parallel = cfg.output.parallel;
    if let Some(list) = &cfg.model.candidates {
        let specs = list
            .iter()
            .map(|s| template.parse_indicator(s, family))
            .collect::<fic_core::Result<Vec<_>>>()
            .map_err(|e| CliError::Config(e.to_string()))?;
        search.candidates = Some(specs);
    }
    let (focus, point_labels) = build_focus(cfg, &dataset, &template)?;
    Ok(Setup {
        dataset,
        template,
        family,
        search,
        focus,
        point_labels,
    })
}

fn build_focus(
    cfg: &RunConfig,
    dataset: &Dataset,
    template: &DesignTemplate,
) -> Result<(FocusSpec, Vec<String>)> {
    let kind = cfg.focus_kind()?;
    let config_err = |e: fic_core::FicError| CliError::Config(e.to_string());
    if let FocusKind::CoefficientCombination { weights } = kind {
        let focus = FocusSpec::coefficient_combination(weights).map_err(config_err)?;
        if focus.width() != template.slot_count() {
            return Err(CliError::Config(format!(
                "{} coefficients given, the design has {} slots",
                focus.width(),
                template.slot_count()
            )));
        }
        return Ok((focus, vec!["coefficients".into()]));
    }
    let f = &cfg.focus;
    let (covariates, labels): (Vec<Vec<f64>>, Vec<String>) = match (&f.rows, &f.values) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("focus takes either rows or values, not both".into()))
        }
        (None, None) => return Err(CliError::Config("focus needs rows or values".into())),
        (Some(RowSelector::Keyword(k)), None) => {
            if k != "all" {
                return Err(CliError::Config(format!("row selector {k:?} is not \"all\" or a list")));
            }
            (0..dataset.n()).map(|i| (dataset.row(i), dataset.row_label(i))).unzip()
        }
        (Some(RowSelector::Labels(ls)), None) => {
            let mut out = (Vec::new(), Vec::new());
            for l in ls {
                let i = dataset
                    .row_index(l)
                    .ok_or_else(|| CliError::Config(format!("no row labelled {l:?}")))?;
                out.0.push(dataset.row(i));
                out.1.push(l.clone());
            }
            out
        }
        (None, Some(values)) => (
            values.clone(),
            (1..=values.len()).map(|i| format!("value{i}")).collect(),
        ),
    };
    if covariates.is_empty() {
        return Err(CliError::Config("focus selects no points".into()));
    }
    let points = covariates
        .iter()
        .map(|c| template.expand_row(c))
        .collect::<fic_core::Result<Vec<_>>>()
        .map_err(config_err)?;
    let weights = f.weights.clone().unwrap_or_else(|| vec![1.0; points.len()]);
    let focus = FocusSpec::new(kind, points, weights).map_err(config_err)?;
    Ok((focus, labels))
}

/// The four run outputs, rendered.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub table: String,
    pub results: String,
    pub plot: String,
    pub log: String,
}

pub struct RunOutcome {
    pub result: RankingResult,
    pub rows: Vec<Row>,
    pub rendered: Rendered,
}

/// Searches and renders without touching the file system.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let s = setup(cfg)?;
    let result = run_search(&s.dataset, &s.search, &s.focus)
        .map_err(|e| CliError::from_core(e, CliError::Config))?;
    let weights = s.focus.normalized_weights();
    let rows: Vec<Row> = result.entries.iter().map(|e| Row::new(e, &weights)).collect();
    let frame = PlotFrame::fit(&rows);
    let facts = RunFacts {
        framework: match s.search.framework {
            fic_core::Framework::Fixed(p) => format!("fixed plugin={}", p.tag()),
            fic_core::Framework::Local => "local".into(),
        },
        criterion: s.search.criterion.tag().into(),
        family: s.family.tag().into(),
        n: s.dataset.n(),
        points: s.point_labels.clone(),
    };
    let sel = result.selected();
    let wide = result.wide().map(|w| w.id);
    let table = table_csv(&rows);
    let results = results_text(&facts, &result, &rows, &frame);
    let plot = plot_svg(&rows, sel.id, wide, &frame);

    let mut log = String::new();
    let _ = writeln!(log, "data {} (n={}, covariates {})", cfg.data_path().display(), s.dataset.n(), s.dataset.names().join(" "));
    let _ = writeln!(log, "family {} framework {} criterion {}", facts.family, facts.framework, facts.criterion);
    let _ = writeln!(log, "focus points {} ({})", s.focus.point_count(), s.point_labels.join(" "));
    let _ = writeln!(log, "scored {} candidates, {} failed", rows.len(), result.failures.len());
    for f in &result.failures {
        let _ = writeln!(log, "failed candidate {} {}: {}", f.id, f.spec, f.reason);
    }
    let r = Row::new(sel, &weights);
    let _ = writeln!(log, "selected model {} {} estimate {:.6} sqrt-fic {:.6}", sel.id, sel.spec, r.focus, r.fic_adj.sqrt());
    if let Some(w) = result.wide() {
        let r = Row::new(w, &weights);
        let _ = writeln!(log, "wide model {} estimate {:.6} rank {}", w.id, r.focus, w.rank);
    }
    for (name, e) in [("aic", result.aic_best()), ("bic", result.bic_best())] {
        let _ = writeln!(log, "{name}-best model {} {} estimate {:.6} fic rank {}", e.id, e.spec, Row::new(e, &weights).focus, e.rank);
    }
    let _ = writeln!(log, "elapsed {:.3} s", start.elapsed().as_secs_f64());
    info!("selected model {} ({})", sel.id, sel.spec);

    Ok(RunOutcome {
        result,
        rows,
        rendered: Rendered {
            table,
            results,
            plot,
            log,
        },
    })
}

/// Runs and writes table, results, plot and log into the output directory.
pub fn run(cfg: &RunConfig) -> Result<(RunOutcome, Vec<PathBuf>)> {
    let out = execute(cfg)?;
    let r = &out.rendered;
    let paths = write_all(
        &cfg.output_dir(),
        &[
            (TABLE_FILE, &r.table),
            (RESULTS_FILE, &r.results),
            (PLOT_FILE, &r.plot),
            (LOG_FILE, &r.log),
        ],
    )?;
    Ok((out, paths))
}

/// Writes every file or none: on failure the files already written are
/// removed, and the directory too if this call created it.
pub fn write_all(dir: &Path, files: &[(&str, &String)]) -> Result<Vec<PathBuf>> {
    let existed = dir.is_dir();
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        if let Err(e) = std::fs::write(&path, body.as_bytes()) {
            for p in &written {
                let _ = std::fs::remove_file(p);
            }
            let _ = std::fs::remove_file(&path);
            if !existed {
                let _ = std::fs::remove_dir(dir);
            }
            return Err(CliError::Io(format!("cannot write {}: {e}", path.display())));
        }
        written.push(path);
    }
    Ok(written)
}

/// Candidate list in search order, one `id indicators` line each.
pub fn enumerate(cfg: &RunConfig) -> Result<String> {
    let s = setup(cfg)?;
    let specs = enumerate_candidates(&s.search).map_err(|e| CliError::from_core(e, CliError::Config))?;
    let mut text = String::new();
    for (i, spec) in specs.iter().enumerate() {
        let _ = writeln!(text, "{} {}", i + 1, spec);
    }
    Ok(text)
}

pub struct Simulation {
    pub draws: Vec<f64>,
    pub summary: String,
}

/// Draws from the post-selection limit law at one focus point.
pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    let s = setup(cfg)?;
    let sim = &cfg.simulate;
    let numerical = |e: fic_core::FicError| CliError::from_core(e, CliError::Config);
    let wide = fit_model(&s.dataset, &s.template, &s.template.wide(s.family)).map_err(numerical)?;
    let frame = build_local_frame(&wide, &s.focus, s.template.protected()).map_err(numerical)?;
    let specs: Vec<CandidateSpec> = if sim.subsets.is_empty() {
        enumerate_candidates(&s.search).map_err(numerical)?
    } else {
        sim.subsets
            .iter()
            .map(|t| s.template.parse_indicator(t, s.family))
            .collect::<fic_core::Result<_>>()
            .map_err(|e| CliError::Config(e.to_string()))?
    };
    let subsets = specs
        .iter()
        .map(|c| frame.subset_of(c.indicator()))
        .collect::<fic_core::Result<Vec<_>>>()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let scheme = match sim.scheme.as_str() {
        "fixed" => match subsets.as_slice() {
            [one] => WeightScheme::Fixed(one.clone()),
            _ => return Err(CliError::Config("fixed scheme needs exactly one subset".into())),
        },
        "fic" => WeightScheme::FicArgmin(subsets.clone()),
        "exponential" => WeightScheme::Exponential {
            subsets: subsets.clone(),
            lambda: sim.lambda,
        },
        other => return Err(CliError::Config(format!("unknown scheme {other:?}"))),
    };
    let delta = DVector::from_vec(sim.delta.clone().unwrap_or_else(|| vec![0.0; frame.q_dim()]));
    if delta.len() != frame.q_dim() {
        return Err(CliError::Config(format!(
            "delta has {} entries, there are {} open parameters",
            delta.len(),
            frame.q_dim()
        )));
    }
    if sim.point >= frame.point_count() {
        return Err(CliError::Config(format!("focus has no point {}", sim.point)));
    }
    let draws = simulate_with(&frame, sim.point, &scheme, &delta, sim.draws, cfg.seed, cfg.output.parallel)
        .map_err(|e| CliError::from_core(e, CliError::Config))?;

    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mut summary = String::new();
    let _ = writeln!(summary, "scheme {}", sim.scheme);
    let _ = writeln!(summary, "point {}", s.point_labels.get(sim.point).cloned().unwrap_or_default());
    let _ = writeln!(summary, "subsets {}", specs.len());
    let _ = writeln!(summary, "draws {}", draws.len());
    let _ = writeln!(summary, "seed {}", cfg.seed);
    let _ = writeln!(summary, "mean {mean:?}");
    let _ = writeln!(summary, "variance {var:?}");
    if let WeightScheme::Fixed(sub) = &scheme {
        let (m, v) = fixed_limit_moments(&frame, sim.point, sub, &delta).map_err(numerical)?;
        let _ = writeln!(summary, "analytic_mean {m:?}");
        let _ = writeln!(summary, "analytic_variance {v:?}");
    }
    Ok(Simulation { draws, summary })
}

pub fn simulate_to_disk(cfg: &RunConfig) -> Result<(Simulation, Vec<PathBuf>)> {
    let sim = simulate(cfg)?;
    let mut samples = String::from("value\n");
    for d in &sim.draws {
        let _ = writeln!(samples, "{d:?}");
    }
    let paths = write_all(
        &cfg.output_dir(),
        &[(SAMPLE_FILE, &samples), (SUMMARY_FILE, &sim.summary)],
    )?;
    Ok((sim, paths))
}
