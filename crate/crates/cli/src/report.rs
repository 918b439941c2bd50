//! Table, results file and scatter plot, rendered to strings.
//!
//! Results file format: one record per line, a keyword followed by
//! space-separated `key=value` fields (header lines use `key value`).
//! Numbers are printed with the shortest representation that parses back
//! to the same `f64`.

use std::fmt::Write as _;

use fic_core::{RankingResult, ScoredCandidate};

/// Display quantities of one candidate. With several focus points these are
/// weighted averages (`weights` sum to one) and the bias is the unsigned root
/// of the averaged squared bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub id: usize,
    pub indicators: String,
    pub focus: f64,
    pub bias_raw: f64,
    pub bias: f64,
    pub se: f64,
    pub kappa_sq_over_n: f64,
    pub fic_u: f64,
    pub fic_adj: f64,
    pub aic: f64,
    pub bic: f64,
    pub rank: usize,
    pub aic_rank: usize,
    pub bic_rank: usize,
}

impl Row {
    pub fn new(e: &ScoredCandidate, weights: &[f64]) -> Self {
        let single = e.components.len() == 1;
        let (focus, bias_raw, bias, se, kappa) = if single {
            (e.fic.mu_hat, e.fic.bias_hat, e.fic.bias_adj, e.fic.se, e.fic.kappa_sq_over_n)
        } else {
            (
                e.afic.avg_focus,
                e.afic.avg_sqbias_raw,
                e.afic.avg_sqbias_raw.max(0.0).sqrt(),
                e.afic.avg_variance.sqrt(),
                e.components.iter().zip(weights).map(|(c, w)| w * c.kappa_sq_over_n).sum(),
            )
        };
        Self {
            id: e.id,
            indicators: e.spec.to_string(),
            focus,
            bias_raw,
            bias,
            se,
            kappa_sq_over_n: kappa,
            fic_u: e.afic.afic_u,
            fic_adj: e.afic.afic_adj,
            aic: e.afic.aic,
            bic: e.afic.bic,
            rank: e.rank,
            aic_rank: e.aic_rank,
            bic_rank: e.bic_rank,
        }
    }

    /// Plot coordinates: `(√fic_adj, estimate)`.
    pub fn plot_point(&self) -> (f64, f64) {
        (self.fic_adj.sqrt(), self.focus)
    }
}

/// Fixed decimals with negative zero printed as zero.
pub fn fixed(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

/// `sign(x)·√|x|`, so a negative unbiased FIC stays visible.
pub fn signed_sqrt(x: f64) -> f64 {
    x.signum() * x.abs().sqrt()
}

pub fn table_csv(rows: &[Row]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "model", "coef_indicators", "focus", "bias", "se", "sqrt_fic_u", "sqrt_fic_adj", "aic",
        "bic", "rank", "aic_rank", "bic_rank",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.id.to_string(),
            r.indicators.clone(),
            fixed(r.focus, 3),
            fixed(r.bias, 3),
            fixed(r.se, 3),
            fixed(signed_sqrt(r.fic_u), 3),
            fixed(r.fic_adj.sqrt(), 3),
            fixed(r.aic, 2),
            fixed(r.bic, 2),
            r.rank.to_string(),
            r.aic_rank.to_string(),
            r.bic_rank.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii table")
}

/// Header facts written above the candidate records.
#[derive(Debug, Clone)]
pub struct RunFacts {
    pub framework: String,
    pub criterion: String,
    pub family: String,
    pub n: usize,
    pub points: Vec<String>,
}

pub fn results_text(facts: &RunFacts, result: &RankingResult, rows: &[Row], plot: &PlotFrame) -> String {
    let mut s = String::new();
    let sel = result.selected();
    let _ = writeln!(s, "fic-results 1");
    let _ = writeln!(s, "framework {}", facts.framework);
    let _ = writeln!(s, "criterion {}", facts.criterion);
    let _ = writeln!(s, "family {}", facts.family);
    let _ = writeln!(s, "n {}", facts.n);
    let _ = writeln!(s, "points {}", facts.points.join(" "));
    let _ = writeln!(s, "candidates {}", rows.len());
    let _ = writeln!(s, "failures {}", result.failures.len());
    let _ = writeln!(s, "selected id={} indicators={}", sel.id, sel.spec);
    match result.wide() {
        Some(w) => {
            let est = rows.iter().find(|r| r.id == w.id).map_or(f64::NAN, |r| r.focus);
            let _ = writeln!(s, "wide id={} indicators={} estimate={est:?}", w.id, w.spec);
        }
        None => {
            let _ = writeln!(s, "wide none");
        }
    }
    for (tag, e) in [("aic_best", result.aic_best()), ("bic_best", result.bic_best())] {
        let _ = writeln!(s, "{tag} id={} indicators={} rank={}", e.id, e.spec, e.rank);
    }
    let _ = writeln!(s, "plot_transform {}", plot.declaration());
    for r in rows {
        let _ = writeln!(
            s,
            "candidate id={} indicators={} focus={:?} bias_raw={:?} bias={:?} se={:?} kappa_sq_over_n={:?} fic_u={:?} fic_adj={:?} aic={:?} bic={:?} rank={} aic_rank={} bic_rank={}",
            r.id, r.indicators, r.focus, r.bias_raw, r.bias, r.se, r.kappa_sq_over_n, r.fic_u,
            r.fic_adj, r.aic, r.bic, r.rank, r.aic_rank, r.bic_rank
        );
    }
    for f in &result.failures {
        let reason = f.reason.to_string().replace(['\n', '\r'], " ");
        let _ = writeln!(s, "failure id={} indicators={} reason={reason}", f.id, f.spec);
    }
    s
}

/// Parses `key=value` fields of a results-file line.
pub fn fields(line: &str) -> Vec<(&str, &str)> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .collect()
}

/// Affine map from data coordinates to pixels:
/// `px = left + (x − x0)·sx`, `py = top + (y1 − y)·sy`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotFrame {
    pub left: f64,
    pub top: f64,
    pub x0: f64,
    pub sx: f64,
    pub y1: f64,
    pub sy: f64,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 50.0;

impl PlotFrame {
    pub fn fit(rows: &[Row]) -> Self {
        let pts: Vec<(f64, f64)> = rows.iter().map(Row::plot_point).collect();
        let x_max = pts.iter().map(|p| p.0).fold(0.0, f64::max);
        let y_min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let y_max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let x_span = if x_max > 0.0 { x_max * 1.05 } else { 1.0 };
        let pad = if y_max > y_min { 0.05 * (y_max - y_min) } else { 0.5 * (1.0 + y_min.abs()) };
        Self {
            left: LEFT,
            top: TOP,
            x0: 0.0,
            sx: (WIDTH - LEFT - RIGHT) / x_span,
            y1: y_max + pad,
            sy: (HEIGHT - TOP - BOTTOM) / (y_max - y_min + 2.0 * pad),
        }
    }

    pub fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x0) * self.sx
    }

    pub fn py(&self, y: f64) -> f64 {
        self.top + (self.y1 - y) * self.sy
    }

    pub fn declaration(&self) -> String {
        format!(
            "left={:?} top={:?} x0={:?} sx={:?} y1={:?} sy={:?}",
            self.left, self.top, self.x0, self.sx, self.y1, self.sy
        )
    }

    pub fn parse(decl: &str) -> Option<Self> {
        let get = |k: &str| -> Option<f64> {
            fields(decl).into_iter().find(|(key, _)| *key == k)?.1.parse().ok()
        };
        Some(Self {
            left: get("left")?,
            top: get("top")?,
            x0: get("x0")?,
            sx: get("sx")?,
            y1: get("y1")?,
            sy: get("sy")?,
        })
    }
}

/// Scatter of estimate against √fic. The selected model is a red dot with a
/// red line at its estimate, the wide model a blue triangle with a blue line.
pub fn plot_svg(rows: &[Row], selected: usize, wide: Option<usize>, frame: &PlotFrame) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<desc id="transform">px = left + (x - x0) * sx; py = top + (y1 - y) * sy; {}</desc>"#, frame.declaration());
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x_lo, x_hi) = (LEFT, WIDTH - RIGHT);
    let (y_lo, y_hi) = (TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        s,
        r#"<path d="M{x_lo} {y_lo} V{y_hi} H{x_hi}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let px = x_lo + t * (x_hi - x_lo);
        let xv = frame.x0 + (px - frame.left) / frame.sx;
        let py = y_hi - t * (y_hi - y_lo);
        let yv = frame.y1 - (py - frame.top) / frame.sy;
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            y_hi + 16.0,
            fixed(xv, 2)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            x_lo - 6.0,
            py + 4.0,
            fixed(yv, 2)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">sqrt(FIC)</text>"#,
        (x_lo + x_hi) / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">estimate</text>"#,
        (y_lo + y_hi) / 2.0,
        (y_lo + y_hi) / 2.0
    );
    let flagged = |id: usize, color: &str, s: &mut String| {
        if let Some(r) = rows.iter().find(|r| r.id == id) {
            let py = frame.py(r.focus);
            let _ = writeln!(
                s,
                r#"<line x1="{x_lo}" y1="{py:.4}" x2="{x_hi}" y2="{py:.4}" stroke="{color}" stroke-dasharray="4 3"/>"#
            );
        }
    };
    if let Some(w) = wide {
        flagged(w, "blue", &mut s);
    }
    flagged(selected, "red", &mut s);
    for r in rows {
        let (x, y) = r.plot_point();
        let (cx, cy) = (frame.px(x), frame.py(y));
        let fill = if r.id == selected { "red" } else if Some(r.id) == wide { "blue" } else { "none" };
        let stroke = if fill == "none" { "black" } else { fill };
        let _ = writeln!(
            s,
            r#"<circle class="pt" data-id="{}" cx="{cx:.4}" cy="{cy:.4}" r="3" fill="{fill}" stroke="{stroke}"/>"#,
            r.id
        );
        if Some(r.id) == wide {
            let _ = writeln!(
                s,
                r#"<polygon points="{:.4},{:.4} {:.4},{:.4} {:.4},{:.4}" fill="blue"/>"#,
                cx,
                cy - 7.0,
                cx - 6.0,
                cy + 4.0,
                cx + 6.0,
                cy + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}
