//! FIC under local misspecification: the truth sits at `γ₀ + δ/√n` around a
//! narrow model, and every candidate's focus estimator has a normal limit
//! expressed through `Q`, `ω`, `τ0²`, `D_n` and the projections `G_M`.

use nalgebra::{DMatrix, DVector};

use crate::error::{FicError, Result};
use crate::fit::{aic, bic, FittedModel};
use crate::fixed::{FicComponents, FicRecord};
use crate::focus::{eval_focus, FocusSpec};
use crate::linalg::{submatrix, subvector, symmetrize_in_place, SpdSolver};

/// Focus-dependent pieces of the frame at one evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalPoint {
    pub mu_wide: f64,
    pub omega: DVector<f64>,
    pub tau0_sq: f64,
}

/// Partition of the wide information into protected (`θ`) and open (`γ`)
/// blocks, evaluated at the wide-model estimate.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    n: usize,
    wide: FittedModel,
    /// Parameter indices of the protected block (gaussian σ included).
    protected: Vec<usize>,
    /// Parameter indices of the open block; these are also template slots.
    open: Vec<usize>,
    j: DMatrix<f64>,
    q: DMatrix<f64>,
    /// `Q⁻¹ = J₁₁ − J₁₀ J₀₀⁻¹ J₀₁`
    q_inv: DMatrix<f64>,
    d: DVector<f64>,
    points: Vec<LocalPoint>,
}

/// The matrix `G_M` for one subset `M` of the open parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionG {
    /// Positions within the open block.
    pub subset: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

/// Numerical departures of a `G_M` from its exact identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionDefects {
    /// `max |B² − B|` with `B = S G S⁻¹`, `S = diag(√(Q⁻¹)ᵢᵢ)`.
    pub idempotency: f64,
    /// `|trace(G) − |M||`
    pub trace: f64,
}

/// Builds the frame from the wide fit. `protected_slots` marks the
/// template slots in every candidate; a gaussian scale is always protected.
pub fn build_local_frame(
    wide: &FittedModel,
    focus: &FocusSpec,
    protected_slots: &[bool],
) -> Result<LocalFrame> {
    let slots = wide.spec.indicator().len();
    if !wide.spec.is_full() {
        return Err(FicError::InvalidInput("local frame needs the wide model fit".into()));
    }
    if protected_slots.len() != slots {
        return Err(FicError::IndicatorLength {
            expected: slots,
            got: protected_slots.len(),
        });
    }
    if !protected_slots.iter().any(|&p| p) {
        return Err(FicError::InvalidInput("at least one slot must be protected".into()));
    }
    let fit = &wide.fit;
    let mut protected: Vec<usize> = (0..slots).filter(|&i| protected_slots[i]).collect();
    protected.extend(slots..fit.param_count());
    let open: Vec<usize> = (0..slots).filter(|&i| !protected_slots[i]).collect();
    if open.is_empty() {
        return Err(FicError::InvalidInput("no open parameters".into()));
    }

    let j = fit.obs_info.clone();
    let j00 = SpdSolver::new(&submatrix(&j, &protected, &protected), "protected information block")?;
    let j10 = submatrix(&j, &open, &protected);
    let j11 = submatrix(&j, &open, &open);
    let mut q_inv = &j11 - &j10 * j00.solve_mat(&j10.transpose());
    symmetrize_in_place(&mut q_inv);
    let q = SpdSolver::new(&q_inv, "open information block")?.inverse();
    let n = fit.n();
    let d = subvector(&fit.theta_hat, &open) * (n as f64).sqrt();

    let mut points = Vec::with_capacity(focus.point_count());
    for k in 0..focus.point_count() {
        let v = eval_focus(focus, k, fit, &wide.spec)?;
        let d_theta = subvector(&v.gradient, &protected);
        let d_gamma = subvector(&v.gradient, &open);
        let solved = j00.solve_vec(&d_theta);
        points.push(LocalPoint {
            mu_wide: v.mu_hat,
            omega: &j10 * &solved - d_gamma,
            tau0_sq: d_theta.dot(&solved),
        });
    }
    Ok(LocalFrame {
        n,
        wide: wide.clone(),
        protected,
        open,
        j,
        q,
        q_inv,
        d,
        points,
    })
}

impl LocalFrame {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of open parameters.
    pub fn q_dim(&self) -> usize {
        self.open.len()
    }

    pub fn protected_params(&self) -> &[usize] {
        &self.protected
    }

    pub fn open_params(&self) -> &[usize] {
        &self.open
    }

    /// Wide normalized information.
    pub fn j(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn q_inv(&self) -> &DMatrix<f64> {
        &self.q_inv
    }

    /// `√n γ̂_wide`
    pub fn d_n(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn point(&self, k: usize) -> &LocalPoint {
        &self.points[k]
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    pub fn wide(&self) -> &FittedModel {
        &self.wide
    }

    /// Open-block positions switched on in a candidate indicator.
    pub fn subset_of(&self, indicator: &[bool]) -> Result<Vec<usize>> {
        if indicator.len() != self.wide.spec.indicator().len() {
            return Err(FicError::IndicatorLength {
                expected: self.wide.spec.indicator().len(),
                got: indicator.len(),
            });
        }
        for &i in self.protected.iter().filter(|&&i| i < indicator.len()) {
            if !indicator[i] {
                return Err(FicError::ProtectedSlotOff { slot: i.to_string() });
            }
        }
        Ok((0..self.open.len()).filter(|&k| indicator[self.open[k]]).collect())
    }

    /// Ingredients for every focus point; `μ̂_M` comes from the candidate's own fit.
    pub fn components(&self, cand: &FittedModel, focus: &FocusSpec) -> Result<Vec<FicComponents>> {
        if cand.spec.family() != self.wide.spec.family() {
            return Err(FicError::InvalidInput(
                "local framework needs candidates from the wide model's family".into(),
            ));
        }
        if focus.point_count() != self.points.len() {
            return Err(FicError::Focus("focus differs from the one the frame was built for".into()));
        }
        let g = projection_matrix(self, &self.subset_of(cand.spec.indicator())?)?;
        (0..self.points.len())
            .map(|k| {
                let mu_hat = eval_focus(focus, k, &cand.fit, &cand.spec)?.mu_hat;
                Ok(self.point_components(&g, k, mu_hat))
            })
            .collect()
    }

    fn point_components(&self, g: &ProjectionG, k: usize, mu_hat: f64) -> FicComponents {
        let n = self.n as f64;
        let pt = &self.points[k];
        let gt_omega = g.matrix.transpose() * &pt.omega;
        let var_term = gt_omega.dot(&(&self.q * &gt_omega));
        // (I − G)ᵀ ω
        let r = &pt.omega - &gt_omega;
        let kappa = r.dot(&(&self.q * &r));
        FicComponents {
            mu_hat,
            mu_wide: pt.mu_wide,
            bias_hat: r.dot(&self.d) / n.sqrt(),
            se_sq: (pt.tau0_sq + var_term) / n,
            kappa_sq_over_n: kappa.max(0.0) / n,
            kappa_clipped: kappa < 0.0,
        }
    }
}

/// `G_M = π_Mᵀ (π_M Q⁻¹ π_Mᵀ)⁻¹ π_M Q⁻¹`
pub fn projection_matrix(frame: &LocalFrame, subset: &[usize]) -> Result<ProjectionG> {
    let q = frame.q_dim();
    if let Some(&bad) = subset.iter().find(|&&i| i >= q) {
        return Err(FicError::InvalidInput(format!("open index {bad} out of range")));
    }
    if subset.windows(2).any(|w| w[0] >= w[1]) {
        return Err(FicError::InvalidInput("subset must be strictly increasing".into()));
    }
    let matrix = if subset.is_empty() {
        DMatrix::zeros(q, q)
    } else if subset.len() == q {
        DMatrix::identity(q, q)
    } else {
        let all: Vec<usize> = (0..q).collect();
        let inner = SpdSolver::new(
            &submatrix(&frame.q_inv, subset, subset),
            "submodel block of the open information",
        )?;
        let rows = inner.solve_mat(&submatrix(&frame.q_inv, subset, &all));
        let mut g = DMatrix::zeros(q, q);
        for (r, &i) in subset.iter().enumerate() {
            g.row_mut(i).copy_from(&rows.row(r));
        }
        g
    };
    Ok(ProjectionG {
        subset: subset.to_vec(),
        matrix,
    })
}

impl ProjectionG {
    pub fn defects(&self, frame: &LocalFrame) -> ProjectionDefects {
        let q = frame.q_dim();
        let s: Vec<f64> = (0..q).map(|i| frame.q_inv[(i, i)].sqrt()).collect();
        let b = DMatrix::from_fn(q, q, |i, j| s[i] * self.matrix[(i, j)] / s[j]);
        ProjectionDefects {
            idempotency: (&b * &b - &b).amax(),
            trace: (self.matrix.trace() - self.subset.len() as f64).abs(),
        }
    }
}

/// Local-framework record of one candidate at one focus point.
pub fn fic_local_score(
    frame: &LocalFrame,
    g: &ProjectionG,
    cand: &FittedModel,
    focus: &FocusSpec,
    point_index: usize,
) -> Result<FicRecord> {
    if point_index >= frame.point_count() {
        return Err(FicError::Focus(format!("no evaluation point {point_index}")));
    }
    let mu_hat = eval_focus(focus, point_index, &cand.fit, &cand.spec)?.mu_hat;
    let comps = frame.point_components(g, point_index, mu_hat);
    Ok(FicRecord::from_components(
        cand.spec.clone(),
        &comps,
        aic(&cand.fit),
        bic(&cand.fit, cand.fit.n()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bird_species, Dataset};
    use crate::design::DesignTemplate;
    use crate::family::GlmFamily;
    use crate::fit::fit_model;
    use crate::focus::FocusKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bird_frame() -> (DesignTemplate, Dataset, FittedModel, FocusSpec, LocalFrame) {
        let d = bird_species();
        let t = DesignTemplate::with_pairwise_interactions(&["x1", "x2", "x3", "x4"]).unwrap();
        let wide = fit_model(&d, &t, &t.wide(GlmFamily::PoissonLog)).unwrap();
        let focus =
            FocusSpec::single(FocusKind::MeanResponse, t.expand_row(&d.row(0)).unwrap()).unwrap();
        let frame = build_local_frame(&wide, &focus, t.protected()).unwrap();
        (t, d, wide, focus, frame)
    }

    #[test]
    fn bird_frame_shapes() {
        let (_, _, wide, _, frame) = bird_frame();
        assert_eq!(frame.q_dim(), 10);
        assert_eq!(frame.d_n().len(), 10);
        assert_eq!(frame.d_n()[0], wide.fit.theta_hat[1] * 14f64.sqrt());
        assert!(frame.point(0).tau0_sq > 0.0);
    }

    #[test]
    fn table_rows_under_local_scoring() {
        let (t, d, wide, focus, frame) = bird_frame();
        // (indicator, focus, bias_adj, se, rmse)
        let rows = [
            ("10010,000000", 38.882, 0.0, 4.383, 4.383),
            ("11111,111111", 38.269, 0.0, 6.051, 6.051),
        ];
        for (ind, mu, bias, se, rmse) in rows {
            let cand = fit_model(&d, &t, &t.parse_indicator(ind, GlmFamily::PoissonLog).unwrap()).unwrap();
            let g = projection_matrix(&frame, &frame.subset_of(cand.spec.indicator()).unwrap()).unwrap();
            let r = fic_local_score(&frame, &g, &cand, &focus, 0).unwrap();
            assert!((r.mu_hat - mu).abs() < 5e-4, "{ind} focus {}", r.mu_hat);
            assert!((r.bias_adj - bias).abs() < 5e-4, "{ind} bias {}", r.bias_adj);
            assert!((r.se - se).abs() < 5e-4, "{ind} se {}", r.se);
            assert!((r.rmse - rmse).abs() < 5e-4, "{ind} rmse {}", r.rmse);
        }
        let w = frame.components(&wide, &focus).unwrap()[0];
        assert_eq!(w.fic_u(), w.se_sq + w.bias_hat * w.bias_hat - w.kappa_sq_over_n);
        assert!(w.kappa_sq_over_n.abs() < 1e-12);
    }

    #[test]
    fn extreme_subsets() {
        let (_, _, _, _, frame) = bird_frame();
        let empty = projection_matrix(&frame, &[]).unwrap();
        assert_eq!(empty.matrix, DMatrix::zeros(10, 10));
        let full = projection_matrix(&frame, &(0..10).collect::<Vec<_>>()).unwrap();
        assert_eq!(full.matrix, DMatrix::identity(10, 10));

        let pt = frame.point(0);
        let n = frame.n() as f64;
        let c0 = frame.point_components(&empty, 0, 0.0);
        assert!((c0.se_sq - pt.tau0_sq / n).abs() < 1e-12 * c0.se_sq);
        let wd = pt.omega.dot(frame.d_n());
        let wqw = pt.omega.dot(&(frame.q() * &pt.omega));
        assert!((c0.sqbias_raw() - (wd * wd - wqw) / n).abs() < 1e-9 * (wd * wd / n));
        let cw = frame.point_components(&full, 0, 0.0);
        assert_eq!(cw.bias_hat, 0.0);
        assert!((cw.fic_u() - (pt.tau0_sq + wqw) / n).abs() < 1e-9 * cw.fic_u());
    }

    #[test]
    fn protected_only_focus_has_no_open_gradient() {
        let (t, _, wide, _, _) = bird_frame();
        let mut point = vec![0.0; t.slot_count()];
        point[0] = 1.0;
        let focus = FocusSpec::single(FocusKind::LinearPredictor, point).unwrap();
        let frame = build_local_frame(&wide, &focus, t.protected()).unwrap();
        let j = frame.j();
        let j00 = j[(0, 0)];
        let expected = DVector::from_fn(10, |i, _| j[(i + 1, 0)] / j00);
        assert!((&frame.point(0).omega - expected).amax() < 1e-10);
        assert!((frame.point(0).tau0_sq - 1.0 / j00).abs() < 1e-12 / j00);
    }

    #[test]
    fn identity_information_block() {
        // y is exactly linear in two orthonormal columns so J is the identity up to σ
        let x1 = vec![1.0, -1.0, 1.0, -1.0];
        let y = vec![1.0, -1.0, 3.0, 1.0];
        let data = Dataset::new(y, vec!["a".into()], vec![x1], None).unwrap();
        let t = DesignTemplate::main_effects(&["a"]).unwrap();
        let wide = fit_model(&data, &t, &t.wide(GlmFamily::GaussianIdentity)).unwrap();
        let focus = FocusSpec::single(FocusKind::LinearPredictor, vec![0.0, 1.0]).unwrap();
        let frame = build_local_frame(&wide, &focus, t.protected()).unwrap();
        let s2 = wide.fit.sigma().unwrap().powi(2);
        assert!((frame.q()[(0, 0)] - s2).abs() < 1e-12);
        assert!((frame.point(0).omega[0] + 1.0).abs() < 1e-12);
    }

    fn random_spd(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5
    }

    fn frame_with_q_inv(q_inv: DMatrix<f64>) -> LocalFrame {
        let (_, _, _, _, mut frame) = bird_frame();
        let dim = q_inv.nrows();
        frame.q = q_inv.clone().try_inverse().unwrap();
        frame.q_inv = q_inv;
        frame.open = (0..dim).collect();
        frame
    }

    #[test]
    fn trace_matches_explicit_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_spd(&mut rng, 3);
        let qi = q.clone().try_inverse().unwrap();
        let frame = frame_with_q_inv(qi.clone());
        let g = projection_matrix(&frame, &[0, 2]).unwrap();
        let pi = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let explicit = pi.transpose() * (&pi * &qi * pi.transpose()).try_inverse().unwrap() * &pi * &qi;
        assert!((&g.matrix - &explicit).amax() < 1e-10);
        assert!((g.matrix.trace() - 2.0).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn projections_are_idempotent(seed in 0u64..10_000, mask in 0u8..32) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frame = frame_with_q_inv(random_spd(&mut rng, 5));
            let subset: Vec<usize> = (0..5).filter(|i| mask & (1 << i) != 0).collect();
            let g = projection_matrix(&frame, &subset).unwrap();
            let defects = g.defects(&frame);
            prop_assert!(defects.idempotency < 1e-10);
            prop_assert!(defects.trace < 1e-10);
        }
    }

    /// Independent transcription of the logistic closed form, with `J`
    /// inverted explicitly and `G_M` formed from `Q` directly.
    #[test]
    fn logistic_closed_form() {
        let n = 500;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let names = ["x1", "z1", "z2", "z3"];
        let mut cols = vec![vec![0.0; n]; 4];
        let mut y = vec![0.0; n];
        let truth = [0.2, 0.8, 0.3, -0.2, 0.1];
        for i in 0..n {
            let mut eta = truth[0];
            for j in 0..4 {
                cols[j][i] = rng.random::<f64>() * 2.0 - 1.0;
                eta += truth[j + 1] * cols[j][i];
            }
            let p = 1.0 / (1.0 + (-eta).exp());
            y[i] = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
        }
        let data = Dataset::new(y, names.iter().map(|s| s.to_string()).collect(), cols, None).unwrap();
        let t = DesignTemplate::main_effects(&names)
            .unwrap()
            .with_protected(vec![true, true, false, false, false])
            .unwrap();
        let wide = fit_model(&data, &t, &t.wide(GlmFamily::BinomialLogit)).unwrap();
        let x0 = [1.0, 0.3];
        let z0 = [-0.5, 0.4, 0.7];
        let point = vec![x0[0], x0[1], z0[0], z0[1], z0[2]];
        let focus = FocusSpec::single(FocusKind::LinearPredictor, point.clone()).unwrap();
        let frame = build_local_frame(&wide, &focus, t.protected()).unwrap();

        // oracle
        let xd = crate::design::build_design(&data, &t, &wide.spec).unwrap();
        let mut jn = DMatrix::zeros(5, 5);
        for i in 0..n {
            let eta: f64 = (0..5).map(|j| xd[(i, j)] * wide.fit.theta_hat[j]).sum();
            let p = 1.0 / (1.0 + (-eta).exp());
            let row = xd.row(i).transpose();
            jn += &row * row.transpose() * (p * (1.0 - p));
        }
        jn /= n as f64;
        let jinv = jn.clone().try_inverse().unwrap();
        let q = jinv.view((2, 2), (3, 3)).into_owned();
        let qinv = q.clone().try_inverse().unwrap();
        let j00inv = jn.view((0, 0), (2, 2)).into_owned().try_inverse().unwrap();
        let j10 = jn.view((2, 0), (3, 2)).into_owned();
        let x0v = DVector::from_column_slice(&x0);
        let z0v = DVector::from_column_slice(&z0);
        let a = &z0v - &j10 * &j00inv * &x0v;
        let tau0 = (x0v.transpose() * &j00inv * &x0v)[0];
        let gamma = DVector::from_fn(3, |i, _| wide.fit.theta_hat[i + 2]);

        for mask in 0u8..8 {
            let subset: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
            let g_or = if subset.is_empty() {
                DMatrix::zeros(3, 3)
            } else {
                let pi = DMatrix::from_fn(subset.len(), 3, |r, c| if subset[r] == c { 1.0 } else { 0.0 });
                pi.transpose() * (&pi * &qinv * pi.transpose()).try_inverse().unwrap() * &pi * &qinv
            };
            let ig = DMatrix::identity(3, 3) - &g_or;
            let mid = &gamma * gamma.transpose() * n as f64 - &q;
            let oracle = (tau0
                + (a.transpose() * &g_or * &q * g_or.transpose() * &a)[0]
                + (a.transpose() * &ig * mid * ig.transpose() * &a)[0])
                / n as f64;

            let mut indicator = vec![true, true, false, false, false];
            for &k in &subset {
                indicator[k + 2] = true;
            }
            let spec = t.candidate(indicator, GlmFamily::BinomialLogit).unwrap();
            let cand = fit_model(&data, &t, &spec).unwrap();
            let g = projection_matrix(&frame, &subset).unwrap();
            let r = fic_local_score(&frame, &g, &cand, &focus, 0).unwrap();
            assert!(
                (r.fic_u - oracle).abs() < 1e-8 * oracle.abs(),
                "mask {mask}: {} vs {oracle}",
                r.fic_u
            );
        }
    }
}
