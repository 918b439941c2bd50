//! Small dense linear-algebra helpers on top of nalgebra.
//!
//! Information matrices from designs with interaction columns mix scales over
//! many orders of magnitude, so every symmetric solve goes through a
//! diagonally equilibrated Cholesky factor. The condition number that is
//! guarded is that of the equilibrated matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{FicError, Result};

/// Largest equilibrated condition number accepted by [`SpdSolver`].
pub const MAX_CONDITION: f64 = 1e12;

/// Singular values below this fraction of the largest mark a design as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Solver for symmetric positive definite systems `A x = b`.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    scale: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    condition: f64,
}

impl SpdSolver {
    pub fn new(a: &DMatrix<f64>, what: &str) -> Result<Self> {
        assert!(a.is_square(), "SpdSolver needs a square matrix");
        let dim = a.nrows();
        let singular = |condition: f64| FicError::Singular {
            what: what.to_string(),
            condition,
        };
        if dim == 0 {
            return Err(singular(f64::INFINITY));
        }
        let mut scale = DVector::zeros(dim);
        for i in 0..dim {
            let d = a[(i, i)];
            if !(d.is_finite() && d > 0.0) {
                return Err(singular(f64::INFINITY));
            }
            scale[i] = 1.0 / d.sqrt();
        }
        let mut eq = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            for i in 0..dim {
                let v = 0.5 * (a[(i, j)] + a[(j, i)]);
                eq[(i, j)] = v * scale[i] * scale[j];
            }
        }
        let eig = SymmetricEigen::new(eq.clone());
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(singular(condition));
        }
        let chol = Cholesky::new(eq).ok_or_else(|| singular(condition))?;
        Ok(Self {
            scale,
            chol,
            condition,
        })
    }

    /// Condition number of the equilibrated matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let scaled = b.component_mul(&self.scale);
        self.chol.solve(&scaled).component_mul(&self.scale)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = b.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        let mut x = self.chol.solve(&scaled);
        for (i, mut row) in x.row_iter_mut().enumerate() {
            row *= self.scale[i];
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let mut inv = self.solve_mat(&DMatrix::identity(self.dim(), self.dim()));
        symmetrize_in_place(&mut inv);
        inv
    }

    /// `bᵀ A⁻¹ b`
    pub fn inv_quad(&self, b: &DVector<f64>) -> f64 {
        b.dot(&self.solve_vec(b))
    }
}

pub fn symmetrize_in_place(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize_in_place(&mut s);
    SymmetricEigen::new(s).eigenvalues.min()
}

/// Max absolute asymmetry `|m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Ratio of smallest to largest singular value.
pub fn singular_value_ratio(x: &DMatrix<f64>) -> f64 {
    if x.ncols() == 0 || x.nrows() == 0 {
        return 0.0;
    }
    let sv = x.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max <= 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Errors out when the columns of `x` are (numerically) linearly dependent.
pub fn check_full_rank(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() < x.ncols() {
        return Err(FicError::RankDeficient { ratio: 0.0 });
    }
    let ratio = singular_value_ratio(x);
    if ratio < RANK_TOLERANCE {
        return Err(FicError::RankDeficient { ratio });
    }
    Ok(())
}

/// `aᵀ M b`
pub fn bilinear(a: &DVector<f64>, m: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    a.dot(&(m * b))
}

/// Picks `rows` and `cols` out of `m`.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}
