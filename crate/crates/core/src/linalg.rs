//! Dense least-squares helpers shared by the fusion and baseline regressors.

use nalgebra::{DMatrix, DVector};

/// Singular-value ratio below which a design is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Ridge strength used when an ordinary least-squares design is singular.
pub const FALLBACK_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// True when the design was rank deficient and the ridge fallback ran.
    pub rank_deficient: bool,
}

/// Build a row-major design matrix.
pub fn design(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, p, |i, j| rows[i][j])
}

/// Whether `x` has numerically full column rank after scaling each column to
/// unit norm.
pub fn has_full_column_rank(x: &DMatrix<f64>) -> bool {
    if x.nrows() < x.ncols() {
        return false;
    }
    let mut scaled = x.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm == 0.0 {
            return false;
        }
        col /= norm;
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    max > 0.0 && min / max > RANK_TOLERANCE
}

/// Ordinary least squares, falling back to a `FALLBACK_RIDGE` ridge solve
/// when the design is rank deficient.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> LeastSquares {
    if has_full_column_rank(x) {
        let qr = x.clone().qr();
        let qty = qr.q().transpose() * y;
        let r = qr.r();
        if let Some(beta) = r.solve_upper_triangular(&qty) {
            return LeastSquares {
                coefficients: beta.iter().copied().collect(),
                rank_deficient: false,
            };
        }
    }
    let penalized = vec![true; x.ncols()];
    LeastSquares {
        coefficients: ridge_normal_equations(x, y, FALLBACK_RIDGE, &penalized),
        rank_deficient: true,
    }
}

/// Solve `(XᵀX + λ·D) β = Xᵀy` where `D` is diagonal with ones on the
/// penalized columns.
pub fn ridge_normal_equations(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    penalized: &[bool],
) -> Vec<f64> {
    let mut gram = x.transpose() * x;
    for (j, &p) in penalized.iter().enumerate() {
        if p {
            gram[(j, j)] += lambda;
        }
    }
    let rhs = x.transpose() * y;
    let solution = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => gram
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(x.ncols())),
    };
    solution.iter().copied().collect()
}
