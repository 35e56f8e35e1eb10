//! Tap-delay embedding and the Wiener least-squares solution.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues of the correlation matrix below `PINV_RTOL × λ_max` are
/// treated as zero when forming the pseudo-inverse.
pub const PINV_RTOL: f64 = 1e-10;

/// Stacks the present feature row with the previous `taps - 1` rows and a
/// trailing constant 1.
///
/// Row `t` of the result corresponds to feature bin `t + taps - 1`; column
/// `lag * n_cols + j` holds column `j` delayed by `lag` bins.
pub fn embed_tap_delays(features: &DMatrix<f64>, taps: usize) -> Result<DMatrix<f64>> {
    let (n_bins, n_cols) = features.shape();
    if taps == 0 {
        return Err(Error::Config("taps must be at least 1".into()));
    }
    if n_bins < taps {
        return Err(Error::TooShort {
            what: "bins for tap-delay embedding",
            needed: taps,
            got: n_bins,
        });
    }
    let rows = n_bins - taps + 1;
    let width = taps * n_cols + 1;
    let mut design = DMatrix::zeros(rows, width);
    for lag in 0..taps {
        for j in 0..n_cols {
            let src = features.column(j);
            let mut dst = design.column_mut(lag * n_cols + j);
            for r in 0..rows {
                dst[r] = src[r + taps - 1 - lag];
            }
        }
    }
    design.column_mut(width - 1).fill(1.0);
    Ok(design)
}

/// Pseudo-inverse solve of a symmetric system `gram · w = rhs`.
pub fn solve_symmetric_pinv(gram: DMatrix<f64>, rhs: &DVector<f64>, rtol: f64) -> DVector<f64> {
    let n = gram.nrows();
    let eig = SymmetricEigen::new(gram);
    let largest = eig.eigenvalues.amax();
    let mut w = DVector::zeros(n);
    if largest == 0.0 {
        return w;
    }
    let cutoff = rtol * largest;
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() > cutoff {
            let v = eig.eigenvectors.column(k);
            w.axpy(v.dot(rhs) / lambda, &v, 1.0);
        }
    }
    w
}

/// `W = pinv(E[xᵀx]) · E[xᵀd]` over the rows of `design`.
pub fn fit_wiener(design: &DMatrix<f64>, target: &[f64]) -> Result<Vec<f64>> {
    if design.nrows() != target.len() {
        return Err(Error::Shape(format!(
            "design has {} rows, target has {} values",
            design.nrows(),
            target.len()
        )));
    }
    if design.nrows() == 0 {
        return Err(Error::TooShort {
            what: "rows for Wiener fit",
            needed: 1,
            got: 0,
        });
    }
    if design.iter().chain(target).any(|v| !v.is_finite()) {
        return Err(Error::Validation("Wiener fit inputs must be finite".into()));
    }
    let n = design.nrows() as f64;
    let d = DVector::from_column_slice(target);
    let gram = design.tr_mul(design) / n;
    let cross = design.tr_mul(&d) / n;
    Ok(solve_symmetric_pinv(gram, &cross, PINV_RTOL)
        .iter()
        .copied()
        .collect())
}

/// Max-abs entry of `designᵀ (design · w − target)`; zero at an exact
/// least-squares optimum.
pub fn normal_equation_residual(design: &DMatrix<f64>, target: &[f64], weights: &[f64]) -> f64 {
    let w = DVector::from_column_slice(weights);
    let d = DVector::from_column_slice(target);
    let resid = design * w - d;
    design.tr_mul(&resid).amax()
}

/// [`normal_equation_residual`] scaled by `‖design‖_F · ‖target‖_2`.
pub fn relative_normal_residual(design: &DMatrix<f64>, target: &[f64], weights: &[f64]) -> f64 {
    let scale = design.norm() * target.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = normal_equation_residual(design, target, weights);
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}
