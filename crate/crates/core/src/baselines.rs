//! Non-robust and semi-robust reference estimators: plain least-squares PCA
//! and spherical PCA (classical PCA of the data projected onto the unit
//! sphere around the spatial median). Both reuse the alternating
//! least-squares kernel, so their cost profile matches the main estimator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{self, SubspaceFit};
use crate::linalg;
use crate::starts::row_unit_vectors;

/// Iteration cap and tolerance for the reference fits; generous enough that
/// both run to numerical convergence.
const BASELINE_PASSES: usize = 500;
const BASELINE_TOL: f64 = 1e-10;

fn check_dimension(n: usize, p: usize, q: usize) -> Result<()> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("data matrix is empty".into()));
    }
    if q == 0 || q > n.min(p) {
        return Err(Error::InvalidParameter(format!(
            "subspace dimension q = {q} must satisfy 1 <= q <= min(n, p) = {}",
            n.min(p)
        )));
    }
    Ok(())
}

fn centered_about(x: &DMatrix<f64>, m: &DVector<f64>) -> DMatrix<f64> {
    let mut xc = x.clone();
    let mt = m.transpose();
    for mut row in xc.row_iter_mut() {
        row -= &mt;
    }
    xc
}

/// Assembles a [`SubspaceFit`] around a basis obtained from a least-squares
/// reference fit: scores on the original centered data, root-mean-square
/// residual distance as the scale, unit weights.
fn reference_fit(
    x: &DMatrix<f64>,
    basis: linalg::OrthonormalBasis,
    center: DVector<f64>,
    passes: usize,
    start_id: &str,
) -> SubspaceFit {
    let n = x.nrows();
    let scores = centered_about(x, &center) * basis.matrix();
    let distances = estimator::residual_distances(x, basis.matrix(), &scores, &center);
    let scale = (distances.iter().map(|d| d * d).sum::<f64>() / n as f64).sqrt();
    SubspaceFit {
        basis,
        scores,
        center,
        scale,
        weights: vec![1.0; n],
        distances,
        iterations: passes,
        converged: true,
        start_id: start_id.to_string(),
        scale_path: vec![scale],
    }
}

/// Least-squares PCA: columnwise mean center and the q-dimensional subspace
/// minimizing the mean squared residual distance, computed by alternating
/// least squares. The scale field reports the root-mean-square distance.
pub fn classical_pca(x: &DMatrix<f64>, q: usize) -> Result<SubspaceFit> {
    let (n, p) = x.shape();
    check_dimension(n, p, q)?;
    let center = x.row_mean().transpose();
    let xc = centered_about(x, &center);
    let fit = linalg::als_pca(&xc, q, None, BASELINE_PASSES, BASELINE_TOL)?;
    Ok(reference_fit(x, fit.basis, center, fit.passes, "classical-pca"))
}

/// Spherical PCA: rows are projected onto the unit sphere around the spatial
/// median (rows at the median map to zero and carry no influence) and the
/// least-squares subspace of the projected cloud is taken. Scores, distances
/// and the reported scale all refer to the original data centered at the
/// spatial median.
pub fn spherical_pca(x: &DMatrix<f64>, q: usize) -> Result<SubspaceFit> {
    let (n, p) = x.shape();
    check_dimension(n, p, q)?;
    let center = linalg::spatial_median(x);
    let projected = row_unit_vectors(&centered_about(x, &center));
    let fit = linalg::als_pca(&projected, q, None, BASELINE_PASSES, BASELINE_TOL)?;
    Ok(reference_fit(x, fit.basis, center, fit.passes, "spherical-pca"))
}
