//! Matrix kernels shared by every estimator: orthonormal bases with a fixed
//! sign convention, Haar-distributed random bases, the spatial median,
//! principal angles between subspaces, and an alternating least squares PCA
//! that never forms a p x p decomposition.
//!
//! Invariants:
//! - an [`OrthonormalBasis`] always satisfies `|B^T B - I|_F < 1e-10`
//! - [`orthonormalize`] resolves the sign ambiguity by making the
//!   largest-magnitude entry of every column positive (first such entry on
//!   ties), so equal spans map to identical matrices
//! - [`als_pca`] performs at most `max_passes` update sweeps and its mean
//!   squared residual never increases from one sweep to the next

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Frobenius tolerance for accepting a matrix as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Column-orthonormal p x q matrix. Construction validates the invariant, so
/// holding a value of this type means the columns form an orthonormal set.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    mat: DMatrix<f64>,
}

impl OrthonormalBasis {
    /// Wrap a matrix after checking `|B^T B - I|_F < 1e-10`.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let (p, q) = mat.shape();
        if q == 0 || q > p {
            return Err(Error::ShapeMismatch(format!(
                "orthonormal basis needs 1 <= q <= p, got {p}x{q}"
            )));
        }
        let gram = mat.transpose() * &mat;
        let dev = (&gram - DMatrix::<f64>::identity(q, q)).norm();
        if dev >= ORTHONORMAL_TOL {
            return Err(Error::InvalidParameter(format!(
                "matrix is not orthonormal: |B^T B - I|_F = {dev:.3e}"
            )));
        }
        Ok(OrthonormalBasis { mat })
    }

    /// Internal fast path for matrices that are orthonormal by construction.
    pub(crate) fn new_unchecked(mat: DMatrix<f64>) -> Self {
        debug_assert!({
            let q = mat.ncols();
            (mat.transpose() * &mat - DMatrix::<f64>::identity(q, q)).norm() < ORTHONORMAL_TOL
        });
        OrthonormalBasis { mat }
    }

    /// First q coordinate directions of R^p.
    pub fn canonical(p: usize, q: usize) -> Self {
        assert!(q >= 1 && q <= p, "canonical basis needs 1 <= q <= p");
        OrthonormalBasis { mat: DMatrix::identity(p, q) }
    }

    pub fn p(&self) -> usize {
        self.mat.nrows()
    }

    pub fn q(&self) -> usize {
        self.mat.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.mat
    }
}

/// Make the largest-magnitude entry of each column positive (first such entry
/// wins on ties). Fixes the per-column sign ambiguity of QR deterministically.
fn fix_column_signs(mat: &mut DMatrix<f64>) {
    for j in 0..mat.ncols() {
        let mut best = 0usize;
        let mut best_abs = f64::NEG_INFINITY;
        for i in 0..mat.nrows() {
            let a = mat[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if mat[(best, j)] < 0.0 {
            for i in 0..mat.nrows() {
                mat[(i, j)] = -mat[(i, j)];
            }
        }
    }
}

/// Orthonormal basis of the column span of `b` via QR, with the deterministic
/// sign convention of [`fix_column_signs`]. Rank deficiency is an error.
pub fn orthonormalize(b: &DMatrix<f64>) -> Result<OrthonormalBasis> {
    let (p, q) = b.shape();
    if q == 0 || q > p {
        return Err(Error::ShapeMismatch(format!(
            "orthonormalize needs 1 <= q <= p, got {p}x{q}"
        )));
    }
    let qr = b.clone().qr();
    let r = qr.r();
    let max_diag = (0..q).map(|j| r[(j, j)].abs()).fold(0.0_f64, f64::max);
    let tol = f64::EPSILON * (p.max(q) as f64) * max_diag;
    if max_diag == 0.0 || (0..q).any(|j| r[(j, j)].abs() <= tol) {
        return Err(Error::RankDeficient("orthonormalize"));
    }
    let mut qmat = qr.q();
    fix_column_signs(&mut qmat);
    Ok(OrthonormalBasis::new_unchecked(qmat))
}

/// Haar-distributed random p x q orthonormal basis: QR of a standard normal
/// matrix with the R diagonal forced positive (Stewart's construction).
pub fn random_orthogonal<R: Rng + ?Sized>(p: usize, q: usize, rng: &mut R) -> OrthonormalBasis {
    assert!(q >= 1 && q <= p, "random_orthogonal needs 1 <= q <= p");
    let g = DMatrix::from_fn(p, q, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut qmat = qr.q();
    for j in 0..q {
        if r[(j, j)] < 0.0 {
            for i in 0..p {
                qmat[(i, j)] = -qmat[(i, j)];
            }
        }
    }
    OrthonormalBasis::new_unchecked(qmat)
}

/// Geometric (spatial) median of the rows of `x` by the modified Weiszfeld
/// iteration: minimizes the sum of Euclidean distances to the rows. Iterates
/// coinciding with a data point get the Vardi-Zhang treatment; step-norm
/// tolerance 1e-8, at most 200 iterations.
pub fn spatial_median(x: &DMatrix<f64>) -> DVector<f64> {
    let (n, p) = x.shape();
    assert!(n >= 1, "spatial median of an empty matrix");
    let mut y: DVector<f64> = x.row_mean().transpose();
    for _ in 0..200 {
        let mut wsum = 0.0;
        let mut weighted = DVector::<f64>::zeros(p);
        let mut pull = DVector::<f64>::zeros(p);
        let mut multiplicity = 0usize;
        for i in 0..n {
            let diff = x.row(i).transpose() - &y;
            let dist = diff.norm();
            if dist <= 1e-12 {
                multiplicity += 1;
                continue;
            }
            let w = 1.0 / dist;
            wsum += w;
            weighted.axpy(w, &x.row(i).transpose(), 1.0);
            pull.axpy(w, &diff, 1.0);
        }
        if wsum == 0.0 {
            return y; // every row coincides with the iterate
        }
        let target = weighted / wsum;
        let step = if multiplicity == 0 {
            target - &y
        } else {
            let pull_norm = pull.norm();
            if pull_norm <= multiplicity as f64 {
                return y; // optimality condition at a data point
            }
            (target - &y) * (1.0 - multiplicity as f64 / pull_norm)
        };
        let step_norm = step.norm();
        y += step;
        if step_norm <= 1e-8 {
            break;
        }
    }
    y
}

/// Principal angles between two subspaces given by orthonormal bases, sorted
/// ascending, plus the largest angle divided by pi/2.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAngles {
    pub angles: Vec<f64>,
    pub standardized_last: f64,
}

/// Angles are `acos` of the singular values of `B1^T B2` (clamped to [0, 1]
/// against roundoff). Only a q x q SVD is needed.
pub fn principal_angles(b1: &OrthonormalBasis, b2: &OrthonormalBasis) -> Result<PrincipalAngles> {
    if b1.p() != b2.p() || b1.q() != b2.q() {
        return Err(Error::ShapeMismatch(format!(
            "principal angles need equal shapes, got {}x{} vs {}x{}",
            b1.p(),
            b1.q(),
            b2.p(),
            b2.q()
        )));
    }
    let m = b1.matrix().transpose() * b2.matrix();
    let svd = m.svd(false, false);
    let mut angles: Vec<f64> = svd
        .singular_values
        .iter()
        .map(|&s| s.clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(f64::total_cmp);
    let last = *angles.last().expect("q >= 1");
    Ok(PrincipalAngles { angles, standardized_last: last / std::f64::consts::FRAC_PI_2 })
}

/// Result of [`als_pca`]: orthonormalized basis and the scores of the input
/// rows on it.
#[derive(Debug, Clone)]
pub struct AlsFit {
    pub basis: OrthonormalBasis,
    pub scores: DMatrix<f64>,
    /// Sweeps actually executed before the tolerance or the cap stopped the
    /// loop.
    pub passes: usize,
}

/// Classical PCA of a centered matrix by alternating least squares. Each
/// sweep solves the two q x q normal-equation systems
/// `A = Y B (B^T B)^-1` and `B = Y^T A (A^T A)^-1`, so the cost stays
/// O(npq) per sweep and no p x p decomposition is formed. Runs at most
/// `max_passes` sweeps, stopping early when the relative decrease of the
/// mean squared residual falls to `tol` or below.
///
/// `b0` is the starting basis; the first q coordinate directions when absent.
/// Centering is the caller's responsibility.
pub fn als_pca(
    y: &DMatrix<f64>,
    q: usize,
    b0: Option<&OrthonormalBasis>,
    max_passes: usize,
    tol: f64,
) -> Result<AlsFit> {
    let (n, p) = y.shape();
    if n == 0 || q == 0 || q > n.min(p) {
        return Err(Error::InvalidParameter(format!(
            "als_pca needs 1 <= q <= min(n, p), got q = {q} with data {n}x{p}"
        )));
    }
    assert!(max_passes >= 1, "als_pca needs at least one pass");
    assert!(tol > 0.0, "als_pca tolerance must be positive");
    if let Some(b) = b0 {
        if b.p() != p || b.q() != q {
            return Err(Error::ShapeMismatch(format!(
                "starting basis is {}x{}, expected {p}x{q}",
                b.p(),
                b.q()
            )));
        }
    }

    let mut b: DMatrix<f64> = match b0 {
        Some(basis) => basis.matrix().clone(),
        None => DMatrix::identity(p, q),
    };
    let mut a = y * &b; // b starts orthonormal, so plain projection
    let mut s0 = (y - &a * b.transpose()).norm_squared() / n as f64;
    // roundoff floor for the monotonicity check near exact fits
    let noise = f64::EPSILON * y.norm_squared() / n as f64;
    let mut passes = 0usize;

    if s0 > 0.0 {
        for _ in 0..max_passes {
            passes += 1;
            // scores from the current (possibly non-orthonormal) basis
            let gram_b = b.transpose() * &b;
            let chol_b = gram_b.cholesky().ok_or(Error::SingularGram {
                context: "als_pca basis Gram",
                size: q,
            })?;
            a = chol_b.solve(&(b.transpose() * y.transpose())).transpose();
            // basis from the new scores
            let gram_a = a.transpose() * &a;
            let chol_a = gram_a.cholesky().ok_or(Error::SingularGram {
                context: "als_pca score Gram",
                size: q,
            })?;
            b = chol_a.solve(&(a.transpose() * y)).transpose();

            let s2 = (y - &a * b.transpose()).norm_squared() / n as f64;
            debug_assert!(s2 <= s0 * (1.0 + 1e-12) + noise, "ALS residual increased");
            let delta = 1.0 - s2 / s0;
            s0 = s2;
            if delta <= tol {
                break;
            }
        }
    }

    let basis = orthonormalize(&b)?;
    let scores = y * basis.matrix();
    Ok(AlsFit { basis, scores, passes })
}
