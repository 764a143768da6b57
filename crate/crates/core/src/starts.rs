//! Deterministic starting values for the subspace fit.
//!
//! Each start comes from the same recipe: dampen outliers with a columnwise
//! or rowwise transform of the robustly standardized data, take a crude
//! classical subspace of the transformed matrix, keep the half of the sample
//! that scores smallest on it, and fit a classical subspace to that kept
//! half of the raw data. Five transforms give five starts; the whole
//! pipeline involves no randomness.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::estimator::StartValue;
use crate::linalg;
use crate::scale::{median, normal_quantile, qn_scale};

/// Iteration budget for the crude classical subspaces used inside the start
/// construction (both on the transformed data and on the kept subset).
const NAIVE_PCA_PASSES: usize = 3;
const NAIVE_PCA_TOL: f64 = 1e-6;

/// Labels identifying the five deterministic starts, in construction order.
pub const START_LABELS: [&str; 5] =
    ["tanh", "ranks", "normal-scores", "spatial-signs", "standardized"];

/// The five outlier-dampening transforms of one data set.
#[derive(Debug, Clone)]
pub struct TransformSet {
    /// tanh of the standardized data, re-standardized columnwise.
    pub tanh_scores: DMatrix<f64>,
    /// Columnwise ranks of the raw data; ties get average ranks.
    pub ranks: DMatrix<f64>,
    /// Normal scores derived from the ranks.
    pub normal_scores: DMatrix<f64>,
    /// Row-normalized standardized data, re-standardized columnwise.
    pub spatial_signs: DMatrix<f64>,
    /// The standardized data itself.
    pub standardized: DMatrix<f64>,
}

impl TransformSet {
    /// The transforms in fixed order, paired with their labels.
    fn labelled(&self) -> [(&'static str, &DMatrix<f64>); 5] {
        [
            (START_LABELS[0], &self.tanh_scores),
            (START_LABELS[1], &self.ranks),
            (START_LABELS[2], &self.normal_scores),
            (START_LABELS[3], &self.spatial_signs),
            (START_LABELS[4], &self.standardized),
        ]
    }
}

/// A starting value tagged with the transform that produced it.
#[derive(Debug, Clone)]
pub struct NamedStart {
    pub label: &'static str,
    pub value: StartValue,
}

/// Centers each column at its median and divides by its pairwise-difference
/// scale. Returns the standardized matrix along with the per-column centers
/// and scales.
pub fn robust_standardize(
    x: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("data matrix is empty".into()));
    }
    let mut centers = DVector::zeros(p);
    let mut scales = DVector::zeros(p);
    let mut z = x.clone();
    for j in 0..p {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let center = median(&col);
        let scale = qn_scale(&col);
        if !(scale > 0.0) {
            return Err(Error::ZeroScaleColumn { column: j, stage: "standardization" });
        }
        centers[j] = center;
        scales[j] = scale;
        for i in 0..n {
            z[(i, j)] = (x[(i, j)] - center) / scale;
        }
    }
    Ok((z, centers, scales))
}

/// Columnwise re-standardization (median and pairwise-difference scale) of a
/// transformed matrix, erroring when a column's scale collapses.
fn restandardize_columns(u: &mut DMatrix<f64>, stage: &'static str) -> Result<()> {
    let (n, p) = u.shape();
    for j in 0..p {
        let col: Vec<f64> = u.column(j).iter().copied().collect();
        let center = median(&col);
        let scale = qn_scale(&col);
        if !(scale > 0.0) {
            return Err(Error::ZeroScaleColumn { column: j, stage });
        }
        for i in 0..n {
            u[(i, j)] = (u[(i, j)] - center) / scale;
        }
    }
    Ok(())
}

/// Ranks of one column, averaging tied values. Ranks run from 1 to n.
fn column_ranks(col: &[f64]) -> Vec<f64> {
    let n = col.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && col[order[j + 1]] == col[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Rows of `z` scaled to unit Euclidean norm; all-zero rows stay zero.
pub(crate) fn row_unit_vectors(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = z.clone();
    for mut row in s.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    s
}

/// Builds the five transform matrices from the raw data and its
/// standardization.
pub fn build_transforms(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<TransformSet> {
    let (n, p) = x.shape();
    if z.shape() != (n, p) {
        return Err(Error::ShapeMismatch(format!(
            "standardized matrix is {}x{}, data is {n}x{p}",
            z.nrows(),
            z.ncols()
        )));
    }

    let mut tanh_scores = z.map(f64::tanh);
    restandardize_columns(&mut tanh_scores, "tanh transform")?;

    let mut ranks = DMatrix::zeros(n, p);
    for j in 0..p {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let r = column_ranks(&col);
        for i in 0..n {
            ranks[(i, j)] = r[i];
        }
    }

    let denominator = n as f64 + 1.0 / 3.0;
    let normal_scores = ranks.map(|r| normal_quantile((r - 1.0 / 3.0) / denominator));

    let mut spatial_signs = row_unit_vectors(z);
    restandardize_columns(&mut spatial_signs, "spatial-sign transform")?;

    Ok(TransformSet { tanh_scores, ranks, normal_scores, spatial_signs, standardized: z.clone() })
}

fn center_rows_by_mean(u: &DMatrix<f64>) -> (DMatrix<f64>, RowDVector<f64>) {
    let mean = u.row_mean();
    let mut centered = u.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    (centered, mean)
}

/// One start: crude subspace of the transformed data, half-sample selection
/// by score norm in standardized coordinates, then a classical subspace of
/// the kept raw rows. Returns the kept row indices alongside the start.
pub(crate) fn transform_start(
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    u: &DMatrix<f64>,
    q: usize,
) -> Result<(Vec<usize>, StartValue)> {
    let n = x.nrows();
    let keep = n.div_ceil(2);

    let (centered, _) = center_rows_by_mean(u);
    let crude = linalg::als_pca(&centered, q, None, NAIVE_PCA_PASSES, NAIVE_PCA_TOL)?;

    // Score every standardized row against the crude subspace and keep the
    // half of the sample with the smallest score norms; ties break toward
    // the lower row index.
    let scores = z * crude.basis.matrix();
    let norms: Vec<f64> = scores.row_iter().map(|row| row.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    order.truncate(keep);
    order.sort_unstable();

    let subset = x.select_rows(order.iter());
    let (centered_subset, subset_mean) = center_rows_by_mean(&subset);
    let fitted = linalg::als_pca(&centered_subset, q, None, NAIVE_PCA_PASSES, NAIVE_PCA_TOL)?;
    let start = StartValue { basis: fitted.basis, center: subset_mean.transpose() };
    Ok((order, start))
}

/// Builds the five deterministic starting values, in the fixed transform
/// order given by [`START_LABELS`]. The construction is a pure function of
/// the data.
pub fn deterministic_start_set(x: &DMatrix<f64>, q: usize) -> Result<Vec<NamedStart>> {
    let (n, p) = x.shape();
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "deterministic starts need at least 4 observations, got {n}"
        )));
    }
    let keep = n.div_ceil(2);
    if q == 0 || q > keep.min(p) {
        return Err(Error::InvalidParameter(format!(
            "subspace dimension q = {q} must satisfy 1 <= q <= min(ceil(n/2), p) = {}",
            keep.min(p)
        )));
    }
    let (z, _, _) = robust_standardize(x)?;
    let transforms = build_transforms(x, &z)?;
    transforms
        .labelled()
        .iter()
        .map(|(label, u)| {
            let (_, value) = transform_start(x, &z, u, q)?;
            Ok(NamedStart { label, value })
        })
        .collect()
}
