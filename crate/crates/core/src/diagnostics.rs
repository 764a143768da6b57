//! Outlier diagnostics for a fitted subspace: orthogonal and score distances
//! with calibrated cutoffs, and the four-way flags behind diagnostic plots.
//!
//! Each observation gets two distances. The orthogonal distance measures how
//! far it sits from the fitted subspace; the score distance measures how
//! atypical its position *within* the subspace is, after standardizing every
//! score direction by a robust scale. Crossing the orthogonal cutoff alone
//! makes a point an orthogonal outlier, crossing the score cutoff alone makes
//! it a good leverage point, and crossing both makes it a bad leverage point.

use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::estimator::{update_scores, SubspaceFit};
use crate::scale::{median, normal_quantile, qn_scale, ScaleSpec};

/// Nominal coverage of both cutoffs: a clean Gaussian point stays below each
/// cutoff with this probability.
const CUTOFF_LEVEL: f64 = 0.975;

/// Category of one observation relative to the two cutoffs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flag {
    /// Below both cutoffs.
    Regular,
    /// Far from the subspace but unremarkable within it.
    OrthogonalOutlier,
    /// Close to the subspace but far out along it.
    GoodLeverage,
    /// Far from the subspace and far out along it.
    BadLeverage,
}

impl Flag {
    /// Token used in CSV output.
    pub fn label(self) -> &'static str {
        match self {
            Flag::Regular => "regular",
            Flag::OrthogonalOutlier => "orthogonal-outlier",
            Flag::GoodLeverage => "good-leverage",
            Flag::BadLeverage => "bad-leverage",
        }
    }
}

/// Per-observation diagnostic distances, the shared cutoffs, and the flags.
///
/// Flags are the deterministic four-way split of the strict comparisons
/// `od > od_cutoff` and `sd > sd_cutoff`; points exactly on a cutoff count as
/// inside. The orthogonal comparison is evaluated on the two-thirds-power
/// transform of the distances (the same monotone transform the cutoff is
/// derived on), which decides identically in exact arithmetic and keeps the
/// all-distances-equal boundary case stable against last-bit rounding of the
/// reported cutoff.
#[derive(Clone, Debug)]
pub struct DiagnosticTable {
    /// Euclidean distance of each observation to the fitted subspace.
    pub od: Vec<f64>,
    /// Robustly standardized distance of each observation's scores from the
    /// score medians.
    pub sd: Vec<f64>,
    /// Cutoff for the orthogonal distances.
    pub od_cutoff: f64,
    /// Cutoff for the score distances.
    pub sd_cutoff: f64,
    /// Category of each observation.
    pub flags: Vec<Flag>,
}

impl DiagnosticTable {
    /// Number of observations in the table.
    pub fn len(&self) -> usize {
        self.od.len()
    }

    /// True when the table has no rows.
    pub fn is_empty(&self) -> bool {
        self.od.is_empty()
    }
}

/// Euclidean distance of every row of `x` to the fitted subspace:
/// `‖(x_i − m) − B Bᵀ (x_i − m)‖`.
pub fn orthogonal_distances(x: &DMatrix<f64>, fit: &SubspaceFit) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    if p != fit.basis.p() {
        return Err(Error::ShapeMismatch(format!(
            "data has {p} columns but the fit is {}-dimensional",
            fit.basis.p()
        )));
    }
    let b = fit.basis.matrix();
    let mut centered = x.clone();
    for i in 0..n {
        let mut row = centered.row_mut(i);
        row -= fit.center.transpose();
    }
    let residual = &centered - &centered * b * b.transpose();
    Ok(residual.row_iter().map(|r| r.norm()).collect())
}

/// Robust standardized distances of score rows from the score center.
///
/// Each column is centered at its median and standardized by the requested
/// robust scale of the centered column, divided by the scale's value at the
/// standard normal so it estimates the standard deviation of clean Gaussian
/// scores. The distance of row i is then
/// `sqrt(Σ_k ((a_ik − c_k) / ŝ_k)²)`, which is χ distributed with q degrees
/// of freedom on clean Gaussian scores.
pub fn score_distances_of(scores: &DMatrix<f64>, spec: &ScaleSpec) -> Result<Vec<f64>> {
    let (n, q) = scores.shape();
    if n < 2 || q == 0 {
        return Err(Error::InvalidParameter(format!(
            "score distances need at least 2 observations and 1 score column, \
             got {n} x {q}"
        )));
    }
    let consistency = spec.consistency_at_normal();
    let mut standardized = DMatrix::zeros(n, q);
    for k in 0..q {
        let col: Vec<f64> = scores.column(k).iter().copied().collect();
        let center = median(&col);
        let deviations: Vec<f64> = col.iter().map(|v| (v - center).abs()).collect();
        let scale = spec.evaluate(&deviations)? / consistency;
        if scale <= 0.0 || !scale.is_finite() {
            return Err(Error::DegenerateScores { column: k });
        }
        for i in 0..n {
            standardized[(i, k)] = (col[i] - center) / scale;
        }
    }
    Ok(standardized.row_iter().map(|r| r.norm()).collect())
}

/// [`score_distances_of`] applied to a fit's own scores.
pub fn score_distances(fit: &SubspaceFit, spec: &ScaleSpec) -> Result<Vec<f64>> {
    score_distances_of(&fit.scores, spec)
}

/// Builds the diagnostic table from paired distance vectors.
///
/// The score cutoff is `sqrt` of the 0.975 quantile of χ² with `q` degrees of
/// freedom. The orthogonal cutoff uses the fact that squared orthogonal
/// distances are approximately a scaled χ², whose cube root is approximately
/// normal: with `t_i = od_i^(2/3)`, the cutoff is
/// `(median(t) + Qn(t) · z_0.975)^(3/2)`, estimating location and spread of
/// the transformed distances robustly. Flags use strict comparisons, so when
/// the spread degenerates to zero (for example, all orthogonal distances
/// equal) nothing is flagged.
pub fn outlier_flags(od: &[f64], sd: &[f64], q: usize) -> Result<DiagnosticTable> {
    if od.len() != sd.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} orthogonal distances vs {} score distances",
            od.len(),
            sd.len()
        )));
    }
    if od.is_empty() {
        return Err(Error::InvalidParameter(
            "diagnostic table needs at least one observation".into(),
        ));
    }
    if q == 0 {
        return Err(Error::InvalidParameter(
            "score distances need at least one score column".into(),
        ));
    }

    let chi2 = ChiSquared::new(q as f64).expect("q >= 1 gives a valid chi-square");
    let sd_cutoff = chi2.inverse_cdf(CUTOFF_LEVEL).sqrt();

    let transformed: Vec<f64> = od.iter().map(|&v| v.powf(2.0 / 3.0)).collect();
    let t_cutoff =
        median(&transformed) + qn_scale(&transformed) * normal_quantile(CUTOFF_LEVEL);
    let od_cutoff = t_cutoff.max(0.0).powf(1.5);

    let flags = transformed
        .iter()
        .zip(sd)
        .map(|(&t, &s)| match (t > t_cutoff, s > sd_cutoff) {
            (false, false) => Flag::Regular,
            (true, false) => Flag::OrthogonalOutlier,
            (false, true) => Flag::GoodLeverage,
            (true, true) => Flag::BadLeverage,
        })
        .collect();

    Ok(DiagnosticTable {
        od: od.to_vec(),
        sd: sd.to_vec(),
        od_cutoff,
        sd_cutoff,
        flags,
    })
}

/// Full diagnostic table for a fit on data `x`.
///
/// Scores are recomputed as `Bᵀ(x_i − m)` from the fit's basis and center, so
/// `x` may be the training data (reproducing the fit's own scores) or fresh
/// observations. The score scale uses `spec`, normally the objective the fit
/// minimized.
pub fn diagnostic_table(
    x: &DMatrix<f64>,
    fit: &SubspaceFit,
    spec: &ScaleSpec,
) -> Result<DiagnosticTable> {
    let od = orthogonal_distances(x, fit)?;
    let scores = update_scores(x, fit.basis.matrix(), &fit.center)?;
    let sd = score_distances_of(&scores, spec)?;
    outlier_flags(&od, &sd, fit.basis.q())
}
