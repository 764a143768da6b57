//! Iterative reweighted fitting of a q-dimensional affine subspace and the
//! multi-start drivers built on top of it.
//!
//! The core loop ([`iterate_fit`]) alternates three closed-form updates —
//! scores, basis, center — under observation weights derived from the robust
//! scale objective, so every step costs O(npq) and no p x p matrix is ever
//! formed. [`fit_random`] and [`fit_deterministic`] wrap the loop with the
//! two starting-value strategies and a screen-then-refine schedule.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, OrthonormalBasis};
use crate::scale::ScaleSpec;
use crate::starts;

/// Number of random starting bases used by default.
pub const DEFAULT_RANDOM_STARTS: usize = 50;

/// Iteration budget and stopping tolerance for the fitting loop and the
/// multi-start drivers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmParams {
    /// Warm-up passes that update only the center and scores.
    pub n1: usize,
    /// Full passes (basis included) after the warm-up.
    pub n2: usize,
    /// Inner basis/score/center sweeps inside each full pass.
    pub n3: usize,
    /// Cap on full passes when refining a screened candidate.
    pub n2_refine: usize,
    /// Number of screened candidates kept for refinement.
    pub n_keep: usize,
    /// Relative scale-improvement threshold that stops iteration.
    pub tol: f64,
}

impl Default for AlgorithmParams {
    fn default() -> Self {
        AlgorithmParams { n1: 3, n2: 2, n3: 3, n2_refine: 10, n_keep: 10, tol: 1e-6 }
    }
}

impl AlgorithmParams {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be positive and finite, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    /// Budget used when a screened candidate is iterated further: no warm-up,
    /// up to `n2_refine` full passes.
    fn refinement(&self) -> Self {
        AlgorithmParams { n1: 0, n2: self.n2_refine, ..self.clone() }
    }
}

/// Where the initial center for random starts comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenterStart {
    /// Minimizer of the summed Euclidean distances to the rows (default;
    /// equivariant under orthogonal transformations).
    SpatialMedian,
    /// Coordinatewise median of the rows.
    CoordinateMedian,
}

/// An initial center and orthonormal basis for the iterative fit.
#[derive(Debug, Clone)]
pub struct StartValue {
    pub basis: OrthonormalBasis,
    pub center: DVector<f64>,
}

/// A fitted subspace together with the run's diagnostics.
#[derive(Debug, Clone)]
pub struct SubspaceFit {
    /// Orthonormal basis of the fitted subspace (p x q).
    pub basis: OrthonormalBasis,
    /// Scores of each observation on the basis (n x q); row i equals
    /// `basisᵀ(x_i − center)` at return.
    pub scores: DMatrix<f64>,
    /// Fitted center in data units.
    pub center: DVector<f64>,
    /// Value of the scale objective on the final distances.
    pub scale: f64,
    /// Observation weights at the final scale.
    pub weights: Vec<f64>,
    /// Euclidean distance of each observation to the fitted subspace.
    pub distances: Vec<f64>,
    /// Outer passes executed (screening plus refinement for driver fits).
    pub iterations: usize,
    /// Whether the loop stopped on the tolerance rather than the budget.
    pub converged: bool,
    /// Which starting value produced this fit.
    pub start_id: String,
    /// Objective scale before the first pass and after every outer pass.
    pub scale_path: Vec<f64>,
}

/// Least-squares scores of every observation on the columns of `b`.
///
/// For orthonormal `b` this reduces to the plain projection
/// `a_i = bᵀ(x_i − m)`; for a general full-column-rank `b` the q x q normal
/// equations are factored once and applied to all rows.
pub fn update_scores(x: &DMatrix<f64>, b: &DMatrix<f64>, m: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    let q = b.ncols();
    if b.nrows() != p || m.len() != p {
        return Err(Error::ShapeMismatch(format!(
            "score update: data {n}x{p}, basis {}x{q}, center length {}",
            b.nrows(),
            m.len()
        )));
    }
    // (X − 1mᵀ)B without materializing the centered matrix.
    let mut xb = x * b;
    let mb = (b.transpose() * m).transpose();
    for mut row in xb.row_iter_mut() {
        row -= &mb;
    }
    let gram = b.transpose() * b;
    let chol = gram
        .cholesky()
        .ok_or(Error::SingularGram { context: "score update", size: q })?;
    Ok(chol.solve(&xb.transpose()).transpose())
}

/// Weighted least-squares update of the basis: each variable's loading row
/// solves the weighted normal equations against the current scores. The
/// weighted q x q score Gram is factored once and applied to all p
/// right-hand sides. The result is not yet orthonormal.
pub fn update_basis(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    m: &DVector<f64>,
    w: &[f64],
) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    let q = a.ncols();
    if a.nrows() != n || m.len() != p || w.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "basis update: data {n}x{p}, scores {}x{q}, center length {}, {} weights",
            a.nrows(),
            m.len(),
            w.len()
        )));
    }
    let sum_w: f64 = w.iter().sum();
    if !(sum_w > 0.0) {
        return Err(Error::DegenerateWeights("basis update"));
    }
    // diag(w)·A, reused for both the Gram and the right-hand sides.
    let mut wa = a.clone();
    for (i, &wi) in w.iter().enumerate() {
        wa.row_mut(i).scale_mut(wi);
    }
    let gram = a.transpose() * &wa;
    let chol = gram
        .cholesky()
        .ok_or(Error::DegenerateWeights("basis update (weighted score Gram is singular)"))?;
    let rhs = x.transpose() * &wa - m * wa.row_sum();
    Ok(chol.solve(&rhs.transpose()).transpose())
}

/// Weighted mean of the rows of `x`.
pub fn update_center(x: &DMatrix<f64>, w: &[f64]) -> Result<DVector<f64>> {
    let n = x.nrows();
    if w.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "center update: {n} rows but {} weights",
            w.len()
        )));
    }
    let sum_w: f64 = w.iter().sum();
    if !(sum_w > 0.0) {
        return Err(Error::DegenerateWeights("center update"));
    }
    let wv = DVector::from_column_slice(w);
    Ok(x.transpose() * wv / sum_w)
}

/// Weighted mean of the residuals `x_i − B a_i`: the center update used
/// inside the full-update sweep, where it is interleaved with basis updates
/// against a basis that is not yet orthonormal.
fn center_from_residuals(
    x: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    w: &[f64],
) -> Result<DVector<f64>> {
    let sum_w: f64 = w.iter().sum();
    if !(sum_w > 0.0) {
        return Err(Error::DegenerateWeights("center update"));
    }
    let wv = DVector::from_column_slice(w);
    Ok((x.transpose() * &wv - b * (a.transpose() * &wv)) / sum_w)
}

/// Euclidean length of every observation's residual `x_i − m − B a_i`.
pub(crate) fn residual_distances(
    x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    a: &DMatrix<f64>,
    m: &DVector<f64>,
) -> Vec<f64> {
    let mut r = x - a * b.transpose();
    let mt = m.transpose();
    for mut row in r.row_iter_mut() {
        row -= &mt;
    }
    r.row_iter().map(|row| row.norm()).collect()
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum WeightMode {
    /// Weights derived from the scale objective (the estimator proper).
    Objective,
    /// All weights pinned to one; the loop then performs plain alternating
    /// least squares. Exposed for validation only.
    Unit,
}

fn weights_for(mode: WeightMode, spec: &ScaleSpec, d: &[f64], sigma: f64) -> Vec<f64> {
    match mode {
        WeightMode::Unit => vec![1.0; d.len()],
        WeightMode::Objective => {
            if sigma > 0.0 {
                spec.weights(d, sigma)
            } else {
                spec.degenerate_weights(d.len())
            }
        }
    }
}

/// Runs the alternating reweighted fit from the given start.
///
/// The loop performs `n1` warm-up passes that only recenter and rescore,
/// then `n2` full passes whose inner sweeps (at most `n3`) also update the
/// basis; it stops early once the relative decrease of the squared objective
/// scale falls to `tol` or below. The basis is re-orthonormalized and the
/// scores recomputed before returning, which leaves the objective value
/// unchanged. The objective scale never increases from one outer pass to the
/// next (up to roundoff).
pub fn iterate_fit(
    x: &DMatrix<f64>,
    start: &StartValue,
    spec: &ScaleSpec,
    params: &AlgorithmParams,
) -> Result<SubspaceFit> {
    iterate_fit_impl(x, start, spec, params, WeightMode::Objective)
}

/// Validation hook: the same loop with every observation weight pinned to 1,
/// under which the procedure reduces to alternating least squares. The
/// reported scale still evaluates the given objective on the distances.
pub fn iterate_fit_unit_weights(
    x: &DMatrix<f64>,
    start: &StartValue,
    spec: &ScaleSpec,
    params: &AlgorithmParams,
) -> Result<SubspaceFit> {
    iterate_fit_impl(x, start, spec, params, WeightMode::Unit)
}

fn iterate_fit_impl(
    x: &DMatrix<f64>,
    start: &StartValue,
    spec: &ScaleSpec,
    params: &AlgorithmParams,
    mode: WeightMode,
) -> Result<SubspaceFit> {
    params.validate()?;
    let (n, p) = x.shape();
    let q = start.basis.q();
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("data matrix is empty".into()));
    }
    if start.basis.p() != p || start.center.len() != p {
        return Err(Error::ShapeMismatch(format!(
            "start has basis {}x{q} and center length {} for data {n}x{p}",
            start.basis.p(),
            start.center.len()
        )));
    }
    if q > n.min(p) {
        return Err(Error::InvalidParameter(format!(
            "subspace dimension q = {q} exceeds min(n, p) = {}",
            n.min(p)
        )));
    }
    reject_constant_rows(x)?;

    let mut b = start.basis.matrix().clone();
    let mut m = start.center.clone();

    // Initial scores, distances, and objective value.
    let mut a = update_scores(x, &b, &m)?;
    let mut d = residual_distances(x, &b, &a, &m);
    let mut sigma = spec.evaluate(&d)?;
    let mut scale_path = vec![sigma];
    let mut converged = sigma == 0.0;
    let mut iterations = 0usize;
    let total = params.n1 + params.n2;

    while !converged && iterations < total {
        let it = iterations + 1;
        let wrap = |e: Error| e.at_iteration(it);

        // (a) Reweight at the current scale, then recenter.
        let w = weights_for(mode, spec, &d, sigma);
        m = update_center(x, &w).map_err(wrap)?;

        // (b) Full-update sweeps once past the warm-up passes.
        if it > params.n1 {
            let mut s_prev = sigma;
            for _ in 0..params.n3 {
                a = update_scores(x, &b, &m).map_err(wrap)?;
                b = update_basis(x, &a, &m, &w).map_err(wrap)?;
                m = center_from_residuals(x, &a, &b, &w).map_err(wrap)?;
                d = residual_distances(x, &b, &a, &m);
                let s = spec.evaluate_hinted(&d, Some(s_prev)).map_err(wrap)?;
                let delta_inner = if s_prev > 0.0 { 1.0 - (s * s) / (s_prev * s_prev) } else { 0.0 };
                s_prev = s;
                if s == 0.0 || delta_inner <= params.tol {
                    break;
                }
            }
        }

        // (c) Rescore against the updated basis and center.
        a = update_scores(x, &b, &m).map_err(wrap)?;
        d = residual_distances(x, &b, &a, &m);

        // (d)-(f) New objective value, relative improvement, bookkeeping.
        let sigma_new = spec.evaluate_hinted(&d, Some(sigma)).map_err(wrap)?;
        scale_path.push(sigma_new);
        let delta = if sigma > 0.0 { 1.0 - (sigma_new * sigma_new) / (sigma * sigma) } else { 0.0 };
        sigma = sigma_new;
        iterations = it;
        if sigma == 0.0 || delta <= params.tol {
            converged = true;
        }
    }

    // Orthonormalize and rescore; the subspace, hence the objective, is
    // unchanged.
    let basis = linalg::orthonormalize(&b)?;
    let scores = update_scores(x, basis.matrix(), &m)?;
    let distances = residual_distances(x, basis.matrix(), &scores, &m);
    let scale = spec.evaluate_hinted(&distances, Some(sigma))?;
    let weights = weights_for(mode, spec, &distances, scale);
    Ok(SubspaceFit {
        basis,
        scores,
        center: m,
        scale,
        weights,
        distances,
        iterations,
        converged,
        start_id: String::new(),
        scale_path,
    })
}

fn reject_constant_rows(x: &DMatrix<f64>) -> Result<()> {
    let first = x.row(0);
    if x.row_iter().skip(1).all(|row| row == first) {
        return Err(Error::DegenerateData("all observations are identical".into()));
    }
    Ok(())
}

/// Fits the subspace from `n_starts` random orthonormal bases, all anchored
/// at the spatial median. Every start is screened with the base iteration
/// budget; the `n_keep` candidates with the lowest scale are refined with up
/// to `n2_refine` full passes, and the refined fit with the lowest scale
/// wins. Ties in scale break toward the lower start index, so the result is
/// a deterministic function of `(x, q, spec, n_starts, params, seed)`
/// regardless of how many threads evaluate the starts.
pub fn fit_random(
    x: &DMatrix<f64>,
    q: usize,
    spec: &ScaleSpec,
    n_starts: usize,
    params: &AlgorithmParams,
    seed: u64,
) -> Result<SubspaceFit> {
    fit_random_from_center(x, q, spec, n_starts, params, seed, CenterStart::SpatialMedian)
}

/// [`fit_random`] with an explicit choice of the starting center.
pub fn fit_random_from_center(
    x: &DMatrix<f64>,
    q: usize,
    spec: &ScaleSpec,
    n_starts: usize,
    params: &AlgorithmParams,
    seed: u64,
    center: CenterStart,
) -> Result<SubspaceFit> {
    params.validate()?;
    let (n, p) = x.shape();
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("data matrix is empty".into()));
    }
    if n_starts == 0 {
        return Err(Error::InvalidParameter("need at least one random start".into()));
    }
    if q == 0 || q > n.min(p) {
        return Err(Error::InvalidParameter(format!(
            "subspace dimension q = {q} must satisfy 1 <= q <= min(n, p) = {}",
            n.min(p)
        )));
    }
    let m0 = match center {
        CenterStart::SpatialMedian => linalg::spatial_median(x),
        CenterStart::CoordinateMedian => {
            DVector::from_iterator(
                p,
                (0..p).map(|j| {
                    let col: Vec<f64> = x.column(j).iter().copied().collect();
                    crate::scale::median(&col)
                }),
            )
        }
    };

    let screened: Vec<(usize, Result<SubspaceFit>)> = (0..n_starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let basis = linalg::random_orthogonal(p, q, &mut rng);
            let start = StartValue { basis, center: m0.clone() };
            (i, iterate_fit(x, &start, spec, params))
        })
        .collect();
    select_and_refine(x, spec, params, screened, n_starts, |i| format!("random-{i}"))
}

/// Fits the subspace from the five transform-based deterministic starts.
/// Screening and refinement proceed as in [`fit_random`] but only the single
/// best screened candidate is refined. No randomness is involved.
pub fn fit_deterministic(
    x: &DMatrix<f64>,
    q: usize,
    spec: &ScaleSpec,
    params: &AlgorithmParams,
) -> Result<SubspaceFit> {
    params.validate()?;
    let (n, p) = x.shape();
    if n < 4 {
        return Err(Error::InvalidParameter(format!(
            "deterministic starts need at least 4 observations, got {n}"
        )));
    }
    if q == 0 || q > n.min(p) {
        return Err(Error::InvalidParameter(format!(
            "subspace dimension q = {q} must satisfy 1 <= q <= min(n, p) = {}",
            n.min(p)
        )));
    }
    let labelled = starts::deterministic_start_set(x, q)?;
    let labels: Vec<&'static str> = labelled.iter().map(|s| s.label).collect();
    let single_keep = AlgorithmParams { n_keep: 1, ..params.clone() };
    let screened: Vec<(usize, Result<SubspaceFit>)> = labelled
        .into_par_iter()
        .enumerate()
        .map(|(i, named)| (i, iterate_fit(x, &named.value, spec, params)))
        .collect();
    let attempted = screened.len();
    select_and_refine(x, spec, &single_keep, screened, attempted, |i| labels[i].to_string())
}

/// Shared screen-then-refine reduction for the multi-start drivers.
fn select_and_refine(
    x: &DMatrix<f64>,
    spec: &ScaleSpec,
    params: &AlgorithmParams,
    screened: Vec<(usize, Result<SubspaceFit>)>,
    attempted: usize,
    label: impl Fn(usize) -> String + Sync,
) -> Result<SubspaceFit> {
    let mut kept: Vec<(usize, SubspaceFit)> = Vec::new();
    let mut last_error: Option<Error> = None;
    for (i, outcome) in screened {
        match outcome {
            Ok(fit) => kept.push((i, fit)),
            Err(e) => last_error = Some(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::AllStartsFailed {
            attempted,
            last: last_error.map_or_else(|| "no starts evaluated".into(), |e| e.to_string()),
        });
    }
    kept.sort_by(|l, r| l.1.scale.total_cmp(&r.1.scale).then(l.0.cmp(&r.0)));
    kept.truncate(params.n_keep.max(1));

    let refine_params = params.refinement();
    let refined: Vec<(usize, Result<SubspaceFit>)> = kept
        .into_par_iter()
        .map(|(i, screen)| {
            let start = StartValue { basis: screen.basis.clone(), center: screen.center.clone() };
            let outcome = iterate_fit(x, &start, spec, &refine_params).map(|mut fit| {
                fit.iterations += screen.iterations;
                // The refinement's leading scale re-measures the screened
                // state, so splice the paths without repeating it.
                let mut path = screen.scale_path.clone();
                path.extend_from_slice(&fit.scale_path[1..]);
                fit.scale_path = path;
                fit.start_id = label(i);
                fit
            });
            (i, outcome)
        })
        .collect();

    let mut best: Option<(usize, SubspaceFit)> = None;
    let mut last_error: Option<Error> = None;
    for (i, outcome) in refined {
        match outcome {
            Ok(fit) => match &best {
                Some((bi, bf))
                    if bf.scale.total_cmp(&fit.scale).then(bi.cmp(&i)).is_le() => {}
                _ => best = Some((i, fit)),
            },
            Err(e) => last_error = Some(e),
        }
    }
    match best {
        Some((_, fit)) => Ok(fit),
        None => Err(Error::AllStartsFailed {
            attempted,
            last: last_error.map_or_else(|| "no starts evaluated".into(), |e| e.to_string()),
        }),
    }
}

/// Relative residual of the weighted eigen-equation at the fitted basis:
/// `‖C·B − B·(BᵀC·B)‖_F / ‖C·B‖_F`, where `C` is the weighted covariance of
/// the centered data at the fit's weights. `C·B` is accumulated as
/// `Xcᵀ(w ⊙ (Xc·B))/n`, so no p x p matrix is formed. Small at a fixed point
/// of the iteration; zero when the fit is exact.
pub fn eigen_residual(fit: &SubspaceFit, x: &DMatrix<f64>) -> f64 {
    let (n, p) = x.shape();
    assert_eq!(fit.basis.p(), p, "fit and data disagree on dimension");
    assert_eq!(fit.weights.len(), n, "fit and data disagree on sample size");
    let mut xc = x.clone();
    let mt = fit.center.transpose();
    for mut row in xc.row_iter_mut() {
        row -= &mt;
    }
    let bm = fit.basis.matrix();
    let mut xb = &xc * bm;
    for (i, &wi) in fit.weights.iter().enumerate() {
        xb.row_mut(i).scale_mut(wi);
    }
    let cb = xc.transpose() * xb / n as f64;
    let lambda = bm.transpose() * &cb;
    let num = (&cb - bm * lambda).norm();
    let den = cb.norm();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
