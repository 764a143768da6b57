//! Synthetic benchmark designs, prediction-error metrics, and an
//! orthogonal-equivariance experiment.
//!
//! Every design draws clean rows from a centered Gaussian whose covariance is
//! diagonal with ascending eigenvalues, so the last `q` coordinate axes span
//! the best q-dimensional subspace by construction. Contaminated rows are
//! shifted `k` units along the low-variance coordinates — straight out of the
//! dominant subspace — and carry a quarter of the clean variance, so they form
//! a tight, well-separated clump that non-robust fits chase. Fitted bases are
//! scored with [`relative_prediction_error`], the excess share of variance the
//! fit leaves unexplained relative to the best possible subspace.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{classical_pca, spherical_pca};
use crate::error::{Error, Result};
use crate::estimator::{
    fit_deterministic, fit_random, AlgorithmParams, SubspaceFit, DEFAULT_RANDOM_STARTS,
};
use crate::linalg::{principal_angles, random_orthogonal, OrthonormalBasis};
use crate::scale::ScaleSpec;

/// Seed lane for drawing a replicate's data matrix.
const LANE_SAMPLE: u64 = 0;
/// Seed lane for a replicate's random orthogonal rotation.
const LANE_ROTATION: u64 = 1;
/// First seed lane handed to fitting methods; callers offset it per fit.
const LANE_FIT: u64 = 2;

/// Shape of the eigenvalue profile a design uses for its clean covariance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DesignKind {
    /// Step profile: noise eigenvalues rise slowly as `1 + 0.1 j`, then jump
    /// abruptly to `q` dominant eigenvalues `20 (1 + 0.5 i)`.
    Abrupt,
    /// Geometric profile `2^(j-1)`: variance grows smoothly with no gap
    /// between the dominant block and the rest.
    Geometric,
    /// Step profile like [`DesignKind::Abrupt`] but with the noise slope
    /// calibrated so the `q` dominant directions explain exactly 80% of the
    /// total variance regardless of `p`.
    HighDim,
}

impl DesignKind {
    /// Short token used in CSV output and on the command line.
    pub fn label(self) -> &'static str {
        match self {
            DesignKind::Abrupt => "a",
            DesignKind::Geometric => "b",
            DesignKind::HighDim => "hd",
        }
    }

    /// Parses the command-line token for a design kind.
    pub fn parse(token: &str) -> Option<Self> {
        match token.to_ascii_lowercase().as_str() {
            "a" => Some(DesignKind::Abrupt),
            "b" => Some(DesignKind::Geometric),
            "hd" => Some(DesignKind::HighDim),
            _ => None,
        }
    }
}

/// A fully specified synthetic sampling scenario.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationDesign {
    /// Eigenvalue profile of the clean covariance.
    pub kind: DesignKind,
    /// Number of rows, contaminated rows included.
    pub n: usize,
    /// Ambient dimension.
    pub p: usize,
    /// Dimension of the dominant subspace a fit should recover.
    pub q: usize,
    /// Fraction of contaminated rows, in `[0, 0.5)`.
    pub eps: f64,
    /// Distance of the contamination center from the origin.
    pub k: f64,
    /// Base seed; each replicate derives its own independent streams from it.
    pub seed: u64,
}

impl SimulationDesign {
    /// Builds and validates a design.
    pub fn new(
        kind: DesignKind,
        n: usize,
        p: usize,
        q: usize,
        eps: f64,
        k: f64,
        seed: u64,
    ) -> Result<Self> {
        let design = SimulationDesign { kind, n, p, q, eps, k, seed };
        design.validate()?;
        Ok(design)
    }

    /// Checks every field constraint, including attainability of the 80%
    /// share for [`DesignKind::HighDim`].
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter(
                "design needs at least one observation".into(),
            ));
        }
        if self.q == 0 || self.q >= self.p {
            return Err(Error::InvalidParameter(format!(
                "subspace dimension must satisfy 1 <= q < p, got q = {}, p = {}",
                self.q, self.p
            )));
        }
        if !self.eps.is_finite() || !(0.0..0.5).contains(&self.eps) {
            return Err(Error::InvalidParameter(format!(
                "contamination fraction must lie in [0, 0.5), got {}",
                self.eps
            )));
        }
        if !self.k.is_finite() || self.k < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "outlier distance must be finite and nonnegative, got {}",
                self.k
            )));
        }
        if self.kind == DesignKind::HighDim {
            high_dim_slope(self.p, self.q)?;
        }
        Ok(())
    }

    /// Number of contaminated rows: `⌊n·eps⌋`, computed so that decimal
    /// fractions land exactly (`100 · 0.29` evaluates just below 29 in
    /// floating point but must count as 29 rows).
    pub fn outlier_count(&self) -> usize {
        let raw = self.n as f64 * self.eps;
        let nearest = raw.round();
        if (raw - nearest).abs() < 1e-9 {
            nearest as usize
        } else {
            raw.floor() as usize
        }
    }
}

/// One generated data set together with its ground truth.
#[derive(Clone, Debug)]
pub struct LabeledSample {
    /// The `n x p` data matrix; contaminated rows come last.
    pub x: DMatrix<f64>,
    /// Per-row contamination flags. Estimators never see these.
    pub is_outlier: Vec<bool>,
    /// Eigenvalues of the clean covariance, ascending.
    pub sigma_diag: DVector<f64>,
}

/// Slope of the noise eigenvalues in the [`DesignKind::HighDim`] profile.
///
/// The dominant block sums to `s_q = 20q + 5q(q+1)`; an 80% share forces the
/// noise block to sum to `s_q / 4`, and solving
/// `(p-q) + c·(p-q)(p-q+1)/2 = s_q / 4` for the slope gives the closed form
/// below. The share is unattainable when a flat noise floor of ones already
/// exceeds `s_q / 4`, i.e. when the solved slope is nonpositive.
fn high_dim_slope(p: usize, q: usize) -> Result<f64> {
    let pq = (p - q) as f64;
    let s_q = (20 * q + 5 * q * (q + 1)) as f64;
    let c = 2.0 * (s_q / 4.0 - pq) / (pq * (pq + 1.0));
    if c <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "calibrated profile cannot give {q} dominant directions an 80% variance \
             share at p = {p}: the implied noise slope {c:.6} is nonpositive; use a \
             larger q or a smaller p"
        )));
    }
    Ok(c)
}

/// Eigenvalues (per-coordinate variances, ascending) of a design's clean
/// covariance.
pub fn eigenvalue_profile(design: &SimulationDesign) -> Result<DVector<f64>> {
    design.validate()?;
    let (p, q) = (design.p, design.q);
    let step = |slope: f64| {
        DVector::from_fn(p, |j, _| {
            let j1 = (j + 1) as f64;
            if j + 1 <= p - q {
                1.0 + slope * j1
            } else {
                20.0 * (1.0 + 0.5 * (j1 - (p - q) as f64))
            }
        })
    };
    Ok(match design.kind {
        DesignKind::Abrupt => step(0.1),
        DesignKind::HighDim => step(high_dim_slope(p, q)?),
        DesignKind::Geometric => DVector::from_fn(p, |j, _| 2f64.powi(j as i32)),
    })
}

/// Derives an independent seed for `(rep, lane)` from a base seed.
///
/// Each replicate owns a few independent random streams (data, rotation
/// matrix, one per fitted method); giving each a lane keeps results identical
/// no matter how replicates are scheduled across threads. The mixer is the
/// SplitMix64 finalizer applied to a compound key.
pub fn derive_seed(base: u64, rep: u64, lane: u64) -> u64 {
    let mut z = base
        .wrapping_add(rep.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(lane.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws one labelled sample from a design.
///
/// Clean rows come from `N(0, diag(λ))`; the final `⌊n·eps⌋` rows come from
/// `N(k·x0, 0.25·diag(λ))` where `x0` has ones on the `p - q` low-variance
/// coordinates and zeros on the dominant ones. Rows are filled in a fixed
/// order, so the output is bit-reproducible for a given generator state.
pub fn generate_sample<R: Rng + ?Sized>(
    design: &SimulationDesign,
    rng: &mut R,
) -> Result<LabeledSample> {
    design.validate()?;
    let sigma_diag = eigenvalue_profile(design)?;
    let sd: Vec<f64> = sigma_diag.iter().map(|&l| l.sqrt()).collect();
    let n_clean = design.n - design.outlier_count();
    let mut x = DMatrix::zeros(design.n, design.p);
    for i in 0..design.n {
        for j in 0..design.p {
            let z: f64 = rng.sample(StandardNormal);
            x[(i, j)] = if i < n_clean {
                sd[j] * z
            } else {
                let shift = if j < design.p - design.q { design.k } else { 0.0 };
                shift + 0.5 * sd[j] * z
            };
        }
    }
    let is_outlier = (0..design.n).map(|i| i >= n_clean).collect();
    Ok(LabeledSample { x, is_outlier, sigma_diag })
}

/// Sample for replicate `rep`, drawn from that replicate's own seed stream.
pub fn sample_for_rep(design: &SimulationDesign, rep: usize) -> Result<LabeledSample> {
    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(design.seed, rep as u64, LANE_SAMPLE));
    generate_sample(design, &mut rng)
}

/// Excess unexplained variance of a fitted subspace relative to the optimum.
///
/// For a Gaussian with covariance `diag(sigma_diag)` (entries ascending), the
/// share of variance that projecting onto `basis` leaves unexplained is
/// `1 − tr(Bᵀ diag(λ) B) / tr(diag(λ))`; the best q-dimensional subspace
/// keeps the `q` largest eigenvalues and leaves the tail sum. This returns
/// `unexplained / best − 1`: zero for an optimal basis, growing as the fit
/// tilts into low-variance directions, and never below zero by more than
/// rounding noise (about `1e-16`).
pub fn relative_prediction_error(
    basis: &OrthonormalBasis,
    sigma_diag: &DVector<f64>,
    q: usize,
) -> Result<f64> {
    let p = sigma_diag.len();
    if basis.p() != p || basis.q() != q {
        return Err(Error::ShapeMismatch(format!(
            "basis is {} x {} but expected {} x {}",
            basis.p(),
            basis.q(),
            p,
            q
        )));
    }
    if sigma_diag.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidParameter(
            "eigenvalues must be finite and nonnegative".into(),
        ));
    }
    if sigma_diag.as_slice().windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter(
            "eigenvalues must be sorted ascending".into(),
        ));
    }
    let total: f64 = sigma_diag.sum();
    let best_unexplained: f64 = sigma_diag.as_slice()[..p - q].iter().sum();
    if best_unexplained <= 0.0 {
        return Err(Error::InvalidParameter(
            "optimal unexplained variance is zero, relative error is undefined".into(),
        ));
    }
    let b = basis.matrix();
    let explained: f64 = (0..p).map(|j| sigma_diag[j] * b.row(j).norm_squared()).sum();
    let unexplained = 1.0 - explained / total;
    Ok(unexplained / (best_unexplained / total) - 1.0)
}

/// A fitting method that can enter the benchmark: the two robust estimators
/// under either start strategy, plus the two non-robust references.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Classical PCA: the least-squares subspace.
    ClassicalPca,
    /// PCA of the data projected onto the unit sphere around the spatial
    /// median.
    SphericalPca,
    /// Biweight M-scale fit from the five deterministic starts.
    DeterministicS,
    /// Trimmed-scale fit from the five deterministic starts.
    DeterministicLts,
    /// Biweight M-scale fit from random orthonormal starts.
    RandomS,
    /// Trimmed-scale fit from random orthonormal starts.
    RandomLts,
}

impl Method {
    /// Every method, in the column order used by result tables.
    pub const ALL: [Method; 6] = [
        Method::ClassicalPca,
        Method::SphericalPca,
        Method::DeterministicS,
        Method::DeterministicLts,
        Method::RandomS,
        Method::RandomLts,
    ];

    /// Short token used in CSV output and on the command line.
    pub fn label(self) -> &'static str {
        match self {
            Method::ClassicalPca => "pca",
            Method::SphericalPca => "spc",
            Method::DeterministicS => "dsubs",
            Method::DeterministicLts => "dsublts",
            Method::RandomS => "rsubs",
            Method::RandomLts => "rsublts",
        }
    }

    /// Parses the command-line token for a method.
    pub fn parse(token: &str) -> Option<Method> {
        let token = token.to_ascii_lowercase();
        Method::ALL.into_iter().find(|m| m.label() == token)
    }

    /// Runs the method at its benchmark settings: maximal-breakdown scales
    /// (`b = 0.5` for the M-scale, `α = 0.5` for the trimmed scale), the
    /// default iteration schedule, and the default number of random starts.
    /// Only the random-start methods consume `seed`.
    pub fn fit(self, x: &DMatrix<f64>, q: usize, seed: u64) -> Result<SubspaceFit> {
        let params = AlgorithmParams::default();
        match self {
            Method::ClassicalPca => classical_pca(x, q),
            Method::SphericalPca => spherical_pca(x, q),
            Method::DeterministicS => fit_deterministic(x, q, &ScaleSpec::m(0.5)?, &params),
            Method::DeterministicLts => {
                fit_deterministic(x, q, &ScaleSpec::lts(0.5)?, &params)
            }
            Method::RandomS => fit_random(
                x,
                q,
                &ScaleSpec::m(0.5)?,
                DEFAULT_RANDOM_STARTS,
                &params,
                seed,
            ),
            Method::RandomLts => fit_random(
                x,
                q,
                &ScaleSpec::lts(0.5)?,
                DEFAULT_RANDOM_STARTS,
                &params,
                seed,
            ),
        }
    }
}

/// One row of benchmark output: a single method's result on one replicate.
#[derive(Clone, Debug, Serialize)]
pub struct SimRecord {
    /// Design token (`a`, `b`, or `hd`).
    pub design: &'static str,
    /// Method token (`pca`, `spc`, `dsubs`, ...).
    pub method: &'static str,
    /// Contamination fraction of the design.
    pub eps: f64,
    /// Outlier distance of the design.
    pub k: f64,
    /// Replicate index, starting at zero.
    pub rep: usize,
    /// Relative prediction error; set by the accuracy benchmark.
    pub e_pred: Option<f64>,
    /// Standardized last principal angle; set by the equivariance experiment.
    pub angle: Option<f64>,
    /// Wall-clock seconds for the fit; set only when timing was requested,
    /// since timings are never reproducible byte for byte.
    pub seconds: Option<f64>,
}

/// Runs the accuracy benchmark on one design.
///
/// Every replicate draws a fresh sample, every method fits that same sample,
/// and each fitted basis is scored with [`relative_prediction_error`].
/// Replicates run concurrently; record order (replicate-major, then method
/// order) and record content are independent of thread count. A fit failure
/// aborts the run with the underlying error.
pub fn run_simulation(
    design: &SimulationDesign,
    methods: &[Method],
    reps: usize,
    timing: bool,
) -> Result<Vec<SimRecord>> {
    design.validate()?;
    if reps == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    let per_rep: Vec<Vec<SimRecord>> = (0..reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<SimRecord>> {
            let sample = sample_for_rep(design, rep)?;
            let mut rows = Vec::with_capacity(methods.len());
            for (mi, method) in methods.iter().enumerate() {
                let fit_seed = derive_seed(design.seed, rep as u64, LANE_FIT + mi as u64);
                let started = Instant::now();
                let fit = method.fit(&sample.x, design.q, fit_seed)?;
                let seconds = timing.then(|| started.elapsed().as_secs_f64());
                let e_pred =
                    relative_prediction_error(&fit.basis, &sample.sigma_diag, design.q)?;
                rows.push(SimRecord {
                    design: design.kind.label(),
                    method: method.label(),
                    eps: design.eps,
                    k: design.k,
                    rep,
                    e_pred: Some(e_pred),
                    angle: None,
                    seconds,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

/// Measures how far a fitting method is from orthogonal equivariance.
///
/// Each replicate draws a fresh sample `X` and a fresh random orthogonal
/// `p x p` matrix `P`, fits the method to both `X` and `X Pᵀ`, rotates the
/// second basis back by `Pᵀ`, and records the largest principal angle between
/// the two bases as a fraction of a right angle (0 means identical spans, 1
/// means orthogonal). An equivariant method scores zero up to numerical noise
/// on every replicate. The callback receives the data and a derived seed
/// (methods without randomness may ignore it). Per-replicate failures are
/// recorded in place rather than aborting the experiment.
pub fn equivariance_experiment<F>(
    fit: F,
    design: &SimulationDesign,
    reps: usize,
) -> Result<Vec<Result<f64>>>
where
    F: Fn(&DMatrix<f64>, u64) -> Result<OrthonormalBasis> + Sync,
{
    design.validate()?;
    if reps == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    Ok((0..reps)
        .into_par_iter()
        .map(|rep| -> Result<f64> {
            let sample = sample_for_rep(design, rep)?;
            let mut rot_rng = ChaCha8Rng::seed_from_u64(derive_seed(
                design.seed,
                rep as u64,
                LANE_ROTATION,
            ));
            let p_mat = random_orthogonal(design.p, design.p, &mut rot_rng).into_inner();
            let base = fit(&sample.x, derive_seed(design.seed, rep as u64, LANE_FIT))?;
            let rotated_data = &sample.x * p_mat.transpose();
            let rotated = fit(
                &rotated_data,
                derive_seed(design.seed, rep as u64, LANE_FIT + 1),
            )?;
            let back = OrthonormalBasis::new(p_mat.transpose() * rotated.matrix())?;
            Ok(principal_angles(&base, &back)?.standardized_last)
        })
        .collect())
}

/// [`equivariance_experiment`] for a named [`Method`].
pub fn method_equivariance(
    method: Method,
    design: &SimulationDesign,
    reps: usize,
) -> Result<Vec<Result<f64>>> {
    equivariance_experiment(
        |x, seed| Ok(method.fit(x, design.q, seed)?.basis),
        design,
        reps,
    )
}
