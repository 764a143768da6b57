//! Robust univariate scale estimators and the weight functions built on them.
//!
//! Everything downstream (subspace fits, diagnostics, starting values) reduces
//! point clouds to vectors of nonnegative distances and asks one of two
//! questions: what is the robust scale of these distances (M-scale under the
//! Tukey biweight, or a trimmed scale), and which observations deserve weight
//! at that scale. This module answers both, plus the standalone median and Qn
//! estimators used for columnwise standardization.
//!
//! Conventions:
//! - distances are nonnegative; contract violations panic,
//!   data-driven failures return [`Error`](crate::Error)
//! - the biweight loss is normalized to `rho(u) = min(3u^2 - 3u^4 + u^6, 1)`,
//!   so `rho(1) = 1` and the M-scale target `b` equals the breakdown point
//! - `*_at_normal` constants make the estimators consistent for the standard
//!   deviation under Gaussian data; raw estimators are left uncorrected

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used for the M-scale root when a caller does not supply one.
/// Tight enough that per-iteration scale sequences compare cleanly at 1e-10.
pub const M_SCALE_DEFAULT_TOL: f64 = 1e-12;

/// Consistency constant for the Qn estimator at the normal model.
pub const QN_CONSISTENCY: f64 = 2.2219;

const MAX_BISECT: usize = 300;

/// Objective defining the scale of a distance vector: an M-scale with target
/// `b` under the Tukey biweight, or the trimmed (LTS) scale with trimming
/// proportion `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScaleSpec {
    M { b: f64 },
    Lts { alpha: f64 },
}

impl ScaleSpec {
    /// M-scale objective. `b` must lie in (0, 0.5]; it equals the breakdown
    /// point of the resulting subspace estimator.
    pub fn m(b: f64) -> Result<Self> {
        if !(b > 0.0 && b <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "M-scale target b = {b} outside (0, 0.5]"
            )));
        }
        Ok(ScaleSpec::M { b })
    }

    /// Trimmed-scale objective. `alpha` must lie in [0, 0.5]; the upper end
    /// trims half the sample (h = ceil(n/2)) and gives the maximal breakdown.
    pub fn lts(alpha: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "LTS trimming alpha = {alpha} outside [0, 0.5]"
            )));
        }
        Ok(ScaleSpec::Lts { alpha })
    }

    /// Scale of a distance vector under this objective.
    pub fn evaluate(&self, d: &[f64]) -> Result<f64> {
        self.evaluate_hinted(d, None)
    }

    /// Same as [`evaluate`](Self::evaluate), warm-started from a previous
    /// scale when one is available (shrinks the root bracket).
    pub(crate) fn evaluate_hinted(&self, d: &[f64], hint: Option<f64>) -> Result<f64> {
        match *self {
            ScaleSpec::M { b } => m_scale_hinted(d, b, M_SCALE_DEFAULT_TOL, hint),
            ScaleSpec::Lts { alpha } => Ok(lts_scale(d, alpha)),
        }
    }

    /// IRLS weights for distances `d` at scale `sigma`.
    pub fn weights(&self, d: &[f64], sigma: f64) -> Vec<f64> {
        match *self {
            ScaleSpec::M { .. } => s_weights(d, sigma),
            ScaleSpec::Lts { alpha } => lts_weights(d, alpha),
        }
    }

    /// Weights in the perfect-fit limit (all distances zero), where the scale
    /// is 0 and the usual formulas are indeterminate.
    pub(crate) fn degenerate_weights(&self, n: usize) -> Vec<f64> {
        let w = match *self {
            ScaleSpec::M { .. } => 6.0,
            ScaleSpec::Lts { .. } => 1.0,
        };
        vec![w; n]
    }

    /// Subset size `h = n - floor(n * alpha)` for the trimmed objective.
    pub fn h(&self, n: usize) -> Option<usize> {
        match *self {
            ScaleSpec::M { .. } => None,
            ScaleSpec::Lts { alpha } => Some(n - (n as f64 * alpha).floor() as usize),
        }
    }

    /// Value of this scale estimator at the standard normal; dividing a raw
    /// scale by this makes it consistent for the standard deviation.
    pub fn consistency_at_normal(&self) -> f64 {
        match *self {
            ScaleSpec::M { b } => m_scale_at_normal(b),
            ScaleSpec::Lts { alpha } => lts_scale_at_normal(alpha),
        }
    }
}

/// Tukey biweight loss, normalized so the cap is 1: `min(3u^2 - 3u^4 + u^6, 1)`.
pub fn tukey_rho(u: f64) -> f64 {
    let t = u * u;
    if t >= 1.0 {
        1.0
    } else {
        t * (3.0 + t * (t - 3.0))
    }
}

/// Derivative of [`tukey_rho`]: `6u(1 - u^2)^2` inside the cutoff, 0 outside.
pub fn tukey_psi(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let t = 1.0 - u * u;
        6.0 * u * t * t
    }
}

/// Inverse of [`tukey_rho`] on [0, 1]: the u with `rho(u) = b`.
fn tukey_rho_inverse(b: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&b));
    // rho is increasing in t = u^2 on [0, 1]
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid * (3.0 + mid * (mid - 3.0)) < b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).sqrt()
}

/// M-scale of a nonnegative distance vector: the s > 0 solving
/// `mean(rho(d_i / s)) = b` under the biweight, found by bracketed bisection
/// (the map is nonincreasing in s). Returns 0 when the fraction of zero
/// entries exceeds `1 - b`, in which case no positive root exists.
pub fn m_scale(d: &[f64], b: f64, tol: f64) -> Result<f64> {
    m_scale_hinted(d, b, tol, None)
}

fn m_scale_hinted(d: &[f64], b: f64, tol: f64, hint: Option<f64>) -> Result<f64> {
    check_mscale_args(d, b, tol);
    let n = d.len() as f64;
    let nonzero = d.iter().filter(|&&v| v > 0.0).count();
    if (nonzero as f64) < b * n {
        return Ok(0.0);
    }
    let min_pos = d.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let max_d = d.iter().copied().fold(0.0_f64, f64::max);
    let u_star = tukey_rho_inverse(b);

    // mean rho(d/s) is exactly the nonzero fraction at s = min_pos and at
    // most b at s = max_d / u_star, so the root sits inside this bracket.
    let (lo, hi) = (min_pos, max_d / u_star);
    // First probe: the previous scale when warm-started (consecutive IRLS
    // scales are close), otherwise the normalized median.
    let probe = match hint {
        Some(s) if s > 0.0 && s.is_finite() => s.clamp(lo, hi),
        _ => {
            let mut med = d.to_vec();
            let k = (med.len() + 1) / 2;
            med.select_nth_unstable_by(k - 1, f64::total_cmp);
            (med[k - 1] / u_star).clamp(lo, hi)
        }
    };
    bisect_scale(d, b, tol, lo, hi, Some(probe), &tukey_rho)
}

/// M-scale under a caller-supplied loss. The loss must be nondecreasing in
/// |u| with `rho(0) = 0`; the bracket is grown geometrically as needed, so
/// unbounded losses (e.g. `u^2`) work too.
pub fn m_scale_with_rho<R>(d: &[f64], b: f64, tol: f64, rho: R) -> Result<f64>
where
    R: Fn(f64) -> f64,
{
    assert!(!d.is_empty(), "M-scale of an empty distance vector");
    assert!(b > 0.0 && b.is_finite(), "M-scale target must be positive");
    assert!(tol > 0.0, "M-scale tolerance must be positive");
    if d.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let mean = |s: f64| d.iter().map(|&v| rho(v / s)).sum::<f64>() / d.len() as f64;
    let mut lo = d.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let mut hi = d.iter().copied().fold(0.0_f64, f64::max);
    let mut guard = 0;
    while mean(lo) < b {
        lo /= 4.0;
        guard += 1;
        if guard > 600 {
            return Ok(0.0); // sup of the map never reaches b: no positive root
        }
    }
    guard = 0;
    while mean(hi) > b {
        hi *= 4.0;
        guard += 1;
        if guard > 600 {
            return Err(Error::NonConvergence { what: "M-scale bracket growth", iterations: guard });
        }
    }
    bisect_scale(d, b, tol, lo, hi, None, &rho)
}

fn check_mscale_args(d: &[f64], b: f64, tol: f64) {
    assert!(!d.is_empty(), "M-scale of an empty distance vector");
    assert!(b > 0.0 && b < 1.0, "M-scale target b = {b} outside (0, 1)");
    assert!(tol > 0.0, "M-scale tolerance must be positive");
    assert!(
        d.iter().all(|&v| v >= 0.0 && v.is_finite()),
        "M-scale distances must be finite and nonnegative"
    );
}

fn bisect_scale(
    d: &[f64],
    b: f64,
    tol: f64,
    mut lo: f64,
    mut hi: f64,
    probe: Option<f64>,
    rho: &dyn Fn(f64) -> f64,
) -> Result<f64> {
    let n = d.len() as f64;
    let mean = |s: f64| d.iter().map(|&v| rho(v / s)).sum::<f64>() / n;
    let mut next = probe.filter(|p| *p > lo && *p < hi);
    for _ in 0..MAX_BISECT {
        let mid = next.take().unwrap_or(0.5 * (lo + hi));
        let f = mean(mid);
        if (f - b).abs() < tol {
            return Ok(mid);
        }
        // Bracket collapsed to machine resolution: the root is resolved even
        // if the residual tolerance was set tighter than f64 allows here.
        if hi - lo <= 1e-13 * mid {
            return Ok(mid);
        }
        if f > b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence { what: "M-scale bisection", iterations: MAX_BISECT })
}

/// Trimmed scale: root mean square of the `h = n - floor(n * alpha)`
/// smallest distances.
pub fn lts_scale(d: &[f64], alpha: f64) -> f64 {
    assert!(!d.is_empty(), "LTS scale of an empty distance vector");
    assert!((0.0..=0.5).contains(&alpha), "trimming alpha = {alpha} outside [0, 0.5]");
    let n = d.len();
    let h = n - (n as f64 * alpha).floor() as usize;
    let mut sq: Vec<f64> = d.iter().map(|&v| v * v).collect();
    sq.sort_unstable_by(f64::total_cmp);
    (sq[..h].iter().sum::<f64>() / h as f64).sqrt()
}

/// Biweight IRLS weights `psi(d/sigma) * sigma / d`, with the analytic limit
/// 6 at d = 0. Zero at and beyond the cutoff `d >= sigma`; range [0, 6].
pub fn s_weights(d: &[f64], sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0 && sigma.is_finite(), "s_weights needs sigma > 0");
    d.iter()
        .map(|&v| {
            let u = v / sigma;
            if u >= 1.0 {
                0.0
            } else {
                let t = 1.0 - u * u;
                6.0 * t * t
            }
        })
        .collect()
}

/// Hard-rejection weights for the trimmed objective: 1 for every distance at
/// or below the h-th smallest, 0 above. Ties at the threshold are all kept,
/// so the number of positive weights can exceed h.
pub fn lts_weights(d: &[f64], alpha: f64) -> Vec<f64> {
    assert!(!d.is_empty(), "lts_weights on an empty distance vector");
    assert!((0.0..=0.5).contains(&alpha), "trimming alpha = {alpha} outside [0, 0.5]");
    let n = d.len();
    let h = n - (n as f64 * alpha).floor() as usize;
    let mut sorted = d.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let threshold = sorted[h - 1];
    d.iter().map(|&v| if v <= threshold { 1.0 } else { 0.0 }).collect()
}

/// Sample median; mean of the middle pair for even n.
pub fn median(x: &[f64]) -> f64 {
    assert!(!x.is_empty(), "median of an empty slice");
    let mut v = x.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Qn scale: the k-th smallest pairwise absolute difference, k = C(h, 2) with
/// h = floor(n/2) + 1, times the normal-consistency constant 2.2219.
/// Plain O(n^2) enumeration; fine at the sample sizes used here.
pub fn qn_scale(x: &[f64]) -> f64 {
    let n = x.len();
    assert!(n >= 1, "Qn of an empty slice");
    if n < 2 {
        return 0.0;
    }
    let h = n / 2 + 1;
    let k = h * (h - 1) / 2;
    let mut gaps = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            gaps.push((x[i] - x[j]).abs());
        }
    }
    let (_, kth, _) = gaps.select_nth_unstable_by(k - 1, f64::total_cmp);
    QN_CONSISTENCY * *kth
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub(crate) fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub(crate) fn normal_quantile(prob: f64) -> f64 {
    use statrs::distribution::ContinuousCDF;
    assert!(prob > 0.0 && prob < 1.0, "quantile probability must lie in (0, 1)");
    statrs::distribution::Normal::standard().inverse_cdf(prob)
}

/// `E[rho(Z/s)]` for Z standard normal, in closed form via truncated moments.
fn biweight_rho_normal_mean(s: f64) -> f64 {
    let phi = normal_pdf(s);
    let half_mass = normal_cdf(s) - 0.5;
    let m2 = half_mass - s * phi;
    let m4 = 3.0 * half_mass - phi * (s.powi(3) + 3.0 * s);
    let m6 = 15.0 * half_mass - phi * (s.powi(5) + 5.0 * s.powi(3) + 15.0 * s);
    let s2 = s * s;
    2.0 * (3.0 * m2 / s2 - 3.0 * m4 / (s2 * s2) + m6 / (s2 * s2 * s2) + (1.0 - normal_cdf(s)))
}

/// M-scale of the standard normal for target `b`: the s solving
/// `E[rho(Z/s)] = b`.
pub fn m_scale_at_normal(b: f64) -> f64 {
    assert!(b > 0.0 && b < 1.0);
    let (mut lo, mut hi) = (1e-3_f64, 50.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if biweight_rho_normal_mean(mid) > b {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * mid {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// LTS scale of the standard normal for trimming `alpha`:
/// `sqrt(E[Z^2; |Z| <= c] / (1 - alpha))` with c the (1 - alpha)-quantile
/// of |Z|.
pub fn lts_scale_at_normal(alpha: f64) -> f64 {
    assert!((0.0..=0.5).contains(&alpha));
    if alpha < 1e-12 {
        return 1.0;
    }
    let c = normal_quantile(1.0 - alpha / 2.0);
    let mass = 2.0 * normal_cdf(c) - 1.0 - 2.0 * c * normal_pdf(c);
    (mass / (1.0 - alpha)).sqrt()
}
