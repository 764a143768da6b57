//! Robust estimation of low-dimensional linear subspaces.
//!
//! The estimators here minimize a robust scale of the Euclidean distances
//! between observations and a q-dimensional affine subspace: an M-scale under
//! the Tukey biweight (S-subspace) or a trimmed scale (LTS-subspace). Both are
//! computed by an alternating reweighted least squares loop that only ever
//! touches q x q linear systems, so p can comfortably exceed n. Robust
//! deterministic starting values make the result reproducible without random
//! restarts; a random-start driver is provided for comparison.
//!
//! Layout:
//! - [`scale`]: univariate robust scales (M, trimmed, Qn) and IRLS weights
//! - [`linalg`]: orthonormal bases, principal angles, spatial median, and the
//!   alternating least squares PCA kernel
//! - [`estimator`]: the reweighted fitting loop and its random/deterministic
//!   start drivers
//! - [`starts`]: robust deterministic starting values
//! - [`baselines`]: classical and spherical PCA references
//! - [`evaluation`]: synthetic designs, error metrics, equivariance checks
//! - [`diagnostics`]: orthogonal/score distances and outlier flags

pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod linalg;
pub mod scale;
pub mod starts;

pub use baselines::{classical_pca, spherical_pca};
pub use diagnostics::{
    diagnostic_table, orthogonal_distances, outlier_flags, score_distances,
    score_distances_of, DiagnosticTable, Flag,
};
pub use error::{Error, Result};
pub use estimator::{
    eigen_residual, fit_deterministic, fit_random, fit_random_from_center, iterate_fit,
    AlgorithmParams, CenterStart, StartValue, SubspaceFit, DEFAULT_RANDOM_STARTS,
};
pub use evaluation::{
    derive_seed, eigenvalue_profile, equivariance_experiment, generate_sample,
    method_equivariance, relative_prediction_error, run_simulation, sample_for_rep,
    DesignKind, LabeledSample, Method, SimRecord, SimulationDesign,
};
pub use linalg::{principal_angles, OrthonormalBasis, PrincipalAngles};
pub use scale::ScaleSpec;
pub use starts::{deterministic_start_set, NamedStart, TransformSet, START_LABELS};
