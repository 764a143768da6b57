//! The JSON fit document: a self-contained record of one fitted subspace.
//!
//! The document stores everything needed to reuse a fit without refitting —
//! the method token, the objective, the iteration budget, the fitted center
//! and basis, and the per-observation weights and distances. Floats are
//! written by `serde_json`, which emits the shortest decimal that parses back
//! to the exact same value, so a write/read cycle is lossless.

use nalgebra::{DMatrix, DVector};
use robsub::{AlgorithmParams, Error, OrthonormalBasis, ScaleSpec, SubspaceFit};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Serialized form of one fit, written by `fit` and consumed by `diagnose`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDocument {
    /// Method token: `pca`, `spc`, `dsubs`, `dsublts`, `rsubs`, or `rsublts`.
    pub method: String,
    /// Subspace dimension.
    pub q: usize,
    /// Robust scale objective; `null` for the non-robust baselines.
    pub scale_spec: Option<ScaleSpec>,
    /// Trimmed subset size `h = n - floor(n * alpha)`; `null` unless the
    /// objective is the trimmed scale.
    pub h: Option<usize>,
    /// Iteration budget of the fitting loop; `null` for the baselines.
    pub params: Option<AlgorithmParams>,
    /// Fitted center, length p.
    pub center: Vec<f64>,
    /// Fitted orthonormal basis, column-major p x q.
    pub basis: Vec<f64>,
    /// Objective scale of the distances at the fit.
    pub scale: f64,
    /// Final observation weights, length n.
    pub weights: Vec<f64>,
    /// Distance of each observation to the fitted subspace, length n.
    pub distances: Vec<f64>,
    /// Outer passes executed.
    pub iterations: usize,
    /// Whether the loop stopped on the tolerance rather than the budget.
    pub converged: bool,
    /// Seed the command was invoked with (only the random-starts path draws
    /// from it).
    pub seed: u64,
    /// Wall-clock seconds for the fit; present only when timing was
    /// requested, since timings are never reproducible byte for byte.
    pub seconds: Option<f64>,
}

impl FitDocument {
    /// Packages a finished fit and its configuration.
    pub fn from_fit(
        method: &str,
        scale_spec: Option<ScaleSpec>,
        params: Option<&AlgorithmParams>,
        fit: &SubspaceFit,
        seed: u64,
        seconds: Option<f64>,
    ) -> Self {
        let n = fit.weights.len();
        FitDocument {
            method: method.to_string(),
            q: fit.basis.q(),
            scale_spec,
            h: scale_spec.and_then(|spec| spec.h(n)),
            params: params.cloned(),
            center: fit.center.as_slice().to_vec(),
            basis: fit.basis.matrix().as_slice().to_vec(),
            scale: fit.scale,
            weights: fit.weights.clone(),
            distances: fit.distances.clone(),
            iterations: fit.iterations,
            converged: fit.converged,
            seed,
            seconds,
        }
    }

    /// Number of data coordinates the document describes.
    pub fn p(&self) -> usize {
        self.center.len()
    }

    /// Rebuilds the fitted basis and center, validating shapes and
    /// orthonormality.
    pub fn to_parts(&self) -> Result<(OrthonormalBasis, DVector<f64>), Error> {
        let p = self.p();
        if self.q == 0 || p == 0 || self.basis.len() != p * self.q {
            return Err(Error::ShapeMismatch(format!(
                "fit document basis has {} entries, expected p * q = {} * {}",
                self.basis.len(),
                p,
                self.q
            )));
        }
        let matrix = DMatrix::from_column_slice(p, self.q, &self.basis);
        let basis = OrthonormalBasis::new(matrix)?;
        Ok((basis, DVector::from_column_slice(&self.center)))
    }

    /// Scale objective used when scoring observations against this fit; the
    /// non-robust baselines fall back to the maximal-breakdown M-scale.
    pub fn diagnostic_spec(&self) -> ScaleSpec {
        self.scale_spec
            .unwrap_or_else(|| ScaleSpec::m(0.5).expect("0.5 is a valid M-scale target"))
    }

    /// Serializes to pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> Result<Vec<u8>, CliError> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| CliError::Usage(format!("cannot serialize fit document: {e}")))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// Parses a document from JSON bytes.
    pub fn from_json(bytes: &[u8]) -> Result<Self, CliError> {
        serde_json::from_slice(bytes)
            .map_err(|e| CliError::Usage(format!("cannot parse fit document: {e}")))
    }
}
