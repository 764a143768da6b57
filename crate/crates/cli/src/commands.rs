//! Implementations of the four subcommands: `fit`, `simulate`, `diagnose`,
//! and `equivariance`.
//!
//! Each command reads its inputs, delegates the numerical work to the
//! library, and serializes one artifact: a JSON fit document for `fit`, a
//! long-format CSV for the two study runners, and the per-observation
//! diagnostics CSV for `diagnose`. All randomness is seeded through the
//! flags, so repeated invocations produce byte-identical artifacts.

use std::fs;
use std::time::Instant;

use nalgebra::DMatrix;
use robsub::{
    classical_pca, diagnostic_table, fit_deterministic, fit_random, method_equivariance,
    run_simulation, spherical_pca, AlgorithmParams, DesignKind, Method, ScaleSpec, SimRecord,
    SimulationDesign, SubspaceFit, DEFAULT_RANDOM_STARTS,
};
use serde::Serialize;

use crate::document::FitDocument;
use crate::io;
use crate::{CliError, DiagnoseArgs, FitArgs, FitMethod, StartsKind, StudyArgs};

/// Biweight M-scale target for the quarter-breakdown setting; 0.5 keeps the
/// target equal to the breakdown point, 0.25 does not.
const QUARTER_BDP_M_TARGET: f64 = 0.2426;

/// One row of the diagnostics CSV.
#[derive(Serialize)]
struct DiagnosticRow {
    /// Zero-based row index into the input matrix.
    index: usize,
    od: f64,
    sd: f64,
    od_cutoff: f64,
    sd_cutoff: f64,
    flag: &'static str,
}

/// `fit`: estimate a subspace on a CSV matrix and write the fit document.
pub fn cmd_fit(args: &FitArgs, timing: bool) -> Result<(), CliError> {
    if args.q == 0 {
        return Err(CliError::Usage("--q must be at least 1".to_string()));
    }
    let x = io::read_matrix(&args.input)?;

    let started = Instant::now();
    let (label, scale_spec, params, fit) = run_selected_fit(args, &x)?;
    let seconds = timing.then(|| started.elapsed().as_secs_f64());

    let doc = FitDocument::from_fit(label, scale_spec, params.as_ref(), &fit, args.seed, seconds);
    io::write_output(Some(&args.out), &doc.to_json()?)
}

/// Dispatches on `--method`/`--starts`, rejecting flags that do not apply to
/// the selected estimator.
fn run_selected_fit(
    args: &FitArgs,
    x: &DMatrix<f64>,
) -> Result<(&'static str, Option<ScaleSpec>, Option<AlgorithmParams>, SubspaceFit), CliError> {
    let reject = |flag: &str| -> Result<(), CliError> {
        Err(CliError::Usage(format!(
            "{flag} does not apply to --method {}",
            args.method.token()
        )))
    };

    match args.method {
        FitMethod::Pca | FitMethod::Spc => {
            if args.starts.is_some() {
                reject("--starts")?;
            }
            if args.bdp.is_some() {
                reject("--bdp")?;
            }
            if args.alpha.is_some() {
                reject("--alpha")?;
            }
            if args.n_starts.is_some() {
                reject("--n-starts")?;
            }
            let (label, fit) = match args.method {
                FitMethod::Pca => ("pca", classical_pca(x, args.q)?),
                _ => ("spc", spherical_pca(x, args.q)?),
            };
            Ok((label, None, None, fit))
        }
        FitMethod::S | FitMethod::Lts => {
            let bdp = args.bdp.unwrap_or(0.5);
            let spec = match args.method {
                FitMethod::S => {
                    if args.alpha.is_some() {
                        reject("--alpha")?;
                    }
                    let b = if bdp == 0.5 { 0.5 } else { QUARTER_BDP_M_TARGET };
                    ScaleSpec::m(b)?
                }
                _ => ScaleSpec::lts(args.alpha.unwrap_or(bdp))?,
            };
            let params = AlgorithmParams::default();
            let starts = args.starts.unwrap_or(StartsKind::Deterministic);
            if starts == StartsKind::Deterministic && args.n_starts.is_some() {
                reject("--n-starts")?;
            }
            let fit = match starts {
                StartsKind::Deterministic => fit_deterministic(x, args.q, &spec, &params)?,
                StartsKind::Random => fit_random(
                    x,
                    args.q,
                    &spec,
                    args.n_starts.unwrap_or(DEFAULT_RANDOM_STARTS),
                    &params,
                    args.seed,
                )?,
            };
            let label = match (args.method, starts) {
                (FitMethod::S, StartsKind::Deterministic) => "dsubs",
                (FitMethod::S, StartsKind::Random) => "rsubs",
                (FitMethod::Lts, StartsKind::Deterministic) => "dsublts",
                _ => "rsublts",
            };
            Ok((label, Some(spec), Some(params), fit))
        }
    }
}

/// `simulate`: run the accuracy benchmark over a k grid and write the
/// long-format results CSV.
pub fn cmd_simulate(args: &StudyArgs, timing: bool) -> Result<(), CliError> {
    let (kind, methods, grid) = parse_study_flags(args)?;
    let mut records = Vec::new();
    for &k in &grid {
        let design = SimulationDesign::new(kind, args.n, args.p, args.q, args.eps, k, args.seed)?;
        records.extend(run_simulation(&design, &methods, args.reps, timing)?);
    }
    io::write_output(args.out.as_deref(), &io::to_csv_bytes(&records)?)
}

/// `equivariance`: measure how far each method moves under a random rotation
/// of the data, one standardized angle per replicate.
pub fn cmd_equivariance(args: &StudyArgs) -> Result<(), CliError> {
    let (kind, methods, grid) = parse_study_flags(args)?;
    let mut records = Vec::new();
    for &k in &grid {
        let design = SimulationDesign::new(kind, args.n, args.p, args.q, args.eps, k, args.seed)?;
        for &method in &methods {
            let angles = method_equivariance(method, &design, args.reps)?;
            for (rep, angle) in angles.into_iter().enumerate() {
                let angle = match angle {
                    Ok(a) => Some(a),
                    Err(e) => {
                        eprintln!(
                            "warning: design {} method {} k {} rep {}: {e}",
                            kind.label(),
                            method.label(),
                            k,
                            rep
                        );
                        None
                    }
                };
                records.push(SimRecord {
                    design: kind.label(),
                    method: method.label(),
                    eps: args.eps,
                    k,
                    rep,
                    e_pred: None,
                    angle,
                    seconds: None,
                });
            }
        }
    }
    io::write_output(args.out.as_deref(), &io::to_csv_bytes(&records)?)
}

/// `diagnose`: score a data matrix against a saved fit and write the
/// per-observation distance/flag table.
pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<(), CliError> {
    let x = io::read_matrix(&args.input)?;
    let bytes = fs::read(&args.fit)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.fit.display())))?;
    let doc = FitDocument::from_json(&bytes)?;
    let (basis, center) = doc.to_parts()?;
    if x.ncols() != basis.p() {
        return Err(CliError::Usage(format!(
            "{} has {} columns but the fit document describes {} coordinates",
            args.input.display(),
            x.ncols(),
            basis.p()
        )));
    }

    // Diagnostics read only the basis and center from the fit and recompute
    // the scores of `x`, so the remaining fields are carried over verbatim.
    let q = basis.q();
    let fit = SubspaceFit {
        basis,
        scores: DMatrix::zeros(0, q),
        center,
        scale: doc.scale,
        weights: doc.weights.clone(),
        distances: doc.distances.clone(),
        iterations: doc.iterations,
        converged: doc.converged,
        start_id: doc.method.clone(),
        scale_path: Vec::new(),
    };
    let table = diagnostic_table(&x, &fit, &doc.diagnostic_spec())?;

    let rows: Vec<DiagnosticRow> = (0..table.len())
        .map(|i| DiagnosticRow {
            index: i,
            od: table.od[i],
            sd: table.sd[i],
            od_cutoff: table.od_cutoff,
            sd_cutoff: table.sd_cutoff,
            flag: table.flags[i].label(),
        })
        .collect();
    io::write_output(args.out.as_deref(), &io::to_csv_bytes(&rows)?)
}

/// Parses the design token, method list, and k grid shared by the two study
/// commands.
fn parse_study_flags(args: &StudyArgs) -> Result<(DesignKind, Vec<Method>, Vec<f64>), CliError> {
    let kind = DesignKind::parse(&args.design).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown design {:?} (expected a, b, or hd)",
            args.design
        ))
    })?;
    let methods = parse_methods(&args.methods)?;
    let grid = parse_grid(&args.k_grid)?;
    Ok((kind, methods, grid))
}

/// Parses a comma-separated list of method tokens.
fn parse_methods(list: &str) -> Result<Vec<Method>, CliError> {
    list.split(',')
        .map(|token| {
            let token = token.trim();
            Method::parse(token).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown method {token:?} (expected pca, spc, dsubs, dsublts, rsubs, or rsublts)"
                ))
            })
        })
        .collect()
}

/// Parses an outlier-distance grid: either comma-separated values or an
/// inclusive `lo:step:hi` range.
fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let parse_one = |token: &str| -> Result<f64, CliError> {
        let value: f64 = token
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("invalid grid value {token:?}")))?;
        if !value.is_finite() {
            return Err(CliError::Usage(format!("grid value {token:?} is not finite")));
        }
        Ok(value)
    };

    if text.contains(':') {
        let mut parts = text.splitn(3, ':');
        let (lo, step, hi) = match (parts.next(), parts.next(), parts.next()) {
            (Some(lo), Some(step), Some(hi)) => (parse_one(lo)?, parse_one(step)?, parse_one(hi)?),
            _ => {
                return Err(CliError::Usage(format!(
                    "grid range {text:?} must have the form lo:step:hi"
                )))
            }
        };
        if !(step > 0.0) || hi < lo {
            return Err(CliError::Usage(format!(
                "grid range {text:?} needs a positive step and hi >= lo"
            )));
        }
        let mut values = Vec::new();
        for i in 0.. {
            // Multiply rather than accumulate so long grids stay exact for
            // representable steps and never drift past the endpoint.
            let k = lo + step * i as f64;
            if k > hi + 1e-9 * step {
                break;
            }
            values.push(k);
        }
        Ok(values)
    } else {
        text.split(',').map(|t| parse_one(t)).collect()
    }
}
