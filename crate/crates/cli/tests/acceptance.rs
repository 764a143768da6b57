//! Acceptance gate: ten end-to-end checks, one test per criterion, each
//! asserting its stated tolerance and printing one `criterion N: PASS` line
//! (visible with `--nocapture`; the test name itself is the pass/fail line
//! in normal harness output).
//!
//! The criteria run serially through a process-wide lock so the timing
//! check is not distorted by sibling tests.

mod common;

use std::fs;
use std::process::Command;
use std::sync::{Mutex, PoisonError};
use std::time::{Duration, Instant};

use common::{anisotropic_cloud, assert_code, bin, planted_plane, run, write_matrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robsub::linalg::{als_pca, principal_angles, random_orthogonal, OrthonormalBasis};
use robsub::scale::{lts_scale, m_scale, tukey_rho};
use robsub::estimator::iterate_fit_unit_weights;
use robsub::{
    diagnostic_table, fit_deterministic, iterate_fit, method_equivariance, run_simulation,
    sample_for_rep, AlgorithmParams, DesignKind, Flag, Method, ScaleSpec, SimRecord,
    SimulationDesign, StartValue,
};
use tempfile::tempdir;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(PoisonError::into_inner)
}

/// Mean prediction error of one method over all replicates in `records`.
fn mean_e_pred(records: &[SimRecord], method: &str) -> f64 {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.method == method)
        .map(|r| r.e_pred.expect("benchmark records carry e_pred"))
        .collect();
    assert!(!values.is_empty(), "no records for {method}");
    values.iter().sum::<f64>() / values.len() as f64
}

fn assert_mean(criterion: &str, records: &[SimRecord], method: &str, target: f64, tol: f64) -> f64 {
    let mean = mean_e_pred(records, method);
    assert!(
        (mean - target).abs() <= tol,
        "{criterion}: mean e_pred for {method} = {mean:.4}, expected {target} +/- {tol}"
    );
    mean
}

/// Standard-normal-ish draw (Irwin-Hall with four uniforms).
fn near_normal(rng: &mut ChaCha8Rng) -> f64 {
    let s: f64 = (0..4).map(|_| rng.random::<f64>()).sum();
    (s - 2.0) * 3f64.sqrt()
}

fn scaled_cloud(n: usize, sds: &[f64], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, sds.len(), |_, j| sds[j] * near_normal(rng))
}

/// Largest principal angle via the sine route, `asin(σ_max((I − B1B1ᵀ)B2))`.
/// The arccos-of-singular-values route bottoms out near sqrt(machine eps)
/// ≈ 1.5e-8 for identical subspaces; the sine form resolves angles down to
/// roundoff, which tolerances below 1e-8 require.
fn worst_angle_sine(b1: &OrthonormalBasis, b2: &OrthonormalBasis) -> f64 {
    let (m1, m2) = (b1.matrix(), b2.matrix());
    let residual = m2 - m1 * (m1.transpose() * m2);
    let sine = residual.svd(false, false).singular_values.max();
    sine.clamp(0.0, 1.0).asin()
}

#[test]
fn c01_clean_design_a_reproduces_the_benchmark_means() {
    let _guard = serial();
    let started = Instant::now();

    let design = SimulationDesign::new(DesignKind::Abrupt, 100, 10, 2, 0.0, 0.0, 0).unwrap();
    let methods = [
        Method::DeterministicS,
        Method::DeterministicLts,
        Method::SphericalPca,
        Method::RandomS,
    ];
    let records = run_simulation(&design, &methods, 100, false).unwrap();

    let dsubs = assert_mean("criterion 1", &records, "dsubs", 0.02, 0.02);
    let dsublts = assert_mean("criterion 1", &records, "dsublts", 0.06, 0.03);
    let spc = assert_mean("criterion 1", &records, "spc", 0.04, 0.02);
    let rsubs = assert_mean("criterion 1", &records, "rsubs", 0.02, 0.02);

    println!(
        "criterion 1: PASS — clean design a means: dsubs {dsubs:.3}, dsublts {dsublts:.3}, \
         spc {spc:.3}, rsubs {rsubs:.3} ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn c02_contaminated_designs_separate_the_methods() {
    let _guard = serial();
    let started = Instant::now();

    // Design a, 20% contamination at k = 4.5: the deterministic S fit stays
    // accurate while spherical PCA degrades badly.
    let design_a = SimulationDesign::new(DesignKind::Abrupt, 100, 10, 2, 0.2, 4.5, 0).unwrap();
    let records_a = run_simulation(
        &design_a,
        &[Method::DeterministicS, Method::SphericalPca],
        100,
        false,
    )
    .unwrap();
    let a_dsubs = assert_mean("criterion 2", &records_a, "dsubs", 0.03, 0.03);
    let a_spc = assert_mean("criterion 2", &records_a, "spc", 0.77, 0.15);

    // Design b, 20% at k = 5: deterministic starts beat random starts.
    let design_b = SimulationDesign::new(DesignKind::Geometric, 100, 10, 2, 0.2, 5.0, 0).unwrap();
    let records_b = run_simulation(
        &design_b,
        &[Method::DeterministicS, Method::RandomS],
        100,
        false,
    )
    .unwrap();
    let b_dsubs = assert_mean("criterion 2", &records_b, "dsubs", 0.07, 0.05);
    // Known divergence: the 0.69 target encodes the original multistart
    // implementation stalling in the contaminated basin at this
    // configuration. With the scale solved exactly at every pass (as the
    // scale contract requires), that basin is not an attractor — started
    // from the contaminated subspace itself, refinement walks out within
    // its ten-pass cap, and the random-start fit lands near the
    // deterministic one (~0.06) regardless of start center or stopping
    // tolerance. The assertion is kept at the stated target rather than
    // adjusted to what this implementation produces.
    let b_rsubs = assert_mean("criterion 2", &records_b, "rsubs", 0.69, 0.20);

    println!(
        "criterion 2: PASS — design a k=4.5: dsubs {a_dsubs:.3} vs spc {a_spc:.3}; \
         design b k=5: dsubs {b_dsubs:.3} vs rsubs {b_rsubs:.3} ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn c03_objective_scale_is_monotone_along_the_iteration() {
    let _guard = serial();
    let started = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut checked = 0usize;
    for trial in 0..500 {
        let n = 15 + trial % 26;
        let p = 3 + trial % 4;
        let q = 1 + trial % (p - 1);
        let sds: Vec<f64> = (0..p).map(|j| 0.5 + j as f64).collect();
        let x = scaled_cloud(n, &sds, &mut rng);

        let start = StartValue {
            basis: random_orthogonal(p, q, &mut rng),
            center: DVector::from_fn(p, |_, _| near_normal(&mut rng)),
        };
        let spec = if trial % 2 == 0 {
            ScaleSpec::m(0.05 + 0.45 * rng.random::<f64>()).unwrap()
        } else {
            ScaleSpec::lts(0.5 * rng.random::<f64>()).unwrap()
        };

        let fit = iterate_fit(&x, &start, &spec, &AlgorithmParams::default()).unwrap();
        for (step, pair) in fit.scale_path.windows(2).enumerate() {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-10),
                "criterion 3: trial {trial} step {step}: scale rose {} -> {}",
                pair[0],
                pair[1]
            );
            checked += 1;
        }
    }

    println!(
        "criterion 3: PASS — {checked} consecutive scale pairs nonincreasing over 500 triples \
         ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn c04_scales_and_subspaces_match_independent_oracles() {
    let _guard = serial();
    let started = Instant::now();

    // (a) Trimmed scale against a sort-and-sum oracle, exact equality.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for trial in 0..1000 {
        let n = 5 + trial % 100;
        let d: Vec<f64> = (0..n).map(|_| near_normal(&mut rng).abs()).collect();
        let alpha = (trial % 51) as f64 / 100.0;

        let mut squares: Vec<f64> = d.iter().map(|v| v * v).collect();
        squares.sort_by(f64::total_cmp);
        let h = n - (n as f64 * alpha).floor() as usize;
        let oracle = (squares[..h].iter().sum::<f64>() / h as f64).sqrt();

        let ours = lts_scale(&d, alpha);
        assert_eq!(
            ours.to_bits(),
            oracle.to_bits(),
            "criterion 4a: trial {trial}: lts {ours} vs oracle {oracle}"
        );
    }

    // (b) The M-scale satisfies its defining equation.
    for trial in 0..1000 {
        let n = 5 + trial % 100;
        let d: Vec<f64> = (0..n).map(|_| near_normal(&mut rng).abs() + 1e-12).collect();
        let b = 0.05 + 0.45 * ((trial % 10) as f64 / 9.0);
        let s = m_scale(&d, b, 1e-12).unwrap();
        let mean_rho = d.iter().map(|&v| tukey_rho(v / s)).sum::<f64>() / n as f64;
        assert!(
            (mean_rho - b).abs() < 1e-8,
            "criterion 4b: trial {trial}: mean rho {mean_rho} vs b {b}"
        );
    }

    // (c) Alternating least squares against a dense eigendecomposition. The
    // stopping rule leaves a residual angle of roughly sqrt(tol) scaled by
    // the eigenvalue ratio between neighbouring components, so the columns
    // need well-separated scales for the 1e-6 bound to hold at tol = 1e-12.
    let sds = [1.0, 3.0, 9.0, 27.0, 81.0, 243.0];
    for trial in 0..100 {
        let raw = scaled_cloud(30, &sds, &mut rng);
        let means = raw.row_mean();
        let mut xc = raw.clone();
        for mut row in xc.row_iter_mut() {
            row -= &means;
        }
        let q = 1 + trial % 3;

        let fit = als_pca(&xc, q, None, 100_000, 1e-12).unwrap();

        let cov = xc.transpose() * &xc;
        let eigen = cov.symmetric_eigen();
        let mut order: Vec<usize> = (0..sds.len()).collect();
        order.sort_by(|&i, &j| eigen.eigenvalues[j].total_cmp(&eigen.eigenvalues[i]));
        let top = DMatrix::from_fn(sds.len(), q, |r, c| eigen.eigenvectors[(r, order[c])]);
        let oracle = OrthonormalBasis::new(top).unwrap();

        let worst = *principal_angles(&fit.basis, &oracle)
            .unwrap()
            .angles
            .last()
            .unwrap();
        assert!(
            worst < 1e-6,
            "criterion 4c: trial {trial} (q = {q}): principal angle {worst}"
        );
    }

    println!(
        "criterion 4: PASS — trimmed scale exact on 1000 vectors, M-scale equation within 1e-8 \
         on 1000 vectors, subspaces within 1e-6 of dense eigenvectors on 100 instances ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn c05_refined_fits_satisfy_the_weighted_eigen_equation() {
    let _guard = serial();
    let started = Instant::now();

    let design = SimulationDesign::new(DesignKind::Abrupt, 100, 10, 2, 0.0, 0.0, 505).unwrap();
    let spec = ScaleSpec::m(0.5).unwrap();
    let params = AlgorithmParams {
        tol: 1e-10,
        n2_refine: 300,
        ..AlgorithmParams::default()
    };

    let mut passing = 0usize;
    let runs = 100usize;
    for rep in 0..runs {
        let x = sample_for_rep(&design, rep).unwrap().x;
        let fit = fit_deterministic(&x, 2, &spec, &params).unwrap();
        if robsub::eigen_residual(&fit, &x) < 1e-3 {
            passing += 1;
        }
    }
    assert!(
        passing >= 95,
        "criterion 5: eigen-equation residual below 1e-3 in only {passing}/{runs} runs"
    );

    println!(
        "criterion 5: PASS — fixed-point residual < 1e-3 in {passing}/{runs} refined fits \
         ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn c06_unit_weights_reduce_the_loop_to_classical_pca() {
    let _guard = serial();
    let started = Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for trial in 0..50 {
        let n = 20 + trial % 21;
        let p = 4 + trial % 5;
        let q = 1 + trial % 3;
        let sds: Vec<f64> = (0..p).map(|j| 2f64.powi(j as i32)).collect();
        let raw = scaled_cloud(n, &sds, &mut rng);
        let means = raw.row_mean();
        let mut xc = raw.clone();
        for mut row in xc.row_iter_mut() {
            row -= &means;
        }

        // Same start on both sides, each run until the objective stalls at
        // machine precision (tol below any representable relative change).
        // The objective is the untrimmed quadratic scale (alpha = 0, the
        // root mean squared distance), which both procedures minimize
        // monotonely, so they settle on the same unique least-squares
        // subspace; a finite tol would let the two stop a pass apart while
        // still measurably short of the optimum.
        let b0 = random_orthogonal(p, q, &mut rng);
        let params = AlgorithmParams {
            n1: 0,
            n2: 1,
            n3: 400,
            tol: 1e-300,
            ..AlgorithmParams::default()
        };
        let start = StartValue {
            basis: b0.clone(),
            center: DVector::zeros(p),
        };
        let hook =
            iterate_fit_unit_weights(&xc, &start, &ScaleSpec::lts(0.0).unwrap(), &params).unwrap();
        let als = als_pca(&xc, q, Some(&b0), 400, 1e-300).unwrap();

        let worst = worst_angle_sine(&hook.basis, &als.basis);
        assert!(
            worst < 1e-8,
            "criterion 6: trial {trial} (n={n}, p={p}, q={q}): angle {worst}"
        );
    }

    println!(
        "criterion 6: PASS — unit-weight loop matches alternating least squares within 1e-8 \
         on 50 instances ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn c07_rotation_sensitivity_vanishes_for_pca_and_fades_for_dsubs() {
    let _guard = serial();
    let started = Instant::now();

    // Classical PCA is exactly equivariant at every outlier distance.
    for k in [1.0, 5.0, 10.0, 20.0] {
        let design = SimulationDesign::new(DesignKind::Abrupt, 100, 10, 2, 0.2, k, 700).unwrap();
        let angles = method_equivariance(Method::ClassicalPca, &design, 50).unwrap();
        let values: Vec<f64> = angles
            .into_iter()
            .map(|a| a.expect("classical PCA fits never degenerate here"))
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!(
            mean < 1e-3,
            "criterion 7: classical PCA mean angle {mean} at k = {k}"
        );
    }

    // The deterministic S fit is nearly equivariant once outliers are far.
    let design = SimulationDesign::new(DesignKind::Abrupt, 100, 10, 2, 0.2, 10.0, 700).unwrap();
    let angles = method_equivariance(Method::DeterministicS, &design, 50).unwrap();
    let values: Vec<f64> = angles
        .into_iter()
        .map(|a| a.expect("deterministic fits succeed on this design"))
        .collect();
    let dsubs_mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!(
        dsubs_mean < 0.1,
        "criterion 7: deterministic S mean angle {dsubs_mean} at k = 10"
    );

    println!(
        "criterion 7: PASS — classical PCA rotation-exact at k in {{1,5,10,20}}, deterministic S \
         mean angle {dsubs_mean:.3} at k=10 ({:.1?})",
        started.elapsed()
    );
}

#[test]
fn c08_wall_clock_ordering_spc_dsubs_rsubs() {
    let _guard = serial();
    let started = Instant::now();

    // Timing cloud: two dominant directions over a small isotropic
    // background, the regime the calibrated high-dimensional profile
    // targets (q directions carrying most of the variance). A flat
    // comparable-scale background at p = 500 would instead starve every
    // alternating-least-squares pass of its eigengap and turn the baseline
    // fits into convergence marathons that no published setup exercises.
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut sds = vec![0.3; 498];
    sds.extend([5.5, 6.3]);
    let x = scaled_cloud(200, &sds, &mut rng);

    let time_one = |method: Method| -> Duration {
        let t = Instant::now();
        method.fit(&x, 2, 1).unwrap();
        t.elapsed()
    };

    let mut spc = Vec::new();
    let mut dsubs = Vec::new();
    let mut rsubs = Vec::new();
    for _ in 0..5 {
        spc.push(time_one(Method::SphericalPca));
        dsubs.push(time_one(Method::DeterministicS));
        rsubs.push(time_one(Method::RandomS));
    }
    let median = |mut v: Vec<Duration>| -> Duration {
        v.sort();
        v[2]
    };
    let (spc, dsubs, rsubs) = (median(spc), median(dsubs), median(rsubs));

    assert!(
        spc < dsubs,
        "criterion 8: spherical PCA ({spc:.2?}) not faster than deterministic S ({dsubs:.2?})"
    );
    assert!(
        dsubs < rsubs,
        "criterion 8: deterministic S ({dsubs:.2?}) not faster than 50 random starts ({rsubs:.2?})"
    );

    println!(
        "criterion 8: PASS — median wall clock at n=200, p=500: spc {spc:.2?} < dsubs {dsubs:.2?} \
         < rsubs {rsubs:.2?} ({:.1?} total)",
        started.elapsed()
    );
}

#[test]
fn c09_planted_outliers_are_flagged_with_few_false_alarms() {
    let _guard = serial();
    let started = Instant::now();

    let (x, planted) = planted_plane();
    for (name, spec) in [
        ("dsubs", ScaleSpec::m(0.5).unwrap()),
        ("dsublts", ScaleSpec::lts(0.5).unwrap()),
    ] {
        let fit = fit_deterministic(&x, 2, &spec, &AlgorithmParams::default()).unwrap();
        let table = diagnostic_table(&x, &fit, &spec).unwrap();

        let flagged: Vec<usize> = (0..table.len())
            .filter(|&i| {
                matches!(table.flags[i], Flag::OrthogonalOutlier | Flag::BadLeverage)
            })
            .collect();
        for row in &planted {
            assert!(
                flagged.contains(row),
                "criterion 9: {name}: planted row {row} not flagged (flags: {flagged:?})"
            );
        }
        let false_alarms = flagged.iter().filter(|i| !planted.contains(i)).count();
        assert!(
            false_alarms <= 6,
            "criterion 9: {name}: {false_alarms} false alarms (flagged {flagged:?})"
        );
    }

    println!(
        "criterion 9: PASS — all 9 planted rows flagged by both robust fits with at most 6 \
         false alarms ({:.1?})",
        started.elapsed()
    );
}

/// Runs the binary with `--threads <threads>` plus `args`, expecting success,
/// and returns the bytes of `out`.
fn artifact_bytes(dir: &std::path::Path, threads: &str, args: &[&str], out_name: &str) -> Vec<u8> {
    let out = dir.join(out_name);
    let mut cmd: Command = bin();
    cmd.args(["--threads", threads]).args(args).arg("--out").arg(&out);
    let output = run(&mut cmd);
    assert_code(&output, 0);
    fs::read(&out).unwrap()
}

#[test]
fn c10_seeded_commands_are_byte_identical_across_runs_and_threads() {
    let _guard = serial();
    let started = Instant::now();

    let dir = tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_matrix(&input, &anisotropic_cloud(50, 4, 17), false);
    let input_str = input.to_str().unwrap();

    // fit with random starts: twice on one thread, once on eight.
    let fit_args = [
        "fit", "--input", input_str, "--q", "2", "--method", "s", "--starts", "random",
        "--n-starts", "12", "--seed", "5",
    ];
    let a = artifact_bytes(dir.path(), "1", &fit_args, "fit_a.json");
    let b = artifact_bytes(dir.path(), "1", &fit_args, "fit_b.json");
    let c = artifact_bytes(dir.path(), "8", &fit_args, "fit_c.json");
    assert_eq!(a, b, "criterion 10: fit reruns differ");
    assert_eq!(a, c, "criterion 10: fit differs across thread counts");

    // simulate with both a deterministic and a random-start method.
    let sim_args = [
        "simulate", "--design", "a", "--n", "40", "--p", "5", "--q", "1", "--eps", "0.1",
        "--k-grid", "2", "--reps", "2", "--methods", "dsubs,rsubs", "--seed", "3",
    ];
    let a = artifact_bytes(dir.path(), "1", &sim_args, "sim_a.csv");
    let b = artifact_bytes(dir.path(), "1", &sim_args, "sim_b.csv");
    let c = artifact_bytes(dir.path(), "8", &sim_args, "sim_c.csv");
    assert_eq!(a, b, "criterion 10: simulate reruns differ");
    assert_eq!(a, c, "criterion 10: simulate differs across thread counts");

    // equivariance study.
    let eq_args = [
        "equivariance", "--design", "a", "--n", "30", "--p", "5", "--q", "2", "--eps", "0.2",
        "--k-grid", "5", "--reps", "2", "--methods", "dsubs", "--seed", "11",
    ];
    let a = artifact_bytes(dir.path(), "1", &eq_args, "eq_a.csv");
    let b = artifact_bytes(dir.path(), "1", &eq_args, "eq_b.csv");
    let c = artifact_bytes(dir.path(), "8", &eq_args, "eq_c.csv");
    assert_eq!(a, b, "criterion 10: equivariance reruns differ");
    assert_eq!(a, c, "criterion 10: equivariance differs across thread counts");

    // diagnose against the fit document produced above.
    let fit_path = dir.path().join("fit_a.json");
    let diag_args = [
        "diagnose", "--input", input_str, "--fit", fit_path.to_str().unwrap(),
    ];
    let a = artifact_bytes(dir.path(), "1", &diag_args, "diag_a.csv");
    let b = artifact_bytes(dir.path(), "8", &diag_args, "diag_b.csv");
    assert_eq!(a, b, "criterion 10: diagnose differs across thread counts");

    println!(
        "criterion 10: PASS — fit, simulate, equivariance, and diagnose artifacts byte-identical \
         across reruns and thread counts ({:.1?})",
        started.elapsed()
    );
}
