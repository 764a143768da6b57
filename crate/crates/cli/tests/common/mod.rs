//! Helpers shared by the integration suites: invoking the binary, writing
//! CSV matrices, and constructing synthetic data sets.

use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Command for the compiled `robsub` binary.
pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_robsub"))
}

/// Runs the command and panics if it could not be spawned.
pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("failed to run the robsub binary")
}

/// Asserts the exit code, printing both streams on mismatch.
pub fn assert_code(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Writes a matrix as CSV, optionally with a `c1,c2,...` header line.
pub fn write_matrix(path: &Path, x: &DMatrix<f64>, header: bool) {
    let mut text = String::new();
    if header {
        let names: Vec<String> = (1..=x.ncols()).map(|j| format!("c{j}")).collect();
        text.push_str(&names.join(","));
        text.push('\n');
    }
    for i in 0..x.nrows() {
        let fields: Vec<String> = (0..x.ncols()).map(|j| x[(i, j)].to_string()).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).expect("failed to write CSV fixture");
}

/// Approximately standard normal draw (Irwin-Hall with four uniforms).
fn near_normal(rng: &mut ChaCha8Rng) -> f64 {
    let s: f64 = (0..4).map(|_| rng.random::<f64>()).sum();
    (s - 2.0) * 3f64.sqrt()
}

/// Well-spread cloud with per-column standard deviation `1 + 2j`.
pub fn anisotropic_cloud(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, p, |_, j| (1.0 + 2.0 * j as f64) * near_normal(&mut rng))
}

/// Cloud with the given per-column standard deviations.
pub fn layered_cloud(n: usize, sds: &[f64], seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, sds.len(), |_, j| sds[j] * near_normal(&mut rng))
}

/// 75 x 6 set whose bulk lies near the plane spanned by the last two axes
/// (on-plane spread 3 and 4, off-plane noise of norm at most 1) with nine
/// rows planted at orthogonal distance 50. Returns the data and the planted
/// row indices.
pub fn planted_plane() -> (DMatrix<f64>, Vec<usize>) {
    let (n, p) = (75, 6);
    let planted: Vec<usize> = (66..75).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        x[(i, 4)] = 3.0 * near_normal(&mut rng);
        x[(i, 5)] = 4.0 * near_normal(&mut rng);
        let mut direction = [0.0; 4];
        for entry in direction.iter_mut() {
            *entry = rng.random::<f64>() - 0.5;
        }
        let len: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = if planted.contains(&i) {
            50.0
        } else {
            0.5 + 0.5 * rng.random::<f64>()
        };
        for (j, entry) in direction.iter().enumerate() {
            x[(i, j)] = norm * entry / len;
        }
    }
    (x, planted)
}
