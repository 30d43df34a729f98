//! Test support: central finite differences and seeded input generation.
//! Used by unit tests and the acceptance suite; not part of the public API.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for test fixtures.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` uniform draws in [lo, hi).
pub fn uniform_vec(r: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(lo..hi)).collect()
}

/// Uniform draws bounded away from zero by `margin`, for kinked activations.
pub fn uniform_vec_away_from_zero(r: &mut ChaCha8Rng, n: usize, margin: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let mag = r.gen_range(margin..2.0);
            if r.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

/// Central finite differences of `f` w.r.t. every element of every input.
pub fn fd_grads(
    mut f: impl FnMut(&[Vec<f64>]) -> f64,
    inputs: &[Vec<f64>],
    eps: f64,
) -> Vec<Vec<f64>> {
    let mut work: Vec<Vec<f64>> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let orig = work[i][j];
            work[i][j] = orig + eps;
            let up = f(&work);
            work[i][j] = orig - eps;
            let dn = f(&work);
            work[i][j] = orig;
            g[j] = (up - dn) / (2.0 * eps);
        }
        grads.push(g);
    }
    grads
}

/// Worst-case discrepancy between analytic and numeric gradients:
/// `max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-3)`. The floor turns the check
/// into a 1e-7-absolute bound where the gradient is too small for a relative
/// comparison to be meaningful at finite-difference resolution.
pub fn max_grad_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// Standard step size for the central-difference oracle.
pub const FD_EPS: f64 = 1e-3;

/// Tolerance for gradient agreement.
pub const FD_TOL: f64 = 1e-4;
