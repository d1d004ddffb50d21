//! Finite-difference gradient verification. Central differences over a flat
//! parameter vector against an arbitrary scalar loss closure; used by the
//! test suite to certify backprop, not at training time.

/// Relative error between an analytic and a numeric derivative, guarded so
/// that near-zero pairs compare absolutely: `|a-n| / max(|a|, |n|, 1e-8)`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Numeric gradient of `loss` at `theta` by central differences with step
/// `eps`: `(L(θ+εe_i) - L(θ-εe_i)) / 2ε` per coordinate.
pub fn central_differences<F>(theta: &[f64], mut loss: F, eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut work = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + eps;
        let up = loss(&work);
        work[i] = orig - eps;
        let down = loss(&work);
        work[i] = orig;
        grad.push((up - down) / (2.0 * eps));
    }
    grad
}

/// Max relative error of `analytic` against a central-difference estimate of
/// `loss` around `theta`.
pub fn grad_check<F>(theta: &[f64], analytic: &[f64], loss: F, eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let numeric = central_differences(theta, loss, eps);
    max_rel_error(analytic, &numeric)
}
