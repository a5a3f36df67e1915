/// Solves a tridiagonal system with the Thomas algorithm.
///
/// Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`;
/// `lower[0]` and `upper[n-1]` are ignored. The matrix must be diagonally
/// dominant (no pivoting is done). `scratch` must have the length of `rhs`.
pub fn solve_into(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    scratch: &mut [f64],
    out: &mut [f64],
) {
    let n = rhs.len();
    debug_assert!(n > 0);
    debug_assert!(lower.len() == n && diag.len() == n && upper.len() == n);
    debug_assert!(scratch.len() == n && out.len() == n);

    scratch[0] = upper[0] / diag[0];
    out[0] = rhs[0] / diag[0];
    for i in 1..n {
        let den = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = if i + 1 < n { upper[i] / den } else { 0.0 };
        out[i] = (rhs[i] - lower[i] * out[i - 1]) / den;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
}

pub fn solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut scratch = vec![0.0; rhs.len()];
    let mut out = vec![0.0; rhs.len()];
    solve_into(lower, diag, upper, rhs, &mut scratch, &mut out);
    out
}
