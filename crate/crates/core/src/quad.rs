//! Numerical quadrature: Gauss-Hermite rules for Gaussian expectations and a
//! composite Simpson rule for independent cross-checks.

use nalgebra::DMatrix;

/// Nodes and weights of the n-point Gauss-Hermite rule (physicists'
/// convention, weight function `exp(-x^2)`), computed by the Golub-Welsch
/// eigenvalue method on the Jacobi matrix.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    if n == 1 {
        return (vec![0.0], vec![std::f64::consts::PI.sqrt()]);
    }
    let mut jacobi = DMatrix::zeros(n, n);
    for i in 1..n {
        let beta = (i as f64 / 2.0).sqrt();
        jacobi[(i - 1, i)] = beta;
        jacobi[(i, i - 1)] = beta;
    }
    let eigen = jacobi.symmetric_eigen();
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let node = eigen.eigenvalues[k];
            let first = eigen.eigenvectors[(0, k)];
            (node, sqrt_pi * first * first)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Expectation `E[f(X)]` for `X ~ N(mean, std^2)` by Gauss-Hermite quadrature.
pub fn gaussian_expectation(mean: f64, std: f64, nodes: usize, f: impl Fn(f64) -> f64) -> f64 {
    let (xs, ws) = gauss_hermite(nodes);
    let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
    let scale = std::f64::consts::SQRT_2 * std;
    xs.iter()
        .zip(&ws)
        .map(|(&x, &w)| w * inv_sqrt_pi * f(mean + scale * x))
        .sum()
}

/// Composite Simpson rule on [a, b] with `n` subintervals (`n` even).
pub fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    assert!(n >= 2 && n % 2 == 0, "Simpson rule needs an even interval count");
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
