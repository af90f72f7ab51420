//! Independent numerical oracles: quadrature and Monte Carlo built only from
//! densities, never from the closed forms under test.

#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Composite Simpson rule with `2m` panels on `[a, b]`.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

fn centered(precision: f64) -> Normal {
    Normal::new(0.0, precision.recip().sqrt()).expect("positive precision")
}

/// `−2 log ∫ √(p₁ p₂)` for centered normals with precisions `t1`, `t2`.
pub fn bhattacharyya_quadrature(t1: f64, t2: f64) -> f64 {
    let (d1, d2) = (centered(t1), centered(t2));
    let half_width = 14.0 * t1.min(t2).recip().sqrt();
    let affinity = simpson(|x| (d1.pdf(x) * d2.pdf(x)).sqrt(), -half_width, half_width, 20_000);
    -2.0 * affinity.ln()
}

/// `E_{p*} log(p*/p)` by stratified inverse-CDF sampling with `draws` strata.
pub fn kl_stratified<R: Rng + ?Sized>(t_star: f64, t: f64, draws: usize, rng: &mut R) -> f64 {
    let (truth, model) = (centered(t_star), centered(t));
    let mut sum = 0.0;
    for i in 0..draws {
        let u = (i as f64 + rng.random::<f64>()) / draws as f64;
        let x = truth.inverse_cdf(u);
        sum += truth.ln_pdf(x) - model.ln_pdf(x);
    }
    sum / draws as f64
}

/// `∫ exp(¼(r_star − ‖y − φ·x‖²)) dφ` over the real line by quadrature
/// around the least-squares point.
pub fn gaussian_ratio_integral(y: &[f64], x: &[f64], r_star: f64) -> f64 {
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let center = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / xx;
    let half_width = 40.0 / xx.sqrt();
    let integrand = |phi: f64| {
        let r: f64 = y.iter().zip(x).map(|(yi, xi)| (yi - phi * xi).powi(2)).sum();
        (0.25 * (r_star - r)).exp()
    };
    simpson(integrand, center - half_width, center + half_width, 20_000)
}

/// Mean and standard error of `exp(χ²_d/4)` over `draws` simulated values.
pub fn chi2_quarter_mgf_mc<R: Rng + ?Sized>(d: usize, draws: usize, rng: &mut R) -> (f64, f64) {
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let q: f64 = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal).powi(2)).sum();
        let v = (0.25 * q).exp();
        sum += v;
        sum_sq += v * v;
    }
    let n = draws as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Squared residual `‖y − Xβ‖²` with `X` given row-major as `rows × cols`.
pub fn residual_sq(y: &[f64], x_rows: &[Vec<f64>], beta: &[f64]) -> f64 {
    y.iter()
        .zip(x_rows)
        .map(|(yi, row)| {
            let fit: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            (yi - fit).powi(2)
        })
        .sum()
}
