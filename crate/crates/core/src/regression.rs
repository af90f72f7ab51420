//! Best-subset least squares with the conditional-code ℓ0 penalty, and the
//! Monte Carlo comparison of its risk with the redundancy bound.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss::{bhat_regression_total, RegressionModel};
use crate::linalg::{least_squares, norm_sq, Matrix};
use crate::rng::stream;
use crate::scalar::Real;
use crate::subset::{pen_l0, split_data, SplitData, SupportSet};

pub const MAX_SEARCH_P: usize = 20;
pub const MAX_SEARCH_K: usize = 6;

/// `log(1/(2 − √2))`, the bound on `E log M(Z_in)`.
pub fn log_normalizer_bound() -> f64 {
    (1.0 / (2.0 - std::f64::consts::SQRT_2)).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetFit<T> {
    pub support: SupportSet,
    /// Zero off the support.
    pub coeffs: Vec<T>,
    pub rss: T,
    /// `None` for a plain least-squares fit.
    pub penalty: Option<T>,
    /// `rss/2 + penalty`.
    pub total: T,
}

/// Least squares restricted to the columns in `s`.
pub fn ols_fit<T: Real>(y: &[T], x: &Matrix<T>, s: &SupportSet) -> Result<SubsetFit<T>> {
    if let Some(&j) = s.indices().iter().find(|&&j| j >= x.cols()) {
        return Err(Error::InvalidArgument(format!("support index {j} out of range")));
    }
    let ls = least_squares(&x.select_columns(s.indices()), y)?;
    let mut coeffs = vec![T::zero(); x.cols()];
    for (&j, &c) in s.indices().iter().zip(&ls.coeffs) {
        coeffs[j] = c;
    }
    Ok(SubsetFit { support: s.clone(), coeffs, rss: ls.rss, penalty: None, total: T::of(0.5) * ls.rss })
}

/// Exhaustive minimizer of `½‖y − Xθ‖² + pen_l0(S(θ))` over supports of size
/// at most `k_max`, the penalty without its data terms. Supports whose
/// design is rank deficient are skipped. Ties go to the smaller support, then
/// to the lexicographically first.
pub fn best_subset<T: Real>(y: &[T], x: &Matrix<T>, split: &SplitData<T>, k_max: usize) -> Result<SubsetFit<T>> {
    let p = x.cols();
    if p > MAX_SEARCH_P || k_max > MAX_SEARCH_K {
        return Err(Error::Regime(format!(
            "exhaustive search needs p ≤ {MAX_SEARCH_P} and k_max ≤ {MAX_SEARCH_K}, got p = {p}, k_max = {k_max}"
        )));
    }
    let n = x.rows();
    let mut best: Option<SubsetFit<T>> = None;
    for s in SupportSet::all_up_to(p, k_max) {
        let fit = match ols_fit(y, x, &s) {
            Ok(f) => f,
            Err(Error::RankDeficient(_)) => continue,
            Err(e) => return Err(e),
        };
        let pen = match pen_l0(&s, split, n, None) {
            Ok(v) => v,
            Err(Error::RankDeficient(_)) => continue,
            Err(e) => return Err(e),
        };
        let total = T::of(0.5) * fit.rss + pen;
        if best.as_ref().is_none_or(|b| total < b.total) {
            best = Some(SubsetFit { penalty: Some(pen), total, ..fit });
        }
    }
    best.ok_or_else(|| Error::RankDeficient("no support with a full-rank design".into()))
}

/// One replicate of the regression risk experiment, per `n − p` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionRiskTrial {
    pub replicate: u64,
    /// Total Bhattacharyya divergence over the design divided by `n − p`.
    pub loss: f64,
    /// `min_S [½(RSS_S − ‖ε‖²) + pen(S) + k* log 2] / (n − p)`.
    pub redundancy: f64,
    /// `2 log(1/(2 − √2))/(n − p) + redundancy`.
    pub bound: f64,
    pub selected_size: usize,
    pub rss: f64,
}

/// Simulates `y = Xθ* + σε`, fits [`best_subset`] with `k_max = min(p, 6)`
/// and records loss and bound. The penalty assumes unit noise, so the fit
/// runs on `y/σ`. Replicate `r` draws from `stream(seed, r)`.
pub fn regression_risk_experiment(
    theta_star: &[f64],
    x: &Matrix<f64>,
    sigma: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<RegressionRiskTrial>> {
    let (n, p) = (x.rows(), x.cols());
    if n <= p {
        return Err(Error::InvalidArgument(format!("need n > p, got n = {n}, p = {p}")));
    }
    let model = RegressionModel::new(x.clone(), theta_star.to_vec(), sigma)?;
    let k_star = SupportSet::of_vector(theta_star).len();
    let k_max = p.min(MAX_SEARCH_K);
    let supports = SupportSet::all_up_to(p, k_max);
    let m = (n - p) as f64;
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let y: Vec<f64> = model.sample_response(&mut rng).iter().map(|v| v / sigma).collect();
            let mean = model.mean();
            let noise_sq = norm_sq(&y.iter().zip(&mean).map(|(a, b)| a - b / sigma).collect::<Vec<_>>());
            let split = split_data(&y, x)?;
            let fit = best_subset(&y, x, &split, k_max)?;
            let theta_hat: Vec<f64> = fit.coeffs.iter().map(|c| c * sigma).collect();
            let loss = bhat_regression_total(x, theta_star, &theta_hat, sigma)? / m;
            let mut excess = f64::INFINITY;
            for s in &supports {
                let (Ok(f), Ok(pen)) = (ols_fit(&y, x, s), pen_l0(s, &split, n, None)) else {
                    continue;
                };
                excess = excess.min(0.5 * (f.rss - noise_sq) + pen + k_star as f64 * std::f64::consts::LN_2);
            }
            let redundancy = excess / m;
            Ok(RegressionRiskTrial {
                replicate: r,
                loss,
                redundancy,
                bound: 2.0 * log_normalizer_bound() / m + redundancy,
                selected_size: fit.support.len(),
                rss: fit.rss,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn design(n: usize, p: usize, seed: u64) -> Matrix<f64> {
        let mut rng = stream(seed, 0);
        Matrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn ols_examples() {
        let x = design(10, 3, 1);
        let s = SupportSet::new(vec![0, 2], 3).unwrap();
        let y = x.matvec(&[1.0, 0.0, -2.0]).unwrap();
        let f = ols_fit(&y, &x, &s).unwrap();
        assert!(f.rss < 1e-20);
        assert_eq!(f.coeffs[1], 0.0);
        let e = ols_fit(&y, &x, &SupportSet::empty()).unwrap();
        assert_eq!(e.coeffs, vec![0.0; 3]);
        assert!((e.rss - norm_sq(&y)).abs() < 1e-12);
    }

    #[test]
    fn ols_residual_orthogonal_and_matches_normal_equations() {
        let x = design(12, 4, 2);
        let mut rng = stream(2, 1);
        let y: Vec<f64> = (0..12).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let s = SupportSet::new(vec![0, 1, 3], 4).unwrap();
        let f = ols_fit(&y, &x, &s).unwrap();
        let fitted = x.matvec(&f.coeffs).unwrap();
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
        for &j in s.indices() {
            assert!(dot(&x.column(j), &resid).abs() < 1e-8);
        }
        assert!((f.rss - norm_sq(&resid)).abs() < 1e-10 * f.rss);
    }

    #[test]
    fn best_subset_examples() {
        let x = design(60, 3, 3);
        let split = split_data(&vec![0.0; 60], &x).unwrap();
        let zero = best_subset(&vec![0.0; 60], &x, &split, 3).unwrap();
        assert!(zero.support.is_empty());

        let y = x.matvec(&[10.0, 0.0, 0.0]).unwrap();
        let split = split_data(&y, &x).unwrap();
        let fit = best_subset(&y, &x, &split, 3).unwrap();
        assert_eq!(fit.support.indices(), &[0]);
        let pen = pen_l0(&fit.support, &split, 60, None).unwrap();
        assert!((fit.total - (0.5 * fit.rss + pen)).abs() < 1e-10);
    }

    #[test]
    fn best_subset_is_exhaustive() {
        for seed in 0..20 {
            let x = design(15, 5, 10 + seed);
            let mut rng = stream(seed, 2);
            let y: Vec<f64> = (0..15).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 } + rng.sample::<f64, _>(StandardNormal)).collect();
            let split = split_data(&y, &x).unwrap();
            let best = best_subset(&y, &x, &split, 5).unwrap();
            for s in SupportSet::all_up_to(5, 5) {
                let f = ols_fit(&y, &x, &s).unwrap();
                let total = 0.5 * f.rss + pen_l0(&s, &split, 15, None).unwrap();
                assert!(best.total <= total + 1e-12);
            }
        }
    }

    #[test]
    fn zero_column_does_not_change_selected_rss() {
        let x = design(20, 3, 4);
        let y = x.matvec(&[3.0, 0.0, 1.0]).unwrap();
        let mut rng = stream(4, 3);
        let y: Vec<f64> = y.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
        let split = split_data(&y, &x).unwrap();
        let base = best_subset(&y, &x, &split, 3).unwrap();
        let wider = Matrix::from_fn(20, 4, |i, j| if j < 3 { x[(i, j)] } else { 0.0 });
        let split_w = split_data(&y, &wider).unwrap();
        let fit = best_subset(&y, &wider, &split_w, 4).unwrap();
        assert!(!fit.support.contains(3));
        assert!((fit.rss - base.rss).abs() < 1e-9 * base.rss.max(1.0));
    }

    #[test]
    fn experiment_reproducible_and_zero_truth() {
        let x = design(30, 3, 5);
        let a = regression_risk_experiment(&[0.0; 3], &x, 1.0, 3, 9).unwrap();
        let b = regression_risk_experiment(&[0.0; 3], &x, 1.0, 3, 9).unwrap();
        assert_eq!(a, b);
        for t in &a {
            assert!(t.bound >= 2.0 * log_normalizer_bound() / 27.0 + t.redundancy - 1e-15);
            assert!(t.redundancy <= 0.0 + 1e-12);
        }
        assert!((log_normalizer_bound() - 0.534800).abs() < 1e-6);
    }
}
