//! Closed forms against independent quadrature and Monte Carlo oracles.

mod common;

use codelength::gauss::{bhat_ggm, chi2_mgf_quarter, kl_ggm, SymMatrix};
use codelength::linalg::Matrix;
use codelength::rng::stream;
use codelength::subset::{int_closed_form, riemann_check, split_data, SupportSet};
use common::{bhattacharyya_quadrature, chi2_quarter_mgf_mc, gaussian_ratio_integral, kl_stratified};

#[test]
fn bhattacharyya_matches_quadrature() {
    for (t1, t2) in [(1.0, 1.0), (1.0, 2.0), (0.4, 2.5), (3.0, 0.5)] {
        let b = bhat_ggm(&SymMatrix::diag(&[t1]), &SymMatrix::diag(&[t2]));
        assert!((b - bhattacharyya_quadrature(t1, t2)).abs() < 1e-9);
    }
}

#[test]
fn kl_matches_stratified_monte_carlo() {
    let mut rng = stream(20, 0);
    for (t1, t2) in [(1.0, 2.0), (0.5, 1.5), (2.0, 0.7)] {
        let k = kl_ggm(&SymMatrix::diag(&[t1]), &SymMatrix::diag(&[t2]));
        assert!((k - kl_stratified(t1, t2, 200_000, &mut rng)).abs() < 5e-4);
    }
}

#[test]
fn chi2_mgf_matches_simulation() {
    let mut rng = stream(21, 0);
    for d in [1, 3] {
        let (mean, se) = chi2_quarter_mgf_mc(d, 200_000, &mut rng);
        let v: f64 = chi2_mgf_quarter(d);
        assert!((mean - v).abs() <= 3.0 * se, "d = {d}: {mean} vs {v}");
    }
}

#[test]
fn worked_integral_and_riemann_limit() {
    let x = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
    let split = split_data(&[0.7, 0.0], &x).unwrap();
    let s = SupportSet::new(vec![0], 1).unwrap();
    let closed = int_closed_form(&split, &s, &[0.0], &SupportSet::empty()).unwrap();
    assert!((closed - gaussian_ratio_integral(&[0.7], &[1.0], 0.49)).abs() < 1e-9);
    let coarse = riemann_check(&split, &s, &[0.0], &SupportSet::empty(), 0.25, 10.0).unwrap();
    assert!(coarse.holds);
    let fine = riemann_check(&split, &s, &[0.0], &SupportSet::empty(), 0.001, 10.0).unwrap();
    assert!((fine.riemann_sum / fine.integral - 0.5).abs() < 1e-3);
}
