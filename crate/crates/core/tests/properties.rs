//! Invariants checked over random inputs.

use codelength::gauss::{bhat_ggm, kl_ggm, SymMatrix};
use codelength::ggm::{ggm_objective, ggm_solve, stationarity_residual};
use codelength::lattice::{kraft_sum_truncated, LatticeSpec};
use codelength::linalg::Matrix;
use codelength::rng::stream;
use codelength::subset::{h_weight, riemann_check, split_data, ConditionalCode, SupportSet};
use proptest::prelude::*;
use rand::Rng;

fn pd_matrix(p: usize, entries: &[f64], ridge: f64) -> SymMatrix<f64> {
    let a = Matrix::from_fn(p, p, |i, j| entries[i * p + j]);
    let g = a.gram();
    SymMatrix::from_fn(p, |i, j| g[(i, j)] + if i == j { ridge } else { 0.0 })
}

fn design(n: usize, p: usize, entries: &[f64]) -> Matrix<f64> {
    Matrix::from_fn(n, p, |i, j| entries[i * p + j])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergences_ordered_and_symmetric(
        p in 1usize..4,
        a in prop::collection::vec(-1.5f64..1.5, 9),
        b in prop::collection::vec(-1.5f64..1.5, 9),
    ) {
        let t1 = pd_matrix(p, &a, 0.2);
        let t2 = pd_matrix(p, &b, 0.2);
        let b12 = bhat_ggm(&t1, &t2);
        prop_assert!(b12 >= 0.0);
        prop_assert!((b12 - bhat_ggm(&t2, &t1)).abs() <= 1e-10 * (1.0 + b12));
        prop_assert!(bhat_ggm(&t1, &t1).abs() <= 1e-12);
        prop_assert!(b12 <= kl_ggm(&t1, &t2) + 1e-10);
        prop_assert!(b12 <= kl_ggm(&t2, &t1) + 1e-10);
    }

    #[test]
    fn lattice_kraft_below_one(delta in 0.01f64..10.0, d in 1usize..7, k_max in 0usize..40) {
        let spec = LatticeSpec::vector(delta, d).unwrap();
        let k = kraft_sum_truncated(&spec, k_max);
        prop_assert!(k.total() <= 1.0 + 1e-12);
        prop_assert!(k.partial_sum <= kraft_sum_truncated(&spec, k_max + 1).partial_sum);
    }

    #[test]
    fn split_reassembles(p in 1usize..4, extra in 1usize..4, seed in any::<u64>()) {
        let n = p + extra;
        let mut rng = stream(seed, 0);
        let x = Matrix::from_fn(n, p, |_, _| rng.random::<f64>());
        let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let split = split_data(&y, &x).unwrap();
        prop_assert_eq!(split.y_in().len(), p);
        prop_assert_eq!(split.y_f().len(), extra);
        prop_assert_eq!(split.y(), y);
        prop_assert_eq!(split.x(), x);
    }

    #[test]
    fn conditional_code_kraft(
        entries in prop::collection::vec(-2.0f64..2.0, 8),
        y in prop::collection::vec(-3.0f64..3.0, 4),
        delta in 0.2f64..1.0,
        truth in -2.0f64..2.0,
    ) {
        let x = design(4, 2, &entries);
        let split = split_data(&y, &x).unwrap();
        prop_assume!(split.x_in().gram().as_slice().iter().all(|v| v.is_finite()));
        let theta_star = [truth, 0.0];
        let s_star = SupportSet::of_vector(&theta_star);
        let Ok(code) = ConditionalCode::build(&split, &theta_star, &s_star, delta, 2.0, 2) else {
            return Ok(());
        };
        prop_assert!(code.kraft_sum() <= 1.0 + 1e-9);
        for (g, grid) in code.grids().iter().enumerate() {
            for i in 0..grid.len() {
                let l = code.codelength(grid.support(), &grid.point(i)).unwrap();
                prop_assert!((l - (code.ln_normalizer() - code.ln_weight(g, i))).abs() <= 1e-9 * (1.0 + l.abs()));
            }
        }
    }

    #[test]
    fn doubling_delta_scales_weight(
        entries in prop::collection::vec(-2.0f64..2.0, 6),
        y in prop::collection::vec(-3.0f64..3.0, 3),
        phi in prop::collection::vec(-2.0f64..2.0, 2),
        delta in 0.1f64..1.0,
    ) {
        let x = design(3, 2, &entries);
        let split = split_data(&y, &x).unwrap();
        let s = SupportSet::new(vec![0, 1], 2).unwrap();
        let (Ok(h1), Ok(h2)) = (
            h_weight(&phi, &split, &s, &[0.0, 0.0], &SupportSet::empty(), delta),
            h_weight(&phi, &split, &s, &[0.0, 0.0], &SupportSet::empty(), 2.0 * delta),
        ) else {
            return Ok(());
        };
        prop_assert!(h1 > 0.0);
        prop_assert!((h2 / h1 - 4.0).abs() <= 1e-9);
    }

    #[test]
    fn riemann_sum_below_integral(
        entries in prop::collection::vec(-2.0f64..2.0, 12),
        y in prop::collection::vec(-3.0f64..3.0, 4),
        delta in 0.1f64..1.0,
        pair in any::<bool>(),
    ) {
        let x = design(4, 3, &entries);
        let split = split_data(&y, &x).unwrap();
        let s = if pair { SupportSet::new(vec![0, 2], 3).unwrap() } else { SupportSet::new(vec![1], 3).unwrap() };
        if let Ok(check) = riemann_check(&split, &s, &[0.0; 3], &SupportSet::empty(), delta, 3.0) {
            prop_assert!(check.holds, "{} > {}", check.riemann_sum, check.integral);
        }
    }

    #[test]
    fn solver_reaches_stationarity(
        p in 1usize..4,
        a in prop::collection::vec(-1.5f64..1.5, 9),
        lambda in 0.01f64..1.0,
    ) {
        let s = pd_matrix(p, &a, 0.3);
        let fit = ggm_solve(&s, lambda, 1e-8).unwrap();
        prop_assert!(fit.converged);
        prop_assert!(stationarity_residual(&fit.theta_hat, &s, lambda).unwrap() <= 1e-8);
        let f = ggm_objective(&fit.theta_hat, &s, lambda);
        prop_assert!(f <= ggm_objective(&SymMatrix::identity(p), &s, lambda) + 1e-12);
        prop_assert!(f <= ggm_objective(&s.inverse().unwrap(), &s, lambda) + 1e-12);
    }
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let draw = |seed, i| stream(seed, i).random::<u64>();
    assert_eq!(draw(1, 2), draw(1, 2));
    assert_ne!(draw(1, 2), draw(1, 3));
    assert_ne!(draw(1, 2), draw(2, 2));
}
