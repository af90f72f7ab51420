//! ℓ1-penalized precision estimation for Gaussian graphical models, the
//! penalty multiplier and lattice width that make it risk valid, and the
//! numerical checks of that validity.
//!
//! Likelihood normalization: the negative average log-likelihood is
//! `½Tr(Sθ) + ½φ(θ) + (p/2) log 2π`, and the estimator minimizes
//! `½Tr(Sθ) + ½φ(θ) + λ‖θ‖₁` with `‖·‖₁` summing all `p²` entries.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauss::{bhat_ggm, ggm_neg_avg_loglik, kl_ggm, phi, sample_ggm, GaussGraphModel, GaussSampleSet, SymMatrix};
use crate::lattice::{enclosing_symmetric_vertices, pen_l1_lattice, LatticeSpec};
use crate::rng::stream;
use crate::scalar::Real;

pub const MAX_ITERATIONS: usize = 10_000;

/// Exact vertex enumeration in [`assumption_check`] is used up to this side.
pub const EXACT_ASSUMPTION_MAX_P: usize = 4;

/// Risk-valid penalty `n·λ‖θ‖₁ + additive_const` (pre-division form).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgmPenaltySpec<T> {
    pub lambda: T,
    pub additive_const: T,
}

impl<T: Real> GgmPenaltySpec<T> {
    pub fn new(lambda: T) -> Result<Self> {
        if !(lambda > T::zero()) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        Ok(GgmPenaltySpec { lambda, additive_const: T::of(2.0) * T::ln_2() })
    }

    /// Penalty for `n` observations.
    pub fn total(&self, theta: &SymMatrix<T>, n: usize) -> T {
        T::of_usize(n) * self.lambda * theta.l1_norm() + self.additive_const
    }
}

#[derive(Debug, Clone)]
pub struct GgmFitResult<T> {
    pub theta_hat: SymMatrix<T>,
    pub objective_value: T,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm distance from zero to the subdifferential at `theta_hat`.
    pub stationarity: T,
}

/// `½Tr(Sθ) + ½φ(θ) + λ‖θ‖₁`, `+∞` off the positive definite cone.
pub fn ggm_objective<T: Real>(theta: &SymMatrix<T>, sample_cov: &SymMatrix<T>, lambda: T) -> T {
    smooth_part(theta, sample_cov) + lambda * theta.l1_norm()
}

fn smooth_part<T: Real>(theta: &SymMatrix<T>, sample_cov: &SymMatrix<T>) -> T {
    let f = phi(theta);
    if f.is_infinite() {
        return T::infinity();
    }
    T::of(0.5) * (sample_cov.trace_product(theta) + f)
}

/// Gradient of the smooth part, `½(S − θ⁻¹)`.
fn smooth_gradient<T: Real>(theta: &SymMatrix<T>, sample_cov: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let inv = theta.inverse()?;
    Ok(sample_cov.sub(&inv).scale(T::of(0.5)))
}

/// Max-norm distance from zero to `∇f(θ) + λ ∂‖θ‖₁`.
pub fn stationarity_residual<T: Real>(theta: &SymMatrix<T>, sample_cov: &SymMatrix<T>, lambda: T) -> Result<T> {
    let g = smooth_gradient(theta, sample_cov)?;
    Ok(theta
        .entries()
        .iter()
        .zip(g.entries())
        .map(|(&t, &gi)| {
            if t > T::zero() {
                (gi + lambda).abs()
            } else if t < T::zero() {
                (gi - lambda).abs()
            } else {
                (gi.abs() - lambda).max(T::zero())
            }
        })
        .fold(T::zero(), T::max))
}

/// Proximal gradient with backtracking. Starts from `diag(1/(Sᵢᵢ + 0.1))`,
/// rejects steps that leave the positive definite cone, and stops once the
/// stationarity residual drops below `tol` or after [`MAX_ITERATIONS`].
pub fn ggm_solve<T: Real>(sample_cov: &SymMatrix<T>, lambda: T, tol: T) -> Result<GgmFitResult<T>> {
    if !(lambda > T::zero()) {
        return Err(Error::InvalidArgument("lambda must be positive".into()));
    }
    let p = sample_cov.dim();
    let init: Vec<T> = (0..p).map(|i| T::one() / (sample_cov.get(i, i) + T::of(0.1))).collect();
    let mut theta = SymMatrix::diag(&init);
    let mut smooth = smooth_part(&theta, sample_cov);
    let mut step = T::one();
    let half = T::of(0.5);
    let min_step = T::of(1e-30);

    let mut iterations = 0;
    let mut residual = stationarity_residual(&theta, sample_cov, lambda)?;
    while iterations < MAX_ITERATIONS && residual > tol {
        let grad = smooth_gradient(&theta, sample_cov)?;
        // the smooth part has local curvature at most 1/(2 λ_min(θ)²)
        step = step.min(T::of(2.0) * theta.min_eigenvalue().powi(2));
        let mut accepted = None;
        while step > min_step {
            let cand = theta.zip_with(&grad, |t, g| t - step * g).soft_threshold(step * lambda);
            let f_cand = smooth_part(&cand, sample_cov);
            if f_cand.is_finite() {
                let diff = cand.sub(&theta);
                let model = smooth + grad.trace_product(&diff) + diff.trace_product(&diff) / (T::of(2.0) * step);
                // rounding slack so steps near the optimum are not all rejected
                if f_cand <= model + T::epsilon() * T::of(4.0) * smooth.abs().max(T::one()) {
                    accepted = Some((cand, f_cand));
                    break;
                }
            }
            step *= half;
        }
        let Some((cand, f_cand)) = accepted else {
            break;
        };
        iterations += 1;
        theta = cand;
        smooth = f_cand;
        step *= T::of(2.0);
        residual = stationarity_residual(&theta, sample_cov, lambda)?;
    }
    let objective_value = ggm_objective(&theta, sample_cov, lambda);
    Ok(GgmFitResult { theta_hat: theta, objective_value, iterations, converged: residual <= tol, stationarity: residual })
}

/// `2·D_max·√(c·log(4p²)/n)` with `D_max = (max diagonal of Σ*)²` and
/// `c = 2` (conservative) or `c = 1`.
pub fn lambda_threshold<T: Real>(sigma_star: &SymMatrix<T>, n: usize, conservative: bool) -> T {
    let p = T::of_usize(sigma_star.dim());
    let d_max = sigma_star.max_diagonal().powi(2);
    let c = if conservative { T::of(2.0) } else { T::one() };
    T::of(2.0) * d_max * (c * (T::of(4.0) * p * p).ln() / T::of_usize(n)).sqrt()
}

/// Lattice width `√(2 log(4p²)/n)`.
pub fn delta_choice<T: Real>(p: usize, n: T) -> T {
    let p = T::of_usize(p);
    (T::of(2.0) * (T::of(4.0) * p * p).ln() / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionMethod {
    /// Every sign vertex of the perturbation cube was checked.
    Exact,
    /// `λ_min(θ*) > p·δ`.
    Sufficient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionCheck<T> {
    pub holds: bool,
    pub method: AssumptionMethod,
    /// Smallest eigenvalue over the checked perturbations (exact) or of
    /// `θ*` minus `p·δ` (sufficient).
    pub margin: T,
}

/// Whether `θ* + Δ ≻ 0` for every symmetric `Δ` with `‖Δ‖_∞ ≤ δ`.
///
/// `λ_min` is concave, so its minimum over the cube of perturbations is at a
/// sign vertex; for `p ≤ 4` all `2^{p(p+1)/2}` vertices are checked.
pub fn assumption_check<T: Real>(theta_star: &SymMatrix<T>, delta: T) -> AssumptionCheck<T> {
    let p = theta_star.dim();
    if p > EXACT_ASSUMPTION_MAX_P {
        let margin = theta_star.min_eigenvalue() - T::of_usize(p) * delta;
        return AssumptionCheck { holds: margin > T::zero(), method: AssumptionMethod::Sufficient, margin };
    }
    let upper: Vec<(usize, usize)> = (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect();
    let mut margin = T::infinity();
    for mask in 0u32..(1 << upper.len()) {
        let mut perturbed = theta_star.clone();
        let mut signs = vec![T::zero(); p * p];
        for (b, &(i, j)) in upper.iter().enumerate() {
            let s = if mask >> b & 1 == 1 { delta } else { -delta };
            signs[i * p + j] = s;
            signs[j * p + i] = s;
        }
        perturbed = perturbed.add(&SymMatrix::from_fn(p, |i, j| signs[i * p + j]));
        margin = margin.min(perturbed.min_eigenvalue());
        if delta == T::zero() {
            break;
        }
    }
    AssumptionCheck { holds: margin > T::zero(), method: AssumptionMethod::Exact, margin }
}

#[derive(Debug, Clone)]
pub struct RiskValidity<T> {
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
    /// The minimizing lattice point, if any candidate was admissible.
    pub argmin: Option<SymMatrix<T>>,
    pub candidates: usize,
}

/// Evaluates, for one `θ` and one data set,
///
/// `min_θ̃ [log P_θ̃(Z) − log P_θ(Z) − B(θ*,θ̃) + B(θ*,θ) + pen(θ̃)] ≤ pen(θ)`
///
/// with `B` totalled over the `n` observations, `θ̃` ranging over the
/// positive definite vertices of the lattice cell around `θ` whose shell
/// index is at most `search_radius`, and the lattice width from
/// [`delta_choice`]. Restricting the minimum to a subset can only raise
/// `lhs`.
pub fn verify_risk_validity_ggm<T: Real>(
    theta_star: &SymMatrix<T>,
    theta: &SymMatrix<T>,
    data: &GaussSampleSet<T>,
    pen_spec: &GgmPenaltySpec<T>,
    search_radius: u64,
) -> Result<RiskValidity<T>> {
    let n = data.n();
    let delta = delta_choice(theta_star.dim(), T::of_usize(n));
    if !assumption_check(theta_star, delta).holds {
        return Err(Error::AssumptionViolated { delta: delta.to_f64_lossy() });
    }
    evaluate_risk_validity_ggm(theta_star, theta, data, pen_spec, search_radius)
}

/// [`verify_risk_validity_ggm`] without the positive definiteness
/// precondition on `θ*`.
pub fn evaluate_risk_validity_ggm<T: Real>(
    theta_star: &SymMatrix<T>,
    theta: &SymMatrix<T>,
    data: &GaussSampleSet<T>,
    pen_spec: &GgmPenaltySpec<T>,
    search_radius: u64,
) -> Result<RiskValidity<T>> {
    let p = theta_star.dim();
    if p > 3 {
        return Err(Error::Regime(format!("lattice search supports p ≤ 3, got {p}")));
    }
    if theta.dim() != p || data.p() != p {
        return Err(Error::Dimension("theta, theta_star and data disagree on p".into()));
    }
    if !theta.is_pd() {
        return Err(Error::NotPositiveDefinite);
    }
    let n = data.n();
    let delta = delta_choice(p, T::of_usize(n));
    let nt = T::of_usize(n);
    let s = data.sample_cov();
    // log P_θ(Z) = −n·(neg avg log-likelihood)
    let loglik = |m: &SymMatrix<T>| -nt * ggm_neg_avg_loglik(m, s);
    let base = -loglik(theta) + nt * bhat_ggm(theta_star, theta);

    let spec = LatticeSpec::symmetric(delta, p)?;
    let vertices = enclosing_symmetric_vertices(theta, &spec)?;
    let mut best: Option<(T, SymMatrix<T>)> = None;
    let mut candidates = 0;
    for v in vertices.iter().filter(|v| v.shell() <= search_radius) {
        let m = v.as_sym_matrix().expect("symmetric lattice");
        if !m.is_pd() {
            continue;
        }
        candidates += 1;
        let value = loglik(&m) - nt * bhat_ggm(theta_star, &m) + base + pen_l1_lattice(v);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, m));
        }
    }
    let rhs = pen_spec.total(theta, n);
    let (lhs, argmin) = match best {
        Some((v, m)) => (v, Some(m)),
        None => (T::infinity(), None),
    };
    Ok(RiskValidity { lhs, rhs, holds: lhs <= rhs + T::of(1e-9), argmin, candidates })
}

/// `θ* + Δ` with `Δ` symmetric and entries uniform on `[−radius, radius]`.
pub fn perturb_within<R: Rng + ?Sized>(theta_star: &SymMatrix<f64>, radius: f64, rng: &mut R) -> SymMatrix<f64> {
    let p = theta_star.dim();
    let mut upper = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            upper[i * p + j] = rng.random_range(-radius..=radius);
        }
    }
    theta_star.add(&SymMatrix::from_fn(p, |i, j| upper[i.min(j) * p + i.max(j)]))
}

/// One trial of the risk-validity inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskValidityTrial {
    pub replicate: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Whether the inequality also held with `λ` halved.
    pub holds_half_lambda: bool,
}

/// Draws `θ` uniformly from the `δ`-neighbourhood of `θ*` that the
/// positive-definiteness assumption covers, samples `n` observations from
/// `θ*`, and evaluates [`verify_risk_validity_ggm`] with the conservative or
/// plain `λ`. Replicate `r` draws from `stream(seed, r)`.
pub fn risk_validity_experiment(
    theta_star: &SymMatrix<f64>,
    n: usize,
    reps: usize,
    seed: u64,
    conservative: bool,
) -> Result<Vec<RiskValidityTrial>> {
    let p = theta_star.dim();
    let delta = delta_choice(p, n as f64);
    if !assumption_check(theta_star, delta).holds {
        return Err(Error::AssumptionViolated { delta });
    }
    let model = GaussGraphModel::new(theta_star.clone())?;
    let lambda = lambda_threshold(model.covariance(), n, conservative);
    let pen = GgmPenaltySpec::new(lambda)?;
    let half = GgmPenaltySpec::new(0.5 * lambda)?;
    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let data = sample_ggm(&model, n, &mut rng)?;
            let theta = perturb_within(theta_star, delta, &mut rng);
            let full = verify_risk_validity_ggm(theta_star, &theta, &data, &pen, u64::MAX)?;
            let halved = verify_risk_validity_ggm(theta_star, &theta, &data, &half, u64::MAX)?;
            Ok(RiskValidityTrial { replicate: r, lhs: full.lhs, rhs: full.rhs, holds: full.holds, holds_half_lambda: halved.holds })
        })
        .collect()
}

/// Candidates for the redundancy and resolvability minimizations: `θ*` and
/// entrywise soft thresholds of it at `λ·j/4`, `j = 1..=8`, kept when
/// positive definite.
pub fn reference_grid<T: Real>(theta_star: &SymMatrix<T>, lambda: T) -> Vec<SymMatrix<T>> {
    std::iter::once(theta_star.clone())
        .chain((1..=8).map(|j| theta_star.soft_threshold(lambda * T::of(j as f64 / 4.0))))
        .filter(SymMatrix::is_pd)
        .collect()
}

/// One replicate of the ℓ1 risk-bound experiment (all per-observation).
#[derive(Debug, Clone, PartialEq)]
pub struct GgmRiskTrial {
    pub replicate: u64,
    /// `B(θ*, θ̂)`.
    pub loss: f64,
    /// `min_θ [(1/n) log(P_θ*(Z)/P_θ(Z)) + λ‖θ‖₁]` over the reference grid.
    pub redundancy: f64,
    /// `redundancy + 2 log 2 / n`.
    pub redundancy_bound: f64,
    /// `min_θ [KL(θ*, θ) + λ‖θ‖₁]` over the reference grid.
    pub resolvability: f64,
    /// The redundancy bracket evaluated at the resolvability minimizer; its
    /// expectation is `resolvability`, and `redundancy` never exceeds it.
    pub redundancy_at_resolvability_argmin: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs `reps` replicates of: sample `n` draws from `N(0, θ*⁻¹)`, fit with
/// the conservative `λ`, and record loss and both bound terms. Replicate `r`
/// draws from `stream(seed, r)`.
pub fn ggm_risk_experiment(theta_star: &SymMatrix<f64>, n: usize, reps: usize, seed: u64) -> Result<Vec<GgmRiskTrial>> {
    let p = theta_star.dim();
    let delta = delta_choice(p, n as f64);
    if !assumption_check(theta_star, delta).holds {
        return Err(Error::AssumptionViolated { delta });
    }
    let model = GaussGraphModel::new(theta_star.clone())?;
    let lambda = lambda_threshold(model.covariance(), n, true);
    let grid = reference_grid(theta_star, lambda);
    let pens: Vec<f64> = grid.iter().map(|g| lambda * g.l1_norm()).collect();
    let kl_terms: Vec<f64> = grid.iter().zip(&pens).map(|(g, pen)| kl_ggm(theta_star, g) + pen).collect();
    let (res_idx, resolvability) = argmin(&kl_terms);

    (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            risk_replicate(&model, &grid, &pens, res_idx, resolvability, lambda, n, r, &mut rng)
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn risk_replicate<R: Rng>(
    model: &GaussGraphModel<f64>,
    grid: &[SymMatrix<f64>],
    pens: &[f64],
    res_idx: usize,
    resolvability: f64,
    lambda: f64,
    n: usize,
    replicate: u64,
    rng: &mut R,
) -> Result<GgmRiskTrial> {
    let theta_star = model.precision();
    let data = sample_ggm(model, n, rng)?;
    let s = data.sample_cov();
    let fit = ggm_solve(s, lambda, 1e-8)?;
    let loss = bhat_ggm(theta_star, &fit.theta_hat);
    let star_nll = ggm_neg_avg_loglik(theta_star, s);
    let red_terms: Vec<f64> = grid.iter().zip(pens).map(|(g, pen)| ggm_neg_avg_loglik(g, s) - star_nll + pen).collect();
    let (_, redundancy) = argmin(&red_terms);
    Ok(GgmRiskTrial {
        replicate,
        loss,
        redundancy,
        redundancy_bound: redundancy + 2.0 * std::f64::consts::LN_2 / n as f64,
        resolvability,
        redundancy_at_resolvability_argmin: red_terms[res_idx],
        lambda,
        iterations: fit.iterations,
        converged: fit.converged,
    })
}

fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) })
}
