//! Conditional two-stage code for sparse linear regression with unit noise
//! variance.
//!
//! The first `p` rows (`Z_in`) fix a data-dependent grid of coefficient
//! vectors, one grid per support, and a weight `h` for every grid point. The
//! remaining `n − p` rows (`Z_f`) are then described with the normalized
//! codelength `L = −log h + log M` where `M` sums the weights. The true
//! coefficient vector enters the weights, so the code is an analysis device
//! rather than a practical coder.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauss::chi2_mgf_quarter;
use crate::linalg::{dot, least_squares, norm_sq, Cholesky, Matrix};
use crate::scalar::{ln_binomial, log_sum_exp, Real};

/// Largest support whose cube grid is enumerated.
pub const MAX_GRID_SUPPORT: usize = 3;
/// Largest number of columns for which all supports are enumerated.
pub const MAX_CODE_P: usize = 6;
/// Cap on the number of cubes per support; larger boxes are shrunk to fit.
pub const MAX_GRID_CELLS: usize = 1 << 19;

/// Sorted set of column indices (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    pub fn new(mut indices: Vec<usize>, p: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= p) {
            return Err(Error::InvalidArgument(format!("index {bad} out of range for p = {p}")));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("duplicate support index".into()));
        }
        Ok(SupportSet { indices })
    }

    pub fn empty() -> Self {
        SupportSet::default()
    }

    /// Indices of the nonzero entries.
    pub fn of_vector<T: Real>(theta: &[T]) -> Self {
        SupportSet { indices: theta.iter().enumerate().filter(|(_, v)| **v != T::zero()).map(|(i, _)| i).collect() }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn union(&self, other: &SupportSet) -> SupportSet {
        let mut indices: Vec<usize> = self.indices.iter().chain(&other.indices).copied().collect();
        indices.sort_unstable();
        indices.dedup();
        SupportSet { indices }
    }

    /// All supports of size at most `k_max`, by size and then lexicographically.
    pub fn all_up_to(p: usize, k_max: usize) -> Vec<SupportSet> {
        let mut out = Vec::new();
        for k in 0..=k_max.min(p) {
            let mut idx: Vec<usize> = (0..k).collect();
            loop {
                out.push(SupportSet { indices: idx.clone() });
                // next k-combination of 0..p
                let Some(pos) = (0..k).rev().find(|&i| idx[i] < p - k + i) else {
                    break;
                };
                idx[pos] += 1;
                for j in pos + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
            }
        }
        out
    }
}

impl fmt::Display for SupportSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(usize::to_string).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// Data split into the `p` conditioning rows and the `n − p` described rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData<T> {
    y_in: Vec<T>,
    x_in: Matrix<T>,
    y_f: Vec<T>,
    x_f: Matrix<T>,
}

impl<T: Real> SplitData<T> {
    pub fn y_in(&self) -> &[T] {
        &self.y_in
    }

    pub fn x_in(&self) -> &Matrix<T> {
        &self.x_in
    }

    pub fn y_f(&self) -> &[T] {
        &self.y_f
    }

    pub fn x_f(&self) -> &Matrix<T> {
        &self.x_f
    }

    pub fn p(&self) -> usize {
        self.x_in.cols()
    }

    pub fn n(&self) -> usize {
        self.x_in.rows() + self.x_f.rows()
    }

    /// The response in original row order.
    pub fn y(&self) -> Vec<T> {
        self.y_in.iter().chain(&self.y_f).copied().collect()
    }

    /// The design in original row order.
    pub fn x(&self) -> Matrix<T> {
        let data = self.x_in.as_slice().iter().chain(self.x_f.as_slice()).copied().collect();
        Matrix::from_vec(self.n(), self.p(), data).expect("consistent shapes")
    }
}

/// First `p` rows to `Z_in`, the rest to `Z_f`.
pub fn split_data<T: Real>(y: &[T], x: &Matrix<T>) -> Result<SplitData<T>> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::Dimension(format!("design has {n} rows but response has {}", y.len())));
    }
    if n <= p {
        return Err(Error::InvalidArgument(format!("need n > p, got n = {n}, p = {p}")));
    }
    Ok(SplitData { y_in: y[..p].to_vec(), x_in: x.select_rows(0..p), y_f: y[p..].to_vec(), x_f: x.select_rows(p..n) })
}

/// The two column-scale conditions a design is expected to meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignConditions {
    /// Largest column ℓ2 norm of the full design.
    pub max_column_norm: f64,
    /// Whether every column norm is at most `n`.
    pub column_norms_within_n: bool,
    /// Largest diagonal entry of `X_inᵀX_in`.
    pub max_in_sample_diagonal: f64,
    /// Whether that diagonal is at most `p`.
    pub in_sample_diagonal_within_p: bool,
}

pub fn design_conditions<T: Real>(split: &SplitData<T>) -> DesignConditions {
    let (n, p) = (split.n(), split.p());
    let max_column_norm = (0..p)
        .map(|j| (norm_sq(&split.x_in.column(j)) + norm_sq(&split.x_f.column(j))).sqrt().to_f64_lossy())
        .fold(0.0, f64::max);
    let max_in_sample_diagonal = (0..p).map(|j| norm_sq(&split.x_in.column(j)).to_f64_lossy()).fold(0.0, f64::max);
    DesignConditions {
        max_column_norm,
        column_norms_within_n: max_column_norm <= n as f64,
        max_in_sample_diagonal,
        in_sample_diagonal_within_p: max_in_sample_diagonal <= p as f64,
    }
}

/// Standard normal design shrunk, if needed, so that the largest diagonal of
/// `X_inᵀX_in` is at most `p` and every column norm at most `n`.
pub fn scaled_gaussian_design<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Matrix<f64> {
    let x = Matrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut in_diag: f64 = 0.0;
    let mut col_norm: f64 = 0.0;
    for j in 0..p {
        let col = x.column(j);
        in_diag = in_diag.max(norm_sq(&col[..p.min(n)]));
        col_norm = col_norm.max(norm_sq(&col).sqrt());
    }
    let scale = 1f64.min((p as f64 / in_diag).sqrt()).min(n as f64 / col_norm) * (1.0 - 1e-12);
    Matrix::from_fn(n, p, |i, j| x[(i, j)] * scale)
}

/// Least-squares fit of `y` on the columns in `support`, stored so the
/// residual at any `φ` is `rss + (φ − center)ᵀ gram (φ − center)`.
#[derive(Debug, Clone)]
pub(crate) struct SupportFit<T> {
    pub(crate) gram: Matrix<T>,
    pub(crate) center: Vec<T>,
    pub(crate) rss: T,
    pub(crate) ln_det: T,
}

impl<T: Real> SupportFit<T> {
    pub(crate) fn new(x: &Matrix<T>, y: &[T], support: &SupportSet) -> Result<Self> {
        let xs = x.select_columns(support.indices());
        let ls = least_squares(&xs, y)?;
        let gram = xs.gram();
        let ln_det = if support.is_empty() {
            T::zero()
        } else {
            Cholesky::new(&gram)
                .ok_or_else(|| Error::RankDeficient(format!("Gram matrix on {support} is singular")))?
                .log_det()
        };
        Ok(SupportFit { gram, center: ls.coeffs, rss: ls.rss, ln_det })
    }

    fn excess(&self, phi: &[T]) -> T {
        let d: Vec<T> = phi.iter().zip(&self.center).map(|(&a, &b)| a - b).collect();
        let mut q = T::zero();
        for (i, &di) in d.iter().enumerate() {
            let row: T = d.iter().enumerate().map(|(j, &dj)| self.gram[(i, j)] * dj).sum();
            q += di * row;
        }
        q
    }
}

/// `‖y_in − X_in θ*‖²` after checking that `θ*` vanishes off `s_star`.
fn star_residual<T: Real>(split: &SplitData<T>, theta_star: &[T], s_star: &SupportSet) -> Result<T> {
    if theta_star.len() != split.p() {
        return Err(Error::Dimension(format!("theta_star has length {}, expected {}", theta_star.len(), split.p())));
    }
    check_off_support(theta_star, s_star)?;
    let fitted = split.x_in.matvec(theta_star)?;
    Ok(split.y_in.iter().zip(&fitted).map(|(&y, &f)| (y - f) * (y - f)).sum())
}

fn check_off_support<T: Real>(theta: &[T], s: &SupportSet) -> Result<()> {
    match theta.iter().enumerate().find(|(i, v)| **v != T::zero() && !s.contains(*i)) {
        Some((i, _)) => Err(Error::InvalidArgument(format!("coordinate {i} is nonzero outside support {s}"))),
        None => Ok(()),
    }
}

fn ln_4pi<T: Real>() -> T {
    (T::of(4.0) * T::pi()).ln()
}

/// `log ∫ (P_φ(Z_in)/P_θ*(Z_in))^{1/2} dφ` over `φ` supported on `s`:
/// `¼(‖y_in − X_in θ*‖² − ‖y_in − O_S y_in‖²) + ½(|S| log 4π − log det X_Sᵀ X_S)`.
pub fn ln_int_closed_form<T: Real>(
    split: &SplitData<T>,
    s: &SupportSet,
    theta_star: &[T],
    s_star: &SupportSet,
) -> Result<T> {
    let r_star = star_residual(split, theta_star, s_star)?;
    let fit = SupportFit::new(&split.x_in, &split.y_in, s)?;
    Ok(ln_int_from(r_star, &fit, s.len()))
}

fn ln_int_from<T: Real>(r_star: T, fit: &SupportFit<T>, k: usize) -> T {
    T::of(0.25) * (r_star - fit.rss) + T::of(0.5) * (T::of_usize(k) * ln_4pi::<T>() - fit.ln_det)
}

pub fn int_closed_form<T: Real>(split: &SplitData<T>, s: &SupportSet, theta_star: &[T], s_star: &SupportSet) -> Result<T> {
    ln_int_closed_form(split, s, theta_star, s_star).map(T::exp)
}

/// Cube-maximal-residual grid `C_S` for one support.
#[derive(Debug, Clone)]
pub struct SupportGrid<T> {
    support: SupportSet,
    p: usize,
    delta: T,
    half_width: T,
    capped: bool,
    /// `k` lattice indices per point, points sorted lexicographically.
    coords: Vec<i64>,
    /// In-sample residual `‖y_in − X_in θ̃‖²` per point.
    residuals: Vec<T>,
}

impl<T: Real> SupportGrid<T> {
    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    /// Half-width of the truncation box actually enumerated.
    pub fn half_width(&self) -> T {
        self.half_width
    }

    /// Whether the box was shrunk to respect [`MAX_GRID_CELLS`].
    pub fn capped(&self) -> bool {
        self.capped
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn coords(&self, i: usize) -> &[i64] {
        let k = self.support.len();
        &self.coords[i * k..(i + 1) * k]
    }

    pub fn residual(&self, i: usize) -> T {
        self.residuals[i]
    }

    /// Coordinates on the support only.
    pub fn reduced_point(&self, i: usize) -> Vec<T> {
        self.coords(i).iter().map(|&c| T::of(c as f64) * self.delta).collect()
    }

    /// Point `i` as a `p`-vector, zero off the support.
    pub fn point(&self, i: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.p];
        for (&j, v) in self.support.indices().iter().zip(self.reduced_point(i)) {
            out[j] = v;
        }
        out
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<T>> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    /// Index of `theta` in the grid, if it is one of its points.
    pub fn position(&self, theta: &[T]) -> Option<usize> {
        if theta.len() != self.p || check_off_support(theta, &self.support).is_err() {
            return None;
        }
        let mut key = Vec::with_capacity(self.support.len());
        for &j in self.support.indices() {
            let c = theta[j] / self.delta;
            let r = c.round();
            if (c - r).abs() > T::of(1e-9) * r.abs().max(T::one()) {
                return None;
            }
            key.push(r.to_i64()?);
        }
        let k = self.support.len();
        if k == 0 {
            return Some(0);
        }
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.coords(mid).cmp(&key[..]) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }
}

/// Builds `C_S`: the cubes `∏[a_jδ, (a_j+1)δ]` inside a box of half-width
/// `box_radius·(1 + ‖φ̂‖∞)` around the origin (`φ̂` the in-sample least-squares
/// fit on `s`), and in each cube the vertex with the largest in-sample
/// residual, first in lexicographic vertex order on ties. Coinciding
/// vertices from neighbouring cubes are kept once.
pub fn build_cs<T: Real>(split: &SplitData<T>, s: &SupportSet, delta: T, box_radius: T) -> Result<SupportGrid<T>> {
    let fit = SupportFit::new(&split.x_in, &split.y_in, s)?;
    build_grid(&fit, s, split.p(), delta, box_radius)
}

fn build_grid<T: Real>(fit: &SupportFit<T>, s: &SupportSet, p: usize, delta: T, box_radius: T) -> Result<SupportGrid<T>> {
    let k = s.len();
    if k > MAX_GRID_SUPPORT {
        return Err(Error::Regime(format!("cube grids support |S| ≤ {MAX_GRID_SUPPORT}, got {k}")));
    }
    if !(delta > T::zero()) || !(box_radius > T::zero()) {
        return Err(Error::InvalidArgument("delta and box_radius must be positive".into()));
    }
    if k == 0 {
        return Ok(SupportGrid {
            support: s.clone(),
            p,
            delta,
            half_width: T::zero(),
            capped: false,
            coords: Vec::new(),
            residuals: vec![fit.rss],
        });
    }
    let center_max = fit.center.iter().fold(T::zero(), |m, c| m.max(c.abs()));
    let radius = box_radius * (T::one() + center_max);
    let mut m = (radius / delta).ceil().to_f64_lossy() as i64;
    let m_cap = ((MAX_GRID_CELLS as f64).powf(1.0 / k as f64) / 2.0).floor() as i64;
    let capped = m > m_cap;
    m = m.min(m_cap).max(1);

    let mut chosen: Vec<([i64; MAX_GRID_SUPPORT], T)> = Vec::new();
    let mut cube = [-m; MAX_GRID_SUPPORT];
    let mut vertex = [0i64; MAX_GRID_SUPPORT];
    let mut phi = vec![T::zero(); k];
    loop {
        let mut best: Option<([i64; MAX_GRID_SUPPORT], T)> = None;
        for b in 0..(1u32 << k) {
            for j in 0..k {
                // first coordinate is the most significant bit: lexicographic order
                vertex[j] = cube[j] + i64::from((b >> (k - 1 - j)) & 1);
                phi[j] = T::of(vertex[j] as f64) * delta;
            }
            let q = fit.excess(&phi);
            if best.as_ref().is_none_or(|(_, bq)| q > *bq) {
                best = Some((vertex, q));
            }
        }
        let (v, q) = best.expect("at least one vertex");
        chosen.push((v, fit.rss + q));

        let mut j = k;
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            cube[j] += 1;
            if cube[j] < m {
                break;
            }
            cube[j] = -m;
            if j == 0 {
                j = usize::MAX;
                break;
            }
        }
        if j == usize::MAX {
            break;
        }
    }
    chosen.sort_by(|a, b| a.0[..k].cmp(&b.0[..k]));
    chosen.dedup_by(|a, b| a.0[..k] == b.0[..k]);
    let mut coords = Vec::with_capacity(chosen.len() * k);
    let mut residuals = Vec::with_capacity(chosen.len());
    for (v, r) in chosen {
        coords.extend_from_slice(&v[..k]);
        residuals.push(r);
    }
    Ok(SupportGrid { support: s.clone(), p, delta, half_width: T::of(m as f64) * delta, capped, coords, residuals })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannCheck<T> {
    pub riemann_sum: T,
    pub integral: T,
    pub holds: bool,
}

/// `Σ_{φ∈C_S} (P_φ/P_θ*)^{1/2} (δ/2)^{|S|}` against the closed-form integral.
pub fn riemann_check<T: Real>(
    split: &SplitData<T>,
    s: &SupportSet,
    theta_star: &[T],
    s_star: &SupportSet,
    delta: T,
    box_radius: T,
) -> Result<RiemannCheck<T>> {
    let r_star = star_residual(split, theta_star, s_star)?;
    let fit = SupportFit::new(&split.x_in, &split.y_in, s)?;
    let grid = build_grid(&fit, s, split.p(), delta, box_radius)?;
    let cell = T::of_usize(s.len()) * (delta / T::of(2.0)).ln();
    let ln_sum = log_sum_exp(grid.residuals.iter().map(|&r| T::of(0.25) * (r_star - r) + cell));
    let riemann_sum = ln_sum.exp();
    let integral = ln_int_from(r_star, &fit, s.len()).exp();
    Ok(RiemannCheck { riemann_sum, integral, holds: riemann_sum <= integral + T::of(1e-9) })
}

/// `log h` without the likelihood-ratio factor.
fn ln_h_prefactor<T: Real>(p: usize, k: usize, k_star: usize, delta: T, ln_det: T) -> T {
    let kt = T::of_usize(k);
    -(kt + T::one()) * T::ln_2() - T::of(ln_binomial(p, k)) + kt * (delta / T::of(2.0)).ln()
        - T::of_usize(k_star) * T::of(0.5) * T::ln_2()
        - T::of(0.5) * kt * ln_4pi::<T>()
        + T::of(0.5) * ln_det
}

/// `h(θ̃, Z_in) = (½)^{k+1} C(p,k)^{-1} (δ/2)^k (1/√2)^{k*} (4π)^{-k/2}
/// det(X_Sᵀ X_S)^{1/2} (P_θ̃(Z_in)/P_θ*(Z_in))^{1/2}` with `k = |s|`.
pub fn h_weight<T: Real>(
    theta_tilde: &[T],
    split: &SplitData<T>,
    s: &SupportSet,
    theta_star: &[T],
    s_star: &SupportSet,
    delta: T,
) -> Result<T> {
    if theta_tilde.len() != split.p() {
        return Err(Error::Dimension("theta_tilde has the wrong length".into()));
    }
    check_off_support(theta_tilde, s)?;
    let r_star = star_residual(split, theta_star, s_star)?;
    let fit = SupportFit::new(&split.x_in, &split.y_in, s)?;
    let fitted = split.x_in.matvec(theta_tilde)?;
    let r: T = split.y_in.iter().zip(&fitted).map(|(&y, &f)| (y - f) * (y - f)).sum();
    let ln_h = ln_h_prefactor(split.p(), s.len(), s_star.len(), delta, fit.ln_det) + T::of(0.25) * (r_star - r);
    Ok(ln_h.exp())
}

/// What the truncated normalizer covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationReport {
    pub k_max: usize,
    pub supports: usize,
    pub points: usize,
    /// Supports whose box was shrunk to the cell cap.
    pub capped_supports: usize,
    pub ln_m: f64,
    /// `log` of the bound on the untruncated sum obtained from the Riemann
    /// inequality: `Σ_S (½)^{k+1} C(p,k)^{-1} (1/√2)^{k*} exp(¼(r* − r_S))`
    /// over every support.
    pub ln_m_bound: f64,
}

/// Grids, weights and normalizer of the conditional code.
#[derive(Debug, Clone)]
pub struct ConditionalCode<T> {
    p: usize,
    delta: T,
    k_star: usize,
    grids: Vec<SupportGrid<T>>,
    ln_h: Vec<Vec<T>>,
    ln_m: T,
    report: TruncationReport,
}

impl<T: Real> ConditionalCode<T> {
    /// Builds the code over all supports of size at most `k_max`.
    pub fn build(
        split: &SplitData<T>,
        theta_star: &[T],
        s_star: &SupportSet,
        delta: T,
        box_radius: T,
        k_max: usize,
    ) -> Result<Self> {
        let p = split.p();
        if p > MAX_CODE_P {
            return Err(Error::Regime(format!("conditional code enumerates supports for p ≤ {MAX_CODE_P}, got {p}")));
        }
        if k_max > MAX_GRID_SUPPORT.min(p) {
            return Err(Error::Regime(format!("k_max must be at most {}", MAX_GRID_SUPPORT.min(p))));
        }
        let r_star = star_residual(split, theta_star, s_star)?;
        let k_star = s_star.len();
        let quarter = T::of(0.25);
        let mut grids = Vec::new();
        let mut ln_h = Vec::new();
        let mut bound_terms = Vec::new();
        for s in SupportSet::all_up_to(p, p) {
            let fit = SupportFit::new(&split.x_in, &split.y_in, &s)?;
            let k = s.len();
            bound_terms.push(
                -T::of_usize(k + 1) * T::ln_2() - T::of(ln_binomial(p, k)) - T::of_usize(k_star) * T::of(0.5) * T::ln_2()
                    + quarter * (r_star - fit.rss),
            );
            if k > k_max {
                continue;
            }
            let grid = build_grid(&fit, &s, p, delta, box_radius)?;
            let pre = ln_h_prefactor(p, k, k_star, delta, fit.ln_det);
            ln_h.push(grid.residuals.iter().map(|&r| pre + quarter * (r_star - r)).collect::<Vec<_>>());
            grids.push(grid);
        }
        let ln_m = log_sum_exp(ln_h.iter().flatten().copied());
        let report = TruncationReport {
            k_max,
            supports: grids.len(),
            points: grids.iter().map(SupportGrid::len).sum(),
            capped_supports: grids.iter().filter(|g| g.capped).count(),
            ln_m: ln_m.to_f64_lossy(),
            ln_m_bound: log_sum_exp(bound_terms).to_f64_lossy(),
        };
        Ok(ConditionalCode { p, delta, k_star, grids, ln_h, ln_m, report })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn k_star(&self) -> usize {
        self.k_star
    }

    pub fn grids(&self) -> &[SupportGrid<T>] {
        &self.grids
    }

    pub fn grid_for(&self, s: &SupportSet) -> Option<usize> {
        self.grids.iter().position(|g| &g.support == s)
    }

    /// `log h` of point `i` in grid `g`.
    pub fn ln_weight(&self, g: usize, i: usize) -> T {
        self.ln_h[g][i]
    }

    pub fn ln_normalizer(&self) -> T {
        self.ln_m
    }

    pub fn normalizer(&self) -> T {
        self.ln_m.exp()
    }

    pub fn report(&self) -> &TruncationReport {
        &self.report
    }

    /// `Σ exp(−L)` over every grid point.
    pub fn kraft_sum(&self) -> T {
        (log_sum_exp(self.ln_h.iter().flatten().copied()) - self.ln_m).exp()
    }

    /// `L(θ̃ | Z_in) = −log h + log M` for the grid point `theta_tilde` of `C_support`.
    pub fn codelength(&self, support: &SupportSet, theta_tilde: &[T]) -> Result<T> {
        let g = self.grid_for(support).ok_or(Error::NotInGrid)?;
        let i = self.grids[g].position(theta_tilde).ok_or(Error::NotInGrid)?;
        Ok(self.ln_m - self.ln_h[g][i])
    }
}

/// Normalizer `M(Z_in)` of the truncated code with its coverage report.
pub fn m_normalizer<T: Real>(
    split: &SplitData<T>,
    theta_star: &[T],
    s_star: &SupportSet,
    delta: T,
    box_radius: T,
    k_max: usize,
) -> Result<(T, TruncationReport)> {
    let code = ConditionalCode::build(split, theta_star, s_star, delta, box_radius, k_max)?;
    Ok((code.normalizer(), code.report))
}

pub fn conditional_codelength<T: Real>(theta_tilde: &[T], support: &SupportSet, code: &ConditionalCode<T>) -> Result<T> {
    code.codelength(support, theta_tilde)
}

/// `1 + 4 log 2 − log 4π`, the per-coordinate constant of [`pen_l0`].
pub fn per_coordinate_constant() -> f64 {
    1.0 + 4.0 * std::f64::consts::LN_2 - (4.0 * std::f64::consts::PI).ln()
}

/// `k log n + 2 log C(p,k) + log det(X_in,Sᵀ X_in,S) + (1 + 4 log 2 − log 4π) k`
/// with `k = |s|`, plus `k* log 2 + 2 log M(Z_in)` from `data_terms` when given.
pub fn pen_l0<T: Real>(s: &SupportSet, split: &SplitData<T>, n: usize, data_terms: Option<&ConditionalCode<T>>) -> Result<T> {
    let p = split.p();
    let k = s.len();
    let ln_det = if k == 0 {
        T::zero()
    } else {
        let gram = split.x_in.select_columns(s.indices()).gram();
        Cholesky::new(&gram).ok_or_else(|| Error::RankDeficient(format!("X_in on {s} is rank deficient")))?.log_det()
    };
    let kt = T::of_usize(k);
    let mut pen = kt * T::of_usize(n).ln() + T::of(2.0 * ln_binomial(p, k)) + ln_det + T::of(per_coordinate_constant()) * kt;
    if let Some(code) = data_terms {
        pen += T::of_usize(code.k_star) * T::ln_2() + T::of(2.0) * code.ln_m;
    }
    Ok(pen)
}

/// `½‖y − Xθ‖² + (n/2) log 2π`.
pub fn neg_log_lik_unit<T: Real>(y: &[T], x: &Matrix<T>, theta: &[T]) -> Result<T> {
    let fitted = x.matvec(theta)?;
    let rss: T = y.iter().zip(&fitted).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(T::of(0.5) * rss + T::of_usize(y.len()) * T::of(0.5) * (T::of(2.0) * T::pi()).ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Code3Check<T> {
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
    /// Grid point attaining the right side.
    pub argmin: Vec<T>,
}

/// For one `θ`: `lhs = −log P_θ(Z) + pen_l0(S(θ))` with the data terms, and
/// `rhs = min_{θ̃ ∈ C_S(θ)} [−log P_θ̃(Z_f) + 2 L(θ̃ | Z_in)]`. Truncation of
/// the grid can only raise `rhs`, so a pass on the truncated grid implies a
/// pass on the full one.
pub fn verify_code3<T: Real>(split: &SplitData<T>, theta: &[T], code: &ConditionalCode<T>) -> Result<Code3Check<T>> {
    let p = split.p();
    if p > 4 {
        return Err(Error::Regime(format!("verify_code3 supports p ≤ 4, got {p}")));
    }
    if code.p != p || theta.len() != p {
        return Err(Error::Dimension("theta, split and code disagree on p".into()));
    }
    let s = SupportSet::of_vector(theta);
    let g = code
        .grid_for(&s)
        .ok_or_else(|| Error::Regime(format!("support {s} is larger than the code's k_max")))?;
    let n = split.n();
    let lhs = neg_log_lik_unit(&split.y(), &split.x(), theta)? + pen_l0(&s, split, n, Some(code))?;

    // ‖y_f − X_f,S φ‖² = ‖y_f‖² − 2 bᵀφ + φᵀ G φ
    let xs = split.x_f.select_columns(s.indices());
    let gf = xs.gram();
    let b = xs.transpose().matvec(&split.y_f)?;
    let yy = norm_sq(&split.y_f);
    let k = s.len();
    let half = T::of(0.5);
    let const_f = T::of_usize(n - p) * half * (T::of(2.0) * T::pi()).ln();
    let grid = &code.grids[g];
    let mut best = (T::infinity(), 0);
    for i in 0..grid.len() {
        let phi = grid.reduced_point(i);
        let mut quad = T::zero();
        for a in 0..k {
            for c in 0..k {
                quad += phi[a] * gf[(a, c)] * phi[c];
            }
        }
        let rss_f = yy - T::of(2.0) * dot(&b, &phi) + quad;
        let value = half * rss_f + const_f + T::of(2.0) * (code.ln_m - code.ln_h[g][i]);
        if value < best.0 {
            best = (value, i);
        }
    }
    let rhs = best.0;
    Ok(Code3Check { lhs, rhs, holds: lhs >= rhs - T::of(1e-9), argmin: grid.point(best.1) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionDominance<T> {
    /// `‖y_in − X θ*‖² − ‖y_in − O_S y_in‖²`.
    pub lhs: T,
    /// `‖O_{S∪S*} y_in − X θ*‖²`.
    pub rhs: T,
    pub holds: bool,
}

/// Deterministic step of the normalizer bound on the given data.
pub fn projection_dominance_check<T: Real>(
    split: &SplitData<T>,
    s: &SupportSet,
    s_star: &SupportSet,
    theta_star: &[T],
) -> Result<ProjectionDominance<T>> {
    projection_dominance(&split.x_in, &split.y_in, s, s_star, theta_star)
}

fn projection_dominance<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    s: &SupportSet,
    s_star: &SupportSet,
    theta_star: &[T],
) -> Result<ProjectionDominance<T>> {
    check_off_support(theta_star, s_star)?;
    let mean = x.matvec(theta_star)?;
    let r_star: T = y.iter().zip(&mean).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let r_s = least_squares(&x.select_columns(s.indices()), y)?.rss;
    let union = least_squares(&x.select_columns(s.union(s_star).indices()), y)?;
    let rhs: T = y.iter().zip(&union.residual).zip(&mean).map(|((&yi, &ri), &mi)| (yi - ri - mi) * (yi - ri - mi)).sum();
    let lhs = r_star - r_s;
    let tol = T::of(1e-9) * r_star.abs().max(T::one());
    Ok(ProjectionDominance { lhs, rhs, holds: lhs <= rhs + tol })
}

/// Monte Carlo check of `E exp(¼‖O_{S∪S*} y − X θ*‖²) ≤ (√2)^{|S|+|S*|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MgfCheck {
    pub draws: usize,
    pub mean: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `mean ≤ bound + 3·std_error`.
    pub holds: bool,
    /// Whether the deterministic projection inequality held on every draw.
    pub dominance_on_every_draw: bool,
}

/// Simulates `y = X θ* + ε` with standard normal noise.
pub fn projection_mgf_check<R: Rng + ?Sized>(
    x: &Matrix<f64>,
    s: &SupportSet,
    s_star: &SupportSet,
    theta_star: &[f64],
    draws: usize,
    rng: &mut R,
) -> Result<MgfCheck> {
    if draws < 2 {
        return Err(Error::InvalidArgument("need at least two draws".into()));
    }
    let mean = x.matvec(theta_star)?;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut dominance = true;
    let mut y = vec![0.0; mean.len()];
    for _ in 0..draws {
        for (yi, &mi) in y.iter_mut().zip(&mean) {
            *yi = mi + rng.sample::<f64, _>(StandardNormal);
        }
        let d = projection_dominance(x, &y, s, s_star, theta_star)?;
        dominance &= d.holds;
        let v = (0.25 * d.rhs).exp();
        sum += v;
        sum_sq += v * v;
    }
    let m = draws as f64;
    let mean_v = sum / m;
    let var = ((sum_sq - m * mean_v * mean_v) / (m - 1.0)).max(0.0);
    let std_error = (var / m).sqrt();
    let bound: f64 = chi2_mgf_quarter(s.len() + s_star.len());
    Ok(MgfCheck { draws, mean: mean_v, std_error, bound, holds: mean_v <= bound + 3.0 * std_error, dominance_on_every_draw: dominance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn one_d(y: f64) -> SplitData<f64> {
        split_data(&[y, 0.0], &Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap()).unwrap()
    }

    fn random_split(p: usize, n: usize, seed: u64) -> SplitData<f64> {
        let mut rng = stream(seed, 0);
        let x = Matrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        split_data(&y, &x).unwrap()
    }

    #[test]
    fn support_enumeration() {
        let all = SupportSet::all_up_to(4, 2);
        assert_eq!(all.len(), 1 + 4 + 6);
        assert!(all[0].is_empty());
        assert_eq!(all[5].indices(), &[0, 1]);
        assert_eq!(all[10].indices(), &[2, 3]);
        assert_eq!(SupportSet::all_up_to(3, 3).len(), 8);
        assert!(SupportSet::new(vec![1, 1], 3).is_err());
        assert!(SupportSet::new(vec![3], 3).is_err());
        assert_eq!(SupportSet::new(vec![2, 0], 3).unwrap().to_string(), "{0,2}");
        assert_eq!(SupportSet::of_vector(&[0.0, 1.0, 0.0, -2.0]).indices(), &[1, 3]);
    }

    #[test]
    fn split_examples() {
        let x = Matrix::from_fn(5, 2, |i, j| (i * 2 + j) as f64);
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let s = split_data(&y, &x).unwrap();
        assert_eq!((s.x_in().rows(), s.x_f().rows()), (2, 3));
        assert_eq!(s.y(), y.to_vec());
        assert_eq!(s.x(), x);
        let s3 = split_data(&y[..3], &Matrix::from_fn(3, 2, |i, j| (i + j) as f64)).unwrap();
        assert_eq!(s3.x_f().rows(), 1);
        assert!(split_data(&y[..2], &Matrix::from_fn(2, 2, |i, j| (i + j) as f64)).is_err());
    }

    #[test]
    fn integral_worked_value() {
        let split = split_data(&[0.7, 0.0], &Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap()).unwrap();
        let s = SupportSet::new(vec![0], 1).unwrap();
        let v = int_closed_form(&split, &s, &[0.0], &SupportSet::empty()).unwrap();
        assert!((v - 0.1225f64.exp() * (4.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((v - 4.006877).abs() < 1e-6);
    }

    #[test]
    fn integral_empty_support() {
        let split = random_split(2, 5, 3);
        let theta_star = [0.5, 0.0];
        let s_star = SupportSet::new(vec![0], 2).unwrap();
        let v = int_closed_form(&split, &SupportSet::empty(), &theta_star, &s_star).unwrap();
        let r_star = star_residual(&split, &theta_star, &s_star).unwrap();
        let expect = (0.25 * (r_star - norm_sq(split.y_in()))).exp();
        assert!((v - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn grid_one_dimensional_picks_far_endpoint() {
        let split = one_d(0.33);
        let s = SupportSet::new(vec![0], 1).unwrap();
        let delta = 0.25;
        let grid = build_cs(&split, &s, delta, 2.0).unwrap();
        let ols = 0.33;
        for pt in grid.points() {
            let v = pt[0];
            // v is an endpoint of a cell whose other endpoint is closer to the fit
            let other = if v > ols { v - delta } else { v + delta };
            assert!((other - ols).abs() <= (v - ols).abs() + 1e-12);
        }
        // the cell [0.25, 0.5] holds the fit; its far endpoint is 0.5
        assert!(grid.position(&[0.5]).is_some());
        assert!(grid.position(&[0.25]).is_none());
        let m = (2.0 * (1.0 + ols) / delta).ceil();
        assert_eq!(grid.len() as f64, 2.0 * m);
    }

    #[test]
    fn grid_count_and_corners() {
        let split = random_split(2, 6, 11);
        let s = SupportSet::new(vec![0, 1], 2).unwrap();
        let delta = 0.5;
        let grid = build_cs(&split, &s, delta, 1.0).unwrap();
        let cells = (2.0 * grid.half_width() / delta).round() as usize;
        assert!(grid.len() <= cells * cells);
        assert!(grid.len() >= cells * cells / 2);
        for i in 0..grid.len() {
            for c in grid.reduced_point(i) {
                assert!(((c / delta).round() * delta - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn riemann_worked_case() {
        let split = one_d(0.7);
        let s = SupportSet::new(vec![0], 1).unwrap();
        let r = riemann_check(&split, &s, &[0.0], &SupportSet::empty(), 0.25, 10.0).unwrap();
        assert!(r.holds, "{} > {}", r.riemann_sum, r.integral);
        assert!(r.riemann_sum > 0.4 * r.integral);
    }

    #[test]
    fn riemann_halved_weight_limit() {
        let split = one_d(0.7);
        let s = SupportSet::new(vec![0], 1).unwrap();
        let fine = riemann_check(&split, &s, &[0.0], &SupportSet::empty(), 1e-3, 10.0).unwrap();
        assert!((fine.riemann_sum / fine.integral - 0.5).abs() < 2e-3);
    }

    #[test]
    fn h_examples() {
        let split = one_d(0.4);
        let theta_star = [0.3];
        let s_star = SupportSet::new(vec![0], 1).unwrap();
        let empty = SupportSet::empty();
        // θ̃ = 0, θ* = 0: h = ½ (P_0/P_θ*)^{1/2} = ½
        let h0 = h_weight(&[0.0], &split, &empty, &[0.0], &empty, 0.1).unwrap();
        assert!((h0 - 0.5).abs() < 1e-15);
        let s = SupportSet::new(vec![0], 1).unwrap();
        let a = h_weight(&[0.2], &split, &s, &theta_star, &s_star, 0.1).unwrap();
        let b = h_weight(&[0.2], &split, &s, &theta_star, &s_star, 0.2).unwrap();
        assert!(a > 0.0);
        assert!((b / a - 2.0).abs() < 1e-12);
    }

    #[test]
    fn code_weights_normalizer_and_kraft() {
        let split = random_split(3, 12, 5);
        let theta_star = [1.0, 0.0, 0.0];
        let s_star = SupportSet::new(vec![0], 3).unwrap();
        let code = ConditionalCode::build(&split, &theta_star, &s_star, 0.3, 2.0, 2).unwrap();
        let total: f64 = (0..code.grids().len())
            .flat_map(|g| (0..code.grids()[g].len()).map(move |i| (g, i)))
            .map(|(g, i)| code.ln_weight(g, i).exp())
            .sum();
        assert!((total - code.normalizer()).abs() < 1e-9 * total);
        assert!(code.kraft_sum() <= 1.0 + 1e-12);
        assert!(code.report().ln_m <= code.report().ln_m_bound);
        let grid = &code.grids()[1];
        let pt = grid.point(0);
        let l = conditional_codelength(&pt, grid.support(), &code).unwrap();
        let h = h_weight(&pt, &split, grid.support(), &theta_star, &s_star, 0.3).unwrap();
        assert!((l - (-h.ln() + code.ln_normalizer())).abs() < 1e-9);
        assert!(matches!(code.codelength(grid.support(), &[0.123, 0.0, 0.0]), Err(Error::NotInGrid)));
        // monotone in k_max and in the box
        let bigger = ConditionalCode::build(&split, &theta_star, &s_star, 0.3, 2.0, 3).unwrap();
        let wider = ConditionalCode::build(&split, &theta_star, &s_star, 0.3, 3.0, 2).unwrap();
        assert!(bigger.normalizer() >= code.normalizer());
        assert!(wider.normalizer() >= code.normalizer());
        // single support: M = Σ h over C_S
        let single = ConditionalCode::build(&split, &theta_star, &s_star, 0.3, 2.0, 0).unwrap();
        assert!((single.normalizer() - single.ln_weight(0, 0).exp()).abs() < 1e-15);
    }

    #[test]
    fn pen_examples() {
        assert!((per_coordinate_constant() - 1.241_564_5).abs() < 1e-7);
        let x = Matrix::from_fn(50, 5, |i, j| if i == j { 1.0 } else { 0.1 * ((i + j) % 3) as f64 });
        let y = vec![0.0; 50];
        let split = split_data(&y, &x).unwrap();
        let x_in = Matrix::<f64>::identity(5);
        let split = SplitData { x_in, ..split };
        let s = SupportSet::new(vec![0, 1], 5).unwrap();
        let pen = pen_l0(&s, &split, 50, None).unwrap();
        let expect = 2.0 * 50f64.ln() + 2.0 * 10f64.ln() + 2.0 * per_coordinate_constant();
        assert!((pen - expect).abs() < 1e-12);
        assert!((pen - 14.912345).abs() < 1e-6);
        assert_eq!(pen_l0(&SupportSet::empty(), &split, 50, None).unwrap(), 0.0);
    }

    #[test]
    fn pen_grows_like_k_log_n() {
        let split = random_split(3, 10, 8);
        let s = SupportSet::new(vec![0, 2], 3).unwrap();
        let ratio = |n: usize| pen_l0(&s, &split, n, None).unwrap() / (2.0 * (n as f64).ln());
        assert!((ratio(1_000_000) - 1.0).abs() < 0.2);
        assert!((ratio(10_000) - 1.0).abs() > (ratio(1_000_000) - 1.0).abs());
    }

    #[test]
    fn hadamard_under_diagonal_condition() {
        for seed in 0..50 {
            let split = random_split(4, 8, seed);
            let max_diag = (0..4).map(|j| norm_sq(&split.x_in().column(j))).fold(0.0, f64::max);
            let scale = (0.999 * 4.0 / max_diag).sqrt();
            let x_in = Matrix::from_fn(4, 4, |i, j| split.x_in()[(i, j)] * scale);
            let split = SplitData { x_in, ..split };
            assert!(design_conditions(&split).in_sample_diagonal_within_p);
            for s in SupportSet::all_up_to(4, 4).into_iter().skip(1) {
                let gram = split.x_in().select_columns(s.indices()).gram();
                let ln_det = Cholesky::new(&gram).unwrap().log_det();
                assert!(ln_det <= s.len() as f64 * 4f64.ln() + 1e-12);
            }
        }
    }

    #[test]
    fn code3_at_zero() {
        let split = random_split(3, 20, 21);
        let code = ConditionalCode::build(&split, &[0.0; 3], &SupportSet::empty(), 20f64.sqrt().recip(), 3.0, 3).unwrap();
        let r = verify_code3(&split, &[0.0; 3], &code).unwrap();
        assert!(r.holds, "{} < {}", r.lhs, r.rhs);
        assert_eq!(r.argmin, vec![0.0; 3]);
    }

    #[test]
    fn code3_rhs_monotone_in_box() {
        let split = random_split(2, 12, 4);
        let theta = [0.4, -0.2];
        let narrow = ConditionalCode::build(&split, &[0.0; 2], &SupportSet::empty(), 0.3, 1.0, 2).unwrap();
        let wide = ConditionalCode::build(&split, &[0.0; 2], &SupportSet::empty(), 0.3, 3.0, 2).unwrap();
        let rn = verify_code3(&split, &theta, &narrow).unwrap();
        let rw = verify_code3(&split, &theta, &wide).unwrap();
        // M differs between the two codes but cancels between the sides
        assert!(rn.rhs - rn.lhs >= rw.rhs - rw.lhs - 1e-9);
    }

    #[test]
    fn projection_dominance_examples() {
        let split = random_split(3, 6, 13);
        let theta_star = [0.0, 1.5, 0.0];
        let s_star = SupportSet::new(vec![1], 3).unwrap();
        for s in SupportSet::all_up_to(3, 3) {
            assert!(projection_dominance_check(&split, &s, &s_star, &theta_star).unwrap().holds);
        }
        // S ⊇ S*: the first step is an equality
        let s = SupportSet::new(vec![0, 1], 3).unwrap();
        let d = projection_dominance_check(&split, &s, &s_star, &theta_star).unwrap();
        assert!((d.lhs - d.rhs).abs() < 1e-9);
    }
}
