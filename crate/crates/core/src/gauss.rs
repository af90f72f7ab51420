//! Gaussian model representations, divergences, samplers and the χ² moment
//! generating function used by the regression code.
//!
//! Divergences between zero-mean Gaussians are written in terms of precision
//! matrices and `φ(θ) = −log det θ`, extended to `+∞` off the positive
//! definite cone. All determinants go through Cholesky log-determinants.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, symmetric_eigenvalues, Cholesky, Matrix};
use crate::scalar::Real;

/// Tolerance on `max |mᵢⱼ − mⱼᵢ|` (relative to `max(1, max |mᵢⱼ|)`) accepted
/// by [`SymMatrix`] constructors before symmetrizing.
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;

/// Dense symmetric `p × p` matrix. Symmetry holds exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    inner: Matrix<T>,
}

impl<T: Real> SymMatrix<T> {
    /// Builds from row-major entries, symmetrizing as `(M + Mᵀ)/2`.
    pub fn new(dim: usize, entries: Vec<T>) -> Result<Self> {
        Self::from_matrix(Matrix::from_vec(dim, dim, entries)?)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::from_matrix(Matrix::from_rows(rows)?)
    }

    pub fn from_matrix(m: Matrix<T>) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Dimension(format!("{}x{} is not square", m.rows(), m.cols())));
        }
        let p = m.rows();
        let scale = T::one().max(m.max_abs());
        let mut asym = T::zero();
        for i in 0..p {
            for j in 0..i {
                asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        if !(asym <= T::of(SYMMETRY_TOLERANCE) * scale) {
            return Err(Error::Asymmetric(asym.to_f64_lossy()));
        }
        Ok(Self::symmetrized(m))
    }

    fn symmetrized(mut m: Matrix<T>) -> Self {
        let half = T::of(0.5);
        for i in 0..m.rows() {
            for j in 0..i {
                let v = half * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix { inner: m }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> T) -> Self {
        Self::symmetrized(Matrix::from_fn(dim, dim, f))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix { inner: Matrix::identity(dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix { inner: Matrix::zeros(dim, dim) }
    }

    pub fn diag(d: &[T]) -> Self {
        Self::from_fn(d.len(), |i, j| if i == j { d[i] } else { T::zero() })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &Matrix<T> {
        &self.inner
    }

    pub fn entries(&self) -> &[T] {
        self.inner.as_slice()
    }

    pub fn cholesky(&self) -> Option<Cholesky<T>> {
        Cholesky::new(&self.inner)
    }

    pub fn is_pd(&self) -> bool {
        self.cholesky().is_some()
    }

    pub fn inverse(&self) -> Result<Self> {
        let ch = self.cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(SymMatrix { inner: ch.inverse() })
    }

    /// `Tr(A B)` for symmetric `A`, `B`.
    pub fn trace_product(&self, other: &Self) -> T {
        self.entries().iter().zip(other.entries()).map(|(&a, &b)| a * b).sum()
    }

    pub fn trace(&self) -> T {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// Sum of absolute values of all `p²` entries.
    pub fn l1_norm(&self) -> T {
        self.entries().iter().map(|x| x.abs()).sum()
    }

    pub fn max_diagonal(&self) -> T {
        (0..self.dim()).map(|i| self.get(i, i)).fold(T::neg_infinity(), T::max)
    }

    pub fn min_eigenvalue(&self) -> T {
        symmetric_eigenvalues(&self.inner).first().copied().unwrap_or(T::infinity())
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        SymMatrix {
            inner: Matrix::from_fn(self.dim(), self.dim(), |i, j| f(self.inner[(i, j)])),
        }
    }

    pub fn zip_with(&self, other: &Self, mut f: impl FnMut(T, T) -> T) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        SymMatrix {
            inner: Matrix::from_fn(self.dim(), self.dim(), |i, j| {
                f(self.inner[(i, j)], other.inner[(i, j)])
            }),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// `w·self + (1 − w)·other`.
    pub fn convex_combination(&self, other: &Self, w: T) -> Self {
        self.zip_with(other, |a, b| w * a + (T::one() - w) * b)
    }

    /// Entrywise soft threshold `sign(x)·max(|x| − t, 0)`.
    pub fn soft_threshold(&self, t: T) -> Self {
        self.map(|x| soft_threshold(x, t))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.entries()
            .iter()
            .zip(other.entries())
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

#[inline]
pub fn soft_threshold<T: Real>(x: T, t: T) -> T {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        T::zero()
    }
}

/// Zero-mean multivariate Gaussian given by its precision matrix.
#[derive(Debug, Clone)]
pub struct GaussGraphModel<T> {
    precision: SymMatrix<T>,
    covariance: SymMatrix<T>,
    cov_factor: Cholesky<T>,
}

impl<T: Real> GaussGraphModel<T> {
    pub fn new(precision: SymMatrix<T>) -> Result<Self> {
        let covariance = precision.inverse()?;
        let cov_factor = covariance.cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(GaussGraphModel { precision, covariance, cov_factor })
    }

    pub fn precision(&self) -> &SymMatrix<T> {
        &self.precision
    }

    pub fn covariance(&self) -> &SymMatrix<T> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.precision.dim()
    }
}

/// Fixed-design Gaussian linear model `y = Xθ + σε`.
#[derive(Debug, Clone)]
pub struct RegressionModel<T> {
    design: Matrix<T>,
    coeffs: Vec<T>,
    noise_sd: T,
}

impl<T: Real> RegressionModel<T> {
    pub fn new(design: Matrix<T>, coeffs: Vec<T>, noise_sd: T) -> Result<Self> {
        if design.cols() != coeffs.len() {
            return Err(Error::Dimension(format!(
                "design has {} columns but {} coefficients",
                design.cols(),
                coeffs.len()
            )));
        }
        if !(noise_sd > T::zero()) {
            return Err(Error::InvalidArgument("noise_sd must be positive".into()));
        }
        Ok(RegressionModel { design, coeffs, noise_sd })
    }

    pub fn design(&self) -> &Matrix<T> {
        &self.design
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn noise_sd(&self) -> T {
        self.noise_sd
    }

    pub fn mean(&self) -> Vec<T> {
        self.design.matvec(&self.coeffs).expect("dimensions checked on construction")
    }

    pub fn sample_response<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.mean()
            .into_iter()
            .map(|m| m + self.noise_sd * T::of(rng.sample::<f64, _>(StandardNormal)))
            .collect()
    }
}

/// `n` draws of a `p`-vector with their cached second-moment matrix
/// `S = (1/n) Σ xᵢᵀxᵢ`.
#[derive(Debug, Clone)]
pub struct GaussSampleSet<T> {
    rows: Matrix<T>,
    sample_cov: SymMatrix<T>,
}

impl<T: Real> GaussSampleSet<T> {
    pub fn from_rows(rows: Matrix<T>) -> Result<Self> {
        if rows.rows() == 0 {
            return Err(Error::InvalidArgument("sample set needs at least one row".into()));
        }
        let n = T::of_usize(rows.rows());
        let g = rows.gram();
        let sample_cov = SymMatrix::from_fn(g.rows(), |i, j| g[(i, j)] / n);
        Ok(GaussSampleSet { rows, sample_cov })
    }

    pub fn n(&self) -> usize {
        self.rows.rows()
    }

    pub fn p(&self) -> usize {
        self.rows.cols()
    }

    pub fn rows(&self) -> &Matrix<T> {
        &self.rows
    }

    pub fn sample_cov(&self) -> &SymMatrix<T> {
        &self.sample_cov
    }
}

/// `φ(m) = −log det m`, or `+∞` when `m` is not positive definite.
pub fn phi<T: Real>(m: &SymMatrix<T>) -> T {
    match m.cholesky() {
        Some(ch) => -ch.log_det(),
        None => T::infinity(),
    }
}

/// `B(θ₁, θ₂) = ½[φ(θ₁) + φ(θ₂)] − φ((θ₁ + θ₂)/2)`.
///
/// This is `−2 log ∫ √(p₁ p₂)`, i.e. the order-½ Rényi divergence, which is
/// twice the textbook Bhattacharyya distance `−log ∫ √(p₁ p₂)`.
pub fn bhat_ggm<T: Real>(t1: &SymMatrix<T>, t2: &SymMatrix<T>) -> T {
    let (a, b) = (phi(t1), phi(t2));
    if a.is_infinite() || b.is_infinite() {
        return T::infinity();
    }
    let mid = phi(&t1.convex_combination(t2, T::of(0.5)));
    // guard tiny negative round-off
    (T::of(0.5) * (a + b) - mid).max(T::zero())
}

/// `KL(N(0, Σ*) ‖ N(0, θ⁻¹))` with `Σ* = t_star⁻¹`:
/// `½[Tr(θΣ*) − p − log det(θΣ*)]`.
pub fn kl_ggm<T: Real>(t_star: &SymMatrix<T>, t: &SymMatrix<T>) -> T {
    let (Some(ch_star), Some(ch)) = (t_star.cholesky(), t.cholesky()) else {
        return T::infinity();
    };
    let sigma_star = SymMatrix { inner: ch_star.inverse() };
    let p = T::of_usize(t.dim());
    let ln_det = ch.log_det() - ch_star.log_det();
    (T::of(0.5) * (t.trace_product(&sigma_star) - p - ln_det)).max(T::zero())
}

/// Total Bhattacharyya divergence `‖X(θ₁ − θ₂)‖² / (8σ²)` between two
/// fixed-design regression laws with common noise level `σ`.
pub fn bhat_regression_total<T: Real>(x: &Matrix<T>, t1: &[T], t2: &[T], sigma: T) -> Result<T> {
    if t1.len() != t2.len() {
        return Err(Error::Dimension("coefficient vectors differ in length".into()));
    }
    let diff: Vec<T> = t1.iter().zip(t2).map(|(&a, &b)| a - b).collect();
    let shift = x.matvec(&diff)?;
    Ok(norm_sq(&shift) / (T::of(8.0) * sigma * sigma))
}

/// Order-α divergence on the same scale as [`bhat_ggm`]:
///
/// `R_α(θ₁, θ₂) = [αφ(θ₁) + (1−α)φ(θ₂) − φ(αθ₁ + (1−α)θ₂)] / (1 − α)`.
///
/// The bracket is twice the Chernoff exponent `−log ∫ p₁^α p₂^{1−α}`, so
/// `R_α` is twice the standard Rényi divergence and `R_{1/2} = 2·bhat_ggm`.
/// The factor `1/(1−α)` matches the penalty multiplier `1/α` at `α = ½`.
pub fn renyi_divergence_ggm<T: Real>(t1: &SymMatrix<T>, t2: &SymMatrix<T>, alpha: T) -> Result<T> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
    }
    let (a, b) = (phi(t1), phi(t2));
    let c = phi(&t1.convex_combination(t2, alpha));
    if a.is_infinite() || b.is_infinite() || c.is_infinite() {
        return Ok(T::infinity());
    }
    let exponent = alpha * a + (T::one() - alpha) * b - c;
    Ok((exponent / (T::one() - alpha)).max(T::zero()))
}

/// Negative average log-likelihood of a zero-mean Gaussian with precision
/// `theta` given the second-moment matrix `S`:
/// `½Tr(Sθ) + ½φ(θ) + (p/2) log 2π`.
pub fn ggm_neg_avg_loglik<T: Real>(theta: &SymMatrix<T>, sample_cov: &SymMatrix<T>) -> T {
    let f = phi(theta);
    if f.is_infinite() {
        return T::infinity();
    }
    let half = T::of(0.5);
    half * sample_cov.trace_product(theta) + half * f + half * T::of_usize(theta.dim()) * (T::of(2.0) * T::pi()).ln()
}

/// `n` i.i.d. draws from `N(0, θ⁻¹)` as `x = C z` with `CCᵀ = θ⁻¹`.
pub fn sample_ggm<T: Real, R: Rng + ?Sized>(
    model: &GaussGraphModel<T>,
    n: usize,
    rng: &mut R,
) -> Result<GaussSampleSet<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let p = model.dim();
    let c = model.cov_factor.lower();
    let mut data = Vec::with_capacity(n * p);
    let mut z = vec![T::zero(); p];
    for _ in 0..n {
        for zi in z.iter_mut() {
            *zi = T::of(rng.sample::<f64, _>(StandardNormal));
        }
        for i in 0..p {
            data.push((0..=i).map(|k| c[(i, k)] * z[k]).sum());
        }
    }
    GaussSampleSet::from_rows(Matrix::from_vec(n, p, data)?)
}

/// `E exp(χ²_d / 4) = (1 − 2·¼)^{−d/2} = (√2)^d`.
pub fn chi2_mgf_quarter<T: Real>(d: usize) -> T {
    T::of(2.0).powf(T::of_usize(d) / T::of(2.0))
}
