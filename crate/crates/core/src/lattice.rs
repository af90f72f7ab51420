//! The δ integer lattice as a countable model class, with the subprobability
//! that puts mass `(1/2)^{k+1}` on shell `k` (points of ℓ1 norm `kδ`) and
//! spreads it as `(2c)^{-k}` per point, `c` being the code dimension.
//!
//! Two shapes are supported. `Vector(d)` is `δℤ^d`. `Symmetric(p)` is the set
//! of symmetric `p × p` matrices with entries in `δℤ`; its ℓ1 norm counts all
//! `p²` entries, so an off-diagonal step moves two coordinates at once.

use crate::error::{Error, Result};
use crate::gauss::SymMatrix;
use crate::scalar::{ln_binomial, Real};

/// Largest dimension for which cube vertices are enumerated.
pub const MAX_BOX_DIM: usize = 20;

/// Default shell cutoff for truncated Kraft sums; the tail is `2^{-41}`.
pub const DEFAULT_K_MAX: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Symmetric(usize),
}

impl Shape {
    /// Number of stored coordinates (`p²` for matrices).
    pub fn ambient_dim(self) -> usize {
        match self {
            Shape::Vector(d) => d,
            Shape::Symmetric(p) => p * p,
        }
    }

    /// Number of free coordinates (`p(p+1)/2` for matrices).
    pub fn free_dim(self) -> usize {
        match self {
            Shape::Vector(d) => d,
            Shape::Symmetric(p) => p * (p + 1) / 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec<T> {
    delta: T,
    shape: Shape,
    code_dim: usize,
}

impl<T: Real> LatticeSpec<T> {
    /// Vector lattice `δℤ^d` with code dimension `d`.
    pub fn vector(delta: T, dim: usize) -> Result<Self> {
        Self::new(delta, Shape::Vector(dim), dim)
    }

    /// Symmetric-matrix lattice with code dimension equal to the side `p`,
    /// so the penalty reads `(2/δ)‖θ̃‖₁ log(4p) + 2 log 2`.
    pub fn symmetric(delta: T, side: usize) -> Result<Self> {
        Self::new(delta, Shape::Symmetric(side), side)
    }

    pub fn new(delta: T, shape: Shape, code_dim: usize) -> Result<Self> {
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::InvalidArgument("lattice width must be positive".into()));
        }
        if shape.ambient_dim() == 0 || code_dim == 0 {
            return Err(Error::InvalidArgument("lattice dimension must be at least 1".into()));
        }
        Ok(LatticeSpec { delta, shape, code_dim })
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.ambient_dim()
    }

    /// The `c` in `log(4c)`; each shell-`k` point gets `(2c)^{-k}`.
    pub fn code_dim(&self) -> usize {
        self.code_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticePoint<T> {
    coords: Vec<i64>,
    spec: LatticeSpec<T>,
}

impl<T: Real> LatticePoint<T> {
    pub fn new(coords: Vec<i64>, spec: LatticeSpec<T>) -> Result<Self> {
        if coords.len() != spec.dim() {
            return Err(Error::Dimension(format!(
                "lattice point has {} coordinates, spec expects {}",
                coords.len(),
                spec.dim()
            )));
        }
        if let Shape::Symmetric(p) = spec.shape {
            for i in 0..p {
                for j in 0..i {
                    if coords[i * p + j] != coords[j * p + i] {
                        return Err(Error::Asymmetric(1.0));
                    }
                }
            }
        }
        Ok(LatticePoint { coords, spec })
    }

    pub fn origin(spec: LatticeSpec<T>) -> Self {
        LatticePoint { coords: vec![0; spec.dim()], spec }
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn spec(&self) -> &LatticeSpec<T> {
        &self.spec
    }

    /// Shell index `k = Σ|coordsᵢ|`, i.e. `‖value‖₁ / δ`.
    pub fn shell(&self) -> u64 {
        self.coords.iter().map(|c| c.unsigned_abs()).sum()
    }

    pub fn value(&self) -> Vec<T> {
        self.coords.iter().map(|&c| T::of(c as f64) * self.spec.delta).collect()
    }

    pub fn l1_norm(&self) -> T {
        T::of(self.shell() as f64) * self.spec.delta
    }

    /// The represented symmetric matrix; `None` for vector lattices.
    pub fn as_sym_matrix(&self) -> Option<SymMatrix<T>> {
        match self.spec.shape {
            Shape::Symmetric(p) => {
                let v = self.value();
                Some(SymMatrix::from_fn(p, |i, j| v[i * p + j]))
            }
            Shape::Vector(_) => None,
        }
    }
}

/// Number of integer vectors in `ℤ^d` with `Σ|zᵢ| = k`, by enumeration.
pub fn shell_count_exact(dim: usize, k: u32) -> Result<u64> {
    if dim > 4 || k > 12 {
        return Err(Error::Regime(format!(
            "enumeration needs d ≤ 4 and k ≤ 12 (got d = {dim}, k = {k}); use shell_count_bound"
        )));
    }
    fn walk(remaining_dims: usize, remaining: i64) -> u64 {
        if remaining_dims == 0 {
            return u64::from(remaining == 0);
        }
        (-remaining..=remaining).map(|z| walk(remaining_dims - 1, remaining - z.abs())).sum()
    }
    Ok(walk(dim, i64::from(k)))
}

/// The counting bound `(2d)^k` on the size of shell `k`.
pub fn shell_count_bound(dim: usize, k: u32) -> f64 {
    (2.0 * dim as f64).powi(k as i32)
}

/// Size of shell `k` for either shape, by dynamic programming over free
/// coordinates (weight 1 for vector and diagonal entries, 2 for off-diagonal
/// pairs).
pub fn shell_count(shape: Shape, k: usize) -> f64 {
    let (unit, double) = match shape {
        Shape::Vector(d) => (d, 0),
        Shape::Symmetric(p) => (p, p * (p - 1) / 2),
    };
    // ways[m] = number of assignments with weighted ℓ1 norm m
    let mut ways = vec![0.0f64; k + 1];
    ways[0] = 1.0;
    let mut push = |weight: usize| {
        let mut next = vec![0.0f64; k + 1];
        for (m, &w) in ways.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            next[m] += w;
            let mut step = weight;
            while m + step <= k {
                next[m + step] += 2.0 * w;
                step += weight;
            }
        }
        ways = next;
    };
    for _ in 0..unit {
        push(1);
    }
    for _ in 0..double {
        push(2);
    }
    ways[k]
}

/// `log` of the mass `(1/2)^{k+1}(2c)^{-k}` assigned to a shell-`k` point.
pub fn ln_subprob_mass_shell(k: u64, code_dim: usize) -> f64 {
    let k = k as f64;
    -(k + 1.0) * std::f64::consts::LN_2 - k * (2.0 * code_dim as f64).ln()
}

pub fn subprob_mass<T: Real>(pt: &LatticePoint<T>) -> T {
    T::of(ln_subprob_mass_shell(pt.shell(), pt.spec.code_dim).exp())
}

/// ℓ1 lattice penalty `(2/δ)‖θ̃‖₁ log(4c) + 2 log 2` in nats. Equals
/// `−2 log subprob_mass(pt)`.
pub fn pen_l1_lattice<T: Real>(pt: &LatticePoint<T>) -> T {
    let two = T::of(2.0);
    let ln4c = T::of(4.0 * pt.spec.code_dim as f64).ln();
    two / pt.spec.delta * pt.l1_norm() * ln4c + two * T::ln_2()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KraftSum {
    pub partial_sum: f64,
    pub tail_bound: f64,
}

impl KraftSum {
    pub fn total(&self) -> f64 {
        self.partial_sum + self.tail_bound
    }
}

/// Lattice mass over shells `0..=k_max` plus a bound on the rest.
///
/// For vector lattices with `c = d` every shell carries at most
/// `(1/2)^{k+1}`, so the tail is bounded by `2^{-(k_max+1)}`. For any other
/// shape/code-dimension pair that per-shell bound is not guaranteed, and the
/// tail is instead taken from the closed-form generating function
/// `½ ∏ᵢ (1 + x^{wᵢ})/(1 − x^{wᵢ})` at `x = 1/(4c)`.
pub fn kraft_sum_truncated<T: Real>(spec: &LatticeSpec<T>, k_max: usize) -> KraftSum {
    let c = spec.code_dim;
    let partial_sum: f64 = (0..=k_max)
        .map(|k| shell_count(spec.shape, k) * ln_subprob_mass_shell(k as u64, c).exp())
        .sum();
    let tail_bound = match spec.shape {
        Shape::Vector(d) if d == c => 0.5f64.powi(k_max as i32 + 1),
        _ => (0.5 * generating_function(spec.shape, 1.0 / (4.0 * c as f64)) - partial_sum).max(0.0),
    };
    KraftSum { partial_sum, tail_bound }
}

/// `Σ_k N_k x^k` in closed form.
pub fn generating_function(shape: Shape, x: f64) -> f64 {
    let f = |w: i32| (1.0 + x.powi(w)) / (1.0 - x.powi(w));
    match shape {
        Shape::Vector(d) => f(1).powi(d as i32),
        Shape::Symmetric(p) => f(1).powi(p as i32) * f(2).powi((p * (p - 1) / 2) as i32),
    }
}

/// Vertices of the lattice cell enclosing `theta` (a single point per
/// coordinate that already lies on the grid).
pub fn nearest_lattice_box<T: Real>(theta: &[T], spec: &LatticeSpec<T>) -> Result<Vec<LatticePoint<T>>> {
    if spec.shape != Shape::Vector(theta.len()) {
        return Err(Error::Dimension("theta does not match the vector lattice".into()));
    }
    if theta.len() > MAX_BOX_DIM {
        return Err(Error::Regime(format!("{} coordinates exceed the vertex limit {MAX_BOX_DIM}", theta.len())));
    }
    let choices = theta.iter().map(|&t| coordinate_choices(t, spec.delta)).collect::<Result<Vec<_>>>()?;
    Ok(cartesian(&choices).into_iter().map(|coords| LatticePoint { coords, spec: *spec }).collect())
}

/// Vertices of the cell enclosing a symmetric matrix, moving `(i,j)` and
/// `(j,i)` together.
pub fn enclosing_symmetric_vertices<T: Real>(
    theta: &SymMatrix<T>,
    spec: &LatticeSpec<T>,
) -> Result<Vec<LatticePoint<T>>> {
    let p = theta.dim();
    if spec.shape != Shape::Symmetric(p) {
        return Err(Error::Dimension("theta does not match the symmetric lattice".into()));
    }
    if spec.shape.free_dim() > MAX_BOX_DIM {
        return Err(Error::Regime(format!("{} free coordinates exceed the vertex limit", spec.shape.free_dim())));
    }
    let upper: Vec<(usize, usize)> = (0..p).flat_map(|i| (i..p).map(move |j| (i, j))).collect();
    let choices = upper
        .iter()
        .map(|&(i, j)| coordinate_choices(theta.get(i, j), spec.delta))
        .collect::<Result<Vec<_>>>()?;
    Ok(cartesian(&choices)
        .into_iter()
        .map(|free| {
            let mut coords = vec![0i64; p * p];
            for (&(i, j), &c) in upper.iter().zip(&free) {
                coords[i * p + j] = c;
                coords[j * p + i] = c;
            }
            LatticePoint { coords, spec: *spec }
        })
        .collect())
}

fn coordinate_choices<T: Real>(t: T, delta: T) -> Result<Vec<i64>> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument("theta must be finite".into()));
    }
    let r = (t / delta).to_f64_lossy();
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * r.abs().max(1.0) {
        return Ok(vec![nearest as i64]);
    }
    let lo = r.floor() as i64;
    Ok(vec![lo, lo + 1])
}

fn cartesian(choices: &[Vec<i64>]) -> Vec<Vec<i64>> {
    choices.iter().fold(vec![Vec::new()], |acc, opts| {
        acc.iter()
            .flat_map(|prefix| {
                opts.iter().map(move |&c| {
                    let mut v = prefix.clone();
                    v.push(c);
                    v
                })
            })
            .collect()
    })
}

/// `Σ_{j=1}^{min(d,k)} 2^j C(d,j) C(k−1,j−1)`: closed-form shell size of
/// `ℤ^d`, exposed for cross-checking the enumeration.
pub fn shell_count_closed_form(dim: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    (1..=dim.min(k))
        .map(|j| (j as f64 * std::f64::consts::LN_2 + ln_binomial(dim, j) + ln_binomial(k - 1, j - 1)).exp())
        .sum::<f64>()
        .round()
}
