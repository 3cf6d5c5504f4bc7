//! Instantaneous continuity-equation solves for the weighted operator
//! `A_μψ = ∇·(μ̂∗∇ψ)`.
//!
//! Multiplying `A_μ` by `π` gives `−G`, where `G` is the graph Laplacian with
//! symmetric weights `θ(μ(x), μ(y)) K(x,y) π(x)`. All solves go through
//! `(G + ππᵀ)ψ = r`, which for `Σ r = 0` returns the representative with
//! `⟨ψ, 1⟩_π = 0`.

use crate::calculus::{divergence, gradient, theta};
use crate::chain::{tol, EdgeField, MarkovChain};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::{to_f64, Real};

/// Solution of `ρ + A_μψ = h p` with the gauge `⟨ψ, 1⟩_π = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSolve<T = f64> {
    pub grad_psi: EdgeField<T>,
    pub h: T,
    pub psi: Vec<T>,
    pub residual: T,
}

/// `(A_μψ)(x) = Σ_y (ψ(y) − ψ(x)) θ(μ(x), μ(y)) K(x, y)`.
pub fn apply_a<T: Real>(mu: &[T], psi: &[T], chain: &MarkovChain<T>) -> Vec<T> {
    let n = chain.len();
    (0..n)
        .map(|x| {
            (0..n)
                .filter(|&y| y != x)
                .map(|y| (psi[y] - psi[x]) * theta(mu[x], mu[y]) * chain.k(x, y))
                .sum()
        })
        .collect()
}

/// Graph Laplacian with edge weights `w(x, y) K(x, y) π(x)`.
pub(crate) fn weighted_laplacian<T: Real>(
    chain: &MarkovChain<T>,
    mut weight: impl FnMut(usize, usize) -> T,
) -> Matrix<T> {
    let n = chain.len();
    let mut g = Matrix::zeros(n, n);
    for (x, y) in chain.edges() {
        let c = weight(x, y) * chain.conductance(x, y);
        g[(x, x)] += c;
        g[(y, y)] += c;
        g[(x, y)] -= c;
        g[(y, x)] -= c;
    }
    g
}

/// Factorization of `G + ππᵀ`.
pub(crate) struct GaugedLaplacian<T> {
    factor: Cholesky<T>,
}

impl<T: Real> GaugedLaplacian<T> {
    pub(crate) fn new(mut g: Matrix<T>, pi: &[T]) -> Result<Self> {
        let n = pi.len();
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] += pi[i] * pi[j];
            }
        }
        Cholesky::new(&g).map(|factor| Self { factor }).ok_or(Error::SingularSystem)
    }

    /// Solves `Gψ = r` for `Σ r = 0`, returning the π-mean-zero solution.
    pub(crate) fn solve(&self, r: &[T]) -> Vec<T> {
        self.factor.solve(r)
    }
}

fn require_interior<T: Real>(mu: &[T]) -> Result<()> {
    match mu.iter().position(|&m| !(m > T::zero())) {
        Some(state) => Err(Error::NotInterior { state }),
        None => Ok(()),
    }
}

fn mobility_system<T: Real>(mu: &[T], chain: &MarkovChain<T>) -> Result<GaugedLaplacian<T>> {
    require_interior(mu)?;
    let g = weighted_laplacian(chain, |x, y| theta(mu[x], mu[y]));
    GaugedLaplacian::new(g, chain.pi())
}

/// Solves `A_μψ = target` for `⟨target, 1⟩_π = 0`.
fn solve_a<T: Real>(mu: &[T], target: &[T], chain: &MarkovChain<T>) -> Result<Vec<T>> {
    let sys = mobility_system(mu, chain)?;
    // π∘A_μψ = −Gψ.
    let r: Vec<T> = target.iter().zip(chain.pi()).map(|(&t, &w)| -t * w).collect();
    let psi = sys.solve(&r);
    if psi.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(psi)
}

/// Solves `ν + A_μψ = 0`; rejects `ν` with nonzero π-mass, for which no
/// solution exists.
pub fn solve_potential<T: Real>(mu: &[T], nu: &[T], chain: &MarkovChain<T>) -> Result<Vec<T>> {
    let mass: T = nu.iter().zip(chain.pi()).map(|(&v, &w)| v * w).sum();
    let scale = nu.iter().fold(T::one(), |m, v| m.max(v.abs()));
    if mass.abs() > tol::<T>(1e-12) * scale {
        return Err(Error::Domain(format!("right-hand side has nonzero mass {}", to_f64(mass))));
    }
    let neg: Vec<T> = nu.iter().map(|&v| -v).collect();
    solve_a(mu, &neg, chain)
}

fn finish<T: Real>(mu: &[T], rho: &[T], h: T, psi: Vec<T>, chain: &MarkovChain<T>) -> TangentSolve<T> {
    let a = apply_a(mu, &psi, chain);
    let residual = (0..chain.len())
        .map(|x| (rho[x] + a[x] - h * chain.p()[x]).abs())
        .fold(T::zero(), T::max);
    TangentSolve { grad_psi: gradient(&psi, chain), h, psi, residual }
}

/// The map `ρ ↦ (∇ψ_ρ, h_ρ)` solving `ρ + A_μψ = h p` for `μ` strictly positive.
pub fn solve_tangent<T: Real>(mu: &[T], rho: &[T], chain: &MarkovChain<T>) -> Result<TangentSolve<T>> {
    let h: T = rho.iter().zip(chain.pi()).map(|(&r, &w)| r * w).sum();
    let target: Vec<T> = rho.iter().zip(chain.p()).map(|(&r, &q)| h * q - r).collect();
    let psi = solve_a(mu, &target, chain)?;
    Ok(finish(mu, rho, h, psi, chain))
}

/// Potential whose mobility-weighted gradient has the same divergence as `v`.
pub fn project_flux<T: Real>(mu: &[T], v: &EdgeField<T>, chain: &MarkovChain<T>) -> Result<TangentSolve<T>> {
    let div = divergence(v, chain);
    let psi = solve_a(mu, &div, chain)?;
    let rho: Vec<T> = div.iter().map(|&d| -d).collect();
    Ok(finish(mu, &rho, T::zero(), psi, chain))
}
