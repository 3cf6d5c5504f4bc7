//! Hamilton–Jacobi subsolutions as dual certificates for `½W²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::calculus::{edge_norm_sq, gradient, pair_node, theta_d1};
use crate::chain::{EdgeField, MarkovChain};
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};
use crate::transport::{distance_w, SolveOptions, SolveReport};

/// Feasibility tolerance on the HJ surplus.
pub const FEAS_TOL: f64 = 1e-8;
/// Optimality bound at which a surplus maximization stops.
const SURPLUS_TOL: f64 = 1e-10;
const SURPLUS_SEED: u64 = 0;

/// Piecewise-linear-in-time potential on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate<T = f64> {
    pub grid: Vec<T>,
    pub phi: Vec<Vec<T>>,
    /// Largest HJ surplus over all intervals; `≤ FEAS_TOL` means feasible.
    pub feasibility_margin: T,
    pub dual_value: T,
}

impl<T: Real> DualCertificate<T> {
    pub fn intervals(&self) -> usize {
        self.phi.len() - 1
    }

    pub fn is_feasible(&self) -> bool {
        self.feasibility_margin <= lit(FEAS_TOL)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport<T = f64> {
    /// `½ W²` from the convex solver.
    pub primal: T,
    pub dual: T,
    pub relative_gap: T,
    pub feasibility_margin: T,
}

/// `g(μ) = ⟨φ̇, μ⟩_π + (1/2b²)‖∇φ‖²_μ`.
pub fn hj_value<T: Real>(phi_dot: &[T], grad_phi: &EdgeField<T>, mu: &[T], chain: &MarkovChain<T>) -> T {
    let b2 = chain.b() * chain.b();
    pair_node(phi_dot, mu, chain) + edge_norm_sq(grad_phi, mu, chain) / (lit::<T>(2.0) * b2)
}

/// Gradient of `g` in the coordinates `w = π∘μ`; entries may be `+∞` at the boundary.
fn hj_gradient_w<T: Real>(phi_dot: &[T], grad_phi: &EdgeField<T>, mu: &[T], chain: &MarkovChain<T>) -> Vec<T> {
    let n = chain.len();
    let inv = T::one() / (lit::<T>(2.0) * chain.b() * chain.b());
    (0..n)
        .map(|x| {
            let mut s = T::zero();
            for y in 0..n {
                let k = chain.k(x, y);
                let g = grad_phi.get(x, y);
                if y == x || k == T::zero() || g == T::zero() {
                    continue;
                }
                let d = theta_d1(mu[x], mu[y]);
                // θ(·, 0) vanishes identically.
                if !d.is_nan() {
                    s += g * g * k * d;
                }
            }
            phi_dot[x] + inv * s
        })
        .collect()
}

/// Pairwise ascent on the standard simplex: mass moves from the coordinate
/// with the smallest partial derivative to the one with the largest, with an
/// exact line search on the (monotone) directional derivative. Concavity gives
/// the stopping bound `g* − g(w) ≤ max_k ∂_k g − ⟨∇g, w⟩`.
/// Returns the attained value and whether the bound certified it.
fn ascend<T: Real>(phi_dot: &[T], grad_phi: &EdgeField<T>, start: Vec<T>, chain: &MarkovChain<T>) -> (T, bool) {
    let n = chain.len();
    let pi = chain.pi();
    let to_mu = |w: &[T]| -> Vec<T> { w.iter().zip(pi).map(|(&a, &b)| a / b).collect() };
    let grad = |w: &[T]| hj_gradient_w(phi_dot, grad_phi, &to_mu(w), chain);
    let mut w = start;
    let mut certified = false;
    for _ in 0..2000 {
        let d = grad(&w);
        let i = (0..n).fold(0, |b, k| if d[k] > d[b] { k } else { b });
        let Some(j) = (0..n).filter(|&k| w[k] > T::zero() && k != i).reduce(|b, k| if d[k] < d[b] { k } else { b }) else {
            // All mass sits on the steepest vertex.
            certified = true;
            break;
        };
        let inner: T = (0..n).filter(|&k| w[k] > T::zero()).map(|k| w[k] * d[k]).sum();
        if d[i] - inner <= lit::<T>(SURPLUS_TOL) {
            certified = true;
            break;
        }
        let slope = |t: T| -> T {
            let mut v = w.clone();
            v[i] += t;
            v[j] = (v[j] - t).max(T::zero());
            let g = grad(&v);
            g[i] - g[j]
        };
        let cap = w[j];
        let t = if slope(cap) >= T::zero() {
            cap
        } else {
            let (mut lo, mut hi) = (T::zero(), cap);
            for _ in 0..60 {
                let mid = lit::<T>(0.5) * (lo + hi);
                if slope(mid) >= T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        if t <= T::zero() {
            break;
        }
        w[i] += t;
        w[j] = (w[j] - t).max(T::zero());
    }
    (hj_value(phi_dot, grad_phi, &to_mu(&w), chain), certified)
}

/// `sup` of `g` over `{μ ≥ 0, ⟨μ, 1⟩_π = 1}` by multi-start pairwise ascent.
pub fn hj_surplus<T: Real>(phi_dot: &[T], grad_phi: &EdgeField<T>, chain: &MarkovChain<T>) -> T {
    let n = chain.len();
    let mut starts: Vec<Vec<T>> = Vec::with_capacity(n + 9);
    starts.push(vec![T::one() / from_usize(n); n]);
    for x in 0..n {
        let mut e = vec![T::zero(); n];
        e[x] = T::one();
        starts.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SURPLUS_SEED);
    for _ in 0..8 {
        let raw: Vec<f64> = (0..n).map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0).ln()).collect();
        let total: f64 = raw.iter().sum();
        starts.push(raw.iter().map(|&r| lit(r / total)).collect());
    }
    // A certified run is within the tolerance of the global maximum, so the
    // remaining restarts are skipped.
    let mut best = T::neg_infinity();
    for s in starts {
        let (v, certified) = ascend(phi_dot, grad_phi, s, chain);
        best = best.max(v);
        if certified {
            break;
        }
    }
    best
}

/// Sufficient condition `φ̇(x) + (1/4b²) Σ_y ∇φ(x,y)² K(x,y) ≤ 0` for all `x`,
/// from `θ(u,v) ≤ (u+v)/2` and detailed balance.
pub fn hj_sufficient<T: Real>(phi_dot: &[T], grad_phi: &EdgeField<T>, chain: &MarkovChain<T>) -> bool {
    let n = chain.len();
    let inv = T::one() / (lit::<T>(4.0) * chain.b() * chain.b());
    (0..n).all(|x| {
        let s: T = (0..n).filter(|&y| y != x).map(|y| grad_phi.get(x, y) * grad_phi.get(x, y) * chain.k(x, y)).sum();
        phi_dot[x] + inv * s <= T::zero()
    })
}

/// Per-interval surplus; the kinetic term is convex in time, so both interval ends suffice.
fn interval_margins<T: Real>(phi: &[Vec<T>], chain: &MarkovChain<T>) -> Vec<T> {
    let nf = from_usize::<T>(phi.len() - 1);
    (0..phi.len() - 1)
        .map(|k| {
            let dot: Vec<T> = phi[k + 1].iter().zip(&phi[k]).map(|(&a, &b)| (a - b) * nf).collect();
            let g0 = gradient(&phi[k], chain);
            let g1 = gradient(&phi[k + 1], chain);
            hj_surplus(&dot, &g0, chain).max(hj_surplus(&dot, &g1, chain))
        })
        .collect()
}

pub fn feasibility_margin<T: Real>(phi: &[Vec<T>], chain: &MarkovChain<T>) -> T {
    interval_margins(phi, chain).into_iter().fold(T::neg_infinity(), T::max)
}

/// `⟨φ_M, μ1⟩_π − ⟨φ_0, μ0⟩_π − (1/2a²) Δt Σ_k ⟨φ̄_k, p⟩_π²`.
pub fn dual_value<T: Real>(phi: &[Vec<T>], mu0: &[T], mu1: &[T], chain: &MarkovChain<T>) -> T {
    let m = phi.len() - 1;
    let dt = T::one() / from_usize(m);
    let half = lit::<T>(0.5);
    let a2 = chain.a() * chain.a();
    let mut penalty = T::zero();
    for k in 0..m {
        let mid: Vec<T> = phi[k].iter().zip(&phi[k + 1]).map(|(&a, &b)| half * (a + b)).collect();
        let s = pair_node(&mid, chain.p(), chain);
        penalty += s * s;
    }
    pair_node(&phi[m], mu1, chain) - pair_node(&phi[0], mu0, chain) - penalty * dt / (lit::<T>(2.0) * a2)
}

fn certificate<T: Real>(phi: Vec<Vec<T>>, margin: T, mu0: &[T], mu1: &[T], chain: &MarkovChain<T>) -> DualCertificate<T> {
    let m = phi.len() - 1;
    let grid = (0..=m).map(|k| from_usize::<T>(k) / from_usize::<T>(m)).collect();
    let dual_value = dual_value(&phi, mu0, mu1, chain);
    DualCertificate { grid, phi, feasibility_margin: margin, dual_value }
}

/// Builds a certificate from the potentials of a primal minimizer.
///
/// Interval potentials `φ_k = b²ψ_k + c_k 1` with `⟨φ_k, p⟩_π = a²h_k` are
/// placed at interval midpoints and averaged onto nodes. Positive surplus is
/// removed by subtracting its running time integral as a constant; if that
/// does not suffice, `φ` is shrunk towards zero by bisection.
pub fn certificate_from_primal<T: Real>(report: &SolveReport<T>, chain: &MarkovChain<T>) -> Result<DualCertificate<T>> {
    let traj = &report.trajectory;
    let psi = traj.psi.as_ref().ok_or(Error::NoPotentials)?;
    let n_int = traj.intervals();
    for mu in &traj.mu[1..n_int] {
        if let Some(state) = mu.iter().position(|&v| !(v > T::zero())) {
            return Err(Error::NotInterior { state });
        }
    }
    let (mu0, mu1) = (&traj.mu[0], &traj.mu[n_int]);
    let (a2, b2) = (chain.a() * chain.a(), chain.b() * chain.b());
    let mids: Vec<Vec<T>> = (0..n_int)
        .map(|k| {
            let c = a2 * traj.h[k] - b2 * pair_node(&psi[k], chain.p(), chain);
            psi[k].iter().map(|&v| b2 * v + c).collect()
        })
        .collect();
    let half = lit::<T>(0.5);
    let mut phi: Vec<Vec<T>> = Vec::with_capacity(n_int + 1);
    if n_int == 1 {
        phi.push(mids[0].clone());
        phi.push(mids[0].clone());
    } else {
        let extrapolate = |a: &[T], b: &[T]| -> Vec<T> { a.iter().zip(b).map(|(&x, &y)| x + half * (x - y)).collect() };
        phi.push(extrapolate(&mids[0], &mids[1]));
        for k in 1..n_int {
            phi.push(mids[k - 1].iter().zip(&mids[k]).map(|(&x, &y)| half * (x + y)).collect());
        }
        phi.push(extrapolate(&mids[n_int - 1], &mids[n_int - 2]));
    }

    let tol = lit::<T>(FEAS_TOL);
    let margins = interval_margins(&phi, chain);
    let margin = margins.iter().copied().fold(T::neg_infinity(), T::max);
    if margin <= tol {
        return Ok(certificate(phi, margin, mu0, mu1, chain));
    }

    let dt = T::one() / from_usize(n_int);
    let guard = lit::<T>(1e-3) * tol;
    let mut tilted = phi.clone();
    let mut acc = T::zero();
    for k in 0..n_int {
        acc += (margins[k] + guard).max(T::zero()) * dt;
        for v in tilted[k + 1].iter_mut() {
            *v -= acc;
        }
    }
    let margin = feasibility_margin(&tilted, chain);
    if margin <= tol {
        return Ok(certificate(tilted, margin, mu0, mu1, chain));
    }

    let scaled = |s: T| -> Vec<Vec<T>> { tilted.iter().map(|v| v.iter().map(|&x| (T::one() - s) * x).collect()).collect() };
    let (mut lo, mut hi) = (T::zero(), T::one());
    for _ in 0..20 {
        let mid = half * (lo + hi);
        if feasibility_margin(&scaled(mid), chain) <= tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let phi = scaled(hi);
    let margin = feasibility_margin(&phi, chain);
    Ok(certificate(phi, margin, mu0, mu1, chain))
}

/// Primal `½W²`, the dual value of the constructed certificate and their relative gap.
pub fn duality_gap<T: Real>(
    mu0: &[T],
    mu1: &[T],
    chain: &MarkovChain<T>,
    steps: usize,
    opts: &SolveOptions<T>,
) -> Result<(GapReport<T>, DualCertificate<T>, SolveReport<T>)> {
    let report = distance_w(mu0, mu1, chain, steps, opts)?;
    let cert = certificate_from_primal(&report, chain)?;
    let primal = lit::<T>(0.5) * report.value;
    let relative_gap = if primal > T::zero() { (primal - cert.dual_value) / primal } else { cert.dual_value.abs() };
    let gap = GapReport { primal, dual: cert.dual_value, relative_gap, feasibility_margin: cert.feasibility_margin };
    Ok((gap, cert, report))
}
