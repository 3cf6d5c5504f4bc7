//! Distance computation by convex minimization of the discrete action.
//!
//! For fixed node measures the optimal interval flux and source are explicit
//! (see [`objective`]), so the solver works over interior node measures only.
//! The reduced objective is convex; it is minimized by damped Newton steps on
//! a block-tridiagonal Hessian, with a δ-smoothed mobility and a vanishing
//! log barrier keeping iterates strictly positive. The last stage uses the
//! true mobility.

mod objective;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::action::{action_quad, speed_profile, Trajectory, SOLVER_CE_TOL};
use crate::calculus::{gradient, theta};
use crate::chain::{total_mass, EdgeField, MarkovChain};
use crate::error::{Error, Result};
use crate::linalg::{block_tridiagonal_solve, Matrix};
use crate::scalar::{from_usize, lit, to_f64, Real};
use objective::{interval_energy, IntervalEval};

/// Which distance a report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Metric {
    W,
    ME,
    D,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "W" | "w" => Ok(Metric::W),
            "ME" | "me" => Ok(Metric::ME),
            "D" | "d" => Ok(Metric::D),
            other => Err(Error::Domain(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions<T = f64> {
    /// Mobility smoothing levels, applied in order before a final unsmoothed stage.
    pub delta_schedule: Vec<T>,
    /// Bound on the relative Newton decrement at the final stage.
    pub opt_tol: T,
    /// Newton iteration cap per stage.
    pub max_iterations: usize,
    pub seed: u64,
    /// Start from a seeded random interior path instead of the default one.
    pub random_init: bool,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            delta_schedule: [1e-2, 1e-3, 1e-4, 1e-6].iter().map(|&d| lit(d)).collect(),
            opt_tol: lit(1e-7),
            max_iterations: 200,
            seed: 0,
            random_init: false,
        }
    }
}

/// Endpoint shifts along `p` chosen by the shift–transport metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Shift<T = f64> {
    pub h0: T,
    pub h1: T,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T = f64> {
    pub metric: Metric,
    /// Squared distance.
    pub value: T,
    pub distance: T,
    /// Minimizing path; for `D` this is the mass-conserving leg between the shifted endpoints.
    pub trajectory: Trajectory<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Final relative Newton decrement.
    pub residual: T,
    /// `max/min − 1` of the per-interval speed.
    pub speed_variation: T,
    pub min_interior_mass: T,
    pub shift: Option<Shift<T>>,
}

/// Positivity diagnostics of a minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Nonlocality<T = f64> {
    pub min_interior_mass: T,
    pub min_abs_source: T,
    /// The endpoints coincide, so nothing is asserted.
    pub vacuous: bool,
}

pub fn distance_w<T: Real>(
    mu0: &[T],
    mu1: &[T],
    chain: &MarkovChain<T>,
    steps: usize,
    opts: &SolveOptions<T>,
) -> Result<SolveReport<T>> {
    check_endpoints(mu0, mu1, chain, steps)?;
    Problem::new(chain, mu0, mu1, steps, false).solve(opts, Metric::W)
}

pub fn distance_me<T: Real>(
    mu0: &[T],
    mu1: &[T],
    chain: &MarkovChain<T>,
    steps: usize,
    opts: &SolveOptions<T>,
) -> Result<SolveReport<T>> {
    check_endpoints(mu0, mu1, chain, steps)?;
    let (m0, m1) = (total_mass(mu0, chain), total_mass(mu1, chain));
    if (m0 - m1).abs() > lit::<T>(1e-10) * T::one().max(m0.abs()) {
        return Err(Error::MassMismatch { m0: to_f64(m0), m1: to_f64(m1) });
    }
    Problem::new(chain, mu0, mu1, steps, true).solve(opts, Metric::ME)
}

/// Shift–transport metric: a one-dimensional search over the shift `H0`
/// with the conservative distance between the shifted endpoints.
pub fn distance_d<T: Real>(
    mu0: &[T],
    mu1: &[T],
    chain: &MarkovChain<T>,
    steps: usize,
    opts: &SolveOptions<T>,
) -> Result<SolveReport<T>> {
    check_endpoints(mu0, mu1, chain, steps)?;
    let p = chain.p();
    let a2 = chain.a() * chain.a();
    let (m0, m1) = (total_mass(mu0, chain), total_mass(mu1, chain));
    let gap = m0 - m1;
    let min_ratio = |mu: &[T]| mu.iter().zip(p).map(|(&m, &q)| m / q).fold(T::infinity(), T::min);
    let lower = (-min_ratio(mu0)).max(-gap - min_ratio(mu1));

    let eval = |h0: T| -> Result<(T, SolveReport<T>)> {
        let h1 = h0 + gap;
        let a: Vec<T> = mu0.iter().zip(p).map(|(&m, &q)| (m + h0 * q).max(T::zero())).collect();
        let b: Vec<T> = mu1.iter().zip(p).map(|(&m, &q)| (m + h1 * q).max(T::zero())).collect();
        let leg = Problem::new(chain, &a, &b, steps, true).solve(opts, Metric::ME)?;
        let s = h0.abs() + h1.abs();
        Ok((a2 * s * s + leg.value, leg))
    };

    let (c_low, _) = eval(lower)?;
    let upper = lower.max(((c_low / a2).sqrt() - gap) * lit(0.5));
    let scan = 16;
    let grid: Vec<T> = (0..=scan)
        .map(|i| lower + (upper - lower) * from_usize::<T>(i) / from_usize::<T>(scan))
        .collect();
    let values: Vec<Result<T>> = grid.par_iter().map(|&h| eval(h).map(|r| r.0)).collect();
    let values: Vec<T> = values.into_iter().collect::<Result<_>>()?;
    // Ties resolve toward the larger shift, where the minimizing set is a segment.
    let best = (0..=scan).fold(0, |b, i| if values[i] <= values[b] * (T::one() + lit(1e-12)) { i } else { b });
    let mut lo = grid[best.saturating_sub(1)];
    let mut hi = grid[(best + 1).min(scan)];
    let mut best_h = grid[best];
    let mut best_v = values[best];

    let ratio = lit::<T>((5f64.sqrt() - 1.0) / 2.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = eval(x1)?.0;
    let mut f2 = eval(x2)?.0;
    for _ in 0..40 {
        if f1 < f2 * (T::one() - lit(1e-12)) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = eval(x1)?.0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = eval(x2)?.0;
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f < best_v * (T::one() - lit(1e-12)) || (f <= best_v * (T::one() + lit(1e-12)) && x > best_h) {
            best_v = f;
            best_h = x;
        }
    }
    let (value, mut leg) = eval(best_h)?;
    leg.metric = Metric::D;
    leg.value = value;
    leg.distance = value.max(T::zero()).sqrt();
    leg.shift = Some(Shift { h0: best_h, h1: best_h + gap });
    Ok(leg)
}

pub fn check_nonlocality<T: Real>(report: &SolveReport<T>) -> Nonlocality<T> {
    let traj = &report.trajectory;
    let first = &traj.mu[0];
    let last = &traj.mu[traj.mu.len() - 1];
    let vacuous = first.iter().zip(last).all(|(a, b)| a == b);
    Nonlocality {
        min_interior_mass: interior_min(traj),
        min_abs_source: traj.h.iter().fold(T::infinity(), |m, h| m.min(h.abs())),
        vacuous,
    }
}

fn interior_min<T: Real>(traj: &Trajectory<T>) -> T {
    let n = traj.mu.len();
    traj.mu[1..n - 1].iter().flatten().fold(T::infinity(), |m, &v| m.min(v))
}

fn check_endpoints<T: Real>(mu0: &[T], mu1: &[T], chain: &MarkovChain<T>, steps: usize) -> Result<()> {
    if steps < 2 {
        return Err(Error::Domain(format!("need at least 2 intervals, got {steps}")));
    }
    for mu in [mu0, mu1] {
        if mu.len() != chain.len() {
            return Err(Error::Dimension { expected: chain.len(), got: mu.len() });
        }
        if let Some(x) = mu.iter().position(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Domain(format!("endpoint entry {x} is negative or not finite")));
        }
    }
    Ok(())
}

/// Evaluated reduced objective in the free coordinates.
struct Eval<T> {
    value: T,
    grad: Vec<Vec<T>>,
    diag: Vec<Matrix<T>>,
    upper: Vec<Matrix<T>>,
}

struct Problem<'a, T> {
    chain: &'a MarkovChain<T>,
    mu0: &'a [T],
    mu1: &'a [T],
    steps: usize,
    /// Interior nodes are `base + Z y`.
    base: Vec<T>,
    z: Matrix<T>,
}

impl<'a, T: Real> Problem<'a, T> {
    fn new(chain: &'a MarkovChain<T>, mu0: &'a [T], mu1: &'a [T], steps: usize, conservative: bool) -> Self {
        let n = chain.len();
        let (base, z) = if conservative {
            // Coordinates on the affine plane ⟨μ, 1⟩_π = m0.
            let m0 = total_mass(mu0, chain);
            let pi = chain.pi();
            let mut z = Matrix::zeros(n, n - 1);
            for j in 0..n - 1 {
                z[(j, j)] = T::one();
                z[(n - 1, j)] = -pi[j] / pi[n - 1];
            }
            (vec![m0; n], z)
        } else {
            (vec![T::zero(); n], Matrix::identity(n))
        };
        Self { chain, mu0, mu1, steps, base, z }
    }

    fn free_dim(&self) -> usize {
        self.z.cols()
    }

    fn node(&self, y: &[T]) -> Vec<T> {
        let mut mu = self.base.clone();
        for (i, m) in mu.iter_mut().enumerate() {
            for (j, &yj) in y.iter().enumerate() {
                *m += self.z[(i, j)] * yj;
            }
        }
        mu
    }

    fn coords(&self, mu: &[T]) -> Vec<T> {
        (0..self.free_dim()).map(|j| mu[j] - self.base[j]).collect()
    }

    fn nodes(&self, ys: &[Vec<T>]) -> Vec<Vec<T>> {
        let mut out = Vec::with_capacity(self.steps + 1);
        out.push(self.mu0.to_vec());
        out.extend(ys.iter().map(|y| self.node(y)));
        out.push(self.mu1.to_vec());
        out
    }

    fn intervals(&self, nodes: &[Vec<T>], delta: T, hess: bool) -> Option<Vec<IntervalEval<T>>> {
        let nf = from_usize::<T>(self.steps);
        let mut out = Vec::with_capacity(self.steps);
        for k in 0..self.steps {
            let e = interval_energy(self.chain, &nodes[k], &nodes[k + 1], delta, nf, hess).ok()?;
            if !e.value.is_finite() {
                return None;
            }
            out.push(e);
        }
        Some(out)
    }

    /// Objective at `ys`; `None` outside the domain.
    fn evaluate(&self, ys: &[Vec<T>], delta: T, tau: T, hess: bool) -> Option<Eval<T>> {
        let nodes = self.nodes(ys);
        if nodes[1..self.steps].iter().flatten().any(|&v| !(v > T::zero())) {
            return None;
        }
        let ints = self.intervals(&nodes, delta, hess)?;
        let dt = T::one() / from_usize(self.steps);
        let pi = self.chain.pi();
        let n = self.chain.len();
        let mut value = ints.iter().map(|e| e.value).sum::<T>() * dt;
        for mu in &nodes[1..self.steps] {
            value -= tau * dt * mu.iter().zip(pi).map(|(&m, &w)| w * m.ln()).sum::<T>();
        }
        let mut grad = Vec::with_capacity(self.steps - 1);
        let mut diag = Vec::new();
        let mut upper = Vec::new();
        for k in 1..self.steps {
            let mu = &nodes[k];
            let g: Vec<T> = (0..n)
                .map(|x| dt * (ints[k - 1].grad_right[x] + ints[k].grad_left[x]) - tau * dt * pi[x] / mu[x])
                .collect();
            grad.push(self.z.tmatvec(&g));
            if hess {
                let [_, _, rr] = ints[k - 1].hess.as_ref().unwrap();
                let [ll, lr, _] = ints[k].hess.as_ref().unwrap();
                let mut a = rr.clone();
                a.add_assign(ll);
                a.scale(dt);
                for x in 0..n {
                    a[(x, x)] += tau * dt * pi[x] / (mu[x] * mu[x]);
                }
                diag.push(Matrix::congruence(&self.z, &a));
                if k + 1 < self.steps {
                    let mut b = lr.clone();
                    b.scale(dt);
                    upper.push(self.z.transpose().matmul(&b.matmul(&self.z)));
                }
            }
        }
        if !value.is_finite() {
            return None;
        }
        Some(Eval { value, grad, diag, upper })
    }

    fn initial(&self, opts: &SolveOptions<T>, conservative: bool) -> Vec<Vec<T>> {
        let n = self.chain.len();
        let pi = self.chain.pi();
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let (mut q, mut eta) = if conservative { (vec![T::one(); n], lit::<T>(0.5)) } else { (self.chain.p().to_vec(), lit::<T>(0.1)) };
        if opts.random_init {
            for v in q.iter_mut() {
                *v *= lit(rng.gen_range(0.3..3.0));
            }
            let mass: T = q.iter().zip(pi).map(|(&a, &b)| a * b).sum();
            for v in q.iter_mut() {
                *v /= mass;
            }
            eta = lit(rng.gen_range(0.05..0.6));
        }
        let scale = total_mass(self.mu0, self.chain).max(total_mass(self.mu1, self.chain));
        let nf = from_usize::<T>(self.steps);
        (1..self.steps)
            .map(|k| {
                let t = from_usize::<T>(k) / nf;
                let w = eta * lit::<T>(4.0) * t * (T::one() - t);
                let mu: Vec<T> = (0..n)
                    .map(|x| {
                        let lin = (T::one() - t) * self.mu0[x] + t * self.mu1[x];
                        if conservative {
                            (T::one() - w) * lin + w * self.base[x] * q[x]
                        } else {
                            lin + w * scale * q[x]
                        }
                    })
                    .collect();
                self.coords(&mu)
            })
            .collect()
    }

    fn newton_step(&self, e: &Eval<T>) -> Option<Vec<Vec<T>>> {
        let rhs: Vec<Vec<T>> = e.grad.iter().map(|g| g.iter().map(|&v| -v).collect()).collect();
        if let Some(d) = block_tridiagonal_solve(&e.diag, &e.upper, &rhs) {
            return Some(d);
        }
        let scale = e.diag.iter().fold(T::zero(), |m, a| m.max(a.max_abs()));
        let mut reg = lit::<T>(1e-12) * scale;
        while reg <= lit::<T>(1e-2) * scale {
            let diag: Vec<Matrix<T>> = e
                .diag
                .iter()
                .map(|a| {
                    let mut a = a.clone();
                    for i in 0..a.rows() {
                        a[(i, i)] += reg;
                    }
                    a
                })
                .collect();
            if let Some(d) = block_tridiagonal_solve(&diag, &e.upper, &rhs) {
                return Some(d);
            }
            reg *= lit(100.0);
        }
        None
    }

    /// Minimizes one stage from `ys`; returns (iterations, relative decrement).
    fn stage(&self, ys: &mut Vec<Vec<T>>, delta: T, tau: T, scale: T, tol: T, max_iter: usize) -> (usize, T) {
        let mut residual = T::infinity();
        for iter in 0..max_iter {
            let Some(e) = self.evaluate(ys, delta, tau, true) else {
                return (iter, residual);
            };
            let Some(step) = self.newton_step(&e) else {
                return (iter, residual);
            };
            let slope: T = e.grad.iter().zip(&step).flat_map(|(g, d)| g.iter().zip(d)).map(|(&g, &d)| g * d).sum();
            residual = (-slope).max(T::zero()).sqrt() / scale.sqrt();
            if residual <= tol {
                return (iter, residual);
            }
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<Vec<T>> =
                    ys.iter().zip(&step).map(|(y, d)| y.iter().zip(d).map(|(&a, &b)| a + t * b).collect()).collect();
                if let Some(f) = self.evaluate(&trial, delta, tau, false) {
                    if f.value <= e.value + lit::<T>(1e-4) * t * slope {
                        *ys = trial;
                        accepted = true;
                        break;
                    }
                }
                t *= lit(0.5);
            }
            if !accepted {
                // No decrease is measurable: the remaining decrement is at rounding level.
                if -slope <= lit::<T>(1e3) * T::epsilon() * e.value.abs().max(scale) {
                    residual = T::zero();
                }
                return (iter + 1, residual);
            }
        }
        (max_iter, residual)
    }

    fn solve(&self, opts: &SolveOptions<T>, metric: Metric) -> Result<SolveReport<T>> {
        let conservative = metric != Metric::W;
        let n = self.chain.len();
        let span = self.mu0.iter().chain(self.mu1).fold(T::zero(), |m, &v| m.max(v.abs()));
        let diff = self.mu0.iter().zip(self.mu1).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        if diff <= lit::<T>(1e-14) * span.max(T::one()) || (conservative && n == 1) {
            return self.constant_report(metric);
        }

        let mut ys = self.initial(opts, conservative);
        let first_delta = opts.delta_schedule.first().copied().unwrap_or(T::zero());
        let scale = self
            .evaluate(&ys, first_delta, T::zero(), false)
            .map(|e| e.value)
            .ok_or(Error::SingularSystem)?
            .max(lit(1e-200));

        let mut stages: Vec<(T, T, T)> =
            opts.delta_schedule.iter().map(|&d| (d, lit::<T>(1e-3) * d * scale, lit::<T>(1e-5).max(opts.opt_tol))).collect();
        stages.push((T::zero(), lit::<T>(1e-12) * scale, opts.opt_tol));

        let mut iterations = 0;
        let mut residual = T::infinity();
        for &(delta, tau, tol) in &stages {
            let (it, r) = self.stage(&mut ys, delta, tau, scale, tol, opts.max_iterations);
            iterations += it;
            residual = r;
        }
        let converged = residual <= opts.opt_tol;
        if !(residual <= opts.opt_tol.sqrt()) {
            return Err(Error::NotConverged { iterations, residual: to_f64(residual) });
        }
        self.report(&ys, metric, iterations, converged, residual)
    }

    fn report(&self, ys: &[Vec<T>], metric: Metric, iterations: usize, converged: bool, residual: T) -> Result<SolveReport<T>> {
        let chain = self.chain;
        let nodes = self.nodes(ys);
        let ints = self.intervals(&nodes, T::zero(), false).ok_or(Error::SingularSystem)?;
        let half = lit::<T>(0.5);
        let mut v = Vec::with_capacity(self.steps);
        let mut h = Vec::with_capacity(self.steps);
        let mut psi = Vec::with_capacity(self.steps);
        for (k, e) in ints.iter().enumerate() {
            let m: Vec<T> = nodes[k].iter().zip(&nodes[k + 1]).map(|(&a, &b)| half * (a + b)).collect();
            let p: Vec<T> = e.u.iter().map(|&u| -u).collect();
            let g = gradient(&p, chain);
            v.push(EdgeField::from_fn(chain, |x, y| theta(m[x], m[y]) * g.get(x, y)));
            h.push(if metric == Metric::W { e.h } else { T::zero() });
            psi.push(p);
        }
        let trajectory = Trajectory::new(nodes, v, h, Some(psi), crate::chain::tol(SOLVER_CE_TOL))?;
        self.finish(trajectory, metric, iterations, converged, residual)
    }

    fn constant_report(&self, metric: Metric) -> Result<SolveReport<T>> {
        let n = self.chain.len();
        let mut mu = vec![self.mu0.to_vec(); self.steps + 1];
        mu[self.steps] = self.mu1.to_vec();
        let trajectory = Trajectory::new(
            mu,
            vec![EdgeField::zeros(n); self.steps],
            vec![T::zero(); self.steps],
            Some(vec![vec![T::zero(); n]; self.steps]),
            crate::chain::tol(SOLVER_CE_TOL),
        )?;
        let mut r = self.finish(trajectory, metric, 0, true, T::zero())?;
        r.value = T::zero();
        r.distance = T::zero();
        r.speed_variation = T::zero();
        Ok(r)
    }

    fn finish(&self, trajectory: Trajectory<T>, metric: Metric, iterations: usize, converged: bool, residual: T) -> Result<SolveReport<T>> {
        let value = action_quad(&trajectory, self.chain)?.to_real();
        let speeds = speed_profile(&trajectory, self.chain);
        let (lo, hi) = speeds.iter().fold((T::infinity(), T::zero()), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        let speed_variation = if hi == T::zero() {
            T::zero()
        } else if lo > T::zero() {
            hi / lo - T::one()
        } else {
            T::infinity()
        };
        Ok(SolveReport {
            metric,
            value,
            distance: value.max(T::zero()).sqrt(),
            min_interior_mass: interior_min(&trajectory),
            trajectory,
            iterations,
            converged,
            residual,
            speed_variation,
            shift: if metric == Metric::D { Some(Shift { h0: T::zero(), h1: T::zero() }) } else { None },
        })
    }
}
