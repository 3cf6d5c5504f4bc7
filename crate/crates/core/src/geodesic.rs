//! Strong geodesic system, adaptive integration, ray fans and shooting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::action::{Trajectory, SOLVER_CE_TOL};
use crate::calculus::{edge_norm_sq, gradient, theta, theta_d1};
use crate::chain::{total_mass, EdgeField, MarkovChain};
use crate::elliptic::solve_tangent;
use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Matrix};
use crate::scalar::{from_usize, lit, Real};
use crate::transport::{distance_w, Metric, SolveOptions, SolveReport};

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicState<T = f64> {
    pub mu: Vec<T>,
    /// Source momentum.
    pub h: T,
    /// Edge momentum `∇ψ`, antisymmetric and zero off the support of `K`.
    pub grad_psi: EdgeField<T>,
}

impl<T: Real> GeodesicState<T> {
    pub fn from_potential(mu: Vec<T>, h: T, psi: &[T], chain: &MarkovChain<T>) -> Self {
        Self { mu, h, grad_psi: gradient(psi, chain) }
    }

    /// Conserved speed `a²h² + b²‖∇ψ‖²_μ`.
    pub fn speed(&self, chain: &MarkovChain<T>) -> T {
        let (a, b) = (chain.a(), chain.b());
        a * a * self.h * self.h + b * b * edge_norm_sq(&self.grad_psi, &self.mu, chain)
    }

    fn pack(&self) -> Vec<T> {
        let mut v = self.mu.clone();
        v.push(self.h);
        v.extend_from_slice(self.grad_psi.as_slice());
        v
    }

    fn unpack(v: &[T], n: usize) -> Self {
        let rows: Vec<Vec<T>> = (0..n).map(|x| v[n + 1 + x * n..n + 1 + (x + 1) * n].to_vec()).collect();
        Self { mu: v[..n].to_vec(), h: v[n], grad_psi: EdgeField::from_rows(&rows) }
    }
}

/// Right-hand side `(μ̇, ḣ, ∇ψ̇)` of the strong geodesic system.
pub fn geodesic_rhs<T: Real>(state: &GeodesicState<T>, chain: &MarkovChain<T>) -> Result<GeodesicState<T>> {
    let n = chain.len();
    let mu = &state.mu;
    if mu.len() != n {
        return Err(Error::Dimension { expected: n, got: mu.len() });
    }
    if let Some(state) = mu.iter().position(|&m| !(m > T::zero())) {
        return Err(Error::BoundaryContact { state });
    }
    let (a, b) = (chain.a(), chain.b());
    let g = &state.grad_psi;
    let (pi, p) = (chain.pi(), chain.p());
    let half = lit::<T>(0.5);

    let mut dmu = vec![T::zero(); n];
    // f(x) = ½ Σ_z ∇ψ(x,z)² K(x,z) ∂₁θ(μ_x, μ_z).
    let mut f = vec![T::zero(); n];
    for x in 0..n {
        let mut flux = T::zero();
        for z in 0..n {
            let k = chain.k(x, z);
            if z == x || k == T::zero() {
                continue;
            }
            let gxz = g.get(x, z);
            flux += gxz * theta(mu[x], mu[z]) * k;
            f[x] += half * gxz * gxz * k * theta_d1(mu[x], mu[z]);
        }
        dmu[x] = state.h * p[x] - flux;
    }
    let weighted: T = (0..n).map(|x| pi[x] * p[x] * f[x]).sum();
    let dh = -(b * b / (a * a)) * weighted;
    let dgrad = EdgeField::from_fn(chain, |x, y| f[x] - f[y]);
    Ok(GeodesicState { mu: dmu, h: dh, grad_psi: dgrad })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ReachedTmax,
    BoundaryTouch,
    StepUnderflow,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::ReachedTmax => "reached_tmax",
            StopReason::BoundaryTouch => "boundary_touch",
            StopReason::StepUnderflow => "step_underflow",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RaySample<T = f64> {
    pub t: T,
    pub state: GeodesicState<T>,
    pub speed: T,
}

#[derive(Debug, Clone)]
pub struct RayResult<T = f64> {
    pub samples: Vec<RaySample<T>>,
    pub stop_reason: StopReason,
    pub stop_time: T,
    /// Largest relative deviation of the speed from its initial value.
    pub speed_drift: T,
}

#[derive(Debug, Clone)]
pub struct RayOptions<T = f64> {
    pub t_max: T,
    pub eps_bd: T,
    pub dt_min: T,
    /// Local error bound per unit time.
    pub rtol: T,
    pub dt_init: T,
    /// Seed for the random directions used when `n > 2`.
    pub seed: u64,
}

impl<T: Real> Default for RayOptions<T> {
    fn default() -> Self {
        Self { t_max: lit(3.0), eps_bd: lit(1e-6), dt_min: lit(5e-4), rtol: lit(1e-7), dt_init: lit(1e-3), seed: 0 }
    }
}

fn rk4<T: Real>(y: &[T], dt: T, n: usize, chain: &MarkovChain<T>) -> Result<Vec<T>> {
    let f = |v: &[T]| geodesic_rhs(&GeodesicState::unpack(v, n), chain).map(|d| d.pack());
    let axpy = |v: &[T], c: T, d: &[T]| -> Vec<T> { v.iter().zip(d).map(|(&a, &b)| a + c * b).collect() };
    let half = lit::<T>(0.5);
    let k1 = f(y)?;
    let k2 = f(&axpy(y, half * dt, &k1))?;
    let k3 = f(&axpy(y, half * dt, &k2))?;
    let k4 = f(&axpy(y, dt, &k3))?;
    let sixth = dt / lit(6.0);
    Ok((0..y.len()).map(|i| y[i] + sixth * (k1[i] + lit::<T>(2.0) * (k2[i] + k3[i]) + k4[i])).collect())
}

/// Full step and two half steps with local extrapolation.
fn doubled_step<T: Real>(y: &[T], dt: T, n: usize, chain: &MarkovChain<T>) -> Result<(Vec<T>, T)> {
    let half = lit::<T>(0.5) * dt;
    let coarse = rk4(y, dt, n, chain)?;
    let mid = rk4(y, half, n, chain)?;
    let fine = rk4(&mid, half, n, chain)?;
    let fifteen = lit::<T>(15.0);
    let mut err = T::zero();
    let mut out = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let d = (fine[i] - coarse[i]) / fifteen;
        err = err.max(d.abs() / T::one().max(fine[i].abs()));
        out.push(fine[i] + d);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::BoundaryContact { state: 0 });
    }
    Ok((out, err))
}

fn min_mass<T: Real>(y: &[T], n: usize) -> T {
    y[..n].iter().fold(T::infinity(), |m, &v| m.min(v))
}

/// Integrates the strong system from `init` with step-doubling RK4.
///
/// Every accepted step is sampled; times listed in `grid` are hit exactly.
pub fn integrate_ray<T: Real>(init: &GeodesicState<T>, chain: &MarkovChain<T>, opts: &RayOptions<T>) -> RayResult<T> {
    integrate_on_grid(init, chain, opts, &[])
}

fn integrate_on_grid<T: Real>(init: &GeodesicState<T>, chain: &MarkovChain<T>, opts: &RayOptions<T>, grid: &[T]) -> RayResult<T> {
    let n = chain.len();
    let s0 = init.speed(chain);
    let drift = |s: T| if s0 > T::zero() { (s - s0).abs() / s0 } else { (s - s0).abs() };
    let mut samples = vec![RaySample { t: T::zero(), state: init.clone(), speed: s0 }];
    let mut speed_drift = T::zero();
    let mut y = init.pack();
    let mut t = T::zero();
    let mut dt = opts.dt_init;
    let mut next_grid = 0;

    let finish = |samples: Vec<RaySample<T>>, reason, t, drift| RayResult { samples, stop_reason: reason, stop_time: t, speed_drift: drift };

    if min_mass(&y, n) <= opts.eps_bd {
        return finish(samples, StopReason::BoundaryTouch, t, speed_drift);
    }
    loop {
        while next_grid < grid.len() && grid[next_grid] <= t {
            next_grid += 1;
        }
        let target = if next_grid < grid.len() { grid[next_grid].min(opts.t_max) } else { opts.t_max };
        let clipped = t + dt >= target;
        let step = if clipped { target - t } else { dt };
        let attempt = doubled_step(&y, step, n, chain);
        let tol = opts.rtol * step;
        let crossed = match &attempt {
            Err(_) => true,
            Ok((next, _)) => min_mass(next, n) <= opts.eps_bd,
        };
        let accurate = matches!(&attempt, Ok((_, e)) if *e <= tol);
        if crossed && (accurate || step <= opts.dt_min) {
            // Bisect on the step length for the first sub-threshold state.
            let (mut lo, mut hi) = (T::zero(), step);
            let mut best = y.clone();
            for _ in 0..60 {
                let mid = lit::<T>(0.5) * (lo + hi);
                match doubled_step(&y, mid, n, chain) {
                    Ok((v, _)) if min_mass(&v, n) > opts.eps_bd => {
                        lo = mid;
                        best = v;
                    }
                    _ => hi = mid,
                }
            }
            t += lo;
            let state = GeodesicState::unpack(&best, n);
            let speed = state.speed(chain);
            speed_drift = speed_drift.max(drift(speed));
            samples.push(RaySample { t, state, speed });
            return finish(samples, StopReason::BoundaryTouch, t, speed_drift);
        }
        let err = match &attempt {
            Ok((_, e)) => *e,
            Err(_) => T::infinity(),
        };
        let factor = if err > T::zero() {
            (lit::<T>(0.9) * (tol / err).powf(lit(0.25))).min(lit(2.0))
        } else {
            lit(2.0)
        };
        if accurate && !crossed {
            y = attempt.unwrap().0;
            t = if clipped { target } else { t + step };
            let state = GeodesicState::unpack(&y, n);
            let speed = state.speed(chain);
            speed_drift = speed_drift.max(drift(speed));
            samples.push(RaySample { t, state, speed });
            if !clipped || factor < T::one() {
                dt = step * factor;
            }
            if t >= opts.t_max {
                return finish(samples, StopReason::ReachedTmax, t, speed_drift);
            }
        } else if crossed {
            // Boundary takes precedence: shrink until the crossing step is resolved.
            dt = (lit::<T>(0.5) * step).max(opts.dt_min.min(step) * lit(0.5));
        } else {
            dt = step * factor.max(lit(0.1)).min(lit(0.5));
            if dt < opts.dt_min {
                return finish(samples, StopReason::StepUnderflow, t, speed_drift);
            }
        }
    }
}

/// Initial states of a ray fan with unit speed.
pub fn ray_directions<T: Real>(start: &[T], chain: &MarkovChain<T>, n_rays: usize, seed: u64) -> Result<Vec<GeodesicState<T>>> {
    let n = chain.len();
    if start.len() != n {
        return Err(Error::Dimension { expected: n, got: start.len() });
    }
    if start.iter().any(|&m| !(m > T::zero())) {
        return Err(Error::BoundaryStart);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n_rays);
    for k in 0..n_rays {
        let (psi, h) = if n == 2 {
            let angle = lit::<T>(2.0) * T::PI() * from_usize::<T>(k) / from_usize::<T>(n_rays);
            (vec![T::zero(), angle.cos()], angle.sin())
        } else {
            let mut psi = vec![T::zero(); n];
            for v in psi.iter_mut().skip(1) {
                *v = lit(rng.sample::<f64, _>(StandardNormal));
            }
            (psi, lit(rng.sample::<f64, _>(StandardNormal)))
        };
        let state = GeodesicState::from_potential(start.to_vec(), h, &psi, chain);
        let scale = T::one() / state.speed(chain).sqrt();
        out.push(GeodesicState { mu: state.mu, h: state.h * scale, grad_psi: state.grad_psi.scaled(scale) });
    }
    Ok(out)
}

pub fn ray_fan<T: Real>(start: &[T], chain: &MarkovChain<T>, n_rays: usize, opts: &RayOptions<T>) -> Result<Vec<RayResult<T>>> {
    let inits = ray_directions(start, chain, n_rays, opts.seed)?;
    Ok(inits.par_iter().map(|s| integrate_ray(s, chain, opts)).collect())
}

#[derive(Debug, Clone)]
pub struct ShootOptions<T = f64> {
    /// Grid on which the returned trajectory is sampled.
    pub steps: usize,
    /// Bound on `‖μ(1) − μ1‖∞`.
    pub bvp_tol: T,
    pub max_iterations: usize,
    pub rtol: T,
    /// Use the convex solver for the initial momenta.
    pub warm_start: bool,
}

impl<T: Real> Default for ShootOptions<T> {
    fn default() -> Self {
        Self { steps: 64, bvp_tol: lit(1e-9), max_iterations: 50, rtol: lit(1e-11), warm_start: true }
    }
}

/// Two-point shooting for the geodesic from `mu0` to `mu1`.
///
/// The unknowns are `h0` and `ψ0` with `ψ0(0) = 0`.
pub fn shoot<T: Real>(mu0: &[T], mu1: &[T], chain: &MarkovChain<T>, opts: &ShootOptions<T>) -> Result<SolveReport<T>> {
    let n = chain.len();
    for mu in [mu0, mu1] {
        if mu.len() != n {
            return Err(Error::Dimension { expected: n, got: mu.len() });
        }
        if mu.iter().any(|&m| !(m > T::zero())) {
            return Err(Error::NotInterior { state: mu.iter().position(|&m| !(m > T::zero())).unwrap() });
        }
    }
    let steps = opts.steps.max(1);
    let grid: Vec<T> = (1..=steps).map(|k| from_usize::<T>(k) / from_usize::<T>(steps)).collect();
    let ray_opts = RayOptions { t_max: T::one(), eps_bd: T::zero(), dt_min: lit(1e-10), rtol: opts.rtol, dt_init: lit(1e-2), seed: 0 };
    let state_of = |q: &[T]| {
        let mut psi = vec![T::zero(); n];
        psi[1..].copy_from_slice(&q[1..]);
        GeodesicState::from_potential(mu0.to_vec(), q[0], &psi, chain)
    };
    let run = |q: &[T]| -> Option<RayResult<T>> {
        let r = integrate_on_grid(&state_of(q), chain, &ray_opts, &grid);
        (r.stop_reason == StopReason::ReachedTmax).then_some(r)
    };
    let mismatch = |q: &[T]| -> Option<Vec<T>> {
        let r = run(q)?;
        let end = &r.samples.last()?.state.mu;
        Some(end.iter().zip(mu1).map(|(&a, &b)| a - b).collect())
    };
    let norm = |v: &[T]| v.iter().fold(T::zero(), |m, &x| m.max(x.abs()));

    let mut q = vec![T::zero(); n];
    q[0] = total_mass(mu1, chain) - total_mass(mu0, chain);
    if opts.warm_start {
        if let Ok(w) = distance_w(mu0, mu1, chain, 64, &SolveOptions::default()) {
            q[0] = w.trajectory.h[0];
            if let Some(psi) = &w.trajectory.psi {
                for x in 1..n {
                    q[x] = psi[0][x] - psi[0][0];
                }
            }
        }
    }
    let mut f = mismatch(&q).ok_or_else(|| Error::ShootingFailed("initial guess leaves the interior".into()))?;
    let mut iterations = 0;
    while norm(&f) > opts.bvp_tol {
        if iterations >= opts.max_iterations {
            return Err(Error::ShootingFailed(format!("no convergence, mismatch {:e}", crate::scalar::to_f64(norm(&f)))));
        }
        iterations += 1;
        let mut jac = Matrix::zeros(n, n);
        for j in 0..n {
            let eps = lit::<T>(1e-6) * T::one().max(q[j].abs());
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[j] += eps;
            qm[j] -= eps;
            let (fp, fm) = match (mismatch(&qp), mismatch(&qm)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::ShootingFailed("Jacobian probe left the interior".into())),
            };
            for i in 0..n {
                jac[(i, j)] = (fp[i] - fm[i]) / (eps + eps);
            }
        }
        let rhs: Vec<T> = f.iter().map(|&v| -v).collect();
        let step = lu_solve(&jac, &rhs).ok_or_else(|| Error::ShootingFailed("singular Jacobian".into()))?;
        let mut t = T::one();
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<T> = q.iter().zip(&step).map(|(&a, &b)| a + t * b).collect();
            if let Some(ft) = mismatch(&trial) {
                if norm(&ft) < norm(&f) {
                    q = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            t *= lit(0.5);
        }
        if !accepted {
            return Err(Error::ShootingFailed("line search stalled".into()));
        }
    }

    let ray = run(&q).ok_or_else(|| Error::ShootingFailed("final integration left the interior".into()))?;
    let init = state_of(&q);
    let value = init.speed(chain);
    let mut nodes = vec![mu0.to_vec()];
    for g in &grid {
        let s = ray.samples.iter().find(|s| s.t == *g).ok_or_else(|| Error::ShootingFailed("grid sample missing".into()))?;
        nodes.push(s.state.mu.clone());
    }
    *nodes.last_mut().unwrap() = mu1.to_vec();
    let nf = from_usize::<T>(steps);
    let half = lit::<T>(0.5);
    let mut v = Vec::with_capacity(steps);
    let mut h = Vec::with_capacity(steps);
    let mut psi = Vec::with_capacity(steps);
    for k in 0..steps {
        let m: Vec<T> = nodes[k].iter().zip(&nodes[k + 1]).map(|(&a, &b)| half * (a + b)).collect();
        let rho: Vec<T> = nodes[k].iter().zip(&nodes[k + 1]).map(|(&a, &b)| (b - a) * nf).collect();
        let tan = solve_tangent(&m, &rho, chain)?;
        v.push(EdgeField::from_fn(chain, |x, y| theta(m[x], m[y]) * tan.grad_psi.get(x, y)));
        h.push(tan.h);
        psi.push(tan.psi);
    }
    let trajectory = Trajectory::new(nodes, v, h, Some(psi), crate::chain::tol(SOLVER_CE_TOL))?;
    let min_interior_mass = trajectory.mu[1..steps].iter().flatten().fold(T::infinity(), |m, &x| m.min(x));
    Ok(SolveReport {
        metric: Metric::W,
        value,
        distance: value.sqrt(),
        trajectory,
        iterations,
        converged: true,
        residual: norm(&f),
        speed_variation: ray.speed_drift,
        min_interior_mass,
        shift: None,
    })
}
