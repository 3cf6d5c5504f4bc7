//! Discrete trajectories on the uniform grid `t_k = k/N` and the action
//! functionals evaluated on them with the midpoint-measure rule.

use crate::calculus::{a_prime, divergence, gradient, theta};
use crate::chain::{EdgeField, MarkovChain};
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Extended, Real};

/// Continuity tolerance for solver-produced trajectories.
pub const SOLVER_CE_TOL: f64 = 1e-9;
/// Continuity tolerance for trajectories read from files.
pub const LOADED_CE_TOL: f64 = 1e-6;

/// Node-sampled measures with interval-constant fluxes and source rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T = f64> {
    /// `N + 1` node measures.
    pub mu: Vec<Vec<T>>,
    /// `N` interval fluxes.
    pub v: Vec<EdgeField<T>>,
    /// `N` interval source rates.
    pub h: Vec<T>,
    /// Optional interval potentials with `V_k = μ̂(midpoint_k)∗∇ψ_k`.
    pub psi: Option<Vec<Vec<T>>>,
    /// Tolerance on the discrete continuity residual.
    pub ce_tol: T,
}

impl<T: Real> Trajectory<T> {
    pub fn new(mu: Vec<Vec<T>>, v: Vec<EdgeField<T>>, h: Vec<T>, psi: Option<Vec<Vec<T>>>, ce_tol: T) -> Result<Self> {
        let n_int = h.len();
        if n_int == 0 {
            return Err(Error::Schema("trajectory needs at least one interval".into()));
        }
        if mu.len() != n_int + 1 {
            return Err(Error::Dimension { expected: n_int + 1, got: mu.len() });
        }
        if v.len() != n_int {
            return Err(Error::Dimension { expected: n_int, got: v.len() });
        }
        if let Some(p) = &psi {
            if p.len() != n_int {
                return Err(Error::Dimension { expected: n_int, got: p.len() });
            }
        }
        Ok(Self { mu, v, h, psi, ce_tol })
    }

    /// Integrates `μ_{k+1} = μ_k + Δt (h_k p − ∇·V_k)` forward from `mu0`.
    pub fn integrate(mu0: &[T], v: Vec<EdgeField<T>>, h: Vec<T>, chain: &MarkovChain<T>, ce_tol: T) -> Result<Self> {
        let n_int = h.len();
        if v.len() != n_int {
            return Err(Error::Dimension { expected: n_int, got: v.len() });
        }
        let dt = T::one() / from_usize(n_int);
        let mut mu = Vec::with_capacity(n_int + 1);
        mu.push(mu0.to_vec());
        for k in 0..n_int {
            let div = divergence(&v[k], chain);
            let prev = &mu[k];
            let next: Vec<T> = (0..chain.len()).map(|x| prev[x] + dt * (h[k] * chain.p()[x] - div[x])).collect();
            mu.push(next);
        }
        Self::new(mu, v, h, None, ce_tol)
    }

    /// Source-only path `μ_t = μ0 + t c p`.
    pub fn pure_source(mu0: &[T], c: T, intervals: usize, chain: &MarkovChain<T>) -> Result<Self> {
        let n = chain.len();
        let v = vec![EdgeField::zeros(n); intervals];
        let mut t = Self::integrate(mu0, v, vec![c; intervals], chain, crate::chain::tol(SOLVER_CE_TOL))?;
        t.psi = Some(vec![vec![T::zero(); n]; intervals]);
        Ok(t)
    }

    pub fn intervals(&self) -> usize {
        self.h.len()
    }

    pub fn dt(&self) -> T {
        T::one() / from_usize(self.intervals())
    }

    pub fn time(&self, k: usize) -> T {
        from_usize::<T>(k) * self.dt()
    }

    pub fn midpoint(&self, k: usize) -> Vec<T> {
        let half = lit::<T>(0.5);
        self.mu[k].iter().zip(&self.mu[k + 1]).map(|(&a, &b)| half * (a + b)).collect()
    }

    /// Largest continuity residual and the interval where it occurs.
    pub fn continuity_residual(&self, chain: &MarkovChain<T>) -> (usize, T) {
        let nf = from_usize::<T>(self.intervals());
        let mut worst = (0, T::zero());
        for k in 0..self.intervals() {
            let div = divergence(&self.v[k], chain);
            for x in 0..chain.len() {
                let r = ((self.mu[k + 1][x] - self.mu[k][x]) * nf + div[x] - self.h[k] * chain.p()[x]).abs();
                if !(r <= worst.1) {
                    worst = (k, r);
                }
            }
        }
        worst
    }

    /// Largest deviation of `V_k` from `μ̂(midpoint_k)∗∇ψ_k`, if potentials are present.
    pub fn potential_residual(&self, chain: &MarkovChain<T>) -> Option<T> {
        let psi = self.psi.as_ref()?;
        let mut worst = T::zero();
        for k in 0..self.intervals() {
            let m = self.midpoint(k);
            let g = gradient(&psi[k], chain);
            let expect = EdgeField::from_fn(chain, |x, y| theta(m[x], m[y]) * g.get(x, y));
            worst = worst.max(self.v[k].canonical(chain).max_abs_diff(&expect));
        }
        Some(worst)
    }

    pub fn validate(&self, chain: &MarkovChain<T>) -> Result<()> {
        let n = chain.len();
        for (k, m) in self.mu.iter().enumerate() {
            if m.len() != n {
                return Err(Error::Dimension { expected: n, got: m.len() });
            }
            if let Some(x) = m.iter().position(|&v| v < -self.ce_tol || !v.is_finite()) {
                return Err(Error::Domain(format!("negative mass at node {k}, state {x}")));
            }
        }
        for f in &self.v {
            if f.len() != n {
                return Err(Error::Dimension { expected: n, got: f.len() });
            }
        }
        let (interval, residual) = self.continuity_residual(chain);
        if !(residual <= self.ce_tol) {
            return Err(Error::InvalidTrajectory { interval, residual: to_f64(residual) });
        }
        Ok(())
    }

    /// Interval costs `a² h_k² + b² A′(midpoint_k, V_k)`.
    fn interval_costs(&self, chain: &MarkovChain<T>) -> Vec<Extended<T>> {
        let (a2, b2) = (chain.a() * chain.a(), chain.b() * chain.b());
        (0..self.intervals())
            .map(|k| Extended::Finite(a2 * self.h[k] * self.h[k]) + a_prime(&self.midpoint(k), &self.v[k], chain).scale(b2))
            .collect()
    }
}

/// `Δt Σ_k [a² h_k² + b² A′(midpoint_k, V_k)]`.
pub fn action_quad<T: Real>(traj: &Trajectory<T>, chain: &MarkovChain<T>) -> Result<Extended<T>> {
    traj.validate(chain)?;
    Ok(traj.interval_costs(chain).into_iter().sum::<Extended<T>>().scale(traj.dt()))
}

/// `(Δt Σ_k √(a² h_k² + b² A′_k))²`.
pub fn action_linsq<T: Real>(traj: &Trajectory<T>, chain: &MarkovChain<T>) -> Result<Extended<T>> {
    traj.validate(chain)?;
    let length = traj.interval_costs(chain).into_iter().map(Extended::sqrt).sum::<Extended<T>>().scale(traj.dt());
    Ok(match length {
        Extended::Finite(l) => Extended::Finite(l * l),
        Extended::Infinite => Extended::Infinite,
    })
}

/// `a² (Δt Σ|h_k|)² + b² (Δt Σ √A′_k)²`.
pub fn shift_cost<T: Real>(traj: &Trajectory<T>, chain: &MarkovChain<T>) -> Result<Extended<T>> {
    traj.validate(chain)?;
    let dt = traj.dt();
    let source: T = traj.h.iter().map(|h| h.abs()).sum::<T>() * dt;
    let transport = (0..traj.intervals())
        .map(|k| a_prime(&traj.midpoint(k), &traj.v[k], chain).sqrt())
        .sum::<Extended<T>>()
        .scale(dt);
    let a2 = chain.a() * chain.a();
    let b2 = chain.b() * chain.b();
    Ok(Extended::Finite(a2 * source * source)
        + match transport {
            Extended::Finite(l) => Extended::Finite(b2 * l * l),
            Extended::Infinite => Extended::Infinite,
        })
}

/// Per-interval speed `a² h_k² + b² A′(midpoint_k, V_k)` (`+∞` as `T::infinity()`).
pub fn speed_profile<T: Real>(traj: &Trajectory<T>, chain: &MarkovChain<T>) -> Vec<T> {
    traj.interval_costs(chain).into_iter().map(Extended::to_real).collect()
}

/// Replaces `h` by its decreasing rearrangement over the intervals and
/// re-integrates the measures from `μ_0` with the fluxes unchanged.
pub fn rearrange_source<T: Real>(traj: &Trajectory<T>, chain: &MarkovChain<T>) -> Result<Trajectory<T>> {
    traj.validate(chain)?;
    let mut h = traj.h.clone();
    h.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    if h == traj.h {
        return Ok(traj.clone());
    }
    Trajectory::integrate(&traj.mu[0], traj.v.clone(), h, chain, traj.ce_tol)
}

/// Replaces every flux by its antisymmetric part; divergences are unchanged.
pub fn antisymmetrize<T: Real>(traj: &Trajectory<T>, chain: &MarkovChain<T>) -> Trajectory<T> {
    let mut out = traj.clone();
    for v in &mut out.v {
        *v = v.antisymmetric_part().canonical(chain);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::edge_norm_sq;

    fn two_state_chain() -> MarkovChain<f64> {
        MarkovChain::from_kernel(vec![vec![0.8, 0.2], vec![0.4, 0.6]], None, 1.0, 1.0).unwrap()
    }

    fn unit_chain() -> MarkovChain<f64> {
        // p = (1, 1) on the two-state kernel.
        two_state_chain()
    }

    #[test]
    fn constant_trajectory_has_zero_action() {
        let c = two_state_chain();
        let t = Trajectory::pure_source(&[1.0, 1.0], 0.0, 4, &c).unwrap();
        assert_eq!(action_quad(&t, &c).unwrap(), Extended::Finite(0.0));
        assert_eq!(action_linsq(&t, &c).unwrap(), Extended::Finite(0.0));
        assert_eq!(shift_cost(&t, &c).unwrap(), Extended::Finite(0.0));
        assert_eq!(speed_profile(&t, &c), vec![0.0; 4]);
    }

    #[test]
    fn pure_source_action() {
        let c = two_state_chain().with_weights(1.5, 0.7);
        let t = Trajectory::pure_source(&[0.6, 0.8], 0.5, 8, &c).unwrap();
        let expect = 1.5 * 1.5 * 0.25;
        assert!((action_quad(&t, &c).unwrap().to_real() - expect).abs() < 1e-15);
        assert!((shift_cost(&t, &c).unwrap().to_real() - expect).abs() < 1e-15);
        for s in speed_profile(&t, &c) {
            assert!((s - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn flux_through_empty_edge_is_infinite() {
        let c = two_state_chain();
        // State 0 is empty at both nodes, so the midpoint mobility on the edge vanishes.
        let mut v = EdgeField::zeros(2);
        v.set(0, 1, 1.0);
        v.set(1, 0, -1.0);
        let div = divergence(&v, &c);
        // Choose h so that state 0 stays at zero: h p(0) = div(0).
        let h = div[0];
        let t = Trajectory::integrate(&[0.0, 1.0], vec![v], vec![h], &c, 1e-9).unwrap();
        assert_eq!(t.mu[1][0], 0.0);
        assert_eq!(action_quad(&t, &c).unwrap(), Extended::Infinite);
    }

    #[test]
    fn linsq_two_interval_example() {
        // Amplitudes √(a²h²) = 0 and 2 with Δt = 1/2.
        let c = two_state_chain();
        let t = Trajectory::integrate(&[1.0, 1.0], vec![EdgeField::zeros(2); 2], vec![0.0, 2.0], &c, 1e-9).unwrap();
        assert!((action_linsq(&t, &c).unwrap().to_real() - 1.0).abs() < 1e-15);
        assert!((action_quad(&t, &c).unwrap().to_real() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn shift_cost_separates_cancelling_sources() {
        let c = two_state_chain();
        let cc = 0.3;
        let t = Trajectory::integrate(&[2.0, 2.0], vec![EdgeField::zeros(2); 2], vec![cc, -3.0 * cc], &c, 1e-9).unwrap();
        assert!((shift_cost(&t, &c).unwrap().to_real() - 4.0 * cc * cc).abs() < 1e-15);
        assert!((action_quad(&t, &c).unwrap().to_real() - 5.0 * cc * cc).abs() < 1e-15);
    }

    #[test]
    fn rearrangement_example() {
        let c = unit_chain();
        let t = Trajectory::integrate(&[1.0, 1.0], vec![EdgeField::zeros(2); 2], vec![-1.0, 1.0], &c, 1e-9).unwrap();
        assert_eq!(t.mu[1], vec![0.5, 0.5]);
        let r = rearrange_source(&t, &c).unwrap();
        assert_eq!(r.h, vec![1.0, -1.0]);
        assert_eq!(r.mu[1], vec![1.5, 1.5]);
        assert_eq!(r.mu[2], t.mu[2]);

        let sorted = Trajectory::integrate(&[1.0, 1.0], vec![EdgeField::zeros(2); 2], vec![1.0, -1.0], &c, 1e-9).unwrap();
        assert_eq!(rearrange_source(&sorted, &c).unwrap(), sorted);
    }

    #[test]
    fn antisymmetrize_examples() {
        let c = two_state_chain();
        let mut sym = EdgeField::zeros(2);
        sym.set(0, 1, 0.4);
        sym.set(1, 0, 0.4);
        let t = Trajectory::integrate(&[1.0, 1.0], vec![sym], vec![0.0], &c, 1e-9).unwrap();
        let a = antisymmetrize(&t, &c);
        assert_eq!(a.v[0], EdgeField::zeros(2));
        assert_eq!(a.mu, t.mu);
        assert_eq!(antisymmetrize(&a, &c), a);
    }

    #[test]
    fn invalid_continuity_is_rejected() {
        let c = two_state_chain();
        let t = Trajectory::new(vec![vec![1.0, 1.0], vec![2.0, 1.0]], vec![EdgeField::zeros(2)], vec![0.0], None, 1e-9)
            .unwrap();
        assert!(matches!(action_quad(&t, &c), Err(Error::InvalidTrajectory { interval: 0, .. })));
    }

    #[test]
    fn potentials_reproduce_action() {
        let c = MarkovChain::from_kernel(
            vec![vec![0.5, 0.3, 0.2], vec![0.3, 0.4, 0.3], vec![0.2, 0.3, 0.5]],
            None,
            1.3,
            0.8,
        )
        .unwrap();
        let psi = vec![vec![0.1, -0.2, 0.3], vec![0.0, 0.5, -0.5]];
        let base = vec![vec![1.0, 0.8, 1.2], vec![1.1, 0.9, 1.0], vec![1.0, 1.0, 1.0]];
        let h = vec![0.2, -0.1];
        // Fixed-point iteration on the implicit midpoint continuity equation.
        let mut mu = base.clone();
        for _ in 0..200 {
            let mut next = vec![mu[0].clone()];
            for k in 0..2 {
                let m: Vec<f64> = mu[k].iter().zip(&mu[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
                let g = gradient(&psi[k], &c);
                let v = EdgeField::from_fn(&c, |x, y| theta(m[x], m[y]) * g.get(x, y));
                let div = divergence(&v, &c);
                let prev = next[k].clone();
                next.push((0..3).map(|x| prev[x] + 0.5 * (h[k] * c.p()[x] - div[x])).collect());
            }
            mu = next;
        }
        let v: Vec<EdgeField<f64>> = (0..2)
            .map(|k| {
                let m: Vec<f64> = mu[k].iter().zip(&mu[k + 1]).map(|(a, b)| 0.5 * (a + b)).collect();
                let g = gradient(&psi[k], &c);
                EdgeField::from_fn(&c, |x, y| theta(m[x], m[y]) * g.get(x, y))
            })
            .collect();
        let t = Trajectory::new(mu, v, h.clone(), Some(psi.clone()), 1e-9).unwrap();
        assert!(t.potential_residual(&c).unwrap() < 1e-12);
        let direct = action_quad(&t, &c).unwrap().to_real();
        let via_psi: f64 = (0..2)
            .map(|k| {
                0.5 * (1.3f64.powi(2) * h[k] * h[k]
                    + 0.8f64.powi(2) * edge_norm_sq(&gradient(&psi[k], &c), &t.midpoint(k), &c))
            })
            .sum();
        assert!((direct - via_psi).abs() < 1e-12);
    }
}
