//! Discrete calculus on the chain: the logarithmic mean and its derivatives,
//! gradient, divergence, weighted pairings, mobility and the kinetic integrand.
//!
//! The logarithmic mean is evaluated through `s = ln(u/v)` and the
//! one-variable profile `g(r) = θ(r, 1)`, so `θ(u, v) = v·g(u/v)`. Inside
//! `|s| < SERIES_RADIUS` every quantity comes from its Taylor series in `s`;
//! outside, from `expm1`-based closed forms that carry no cancellation there.

use crate::chain::{EdgeField, MarkovChain};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{lit, Extended, Real};

const SERIES_RADIUS: f64 = 0.1;

/// Taylor coefficients of `g''(e^s)` in `s`.
const G2_SERIES: [f64; 14] = [
    -0.16666666666666666,
    0.25,
    -0.19166666666666668,
    0.1,
    -0.03988095238095238,
    0.012946428571428572,
    -0.0035576499118165784,
    0.0008498677248677249,
    -0.00017989919031585698,
    3.423370610870611e-05,
    -5.922414776581443e-06,
    9.398670112955827e-07,
    -1.3783324381869355e-07,
    1.8794529893240212e-08,
];

#[inline]
fn log_ratio<T: Real>(u: T, v: T) -> T {
    ((u - v) / v).ln_1p()
}

/// `g(e^s) = (e^s − 1)/s`.
fn profile<T: Real>(s: T) -> T {
    if s.abs() < lit(SERIES_RADIUS) {
        // Σ s^k/(k+1)!
        let mut term = T::one();
        let mut sum = T::one();
        for k in 1..14 {
            term = term * s / lit(k as f64 + 1.0);
            sum += term;
        }
        sum
    } else {
        s.exp_m1() / s
    }
}

/// `g'(e^s) = (s − 1 + e^{−s})/s²`.
fn profile_d1<T: Real>(s: T) -> T {
    if s.abs() < lit(SERIES_RADIUS) {
        // Σ (−s)^k / (k! (k+1)(k+2))
        let mut pow = T::one();
        let mut sum = lit(0.5);
        for k in 1..14 {
            pow = pow * (-s) / lit(k as f64);
            sum += pow / lit(((k + 1) * (k + 2)) as f64);
        }
        sum
    } else {
        (s + (-s).exp_m1()) / (s * s)
    }
}

/// `g''(e^s) = e^{−s}(−2s − (s+2)(e^{−s} − 1))/s³`.
fn profile_d2<T: Real>(s: T) -> T {
    if s.abs() < lit(SERIES_RADIUS) {
        let mut pow = T::one();
        let mut sum = T::zero();
        for &c in &G2_SERIES {
            sum += lit::<T>(c) * pow;
            pow *= s;
        }
        sum
    } else {
        let two = lit::<T>(2.0);
        (-s).exp() * (-two * s - (s + two) * (-s).exp_m1()) / (s * s * s)
    }
}

/// Logarithmic mean `θ(u, v)` for `u, v ≥ 0` (unchecked).
#[inline]
pub fn theta<T: Real>(u: T, v: T) -> T {
    if u <= T::zero() || v <= T::zero() {
        T::zero()
    } else if u == v {
        v
    } else {
        // Evaluate from the smaller argument so that θ(u, v) = θ(v, u) exactly.
        let (hi, lo) = if u > v { (u, v) } else { (v, u) };
        lo * profile(log_ratio(hi, lo))
    }
}

/// `∂θ/∂u` for `u, v > 0` (unchecked; `+∞` at `u = 0 < v`).
#[inline]
pub fn theta_d1<T: Real>(u: T, v: T) -> T {
    if u <= T::zero() {
        return if v > T::zero() { T::infinity() } else { T::nan() };
    }
    if v <= T::zero() {
        return T::zero();
    }
    profile_d1(log_ratio(u, v))
}

/// `∂²θ/∂u²`.
#[inline]
pub(crate) fn theta_d11<T: Real>(u: T, v: T) -> T {
    profile_d2(log_ratio(u, v)) / v
}

/// `∂²θ/∂u∂v`.
#[inline]
pub(crate) fn theta_d12<T: Real>(u: T, v: T) -> T {
    -(u / v) * profile_d2(log_ratio(u, v)) / v
}

/// Logarithmic mean with domain checking.
pub fn log_mean<T: Real>(u: T, v: T) -> Result<T> {
    if u < T::zero() || v < T::zero() || u.is_nan() || v.is_nan() {
        return Err(Error::Domain(format!("logarithmic mean of ({u}, {v})")));
    }
    Ok(theta(u, v))
}

/// `∂θ/∂u` with domain checking; both arguments must be positive.
pub fn log_mean_d1<T: Real>(u: T, v: T) -> Result<T> {
    if !(u > T::zero() && v > T::zero()) {
        return Err(Error::Domain(format!("log-mean derivative at ({u}, {v})")));
    }
    Ok(theta_d1(u, v))
}

/// `∇ψ(x, y) = ψ(y) − ψ(x)` in canonical form.
pub fn gradient<T: Real>(psi: &[T], chain: &MarkovChain<T>) -> EdgeField<T> {
    EdgeField::from_fn(chain, |x, y| psi[y] - psi[x])
}

/// `(∇·Ψ)(x) = ½ Σ_y (Ψ(x,y) − Ψ(y,x)) K(x,y)`.
pub fn divergence<T: Real>(field: &EdgeField<T>, chain: &MarkovChain<T>) -> Vec<T> {
    let n = chain.len();
    let half = lit::<T>(0.5);
    (0..n)
        .map(|x| (0..n).map(|y| half * (field.get(x, y) - field.get(y, x)) * chain.k(x, y)).sum())
        .collect()
}

/// `⟨f, g⟩_π`.
pub fn pair_node<T: Real>(f: &[T], g: &[T], chain: &MarkovChain<T>) -> T {
    f.iter().zip(g).zip(chain.pi()).map(|((&a, &b), &w)| a * b * w).sum()
}

/// `⟨F, G⟩_π = ½ Σ F G K π`.
pub fn pair_edge<T: Real>(f: &EdgeField<T>, g: &EdgeField<T>, chain: &MarkovChain<T>) -> T {
    let n = chain.len();
    let mut s = T::zero();
    for x in 0..n {
        for y in 0..n {
            s += f.get(x, y) * g.get(x, y) * chain.conductance(x, y);
        }
    }
    s * lit(0.5)
}

/// Edgewise logarithmic mean `μ̂(x, y) = θ(μ(x), μ(y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mobility<T = f64>(Matrix<T>);

impl<T: Real> Mobility<T> {
    pub fn get(&self, x: usize, y: usize) -> T {
        self.0[(x, y)]
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.0
    }
}

pub fn mobility<T: Real>(mu: &[T]) -> Mobility<T> {
    let n = mu.len();
    let mut m = Matrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            m[(x, y)] = theta(mu[x], mu[y]);
        }
    }
    Mobility(m)
}

/// `‖Ψ‖²_μ = ⟨Ψ, μ̂∗Ψ⟩_π`.
pub fn edge_norm_sq<T: Real>(field: &EdgeField<T>, mu: &[T], chain: &MarkovChain<T>) -> T {
    let n = chain.len();
    let mut s = T::zero();
    for x in 0..n {
        for y in 0..n {
            let f = field.get(x, y);
            if f != T::zero() {
                s += f * f * theta(mu[x], mu[y]) * chain.conductance(x, y);
            }
        }
    }
    s * lit(0.5)
}

/// `α(v, s, t) = v²/θ(s, t)` with `0/0 = 0` and `v²/0 = +∞` for `v ≠ 0`.
pub fn alpha<T: Real>(v: T, s: T, t: T) -> Extended<T> {
    let th = theta(s, t);
    if th > T::zero() {
        Extended::Finite(v * v / th)
    } else if v == T::zero() {
        Extended::zero()
    } else {
        Extended::Infinite
    }
}

/// `A′(μ, V) = ½ Σ α(V(x,y), μ(x), μ(y)) K(x,y) π(x)`.
pub fn a_prime<T: Real>(mu: &[T], field: &EdgeField<T>, chain: &MarkovChain<T>) -> Extended<T> {
    let n = chain.len();
    let mut total = Extended::zero();
    for x in 0..n {
        for y in 0..n {
            let w = chain.conductance(x, y);
            if w > T::zero() && x != y {
                total = total + alpha(field.get(x, y), mu[x], mu[y]).scale(w);
            }
        }
    }
    total.scale(lit(0.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_chain() -> MarkovChain<f64> {
        MarkovChain::from_kernel(vec![vec![0.8, 0.2], vec![0.4, 0.6]], None, 1.0, 1.0).unwrap()
    }

    /// Composite Simpson rule for `∫₀¹ u^ξ v^{1−ξ} dξ`, independent of the closed forms.
    fn theta_quadrature(u: f64, v: f64) -> f64 {
        let m = 2000;
        let h = 1.0 / m as f64;
        let f = |xi: f64| u.powf(xi) * v.powf(1.0 - xi);
        let mut s = f(0.0) + f(1.0);
        for i in 1..m {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn log_mean_cases() {
        assert_eq!(log_mean(2.0, 2.0).unwrap(), 2.0);
        assert_eq!(log_mean(0.0, 5.0).unwrap(), 0.0);
        let q = theta_quadrature(4.0, 2.0);
        assert!((q - 2.885390).abs() < 1e-6);
        assert!((log_mean(4.0, 2.0).unwrap() - q).abs() < 1e-12);
        assert!(log_mean(-1.0, 2.0).is_err());
    }

    #[test]
    fn log_mean_matches_quadrature_near_and_far_from_diagonal() {
        for &(u, v) in &[(1.0, 1.05), (1.0, 1.2), (3.0, 0.01), (1e-3, 7.0), (2.0, 2.0 + 1e-9)] {
            let q = theta_quadrature(u, v);
            assert!((theta(u, v) - q).abs() < 1e-10 * q.max(1.0), "({u},{v})");
        }
    }

    #[test]
    fn derivative_examples() {
        assert!((log_mean_d1(3.0_f64, 3.0).unwrap() - 0.5).abs() < 1e-15);
        let h = 1e-6;
        let fd1 = |u: f64, v: f64| (theta(u + h, v) - theta(u - h, v)) / (2.0 * h);
        let euler = fd1(4.0, 2.0) * 4.0 + fd1(2.0, 4.0) * 2.0;
        assert!((euler - 2.885390).abs() < 1e-6);
        let e = std::f64::consts::E;
        assert!((log_mean_d1(1.0, e).unwrap() - fd1(1.0, e)).abs() < 1e-5);
        assert!(log_mean_d1(0.0, 1.0).is_err());
    }

    #[test]
    fn second_derivatives_match_finite_differences() {
        let h = 1e-5;
        for &(u, v) in &[(0.7_f64, 1.3), (1.0, 1.01), (2.0, 2.0), (0.05, 3.0), (1.0, 1.0 + 1e-7)] {
            let d11 = (theta_d1(u + h, v) - theta_d1(u - h, v)) / (2.0 * h);
            let d12 = (theta_d1(u, v + h) - theta_d1(u, v - h)) / (2.0 * h);
            assert!((theta_d11(u, v) - d11).abs() < 1e-6 * (1.0 + d11.abs()), "d11 at ({u},{v})");
            assert!((theta_d12(u, v) - d12).abs() < 1e-6 * (1.0 + d12.abs()), "d12 at ({u},{v})");
        }
    }

    #[test]
    fn series_and_closed_form_meet_continuously() {
        let r = SERIES_RADIUS;
        for &s in &[r * (1.0 - 1e-12), r * (1.0 + 1e-12), -r * (1.0 - 1e-12), -r * (1.0 + 1e-12)] {
            let a = profile_d1(s);
            let b = (s + (-s).exp_m1()) / (s * s);
            assert!((a - b).abs() < 1e-14);
            let c = profile_d2(s);
            let d = (-s).exp() * (-2.0 * s - (s + 2.0) * (-s).exp_m1()) / (s * s * s);
            assert!((c - d).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_examples() {
        let c = two_state_chain();
        let g = gradient(&[0.0, 1.0], &c);
        assert_eq!(g.get(0, 1), 1.0);
        assert_eq!(g.get(1, 0), -1.0);
        assert_eq!(gradient(&[3.0, 3.0], &c), EdgeField::zeros(2));

        let tri = MarkovChain::from_kernel(
            vec![vec![0.4, 0.3, 0.3], vec![0.3, 0.4, 0.3], vec![0.3, 0.3, 0.4]],
            None,
            1.0,
            1.0,
        )
        .unwrap();
        let g = gradient(&[1.0, 4.0, 2.0], &tri);
        assert_eq!(g.get(0, 1), 3.0);
        assert_eq!(g.get(1, 2), -2.0);
        assert_eq!(g.get(0, 2), 1.0);
        assert!(g.is_antisymmetric(0.0));
    }

    #[test]
    fn divergence_examples() {
        let c = two_state_chain();
        let f = EdgeField::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let d = divergence(&f, &c);
        assert!((d[0] - 0.2).abs() < 1e-15 && (d[1] + 0.4).abs() < 1e-15);
        assert!(pair_node(&d, &[1.0, 1.0], &c).abs() < 1e-15);
        let sym = EdgeField::from_rows(&[vec![0.0, 2.5], vec![2.5, 0.0]]);
        assert_eq!(divergence(&sym, &c), vec![0.0, 0.0]);
        assert_eq!(divergence(&EdgeField::zeros(2), &c), vec![0.0, 0.0]);
    }

    #[test]
    fn pairing_examples() {
        let c = two_state_chain();
        assert!((pair_node(&[1.0, 1.0], &[1.0, 1.0], &c) - 1.0).abs() < 1e-15);
        let f = EdgeField::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        assert!((pair_edge(&f, &f, &c) - 0.133333333333333).abs() < 1e-12);
    }

    #[test]
    fn mobility_and_norm_examples() {
        let c = two_state_chain();
        assert_eq!(mobility(&[2.0, 2.0]).get(0, 1), 2.0);
        assert_eq!(mobility(&[0.0, 5.0]).get(0, 1), 0.0);
        assert!((mobility(&[4.0_f64, 2.0]).get(0, 1) - 2.885390).abs() < 1e-6);
        let g = gradient(&[0.0, 1.0], &c);
        assert!((edge_norm_sq(&g, &[2.0, 2.0], &c) - 4.0 / 15.0).abs() < 1e-10);
        assert_eq!(edge_norm_sq(&g, &[0.0, 0.0], &c), 0.0);
        assert_eq!(edge_norm_sq(&EdgeField::zeros(2), &[1.0, 3.0], &c), 0.0);
    }

    #[test]
    fn alpha_examples() {
        assert_eq!(alpha(0.0, 0.0, 0.0), Extended::Finite(0.0));
        assert_eq!(alpha(1.0, 0.0, 3.0), Extended::Infinite);
        let v = alpha(2.0, 4.0, 2.0).finite().unwrap();
        assert!((v - 4.0 / theta_quadrature(4.0, 2.0)).abs() < 1e-5);
        assert!((v - 1.38629).abs() < 1e-5);
    }

    #[test]
    fn a_prime_infinite_on_empty_edge() {
        let c = two_state_chain();
        let f = EdgeField::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        assert_eq!(a_prime(&[0.0, 1.0], &f, &c), Extended::Infinite);
        assert_eq!(a_prime(&[0.0, 1.0], &EdgeField::zeros(2), &c), Extended::Finite(0.0));
    }

    #[test]
    fn single_precision_smoke() {
        let t: f32 = theta(4.0_f32, 2.0);
        assert!((t - 2.885_39).abs() < 1e-5);
        assert!((theta_d1(3.0_f32, 3.0) - 0.5).abs() < 1e-6);
    }
}
