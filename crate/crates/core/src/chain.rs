//! Reversible Markov chains, nonnegative measures and edge fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lu_solve, Matrix};
use crate::scalar::{lit, to_f64, Real};

/// Largest state count solved directly for the stationary distribution.
const DIRECT_SOLVE_MAX: usize = 64;

/// Tolerance `x`, floored at a few hundred ulps for low-precision scalars.
pub(crate) fn tol<T: Real>(x: f64) -> T {
    lit::<T>(x).max(T::epsilon() * lit(256.0))
}

/// Finite reversible chain with its stationary weight, reference direction
/// `p` and cost weights `a` (source) and `b` (transport).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain<T = f64> {
    labels: Vec<String>,
    kernel: Matrix<T>,
    pi: Vec<T>,
    p: Vec<T>,
    a: T,
    b: T,
}

/// Options for [`MarkovChain::new`].
#[derive(Debug, Clone, Copy, Default)]
pub struct ChainOptions {
    /// Rescale `p` so that `Σ p π = 1` instead of rejecting it.
    pub normalize_p: bool,
}

impl<T: Real> MarkovChain<T> {
    /// Validates and assembles a chain. `pi` is computed when absent, `p`
    /// defaults to the constant density 1.
    pub fn new(
        labels: Vec<String>,
        kernel: Vec<Vec<T>>,
        pi: Option<Vec<T>>,
        p: Option<Vec<T>>,
        a: T,
        b: T,
        opts: ChainOptions,
    ) -> Result<Self> {
        let n = kernel.len();
        if n < 2 {
            return Err(Error::Schema(format!("need at least 2 states, got {n}")));
        }
        if labels.len() != n {
            return Err(Error::Schema(format!("{} labels for {n} kernel rows", labels.len())));
        }
        for (i, row) in kernel.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Schema(format!("kernel row {i} has {} entries, expected {n}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite() || *v < T::zero()) {
                return Err(Error::Schema(format!("kernel row {i} has negative or non-finite entries")));
            }
        }
        if !(a > T::zero()) || !(b > T::zero()) {
            return Err(Error::Schema("cost weights a and b must be positive".into()));
        }
        let kernel = Matrix::from_rows(&kernel);
        for i in 0..n {
            let s: T = kernel.row(i).iter().copied().sum();
            if (s - T::one()).abs() > tol(1e-12) {
                return Err(Error::NotStochastic { row: i, sum: to_f64(s) });
            }
        }
        if !is_irreducible(&kernel) {
            return Err(Error::NotIrreducible);
        }
        let pi = match pi {
            None => stationary_distribution(&kernel)?,
            Some(pi) => {
                check_len(n, pi.len())?;
                if pi.iter().any(|&v| !(v > T::zero())) {
                    return Err(Error::Schema("pi must be strictly positive".into()));
                }
                let s: T = pi.iter().copied().sum();
                if (s - T::one()).abs() > tol(1e-10) {
                    return Err(Error::Schema(format!("pi sums to {s}, expected 1")));
                }
                if stationarity_residual(&kernel, &pi) > tol(1e-10) {
                    return Err(Error::Schema("pi is not stationary for K".into()));
                }
                pi
            }
        };
        for x in 0..n {
            for y in (x + 1)..n {
                let r = (pi[x] * kernel[(x, y)] - pi[y] * kernel[(y, x)]).abs();
                if r > tol(1e-10) {
                    return Err(Error::NotReversible { x, y, residual: to_f64(r) });
                }
            }
        }
        let mut p = p.unwrap_or_else(|| vec![T::one(); n]);
        check_len(n, p.len())?;
        if p.iter().any(|&v| !(v > T::zero()) || !v.is_finite()) {
            return Err(Error::BadReference("p must be strictly positive".into()));
        }
        let mass: T = p.iter().zip(&pi).map(|(&a, &b)| a * b).sum();
        if (mass - T::one()).abs() > tol(1e-10) {
            if opts.normalize_p {
                for v in &mut p {
                    *v /= mass;
                }
            } else {
                return Err(Error::BadReference(format!("<p,1>_pi = {mass}, expected 1")));
            }
        }
        Ok(Self { labels, kernel, pi, p, a, b })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn kernel(&self) -> &Matrix<T> {
        &self.kernel
    }

    #[inline]
    pub fn k(&self, x: usize, y: usize) -> T {
        self.kernel[(x, y)]
    }

    pub fn pi(&self) -> &[T] {
        &self.pi
    }

    pub fn p(&self) -> &[T] {
        &self.p
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    /// Copy with different cost weights.
    pub fn with_weights(&self, a: T, b: T) -> Self {
        Self { a, b, ..self.clone() }
    }

    /// Unordered edges `(x, y)`, `x < y`, with `K(x, y) > 0`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut out = Vec::new();
        for x in 0..n {
            for y in (x + 1)..n {
                if self.kernel[(x, y)] > T::zero() {
                    out.push((x, y));
                }
            }
        }
        out
    }

    /// Symmetric edge conductance `K(x, y) π(x)`.
    #[inline]
    pub fn conductance(&self, x: usize, y: usize) -> T {
        self.kernel[(x, y)] * self.pi[x]
    }

    pub fn to_document(&self) -> ChainDocument {
        let n = self.len();
        ChainDocument {
            states: self.labels.clone(),
            kernel: (0..n).map(|i| self.kernel.row(i).iter().map(|&v| to_f64(v)).collect()).collect(),
            pi: Some(self.pi.iter().map(|&v| to_f64(v)).collect()),
            p: Some(self.p.iter().map(|&v| to_f64(v)).collect()),
            a: to_f64(self.a),
            b: to_f64(self.b),
            normalize_p: false,
        }
    }

    pub fn from_document(doc: &ChainDocument) -> Result<Self> {
        let conv = |v: &[f64]| -> Vec<T> { v.iter().map(|&x| lit(x)).collect() };
        Self::new(
            doc.states.clone(),
            doc.kernel.iter().map(|r| conv(r)).collect(),
            doc.pi.as_deref().map(conv),
            doc.p.as_deref().map(conv),
            lit(doc.a),
            lit(doc.b),
            ChainOptions { normalize_p: doc.normalize_p },
        )
    }

    /// Label-free chain with default weights, for tests and small experiments.
    pub fn from_kernel(kernel: Vec<Vec<T>>, p: Option<Vec<T>>, a: T, b: T) -> Result<Self> {
        let labels = (0..kernel.len()).map(|i| format!("s{i}")).collect();
        Self::new(labels, kernel, None, p, a, b, ChainOptions::default())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}

/// On-disk chain description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainDocument {
    pub states: Vec<String>,
    #[serde(rename = "K")]
    pub kernel: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default = "one")]
    pub b: f64,
    #[serde(default)]
    pub normalize_p: bool,
}

fn one() -> f64 {
    1.0
}

/// Parses and validates a chain document (JSON text).
pub fn load_chain<T: Real>(text: &str) -> Result<MarkovChain<T>> {
    let doc: ChainDocument = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    MarkovChain::from_document(&doc)
}

pub fn save_chain<T: Real>(chain: &MarkovChain<T>) -> Result<String> {
    Ok(serde_json::to_string_pretty(&chain.to_document())?)
}

fn is_irreducible<T: Real>(k: &Matrix<T>) -> bool {
    let n = k.rows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for y in 0..n {
                let w = if forward { k[(x, y)] } else { k[(y, x)] };
                if w > T::zero() && !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

fn stationarity_residual<T: Real>(k: &Matrix<T>, pi: &[T]) -> T {
    let n = pi.len();
    (0..n)
        .map(|x| {
            let s: T = (0..n).map(|y| pi[y] * k[(y, x)]).sum();
            (s - pi[x]).abs()
        })
        .fold(T::zero(), T::max)
}

/// Stationary distribution of an irreducible row-stochastic kernel.
pub fn stationary_distribution<T: Real>(k: &Matrix<T>) -> Result<Vec<T>> {
    let n = k.rows();
    if n == 0 || k.cols() != n {
        return Err(Error::Schema("kernel must be square and nonempty".into()));
    }
    if !is_irreducible(k) {
        return Err(Error::NotIrreducible);
    }
    let mut pi = if n <= DIRECT_SOLVE_MAX {
        // (Kᵀ − I) π = 0 with the last equation replaced by Σ π = 1.
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = k[(j, i)] - if i == j { T::one() } else { T::zero() };
            }
        }
        for j in 0..n {
            a[(n - 1, j)] = T::one();
        }
        let mut rhs = vec![T::zero(); n];
        rhs[n - 1] = T::one();
        let mut pi = lu_solve(&a, &rhs).ok_or(Error::NotIrreducible)?;
        // One step of iterative refinement.
        let r: Vec<T> = a.matvec(&pi).iter().zip(&rhs).map(|(ax, b)| *b - *ax).collect();
        if let Some(d) = lu_solve(&a, &r) {
            for (p, e) in pi.iter_mut().zip(d) {
                *p += e;
            }
        }
        pi
    } else {
        power_iteration(k)
    };
    // Lazy power steps remove solve roundoff without changing the fixed point.
    let half = lit::<T>(0.5);
    for _ in 0..4 {
        if stationarity_residual(k, &pi) <= tol(1e-15) {
            break;
        }
        pi = (0..n)
            .map(|x| half * pi[x] + half * (0..n).map(|y| pi[y] * k[(y, x)]).sum::<T>())
            .collect();
    }
    let s: T = pi.iter().copied().sum();
    for v in &mut pi {
        *v /= s;
    }
    if pi.iter().any(|&v| !(v > T::zero())) {
        return Err(Error::NotIrreducible);
    }
    Ok(pi)
}

fn power_iteration<T: Real>(k: &Matrix<T>) -> Vec<T> {
    let n = k.rows();
    let half = lit::<T>(0.5);
    let mut pi = vec![T::one() / T::from_usize(n).unwrap(); n];
    for _ in 0..100_000 {
        // Lazy chain (I + K)/2 is aperiodic with the same stationary law.
        let next: Vec<T> =
            (0..n).map(|x| half * pi[x] + half * (0..n).map(|y| pi[y] * k[(y, x)]).sum::<T>()).collect();
        let diff = next.iter().zip(&pi).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
        pi = next;
        if diff <= T::epsilon() {
            break;
        }
    }
    pi
}

/// Nonnegative density over the states.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure<T = f64>(Vec<T>);

impl<T: Real> Measure<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::Domain(format!("measure entry {i} is negative or not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![T::zero(); n])
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn into_values(self) -> Vec<T> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Strictly positive in every state.
    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&v| v > T::zero())
    }

    pub fn min(&self) -> T {
        self.0.iter().copied().fold(T::infinity(), T::min)
    }

    /// `self + c·p`, when nonnegative.
    pub fn shifted(&self, c: T, p: &[T]) -> Result<Self> {
        Self::new(self.0.iter().zip(p).map(|(&m, &q)| m + c * q).collect())
    }
}

impl<T> std::ops::Index<usize> for Measure<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

/// `Σ μ(x) π(x)`.
pub fn total_mass<T: Real>(mu: &[T], chain: &MarkovChain<T>) -> T {
    mu.iter().zip(chain.pi()).map(|(&m, &w)| m * w).sum()
}

/// Real function on ordered state pairs, stored densely. Canonical fields
/// vanish wherever `K(x, y) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField<T = f64> {
    n: usize,
    values: Vec<T>,
}

impl<T: Real> EdgeField<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![T::zero(); n * n] }
    }

    /// Builds a field from a dense matrix, forcing zeros off the kernel support.
    pub fn from_fn(chain: &MarkovChain<T>, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let n = chain.len();
        let mut e = Self::zeros(n);
        for x in 0..n {
            for y in 0..n {
                if x != y && chain.k(x, y) > T::zero() {
                    e.values[x * n + y] = f(x, y);
                }
            }
        }
        e
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let values = rows.iter().flat_map(|r| {
            assert_eq!(r.len(), n, "edge field must be square");
            r.iter().copied()
        });
        Self { n, values: values.collect() }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.values[x * self.n + y]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.values[x * self.n + y] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    /// Copy with zeros forced where `K = 0` (including the diagonal).
    pub fn canonical(&self, chain: &MarkovChain<T>) -> Self {
        Self::from_fn(chain, |x, y| self.get(x, y))
    }

    pub fn is_canonical(&self, chain: &MarkovChain<T>) -> bool {
        let n = self.n;
        (0..n).all(|x| (0..n).all(|y| (x != y && chain.k(x, y) > T::zero()) || self.get(x, y) == T::zero()))
    }

    pub fn is_antisymmetric(&self, tol: T) -> bool {
        let n = self.n;
        (0..n).all(|x| (0..n).all(|y| (self.get(x, y) + self.get(y, x)).abs() <= tol))
    }

    /// `½V(x,y) − ½V(y,x)`.
    pub fn antisymmetric_part(&self) -> Self {
        let half = lit::<T>(0.5);
        let n = self.n;
        let mut out = Self::zeros(n);
        for x in 0..n {
            for y in 0..n {
                out.values[x * n + y] = half * self.get(x, y) - half * self.get(y, x);
            }
        }
        out
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { n: self.n, values: self.values.iter().map(|&v| v * c).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max)
    }
}
