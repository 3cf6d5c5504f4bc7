//! Reduced per-interval energy.
//!
//! On one interval with node measures `μ_k, μ_{k+1}` the cheapest flux and
//! source compatible with the discrete continuity equation are explicit:
//! pairing with 1 forces `h = N⟨μ_{k+1} − μ_k, 1⟩_π`, and the flux is the
//! mobility-weighted gradient solving `∇·V = σ := h p − N(μ_{k+1} − μ_k)`.
//! With `s = π∘σ` and `G(m)` the Laplacian with weights `θ(m_x, m_y)K(x,y)π(x)`
//! the transport part is `E(m, s) = sᵀG⁺s`, jointly convex in `(m, s)`.

use crate::calculus::{theta, theta_d1, theta_d11, theta_d12};
use crate::chain::MarkovChain;
use crate::elliptic::{weighted_laplacian, GaugedLaplacian};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::scalar::{lit, Real};

/// Value, gradient and (optionally) Hessian of
/// `c(μ_k, μ_{k+1}) = a²h² + b²E(m + δ, s)` with `m` the midpoint.
pub(crate) struct IntervalEval<T> {
    pub value: T,
    pub h: T,
    /// `u = G⁺s`; the interval potential is `ψ = −u`.
    pub u: Vec<T>,
    /// Gradient with respect to `μ_k`.
    pub grad_left: Vec<T>,
    /// Gradient with respect to `μ_{k+1}`.
    pub grad_right: Vec<T>,
    /// `[∂²/∂μ_k², ∂²/∂μ_k∂μ_{k+1}, ∂²/∂μ_{k+1}²]`.
    pub hess: Option<[Matrix<T>; 3]>,
}

pub(crate) fn interval_energy<T: Real>(
    chain: &MarkovChain<T>,
    left: &[T],
    right: &[T],
    delta: T,
    steps: T,
    with_hessian: bool,
) -> Result<IntervalEval<T>> {
    let n = chain.len();
    let pi = chain.pi();
    let p = chain.p();
    let a2 = chain.a() * chain.a();
    let b2 = chain.b() * chain.b();
    let half = lit::<T>(0.5);
    let two = lit::<T>(2.0);

    let m: Vec<T> = (0..n).map(|x| half * (left[x] + right[x]) + delta).collect();
    let d: Vec<T> = (0..n).map(|x| right[x] - left[x]).collect();
    let h = steps * d.iter().zip(pi).map(|(&a, &w)| a * w).sum::<T>();
    let s: Vec<T> = (0..n).map(|x| pi[x] * (h * p[x] - steps * d[x])).collect();

    let g = weighted_laplacian(chain, |x, y| theta(m[x], m[y]));
    let sys = GaugedLaplacian::new(g, pi)?;
    let u = sys.solve(&s);
    let transport: T = s.iter().zip(&u).map(|(&a, &b)| a * b).sum();
    let value = a2 * h * h + b2 * transport;

    let edges = chain.edges();
    // ∂c_e/∂m at both ends of every edge.
    let dc: Vec<(T, T)> = edges
        .iter()
        .map(|&(x, y)| {
            let k = chain.conductance(x, y);
            (k * theta_d1(m[x], m[y]), k * theta_d1(m[y], m[x]))
        })
        .collect();

    let mut grad_m = vec![T::zero(); n];
    for (e, &(x, y)) in edges.iter().enumerate() {
        let du = u[x] - u[y];
        grad_m[x] -= dc[e].0 * du * du;
        grad_m[y] -= dc[e].1 * du * du;
    }

    // Jsᵀw for the linear map d ↦ s: (Jsᵀw)_x = N π_x (Σ_y p_y π_y w_y − w_x).
    let js_t = |w: &[T]| -> Vec<T> {
        let pw: T = (0..n).map(|y| p[y] * pi[y] * w[y]).sum();
        (0..n).map(|x| steps * pi[x] * (pw - w[x])).collect()
    };
    let two_u: Vec<T> = u.iter().map(|&v| two * v).collect();
    let jtu = js_t(&two_u);
    let grad_d: Vec<T> = (0..n).map(|x| two * a2 * h * steps * pi[x] + b2 * jtu[x]).collect();

    let grad_left: Vec<T> = (0..n).map(|x| -grad_d[x] + half * b2 * grad_m[x]).collect();
    let grad_right: Vec<T> = (0..n).map(|x| grad_d[x] + half * b2 * grad_m[x]).collect();

    let hess = if with_hessian {
        // Js as a dense matrix: Js[x][j] = N π_x (p_x π_j − [x = j]).
        let mut js = Matrix::zeros(n, n);
        for x in 0..n {
            for j in 0..n {
                js[(x, j)] = steps * pi[x] * (p[x] * pi[j] - if x == j { T::one() } else { T::zero() });
            }
        }
        // Columns G_z u.
        let mut gu = Matrix::zeros(n, n);
        for (e, &(x, y)) in edges.iter().enumerate() {
            let du = u[x] - u[y];
            gu[(x, x)] += dc[e].0 * du;
            gu[(y, x)] -= dc[e].0 * du;
            gu[(x, y)] += dc[e].1 * du;
            gu[(y, y)] -= dc[e].1 * du;
        }
        let solve_cols = |b: &Matrix<T>| -> Matrix<T> {
            let mut out = Matrix::zeros(n, b.cols());
            let mut col = vec![T::zero(); n];
            for j in 0..b.cols() {
                for i in 0..n {
                    col[i] = b[(i, j)];
                }
                let z = sys.solve(&col);
                for i in 0..n {
                    out[(i, j)] = z[i];
                }
            }
            out
        };
        let minv_js = solve_cols(&js);
        let minv_gu = solve_cols(&gu);

        let mut h_dd = js.transpose().matmul(&minv_js);
        h_dd.scale(two * b2);
        let na2 = two * a2 * steps * steps;
        for i in 0..n {
            for j in 0..n {
                h_dd[(i, j)] += na2 * pi[i] * pi[j];
            }
        }
        // H_dm = b² Jsᵀ E_sm with E_sm = −2 M⁻¹ [G_z u].
        let mut h_dm = js.transpose().matmul(&minv_gu);
        h_dm.scale(-two * b2);
        // H_mm = b² (2 (G_z u)ᵀ M⁻¹ (G_w u) − uᵀ G_zw u).
        let mut h_mm = gu.transpose().matmul(&minv_gu);
        h_mm.scale(two);
        for &(x, y) in &edges {
            let k = chain.conductance(x, y);
            let du = u[x] - u[y];
            let w = k * du * du;
            h_mm[(x, x)] -= w * theta_d11(m[x], m[y]);
            h_mm[(y, y)] -= w * theta_d11(m[y], m[x]);
            let cross = w * theta_d12(m[x], m[y]);
            h_mm[(x, y)] -= cross;
            h_mm[(y, x)] -= cross;
        }
        h_mm.scale(b2);

        let quarter = lit::<T>(0.25);
        let mut ll = Matrix::zeros(n, n);
        let mut lr = Matrix::zeros(n, n);
        let mut rr = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let dd = h_dd[(i, j)];
                let dm = h_dm[(i, j)];
                let md = h_dm[(j, i)];
                let mm = quarter * h_mm[(i, j)];
                ll[(i, j)] = dd - half * (dm + md) + mm;
                rr[(i, j)] = dd + half * (dm + md) + mm;
                lr[(i, j)] = -dd + half * (md - dm) + mm;
            }
        }
        ll.symmetrize();
        rr.symmetrize();
        Some([ll, lr, rr])
    } else {
        None
    };

    Ok(IntervalEval { value, h, u, grad_left, grad_right, hess })
}
