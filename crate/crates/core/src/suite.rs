//! Acceptance battery shared by the test suite and the command-line runner.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::action::{action_linsq, action_quad, antisymmetrize, rearrange_source, Trajectory};
use crate::calculus::{alpha, divergence, gradient, pair_edge, pair_node, theta, theta_d1};
use crate::chain::{total_mass, ChainOptions, EdgeField, MarkovChain};
use crate::duality::{certificate_from_primal, dual_value, feasibility_margin, DualCertificate, FEAS_TOL};
use crate::error::Result;
use crate::geodesic::{geodesic_rhs, ray_fan, shoot, GeodesicState, RayOptions, ShootOptions, StopReason};
use crate::transport::{check_nonlocality, distance_d, distance_me, distance_w, SolveOptions};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] criterion {}: {} ({:.2}s) {}", self.id, self.name, self.seconds, self.detail)
    }
}

pub const CRITERIA: [&str; 8] = [
    "span-direction distance",
    "ray-fan reproduction",
    "metric comparison",
    "geodesic-space properties",
    "non-locality",
    "inequality battery",
    "cross-solver agreement",
    "weak duality",
];

/// The two-state chain used throughout: `K = [[0.8, 0.2], [0.4, 0.6]]`, `p = 1`, `a = b = 1`.
pub fn two_state_chain() -> MarkovChain<f64> {
    MarkovChain::from_kernel(vec![vec![0.8, 0.2], vec![0.4, 0.6]], None, 1.0, 1.0).expect("valid chain")
}

/// Random reversible chain on the complete graph with random `π`, `p`, `a`, `b`.
pub fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> MarkovChain<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let pi: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let mut k = vec![vec![0.0; n]; n];
    for x in 0..n {
        for y in x + 1..n {
            let c = rng.gen_range(0.1..1.0) * pi[x].min(pi[y]) * 0.9 / (n - 1) as f64;
            k[x][y] = c / pi[x];
            k[y][x] = c / pi[y];
        }
    }
    for x in 0..n {
        let off: f64 = (0..n).filter(|&y| y != x).map(|y| k[x][y]).sum();
        k[x][x] = 1.0 - off;
    }
    let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let labels = (0..n).map(|i| format!("s{i}")).collect();
    MarkovChain::new(
        labels,
        k,
        Some(pi),
        Some(p),
        rng.gen_range(0.7..1.5),
        rng.gen_range(0.7..1.5),
        ChainOptions { normalize_p: true },
    )
    .expect("random chain is valid")
}

pub fn random_measure(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Scales `mu` to unit `π`-mass.
pub fn normalized(mu: &[f64], chain: &MarkovChain<f64>) -> Vec<f64> {
    let m = total_mass(mu, chain);
    mu.iter().map(|v| v / m).collect()
}

/// `min_c ‖d − c p‖∞`.
pub fn span_distance(d: &[f64], p: &[f64]) -> f64 {
    let f = |c: f64| d.iter().zip(p).fold(0.0f64, |m, (&a, &b)| m.max((a - c * b).abs()));
    let ratios: Vec<f64> = d.iter().zip(p).map(|(a, b)| a / b).collect();
    let (mut lo, mut hi) = (ratios.iter().copied().fold(f64::INFINITY, f64::min), ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    f(0.5 * (lo + hi))
}

fn timed(id: usize, body: impl FnOnce() -> Result<(bool, String)>) -> CriterionResult {
    let start = Instant::now();
    let (passed, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionResult { id, name: CRITERIA[id - 1].to_string(), passed, detail, seconds: start.elapsed().as_secs_f64() }
}

pub fn run_criterion(id: usize) -> CriterionResult {
    match id {
        1 => timed(1, criterion_span),
        2 => timed(2, criterion_rays),
        3 => timed(3, criterion_comparison),
        4 => timed(4, criterion_geodesic_space),
        5 => timed(5, criterion_nonlocality),
        6 => timed(6, criterion_battery),
        7 => timed(7, criterion_cross_solver),
        8 => timed(8, criterion_duality),
        _ => CriterionResult { id, name: "unknown".into(), passed: false, detail: "no such criterion".into(), seconds: 0.0 },
    }
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=CRITERIA.len()).map(run_criterion).collect()
}

fn criterion_span() -> Result<(bool, String)> {
    let start = Instant::now();
    let c = two_state_chain();
    let mu0 = [0.6, 0.8];
    let mu1 = [1.1, 1.3];
    let o = SolveOptions::default();
    let w = distance_w(&mu0, &mu1, &c, 64, &o)?;
    let d = distance_d(&mu0, &mu1, &c, 64, &o)?;
    let cert = certificate_from_primal(&w, &c)?;
    let gap = (0.5 * w.value - cert.dual_value).abs();
    // The closed-form certificate φ ≡ 0.5.
    let constant = vec![vec![0.5; 2]; 65];
    let closed = dual_value(&constant, &mu0, &mu1, &c);
    let closed_gap = (0.5 * w.value - closed).abs();
    let closed_feasible = feasibility_margin(&constant, &c) <= FEAS_TOL;
    let secs = start.elapsed().as_secs_f64();
    let ok = (w.distance - 0.5).abs() <= 1e-3
        && (d.distance - 0.5).abs() <= 1e-3
        && gap <= 1e-6
        && cert.is_feasible()
        && closed_gap <= 1e-6
        && closed_feasible
        && secs <= 10.0;
    Ok((ok, format!("W={:.9} D={:.9} gap={gap:.2e} closed-form gap={closed_gap:.2e} runtime={secs:.2}s", w.distance, d.distance)))
}

fn criterion_rays() -> Result<(bool, String)> {
    let start = Instant::now();
    let c = two_state_chain();
    let opts = RayOptions { t_max: 3.0, eps_bd: 1e-6, dt_min: 5e-4, rtol: 1e-7, ..RayOptions::default() };
    let mut ok = true;
    let mut detail = Vec::new();
    for s in [[0.6, 0.8], [0.05, 1.0]] {
        let rays = ray_fan(&s, &c, 72, &opts)?;
        let mut counts = [0usize; 3];
        let mut drift = 0.0f64;
        for r in &rays {
            let last = r.samples.last().expect("ray has samples");
            let consistent = match r.stop_reason {
                StopReason::ReachedTmax => {
                    counts[0] += 1;
                    (r.stop_time - opts.t_max).abs() <= 1e-12
                }
                StopReason::BoundaryTouch => {
                    counts[1] += 1;
                    last.state.mu.iter().copied().fold(f64::INFINITY, f64::min) <= 2.0 * opts.eps_bd
                }
                StopReason::StepUnderflow => {
                    counts[2] += 1;
                    r.stop_time < opts.t_max
                }
            };
            ok &= consistent && r.speed_drift <= 1e-4;
            drift = drift.max(r.speed_drift);
        }
        ok &= rays.len() == 72;
        detail.push(format!(
            "start {s:?}: {} rays (tmax {}, boundary {}, underflow {}), max drift {drift:.2e}",
            rays.len(),
            counts[0],
            counts[1],
            counts[2]
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 30.0;
    Ok((ok, format!("{}; runtime={secs:.2}s", detail.join("; "))))
}

struct ComparisonOutcome {
    d_le_w: bool,
    strict_dw: Option<bool>,
    strict_wme: bool,
    worst_dw: f64,
    worst_wme: f64,
}

fn comparison_instance(seed: u64) -> Result<ComparisonOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 + (seed as usize % 3);
    let c = random_chain(&mut rng, n).with_weights(1.0, 1.0);
    let mu0 = random_measure(&mut rng, n, 0.2, 2.0);
    let mu1 = random_measure(&mut rng, n, 0.2, 2.0);
    let o = SolveOptions::default();
    let w = distance_w(&mu0, &mu1, &c, 64, &o)?;
    let d = distance_d(&mu0, &mu1, &c, 64, &o)?;
    let diff: Vec<f64> = mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    let strict_dw = (span_distance(&diff, c.p()) >= 0.1).then_some(w.distance - d.distance >= 1e-3);

    let q0 = normalized(&random_measure(&mut rng, n, 0.2, 2.0), &c);
    let q1 = normalized(&random_measure(&mut rng, n, 0.2, 2.0), &c);
    let wq = distance_w(&q0, &q1, &c, 64, &o)?;
    let me = distance_me(&q0, &q1, &c, 64, &o)?;
    Ok(ComparisonOutcome {
        d_le_w: d.distance <= w.distance + 2e-3,
        strict_dw,
        strict_wme: wq.distance <= me.distance - 1e-3,
        worst_dw: w.distance - d.distance,
        worst_wme: me.distance - wq.distance,
    })
}

fn criterion_comparison() -> Result<(bool, String)> {
    let outcomes: Vec<Result<ComparisonOutcome>> = (0..20u64).into_par_iter().map(|s| comparison_instance(1000 + s)).collect();
    let outcomes: Vec<ComparisonOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let d_le_w = outcomes.iter().all(|o| o.d_le_w);
    let strict: Vec<bool> = outcomes.iter().filter_map(|o| o.strict_dw).collect();
    let strict_ok = strict.iter().all(|&b| b);
    let strict_bad = strict.iter().filter(|&&b| !b).count();
    let wme_bad = outcomes.iter().filter(|o| !o.strict_wme).count();
    let wme = wme_bad == 0;
    let min_dw = outcomes.iter().filter(|o| o.strict_dw.is_some()).map(|o| o.worst_dw).fold(f64::INFINITY, f64::min);
    let min_wme = outcomes.iter().map(|o| o.worst_wme).fold(f64::INFINITY, f64::min);
    Ok((
        d_le_w && strict_ok && wme,
        format!(
            "20 instances: D<=W+2e-3 {d_le_w}; W-D>=1e-3 violated on {strict_bad}/{} eligible, min gap {min_dw:.3e}; W<=ME-1e-3 violated on {wme_bad}/20, min gap {min_wme:.3e}",
            strict.len()
        ),
    ))
}

fn geodesic_instances() -> Vec<(MarkovChain<f64>, Vec<f64>, Vec<f64>)> {
    let c = two_state_chain();
    let mut out = vec![
        (c.clone(), vec![1.0, 0.0], vec![0.0, 1.0]),
        (c.clone(), vec![0.6, 0.8], vec![1.2, 0.2]),
        (c, vec![0.6, 0.8], vec![1.1, 1.3]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    for i in 0..5 {
        let n = 2 + i % 3;
        let ch = random_chain(&mut rng, n);
        let a = random_measure(&mut rng, n, 0.1, 2.0);
        let b = random_measure(&mut rng, n, 0.1, 2.0);
        out.push((ch, a, b));
    }
    out
}

fn criterion_geodesic_space() -> Result<(bool, String)> {
    let mut ok = true;
    let mut worst_sv = 0.0f64;
    let mut worst_up = f64::NEG_INFINITY;
    let mut worst_down = f64::NEG_INFINITY;
    for (c, a, b) in geodesic_instances() {
        let w = distance_w(&a, &b, &c, 64, &SolveOptions::default())?;
        ok &= w.converged && w.speed_variation <= 5e-2;
        worst_sv = worst_sv.max(w.speed_variation);
        let base = action_quad(&w.trajectory, &c)?.to_real();
        for post in [rearrange_source(&w.trajectory, &c)?, antisymmetrize(&w.trajectory, &c)] {
            let v = action_quad(&post, &c)?.to_real();
            worst_up = worst_up.max(v - base);
            worst_down = worst_down.max(w.value - v);
            ok &= v - base <= 1e-10 && v >= w.value - 1e-6;
        }
    }
    Ok((
        ok,
        format!("max speed variation {worst_sv:.3e}; post-processing: max increase {worst_up:.2e}, max improvement {worst_down:.2e}"),
    ))
}

fn criterion_nonlocality() -> Result<(bool, String)> {
    let mut cases = vec![(two_state_chain(), vec![1.0, 0.0], vec![0.0, 1.0])];
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    for i in 0..5 {
        let c = random_chain(&mut rng, 3);
        let mut a = random_measure(&mut rng, 3, 0.2, 2.0);
        let mut b = random_measure(&mut rng, 3, 0.2, 2.0);
        a[i % 3] = 0.0;
        b[(i + 1) % 3] = 0.0;
        if i % 2 == 0 {
            a[(i + 2) % 3] = 0.0;
        }
        cases.push((c, a, b));
    }
    let mut ok = true;
    let mut min_mass = f64::INFINITY;
    let mut min_h = f64::INFINITY;
    for (c, a, b) in cases {
        let w = distance_w(&a, &b, &c, 64, &SolveOptions::default())?;
        let diag = check_nonlocality(&w);
        ok &= w.converged && !diag.vacuous && diag.min_interior_mass > 0.0 && diag.min_abs_source > 0.0;
        min_mass = min_mass.min(diag.min_interior_mass);
        min_h = min_h.min(diag.min_abs_source);
    }
    Ok((ok, format!("6 instances: min interior mass {min_mass:.3e}, min |h_k| {min_h:.3e}")))
}

fn random_trajectory(rng: &mut ChaCha8Rng, c: &MarkovChain<f64>, steps: usize) -> Result<Trajectory<f64>> {
    let n = c.len();
    let mu0 = random_measure(rng, n, 2.0, 3.0);
    let v = (0..steps).map(|_| EdgeField::from_fn(c, |_, _| rng.gen_range(-1.0..1.0))).collect();
    let h = (0..steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Trajectory::integrate(&mu0, v, h, c, 1e-9)
}

fn criterion_battery() -> Result<(bool, String)> {
    let samples = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(6000);
    let mut fails: Vec<String> = Vec::new();
    let mut worst = [0.0f64; 6];
    let pos = |rng: &mut ChaCha8Rng| 10f64.powf(rng.gen_range(-3.0..1.0));
    for _ in 0..samples {
        let (u, v, lam) = (pos(&mut rng), pos(&mut rng), pos(&mut rng));
        let t = theta(u, v);
        if theta(v, u) != t {
            fails.push("theta symmetry".into());
        }
        let hom = (theta(lam * u, lam * v) - lam * t).abs() / (lam * t);
        worst[0] = worst[0].max(hom);
        let up = u * (1.0 + rng.gen_range(0.0..1.0));
        if theta(up, v) < t * (1.0 - 1e-15) {
            fails.push(format!("theta monotone at ({u}, {v})"));
        }
        let euler = (u * theta_d1(u, v) + v * theta_d1(v, u) - t).abs() / t;
        worst[1] = worst[1].max(euler);

        let z1 = (rng.gen_range(-2.0..2.0), pos(&mut rng), pos(&mut rng));
        let z2 = (rng.gen_range(-2.0..2.0), pos(&mut rng), pos(&mut rng));
        let mid = alpha(0.5 * (z1.0 + z2.0), 0.5 * (z1.1 + z2.1), 0.5 * (z1.2 + z2.2)).to_real();
        let avg = 0.5 * (alpha(z1.0, z1.1, z1.2).to_real() + alpha(z2.0, z2.1, z2.2).to_real());
        worst[2] = worst[2].max((mid - avg) / avg.max(1.0));
        let ray = (alpha(lam * z1.0, lam * z1.1, lam * z1.2).to_real() - lam * alpha(z1.0, z1.1, z1.2).to_real()).abs()
            / (lam * alpha(z1.0, z1.1, z1.2).to_real()).max(1.0);
        worst[3] = worst[3].max(ray);
    }
    let chains: Vec<MarkovChain<f64>> = (0..4).map(|i| random_chain(&mut rng, 2 + i % 3)).collect();
    let mut jensen_bad = 0;
    let mut rearr_bad = 0;
    let mut anti_bad = 0;
    for i in 0..samples {
        let c = &chains[i % chains.len()];
        let n = c.len();
        let psi = random_measure(&mut rng, n, -1.0, 1.0);
        let field = EdgeField::from_fn(c, |_, _| rng.gen_range(-1.0..1.0));
        let div = divergence(&field, c);
        let ibp = (pair_edge(&gradient(&psi, c), &field, c) + pair_node(&psi, &div, c)).abs();
        worst[4] = worst[4].max(ibp);
        worst[5] = worst[5].max(pair_node(&div, &vec![1.0; n], c).abs());

        let traj = random_trajectory(&mut rng, c, 8)?;
        let quad = action_quad(&traj, c)?.to_real();
        if action_linsq(&traj, c)?.to_real() > quad * (1.0 + 1e-12) {
            jensen_bad += 1;
        }
        if action_quad(&rearrange_source(&traj, c)?, c)?.to_real() > quad * (1.0 + 1e-12) {
            rearr_bad += 1;
        }
        let anti = antisymmetrize(&traj, c);
        let div_change = (0..traj.intervals())
            .map(|k| {
                let a = divergence(&traj.v[k], c);
                let b = divergence(&anti.v[k], c);
                a.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
            })
            .fold(0.0f64, f64::max);
        if action_quad(&anti, c)?.to_real() > quad * (1.0 + 1e-12) || div_change > 1e-14 {
            anti_bad += 1;
        }
    }
    let limits = [1e-12, 1e-8, 1e-10, 1e-10, 1e-12, 1e-12];
    let names = ["homogeneity", "euler", "alpha midpoint", "alpha ray", "integration by parts", "mass conservation"];
    for ((w, l), name) in worst.iter().zip(limits).zip(names) {
        if !(*w <= l) {
            fails.push(format!("{name} {w:.2e} > {l:.0e}"));
        }
    }
    for (count, name) in [(jensen_bad, "jensen"), (rearr_bad, "rearrangement"), (anti_bad, "antisymmetrization")] {
        if count > 0 {
            fails.push(format!("{name}: {count} violations"));
        }
    }
    let summary = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.1e}")).collect::<Vec<_>>().join(", ");
    Ok((fails.is_empty(), if fails.is_empty() { summary } else { format!("{}; {summary}", fails.join("; ")) }))
}

/// Largest mismatch between the three right-hand sides and central
/// differences of `½‖∇ψ‖²_μ`.
pub fn rhs_first_variation_residual(c: &MarkovChain<f64>, mu: &[f64], psi: &[f64], h: f64) -> Result<f64> {
    let n = c.len();
    let (a2, b2) = (c.a() * c.a(), c.b() * c.b());
    let kin = |m: &[f64], q: &[f64]| 0.5 * crate::calculus::edge_norm_sq(&gradient(q, c), m, c);
    let state = GeodesicState::from_potential(mu.to_vec(), h, psi, c);
    let rhs = geodesic_rhs(&state, c)?;
    let eps = 1e-6;
    let mut worst = 0.0f64;
    let mut f = vec![0.0; n];
    for x in 0..n {
        let (mut qp, mut qm) = (psi.to_vec(), psi.to_vec());
        qp[x] += eps;
        qm[x] -= eps;
        let d_psi = (kin(mu, &qp) - kin(mu, &qm)) / (2.0 * eps);
        worst = worst.max((rhs.mu[x] - (h * c.p()[x] + d_psi / c.pi()[x])).abs());
        let (mut mp, mut mm) = (mu.to_vec(), mu.to_vec());
        mp[x] += eps;
        mm[x] -= eps;
        f[x] = (kin(&mp, psi) - kin(&mm, psi)) / (2.0 * eps) / c.pi()[x];
    }
    for x in 0..n {
        for y in 0..n {
            if x != y && c.k(x, y) > 0.0 {
                worst = worst.max((rhs.grad_psi.get(x, y) - (f[x] - f[y])).abs());
            }
        }
    }
    let shifted = |s: f64| -> Vec<f64> { mu.iter().zip(c.p()).map(|(m, p)| m + s * p).collect() };
    let dh = -b2 / a2 * (kin(&shifted(eps), psi) - kin(&shifted(-eps), psi)) / (2.0 * eps);
    Ok(worst.max((rhs.h - dh).abs()))
}

fn criterion_cross_solver() -> Result<(bool, String)> {
    let c = two_state_chain();
    let pairs = [
        ([0.6, 0.8], [1.2, 0.2]),
        ([1.2, 0.6], [0.3, 2.4]),
        ([0.5, 0.5], [0.9, 0.3]),
        ([1.0, 2.0], [2.0, 1.0]),
        ([0.3, 1.5], [1.4, 0.9]),
    ];
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut converged = 0;
    for (a, b) in pairs {
        let w = distance_w(&a, &b, &c, 128, &SolveOptions::default())?;
        if let Ok(s) = shoot(&a, &b, &c, &ShootOptions::default()) {
            converged += 1;
            let rel = (s.value - w.value).abs() / w.value;
            worst = worst.max(rel);
            ok &= rel <= 1e-2;
        }
    }
    ok &= converged == pairs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(7000);
    let mut fd = 0.0f64;
    for i in 0..50 {
        let ch = if i % 5 == 0 { c.clone() } else { random_chain(&mut rng, 2 + i % 3) };
        let n = ch.len();
        let mu = random_measure(&mut rng, n, 0.2, 2.0);
        let psi = random_measure(&mut rng, n, -1.0, 1.0);
        let h = rng.gen_range(-1.0..1.0);
        fd = fd.max(rhs_first_variation_residual(&ch, &mu, &psi, h)?);
    }
    ok &= fd <= 1e-6;
    Ok((ok, format!("shooting converged on {converged}/5, max relative difference {worst:.2e}; rhs finite-difference residual {fd:.2e}")))
}

fn scaled_certificate(cert: &DualCertificate<f64>, s: f64, c: &MarkovChain<f64>, mu0: &[f64], mu1: &[f64]) -> (Vec<Vec<f64>>, f64, f64) {
    let phi: Vec<Vec<f64>> = cert.phi.iter().map(|v| v.iter().map(|x| s * x).collect()).collect();
    let margin = feasibility_margin(&phi, c);
    let value = dual_value(&phi, mu0, mu1, c);
    (phi, margin, value)
}

fn criterion_duality() -> Result<(bool, String)> {
    let c = two_state_chain();
    let mut cases = vec![
        (c.clone(), vec![0.6, 0.8], vec![1.1, 1.3], false),
        (c.clone(), vec![1.0, 0.0], vec![0.0, 1.0], false),
        (c, vec![0.6, 0.8], vec![1.2, 0.2], true),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8000);
    for i in 0..6 {
        let n = 2 + i % 3;
        let ch = random_chain(&mut rng, n);
        let a = random_measure(&mut rng, n, 0.2, 2.0);
        let b = random_measure(&mut rng, n, 0.2, 2.0);
        cases.push((ch, a, b, true));
    }
    let results: Vec<Result<(bool, f64, f64, usize)>> = cases
        .par_iter()
        .map(|(c, a, b, generic)| {
            let o = SolveOptions::default();
            let primal: Vec<f64> =
                [32, 64, 128].iter().map(|&n| distance_w(a, b, c, n, &o).map(|r| r.value)).collect::<Result<_>>()?;
            let w64 = distance_w(a, b, c, 64, &o)?;
            let w16 = distance_w(a, b, c, 16, &o)?;
            let mut certs = Vec::new();
            for r in [&w64, &w16] {
                let cert = certificate_from_primal(r, c)?;
                for s in [1.0, 0.9, 0.5, 0.0] {
                    certs.push(scaled_certificate(&cert, s, c, a, b));
                }
            }
            let m = total_mass(b, c) - total_mass(a, c);
            let a2 = c.a() * c.a();
            for c0 in [a2 * m, 0.5 * a2 * m, -a2 * m] {
                let phi = vec![vec![c0; c.len()]; 33];
                let margin = feasibility_margin(&phi, c);
                certs.push((phi.clone(), margin, dual_value(&phi, a, b, c)));
            }
            let mut weak = true;
            let mut worst = f64::NEG_INFINITY;
            let mut feasible = 0;
            for (_, margin, value) in &certs {
                if *margin <= FEAS_TOL {
                    feasible += 1;
                    for p in &primal {
                        worst = worst.max(value - 0.5 * p);
                        weak &= *value <= 0.5 * p + 2e-3;
                    }
                }
            }
            let cert = certificate_from_primal(&w64, c)?;
            let gap = if *generic { (0.5 * w64.value - cert.dual_value) / (0.5 * w64.value) } else { 0.0 };
            Ok((weak && cert.is_feasible(), worst, gap, feasible))
        })
        .collect();
    let results: Vec<(bool, f64, f64, usize)> = results.into_iter().collect::<Result<_>>()?;
    let weak = results.iter().all(|r| r.0);
    let worst = results.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let max_gap = results.iter().map(|r| r.2).fold(0.0f64, f64::max);
    let feasible: usize = results.iter().map(|r| r.3).sum();
    Ok((
        weak && max_gap <= 5e-2,
        format!("{feasible} feasible certificates, max dual - primal/2 {worst:.2e}; max relative gap on generic instances {max_gap:.2e}"),
    ))
}
