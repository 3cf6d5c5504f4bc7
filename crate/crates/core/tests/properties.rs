use graphflow_core::action::{action_quad, antisymmetrize, rearrange_source, Trajectory};
use graphflow_core::calculus::{a_prime, edge_norm_sq, pair_edge, pair_node, theta_d1};
use graphflow_core::duality::{hj_surplus, hj_value};
use graphflow_core::elliptic::{apply_a, project_flux};
use graphflow_core::suite::random_chain;
use graphflow_core::{divergence, gradient, solve_tangent, theta, total_mass, EdgeField, MarkovChain};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chain(seed: u64, n: usize) -> MarkovChain<f64> {
    random_chain(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

fn field(c: &MarkovChain<f64>, vals: &[f64]) -> EdgeField<f64> {
    let n = c.len();
    EdgeField::from_fn(c, |x, y| vals[x * n + y])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theta_is_a_mean(u in 1e-6f64..1e3, v in 1e-6f64..1e3, s in 1e-3f64..1e3) {
        let t = theta(u, v);
        prop_assert_eq!(t, theta(v, u));
        prop_assert!(t >= u.min(v) * (1.0 - 1e-12) && t <= u.max(v) * (1.0 + 1e-12));
        prop_assert!(t <= 0.5 * (u + v) * (1.0 + 1e-12));
        prop_assert!(t >= (u * v).sqrt() * (1.0 - 1e-12));
        prop_assert!((theta(s * u, s * v) - s * t).abs() <= 1e-12 * s * t);
    }

    #[test]
    fn gradient_and_divergence_are_adjoint(seed in 0u64..1000, n in 2usize..6,
                                           psi in prop::collection::vec(-2.0f64..2.0, 6),
                                           vals in prop::collection::vec(-2.0f64..2.0, 36)) {
        let c = chain(seed, n);
        let psi = &psi[..n];
        let f = field(&c, &vals);
        let lhs = pair_edge(&gradient(psi, &c), &f, &c) + pair_node(psi, &divergence(&f, &c), &c);
        prop_assert!(lhs.abs() <= 1e-12);
        let div = divergence(&f, &c);
        prop_assert!(pair_node(&div, &vec![1.0; n], &c).abs() <= 1e-12);
    }

    #[test]
    fn tangent_solve_inverts_the_operator(seed in 0u64..1000, n in 2usize..6,
                                          mu in prop::collection::vec(0.05f64..3.0, 6),
                                          rho in prop::collection::vec(-2.0f64..2.0, 6)) {
        let c = chain(seed, n);
        let (mu, rho) = (&mu[..n], &rho[..n]);
        let t = solve_tangent(mu, rho, &c).unwrap();
        let a = apply_a(mu, &t.psi, &c);
        for x in 0..n {
            prop_assert!((rho[x] + a[x] - t.h * c.p()[x]).abs() <= 1e-9);
        }
        prop_assert!((t.h - total_mass(rho, &c)).abs() <= 1e-12);
    }

    #[test]
    fn projection_does_not_increase_action(seed in 0u64..1000, n in 2usize..5,
                                            mu in prop::collection::vec(0.05f64..3.0, 5),
                                            vals in prop::collection::vec(-2.0f64..2.0, 25)) {
        let c = chain(seed, n);
        let mu = &mu[..n];
        let f = field(&c, &vals).canonical(&c);
        let t = project_flux(mu, &f, &c).unwrap();
        let projected = edge_norm_sq(&t.grad_psi, mu, &c);
        let original = a_prime(mu, &f, &c).to_real();
        prop_assert!(projected <= original + 1e-10);
    }

    #[test]
    fn surplus_dominates_pointwise_values(seed in 0u64..1000,
                                          dot in prop::collection::vec(-1.0f64..0.5, 3),
                                          psi in prop::collection::vec(-1.0f64..1.0, 3),
                                          w in prop::collection::vec(0.0f64..1.0, 3)) {
        let c = chain(seed, 3);
        let grad = gradient(&psi, &c);
        let s = hj_surplus(&dot, &grad, &c);
        let total: f64 = w.iter().sum();
        prop_assume!(total > 1e-6);
        let mu: Vec<f64> = w.iter().zip(c.pi()).map(|(a, p)| a / total / p).collect();
        prop_assert!(hj_value(&dot, &grad, &mu, &c) <= s + 1e-10);
    }

    #[test]
    fn theta_lies_below_its_tangent_planes(s in 1e-3f64..10.0, t in 1e-3f64..10.0, u in 1e-3f64..10.0, v in 1e-3f64..10.0) {
        let tangent = theta_d1(s, t) * u + theta_d1(t, s) * v;
        prop_assert!(tangent >= theta(u, v) - 1e-12 * theta(u, v).max(1.0));
    }

    #[test]
    fn hj_value_is_homogeneous(seed in 0u64..1000, lam in 1e-2f64..1e2,
                               dot in prop::collection::vec(-1.0f64..1.0, 3),
                               psi in prop::collection::vec(-1.0f64..1.0, 3),
                               mu in prop::collection::vec(0.0f64..2.0, 3)) {
        let c = chain(seed, 3);
        let grad = gradient(&psi, &c);
        let scaled: Vec<f64> = mu.iter().map(|m| lam * m).collect();
        let g = hj_value(&dot, &grad, &mu, &c);
        prop_assert!((hj_value(&dot, &grad, &scaled, &c) - lam * g).abs() <= 1e-12 * (lam * g.abs()).max(1.0));
    }

    #[test]
    fn trajectory_post_processing(seed in 0u64..1000, n in 2usize..5,
                                  h in prop::collection::vec(-1.0f64..1.0, 6),
                                  vals in prop::collection::vec(-0.3f64..0.3, 150)) {
        let c = chain(seed, n);
        let v: Vec<EdgeField<f64>> = (0..6).map(|k| field(&c, &vals[k * 25..k * 25 + n * n]).canonical(&c)).collect();
        let traj = Trajectory::integrate(&vec![3.0; n], v, h.clone(), &c, 1e-9).unwrap();
        for k in 0..6 {
            let dm = total_mass(&traj.mu[k + 1], &c) - total_mass(&traj.mu[k], &c);
            prop_assert!((dm - traj.dt() * traj.h[k]).abs() <= 1e-12);
        }

        let r = rearrange_source(&traj, &c).unwrap();
        let mut a = traj.h.clone();
        let mut b = r.h.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        prop_assert_eq!(&r.mu[0], &traj.mu[0]);
        for x in 0..n {
            prop_assert!((r.mu[6][x] - traj.mu[6][x]).abs() <= 1e-12);
        }
        prop_assert!(action_quad(&r, &c).unwrap().to_real() <= action_quad(&traj, &c).unwrap().to_real() + 1e-10);

        let once = antisymmetrize(&traj, &c);
        prop_assert_eq!(antisymmetrize(&once, &c), once);
    }
}
