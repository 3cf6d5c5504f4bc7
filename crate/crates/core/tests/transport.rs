use graphflow_core::suite::{normalized, two_state_chain, random_chain, random_measure, span_distance};
use graphflow_core::{check_nonlocality, distance_d, distance_me, distance_w, MarkovChain, Metric, SolveOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn span_direction_distances() {
    let c = two_state_chain();
    let o = SolveOptions::default();
    let w = distance_w(&[0.6, 0.8], &[1.1, 1.3], &c, 64, &o).unwrap();
    assert!((w.distance - 0.5).abs() < 1e-3);
    let d = distance_d(&[0.6, 0.8], &[1.1, 1.3], &c, 64, &o).unwrap();
    assert!((d.distance - 0.5).abs() < 1e-3);
    let shift = d.shift.unwrap();
    assert!((shift.h0 - 0.5).abs() < 1e-3 && shift.h1.abs() < 1e-3);
    let nl = check_nonlocality(&w);
    assert!((nl.min_abs_source - 0.5).abs() < 1e-3);
}

#[test]
fn equal_endpoints() {
    let c = two_state_chain();
    let o = SolveOptions::default();
    for metric in [Metric::W, Metric::ME, Metric::D] {
        let r = match metric {
            Metric::W => distance_w(&[0.6, 0.8], &[0.6, 0.8], &c, 16, &o),
            Metric::ME => distance_me(&[0.6, 0.8], &[0.6, 0.8], &c, 16, &o),
            Metric::D => distance_d(&[0.6, 0.8], &[0.6, 0.8], &c, 16, &o),
        }
        .unwrap();
        assert_eq!(r.value, 0.0);
        assert!(check_nonlocality(&r).vacuous);
        if let Some(s) = r.shift {
            assert_eq!((s.h0, s.h1), (0.0, 0.0));
        }
    }
}

#[test]
fn distance_is_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let o = SolveOptions::default();
    for _ in 0..5 {
        let c = random_chain(&mut rng, 3);
        let mu0 = random_measure(&mut rng, 3, 0.2, 2.0);
        let mu1 = random_measure(&mut rng, 3, 0.2, 2.0);
        let f = distance_w(&mu0, &mu1, &c, 64, &o).unwrap();
        let b = distance_w(&mu1, &mu0, &c, 64, &o).unwrap();
        assert!((f.distance - b.distance).abs() <= 2e-3, "{} vs {}", f.distance, b.distance);
    }
}

#[test]
fn conservative_metric_is_strictly_larger_on_two_state_chain() {
    let c = two_state_chain();
    let o = SolveOptions::default();
    let mu0 = normalized(&[0.3, 2.0], &c);
    let mu1 = normalized(&[1.8, 0.4], &c);
    let w = distance_w(&mu0, &mu1, &c, 64, &o).unwrap();
    let me = distance_me(&mu0, &mu1, &c, 64, &o).unwrap();
    assert!(w.distance < me.distance - 1e-3, "W {} ME {}", w.distance, me.distance);
}

#[test]
fn shift_metric_is_below_w_off_span() {
    let c = MarkovChain::from_kernel(
        vec![vec![0.5, 0.3, 0.2], vec![0.3, 0.4, 0.3], vec![0.2, 0.3, 0.5]],
        None,
        1.0,
        1.0,
    )
    .unwrap();
    let (mu0, mu1) = ([0.3, 1.5, 0.8], [1.4, 0.5, 1.0]);
    let diff: Vec<f64> = mu1.iter().zip(&mu0).map(|(a, b)| a - b).collect();
    assert!(span_distance(&diff, c.p()) >= 0.1);
    let o = SolveOptions::default();
    let w = distance_w(&mu0, &mu1, &c, 64, &o).unwrap();
    let d = distance_d(&mu0, &mu1, &c, 64, &o).unwrap();
    assert!(d.distance <= w.distance - 1e-3, "D {} W {}", d.distance, w.distance);
}

#[test]
fn mass_mismatch_rejected_by_conservative_metric() {
    let c = two_state_chain();
    assert!(distance_me(&[0.6, 0.8], &[1.0, 1.0], &c, 16, &SolveOptions::default()).is_err());
}

#[test]
fn boundary_endpoints_are_not_local() {
    let c = two_state_chain();
    let r = distance_w(&[1.0, 0.0], &[0.0, 1.0], &c, 64, &SolveOptions::default()).unwrap();
    assert!(r.converged);
    let nl = check_nonlocality(&r);
    assert!(!nl.vacuous && nl.min_interior_mass > 0.0 && nl.min_abs_source > 0.0);
}

#[test]
fn minimizer_has_constant_speed() {
    let c = two_state_chain();
    let r = distance_w(&[0.9, 0.3], &[0.4, 1.2], &c, 64, &SolveOptions::default()).unwrap();
    assert!(r.speed_variation <= 5e-2, "speed variation {}", r.speed_variation);
}

#[test]
fn random_initialization_reaches_same_value() {
    let c = two_state_chain();
    let base = distance_w(&[0.9, 0.3], &[0.4, 1.2], &c, 32, &SolveOptions::default()).unwrap();
    let o = SolveOptions { random_init: true, seed: 5, ..Default::default() };
    let r = distance_w(&[0.9, 0.3], &[0.4, 1.2], &c, 32, &o).unwrap();
    assert!((r.value - base.value).abs() < 1e-6 * base.value.max(1.0));
}

#[test]
fn single_precision_span_distance() {
    let c: MarkovChain<f32> = MarkovChain::from_kernel(vec![vec![0.8, 0.2], vec![0.4, 0.6]], None, 1.0, 1.0).unwrap();
    let o = SolveOptions { opt_tol: 1e-4, ..Default::default() };
    let r = distance_w(&[0.6f32, 0.8], &[1.1, 1.3], &c, 16, &o).unwrap();
    assert!((r.distance - 0.5).abs() < 1e-3, "{}", r.distance);
}

#[test]
fn triangle_inequality_and_weak_ordering() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let o = SolveOptions::default();
    for _ in 0..3 {
        let c = random_chain(&mut rng, 3);
        let m: Vec<Vec<f64>> = (0..3).map(|_| random_measure(&mut rng, 3, 0.2, 2.0)).collect();
        let w01 = distance_w(&m[0], &m[1], &c, 64, &o).unwrap().distance;
        let w12 = distance_w(&m[1], &m[2], &c, 64, &o).unwrap().distance;
        let w02 = distance_w(&m[0], &m[2], &c, 64, &o).unwrap().distance;
        assert!(w02 <= w01 + w12 + 3e-3);
        let d02 = distance_d(&m[0], &m[2], &c, 64, &o).unwrap().distance;
        assert!(d02 <= w02 + 2e-3);
        let (q0, q1) = (normalized(&m[0], &c), normalized(&m[1], &c));
        let wq = distance_w(&q0, &q1, &c, 64, &o).unwrap().distance;
        let me = distance_me(&q0, &q1, &c, 64, &o).unwrap().distance;
        assert!(wq <= me + 2e-3);
    }
}

#[test]
fn refinement_does_not_increase_value() {
    let c = two_state_chain();
    let o = SolveOptions::default();
    for (a, b) in [([0.9, 0.3], [0.4, 1.2]), ([0.05, 1.0], [1.0, 0.05])] {
        let coarse = distance_w(&a, &b, &c, 32, &o).unwrap().value;
        let fine = distance_w(&a, &b, &c, 128, &o).unwrap().value;
        assert!(fine <= coarse + 1e-3, "N=128 {fine} vs N=32 {coarse}");
    }
}

#[test]
fn boundary_values_converge_from_below() {
    let c = two_state_chain();
    let o = SolveOptions::default();
    let values: Vec<f64> =
        [16, 32, 64, 128].iter().map(|&n| distance_w(&[1.0, 0.0], &[0.0, 1.0], &c, n, &o).unwrap().value).collect();
    let steps: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(steps.iter().all(|&d| d > 0.0), "{values:?}");
    assert!(steps.windows(2).all(|w| w[1] < w[0]), "{values:?}");
}

#[test]
fn independent_starts_find_the_same_minimizer() {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let c = random_chain(&mut rng, 3);
    let (mu0, mu1) = (random_measure(&mut rng, 3, 0.3, 2.0), random_measure(&mut rng, 3, 0.3, 2.0));
    let a = distance_w(&mu0, &mu1, &c, 32, &SolveOptions { random_init: true, seed: 1, ..Default::default() }).unwrap();
    let b = distance_w(&mu0, &mu1, &c, 32, &SolveOptions { random_init: true, seed: 2, ..Default::default() }).unwrap();
    assert!(a.min_interior_mass > 1e-4);
    let gap = a.trajectory.mu.iter().flatten().zip(b.trajectory.mu.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap <= 1e-3, "trajectories differ by {gap}");
}
