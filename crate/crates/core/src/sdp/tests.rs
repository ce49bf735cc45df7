use proptest::prelude::*;

use super::*;
use crate::metric::{verify_outlier_embedding, Graph};
use crate::random::{random_metric, rng_from_seed, MetricFamily};

fn line3() -> MetricSpace {
    MetricSpace::from_matrix(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]], 1e-9).unwrap()
}

fn claw() -> MetricSpace {
    MetricSpace::from_graph(&Graph::star(3)).unwrap()
}

fn quick() -> SolverOptions {
    SolverOptions { max_iters: 20_000, ..SolverOptions::default() }
}

#[test]
fn penalty_examples() {
    assert_eq!(f_of_k(0, 3.0, GMode::Weak, None).unwrap(), 9.0);
    assert_eq!(f_of_k(1, 2.0, GMode::Weak, None).unwrap(), 145_924.0);
    assert_eq!(f_of_k(1, 5.0, GMode::Strong, Some(1.0)).unwrap(), 328_329.0);
    assert_eq!(f_of_k(1, 1.0, GMode::Strong, None), Err(SdpError::MissingZetaK));
    assert!(matches!(f_of_k(1, 0.5, GMode::Weak, None), Err(SdpError::InvalidZeta(_))));
}

#[test]
fn bicriteria_examples() {
    let g2 = 2f64.sqrt();
    assert!((bicriteria_bound(1, 1.5, g2, 1.0, 1.5).unwrap() - 6.0).abs() < 1e-12);
    assert_eq!(bicriteria_bound(0, 1.0, 3.0, 50.0, 7.0).unwrap(), 0.0);
    let far = bicriteria_bound(3, 1.0, 1e6, 1.0, 1.0).unwrap();
    assert!((far - 6.0).abs() < 1e-6);
    assert_eq!(bicriteria_bound(1, 1.0, 1.0, 1.0, 1.0), Err(SdpError::GammaNotAboveOne(1.0)));
    assert_eq!(bicriteria_bound_eps(2, 1.0, 0.5, 1.0, 1.0), bicriteria_bound(2, 1.0, 1.5, 1.0, 1.0));
}

#[test]
fn instance_counts_and_substitution() {
    let m = MetricSpace::from_graph(&Graph::cycle(4)).unwrap();
    let inst = build_instance(&m, 1.0, 0.0).unwrap();
    assert_eq!(inst.pair_count(), 6);
    assert_eq!(inst.inequality_count(), 12);
    assert!(matches!(build_instance(&m, 0.9, 1.0), Err(SdpError::InvalidC(_))));
    assert!(matches!(build_instance(&m, 1.0, -1.0), Err(SdpError::InvalidPenalty(_))));

    // The line's own Gram matrix is an exact certificate with no penalties.
    let line = line3();
    let g = centered_gram(&line);
    let inst = build_instance(&line, 1.0, 5.0).unwrap();
    let rep = inst.check_certificate(&g, &[0.0; 3]).unwrap();
    assert!(rep.max_violation() < 1e-12);
    // Doubling the vectors breaks only the upper side.
    let rep = inst.check_certificate(&g.scaled(4.0), &[0.0; 3]).unwrap();
    assert!((rep.upper - 3.0).abs() < 1e-12 && rep.lower <= 0.0);

    // Collapsing everything is fine once one endpoint of every pair pays 1.
    let zero = SymmetricMatrix::from_fn(3, |_, _| 0.0);
    assert!(inst.check_certificate(&zero, &[0.0; 3]).unwrap().lower > 0.99);
    assert!(inst.check_certificate(&zero, &[1.0, 1.0, 0.0]).unwrap().max_violation() <= 0.0);
    // delta_y = 1 loosens the upper side to (c^2 + f) d^2.
    let wide = SymmetricMatrix::from_fn(3, |i, j| if i == j && i == 2 { 6.0 } else { 0.0 });
    let rep = inst.check_certificate(&wide, &[0.0, 0.0, 1.0]).unwrap();
    assert!(rep.upper <= 0.0, "{rep:?}");
    assert!(inst.check_certificate(&zero, &[0.0; 2]).is_err());
}

#[test]
fn threshold_example() {
    let t = rounding_threshold(1.0, 2f64.sqrt(), 4.0).unwrap();
    assert!((t - 1.0 / 12.0).abs() < 1e-15);
    assert!((1.0 / (1.0 - 2.0 * t).sqrt() - 1.0 / (5.0f64 / 6.0).sqrt()).abs() < 1e-15);
    assert!(rounding_threshold(1.0, 0.99, 1.0).is_err());
}

#[test]
fn isometric_line_has_zero_objective() {
    for f in [0.0, 1.0, 1e4] {
        let inst = build_instance(&line3(), 1.0, f).unwrap();
        let sol = solve_sdp(&inst, &quick()).unwrap();
        assert!(sol.objective <= 1e-4, "f={f}: {}", sol.objective);
        assert!(sol.max_violation <= 1e-9);
    }
}

#[test]
fn claw_needs_one_penalty() {
    let m = claw();
    let zeta = measured_distortion(&m, 0).unwrap().max(1.0);
    let inst = build_instance(&m, 1.0, f_of_k(1, zeta, GMode::Weak, None).unwrap()).unwrap();
    let sol = solve_sdp(&inst, &quick()).unwrap();
    assert!(sol.objective <= 1.0 + 1e-3);
    assert!(sol.max_violation <= 1e-6);

    // Without a penalty budget the claw cannot be fixed cheaply.
    let inst0 = build_instance(&m, 1.0, 1.0).unwrap();
    let sol0 = solve_sdp(&inst0, &quick()).unwrap();
    assert!(sol0.objective > 1e-2, "{}", sol0.objective);
}

#[test]
fn objective_never_exceeds_n() {
    let mut rng = rng_from_seed(4);
    for fam in MetricFamily::ALL {
        let m = random_metric(fam, 6, &mut rng);
        let inst = build_instance(&m, 1.0, 0.0).unwrap();
        let sol = solve_sdp(&inst, &SolverOptions { max_iters: 200, ..quick() }).unwrap();
        assert!(sol.objective <= 6.0 + 1e-12);
        assert!(sol.max_violation <= 1e-9);
    }
}

#[test]
fn rounding_zero_penalties_keeps_everything() {
    let m = line3();
    let inst = build_instance(&m, 1.0, 4.0).unwrap();
    let sol = SdpSolution {
        g: centered_gram(&m),
        delta: vec![0.0; 3],
        objective: 0.0,
        max_violation: 0.0,
        stats: SolverStats { status: SolveStatus::Converged, iterations: 0, primal_residual: 0.0, dual_residual: 0.0, gap: 0.0 },
    };
    let r = round_solution(&inst, &sol, 2f64.sqrt()).unwrap();
    assert!(r.outliers.is_empty());
    assert_eq!(r.survivors, vec![0, 1, 2]);
    let expect = r.scale;
    assert!((r.embedding.distance(0, 2) / 2.0 - expect).abs() < 1e-9);
    assert!((r.achieved_distortion - 1.0).abs() < 1e-9);
}

#[test]
fn claw_rounds_to_one_outlier() {
    let m = claw();
    let inst = build_instance(&m, 1.0, 4.0).unwrap();
    let sol = solve_sdp(&inst, &quick()).unwrap();
    for gamma in [1.25, 1.5, 2.0] {
        let r = round_solution(&inst, &sol, gamma).unwrap();
        assert!(r.outliers.len() as f64 <= r.count_bound + 1e-9);
        let sub_ok = verify_outlier_embedding(&m, &r.outliers, &r.embedding, gamma, 1e-6).unwrap();
        assert!(sub_ok, "gamma {gamma}: {:?}", r.outliers);
        assert!(r.achieved_distortion <= gamma + 1e-6);
    }
}

#[test]
fn search_examples() {
    let r = search_min_outliers(&line3(), 1.0, 1.5, GMode::Weak, &SearchOptions::default()).unwrap();
    assert_eq!(r.k, 0);
    assert!(r.rounding.outliers.is_empty());
    assert_eq!(r.certified_bound, 0.0);

    let m = claw();
    for mode in [GMode::Weak, GMode::Strong] {
        let r = search_min_outliers(&m, 1.0, 1.5, mode, &SearchOptions::default()).unwrap();
        // The strong penalty at k = 0 is already large enough for the
        // claw's 1.155-distortion embedding to round cleanly at gamma 1.5.
        let expect = if mode == GMode::Weak { 1 } else { 0 };
        assert_eq!(r.k, expect, "{mode:?}");
        assert_eq!(r.trace.len(), expect + 1);
        assert!(r.rounding.outliers.len() as f64 <= r.certified_bound);
        assert!(verify_outlier_embedding(&m, &r.rounding.outliers, &r.rounding.embedding, 1.5, 1e-3).unwrap());
    }
    assert!(matches!(
        search_min_outliers(&m, 1.0, 1.0, GMode::Weak, &SearchOptions::default()),
        Err(SdpError::GammaNotAboveOne(_))
    ));
}

#[test]
fn strong_mode_subset_distortion() {
    let m = claw();
    // Pairs are always isometric.
    assert_eq!(subset_zeta(&m, 2, 5.0, 0, 512).unwrap(), 1.0);
    // Triples include leaf-center-leaf, which is a line.
    let z3 = subset_zeta(&m, 3, 5.0, 0, 512).unwrap();
    assert!((1.0..=5.0).contains(&z3));
    assert_eq!(subset_zeta(&m, 3, 5.0, 0, 2).unwrap(), 5.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn objective_monotone_in_c_and_f(seed in 0u64..1000, n in 3usize..6) {
        let m = random_metric(MetricFamily::WeightedGraph, n, &mut rng_from_seed(seed));
        let opts = quick();
        let solve = |c: f64, f: f64| solve_sdp(&build_instance(&m, c, f).unwrap(), &opts).unwrap().objective;
        let base = solve(1.0, 1.0);
        let tol = 5e-3 * (1.0 + base);
        prop_assert!(solve(1.5, 1.0) <= base + tol);
        prop_assert!(solve(1.0, 4.0) <= base + tol);
    }

    #[test]
    fn rounding_is_sound(seed in 0u64..1000, n in 3usize..7, gamma in 1.05f64..3.0) {
        let m = random_metric(MetricFamily::WeightedGraph, n, &mut rng_from_seed(seed));
        let inst = build_instance(&m, 1.0, 9.0).unwrap();
        let sol = solve_sdp(&inst, &SolverOptions { max_iters: 2_000, ..quick() }).unwrap();
        prop_assert!(sol.max_violation <= 1e-9);
        let r = round_solution(&inst, &sol, gamma).unwrap();
        prop_assert!(r.outliers.len() as f64 <= r.count_bound + 1e-9);
        prop_assert!(verify_outlier_embedding(&m, &r.outliers, &r.embedding, gamma, 1e-6).unwrap());
    }
}
