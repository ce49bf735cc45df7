use super::*;
use crate::metric::{Graph, DEFAULT_TRIANGLE_TOL};
use crate::random::{random_metric, MetricFamily};
use proptest::prelude::*;

fn metric(rows: &[&[f64]]) -> MetricSpace {
    let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
    MetricSpace::from_matrix(&rows, DEFAULT_TRIANGLE_TOL).unwrap()
}

fn line_metric(xs: &[f64]) -> MetricSpace {
    let rows: Vec<Vec<f64>> = xs.iter().map(|a| xs.iter().map(|b| (a - b).abs()).collect()).collect();
    MetricSpace::from_matrix(&rows, DEFAULT_TRIANGLE_TOL).unwrap()
}

/// Line metric with the identity map as both `alpha_S` and `alpha_X` (p = 1).
fn line_inputs(xs: &[f64], s: &[usize]) -> CompositionInputs {
    let m = line_metric(xs);
    let alpha_x = PointSet::new(1, xs.to_vec(), 1.0).unwrap();
    let alpha_s = alpha_x.select(s);
    CompositionInputs::new(&m, s, 1.0, &alpha_s, &alpha_x, 2.0, DEFAULT_EXPANDING_TOL).unwrap()
}

fn random_inputs(seed: u64, n: usize, k: usize, p: f64) -> CompositionInputs {
    let mut rng = rng_from_seed(seed);
    let fam = MetricFamily::ALL[(seed % 3) as usize];
    let m = random_metric(fam, n, &mut rng);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut s = idx[..n - k].to_vec();
    s.sort_unstable();
    bourgain_inputs(&m, &s, p, 2.0, seed).unwrap()
}

#[test]
fn anchors() {
    let m = line_metric(&[0.0, 1.0, 3.0, 10.0]);
    assert_eq!(nearest_anchors(&m, &[0, 3]).unwrap(), vec![0, 0, 0, 3]);
    // point 1 sits midway between 0 and 2
    let m = line_metric(&[0.0, 1.0, 2.0]);
    assert_eq!(nearest_anchors(&m, &[2, 0]).unwrap()[1], 0);
    let claw = MetricSpace::from_graph(&Graph::star(3)).unwrap();
    assert_eq!(nearest_anchors(&claw, &[0]).unwrap(), vec![0, 0, 0, 0]);
    assert_eq!(nearest_anchors(&claw, &[]), Err(CompositionError::EmptyS));
}

#[test]
fn no_outliers_means_no_clusters() {
    let inputs = line_inputs(&[0.0, 1.0, 3.0], &[0, 1, 2]);
    let t = inputs.sample_transcript(&mut rng_from_seed(1));
    assert!(t.clusters.is_empty());
    let e = compose_once(&inputs, &t).unwrap();
    assert_eq!(e.points, inputs.alpha_s().clone());
}

#[test]
fn hand_traced_clusters() {
    // s=0, u=1, v=2 with d(s,u)=d(s,v)=1, d(u,v)=0.5
    let m = metric(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 0.5], &[1.0, 0.5, 0.0]]);
    let sub = AnchoredSubset::new(&m, &[0], 1.0, &PointSet::zeros(1, 1, 1.0).unwrap(), 2.0, 1e-9).unwrap();
    let t = sub.transcript_from(2.5, &[1, 2]).unwrap();
    assert_eq!(t.clusters, vec![Cluster { center: 1, members: vec![1, 2] }]);

    // d(s,u)=3, d(s,v)=2, d(u,v)=5: v is not grabbed at b=2 since 5 > 2*2
    let m = metric(&[&[0.0, 3.0, 2.0], &[3.0, 0.0, 5.0], &[2.0, 5.0, 0.0]]);
    let sub = AnchoredSubset::new(&m, &[0], 1.0, &PointSet::zeros(1, 1, 1.0).unwrap(), 2.0, 1e-9).unwrap();
    let t = sub.transcript_from(2.0, &[1, 2]).unwrap();
    assert_eq!(
        t.clusters,
        vec![Cluster { center: 1, members: vec![1] }, Cluster { center: 2, members: vec![2] }]
    );
    assert!(matches!(sub.transcript_from(1.5, &[1, 2]), Err(CompositionError::InvalidB { .. })));
    assert_eq!(sub.transcript_from(2.0, &[1, 1]), Err(CompositionError::InvalidPermutation));
}

#[test]
fn assigned_points_can_still_center() {
    // S = {0}; center 1 grabs 2 but not 3, then the already-assigned 2 still
    // takes its turn as a center and grabs 3 (d(3,2) = 6 <= 2 * d(3,0)).
    let m = metric(&[
        &[0.0, 10.0, 9.0, 3.0],
        &[10.0, 0.0, 5.0, 10.0],
        &[9.0, 5.0, 0.0, 6.0],
        &[3.0, 10.0, 6.0, 0.0],
    ]);
    let sub = AnchoredSubset::new(&m, &[0], 1.0, &PointSet::zeros(1, 1, 1.0).unwrap(), 2.0, 1e-9).unwrap();
    let t = sub.transcript_from(2.0, &[1, 2, 3]).unwrap();
    assert_eq!(
        t.clusters,
        vec![Cluster { center: 1, members: vec![1, 2] }, Cluster { center: 2, members: vec![3] }]
    );
}

#[test]
fn compose_once_structure() {
    let inputs = random_inputs(3, 12, 4, 2.0);
    let t = inputs.sample_transcript(&mut rng_from_seed(8));
    let e = compose_once(&inputs, &t).unwrap();
    assert_eq!(e.points.dims(), inputs.alpha_s().dims() + t.clusters.len() * inputs.alpha_x().dims());
    let s = inputs.s().to_vec();
    for (a, &u) in s.iter().enumerate() {
        for (b, &v) in s.iter().enumerate() {
            let composed = e.points.distance(u, v);
            assert_eq!(composed, inputs.alpha_s().distance(a, b));
            for blk in &e.blocks[1..] {
                let (pu, pv) = (e.points.point(u), e.points.point(v));
                assert_eq!(&pu[blk.offset..blk.offset + blk.dims], &pv[blk.offset..blk.offset + blk.dims]);
            }
        }
    }
    for c in &t.clusters {
        for &x in &c.members {
            for &y in &c.members {
                let want = inputs.alpha_x().distance(x, y);
                assert!((e.points.distance(x, y) - want).abs() <= 1e-9 * (1.0 + want));
                assert!(want <= inputs.c_x() * inputs.metric().d(x, y) * (1.0 + 1e-9));
            }
        }
    }
}

#[test]
fn compose_once_rejects_foreign_transcripts() {
    let inputs = random_inputs(5, 10, 3, 1.0);
    let mut t = inputs.sample_transcript(&mut rng_from_seed(2));
    t.clusters.reverse();
    t.clusters.push(Cluster { center: t.pi[0], members: vec![] });
    assert!(matches!(compose_once(&inputs, &t), Err(CompositionError::InconsistentTranscript(_))));
}

#[test]
fn deterministic_single_sample_matches_once() {
    let inputs = random_inputs(7, 9, 3, 1.5);
    let det = compose_deterministic(&inputs, 1, &mut rng_from_seed(4)).unwrap();
    let once = compose_once(&inputs, &det.transcripts[0]).unwrap();
    assert_eq!(det.embedding.points, once.points);
    assert!(matches!(compose_deterministic(&inputs, 0, &mut rng_from_seed(4)), Err(CompositionError::ZeroSamples)));
}

#[test]
fn deterministic_l1_is_mean_and_lp_is_capped() {
    for (seed, p) in [(11u64, 1.0), (12, 2.0), (13, 1.5)] {
        let inputs = random_inputs(seed, 10, 4, p);
        let det = compose_deterministic(&inputs, 16, &mut rng_from_seed(seed)).unwrap();
        let pts = &det.embedding.points;
        let n = inputs.metric().len();
        for x in 0..n {
            for y in (x + 1)..n {
                let ds: Vec<f64> = det.transcripts.iter().map(|t| pair_distance(&inputs, t, x, y)).collect();
                let mean = ds.iter().sum::<f64>() / ds.len() as f64;
                let pmean = (ds.iter().map(|d| d.powf(p)).sum::<f64>() / ds.len() as f64).powf(1.0 / p);
                let got = pts.distance(x, y);
                if p == 1.0 {
                    assert!((got - mean).abs() <= 1e-9 * (1.0 + mean));
                } else {
                    assert!(got <= 2.0 * pmean * (1.0 + 1e-12));
                }
                if inputs.in_s(x) && inputs.in_s(y) {
                    assert!((got - ds[0]).abs() <= 1e-9 * (1.0 + got));
                }
            }
        }
    }
}

#[test]
fn expectation_examples() {
    let inputs = random_inputs(21, 8, 3, 2.0);
    let (a, b) = (inputs.s()[0], inputs.s()[1]);
    let (mean, se) = estimate_expected_expansion(&inputs, (a, b), 50, &mut rng_from_seed(1)).unwrap();
    assert!(se <= 1e-12);
    let ia = inputs.s().iter().position(|&v| v == a).unwrap();
    let ib = inputs.s().iter().position(|&v| v == b).unwrap();
    assert!((mean - inputs.alpha_s().distance(ia, ib)).abs() <= 1e-12);

    let inputs = random_inputs(22, 8, 1, 1.5);
    let u = inputs.outliers()[0];
    let g = inputs.gamma()[u];
    let (mean, se) = estimate_expected_expansion(&inputs, (u, g), 40, &mut rng_from_seed(2)).unwrap();
    assert!(se <= 1e-12);
    assert!((mean - inputs.alpha_x().distance(u, g)).abs() <= 1e-12 * (1.0 + mean));
    assert!(matches!(
        estimate_expected_expansion(&inputs, (u, u), 5, &mut rng_from_seed(2)),
        Err(CompositionError::InvalidPair(..))
    ));
}

/// On this line instance the pair (x, y) with x in S and d(x, y) = 1 ends up
/// at distance 17 under the identity embeddings, above the 7 c_S + 9 c_X = 16
/// multiplier but within (2 tau + 6) c_S + (2 tau + 5) c_X = 19.
#[test]
fn mixed_pair_multiplier_can_reach_seventeen() {
    // s' = 0, u = 4.5, y = 8, x = 9; S = {s', x}
    let inputs = line_inputs(&[0.0, 4.5, 8.0, 9.0], &[0, 3]);
    assert_eq!(inputs.gamma(), &[0, 0, 3, 3]);
    let t = inputs.transcript_from(4.0, &[1, 2]).unwrap();
    assert_eq!(t.clusters, vec![Cluster { center: 1, members: vec![1, 2] }]);
    assert_eq!(classify_pair(&inputs, &t, 3, 2, 2.0), PairCase::C);
    let dist = compose_once(&inputs, &t).unwrap().points.distance(3, 2);
    assert!((dist - 17.0).abs() < 1e-12);
    let paper = expansion_bound(&BoundQuery::standard(PairCase::C, 1.0, 1.0, 2)).unwrap();
    assert_eq!(paper, 16.0);
    assert!(dist > paper);
    assert!(dist <= 19.0);
}

#[test]
fn strong_composition_examples() {
    let m = MetricSpace::from_graph(&Graph::cycle(6)).unwrap();
    let all: Vec<usize> = (0..6).collect();
    let (alpha, _) = bourgain_embed(&m, &BourgainParams::default_for(6, 1, 2.0)).unwrap();
    let sub = AnchoredSubset::new(&m, &all, 2.0, &alpha, 2.0, 1e-9).unwrap();
    let out = compose_strong(&sub, bourgain_cluster_embedder(2.0, 0), &mut rng_from_seed(3)).unwrap();
    assert_eq!(out.embedding.points, alpha);

    let inputs = random_inputs(31, 12, 4, 2.0);
    let global = inputs.alpha_x().clone();
    let restrict = |_: &MetricSpace, pts: &[usize]| Ok(global.select(pts));
    let strong = compose_strong(inputs.base(), restrict, &mut rng_from_seed(9)).unwrap();
    let t = inputs.sample_transcript(&mut rng_from_seed(9));
    assert_eq!(strong.transcript, t);
    assert_eq!(strong.embedding.points, compose_once(&inputs, &t).unwrap().points);

    let collapse = |_: &MetricSpace, pts: &[usize]| Ok(PointSet::zeros(pts.len(), 1, 2.0).unwrap());
    assert!(matches!(
        compose_strong(inputs.base(), collapse, &mut rng_from_seed(9)),
        Err(CompositionError::CallbackNotExpanding { cluster: 0 })
    ));
}

#[test]
fn input_validation() {
    let m = line_metric(&[0.0, 1.0, 2.0]);
    let good = PointSet::new(1, vec![0.0, 1.0, 2.0], 1.0).unwrap();
    let shrunk = PointSet::new(1, vec![0.0, 0.5, 1.0], 1.0).unwrap();
    assert!(matches!(
        CompositionInputs::new(&m, &[0, 2], 1.0, &good.select(&[0, 2]), &shrunk, 2.0, 1e-9),
        Err(CompositionError::NotExpanding { .. })
    ));
    let stretched = PointSet::new(1, vec![0.0, 9.0], 1.0).unwrap();
    assert!(matches!(
        CompositionInputs::new(&m, &[0, 1], 1.0, &stretched, &good, 2.0, 1e-9),
        Err(CompositionError::CsExceedsCx { .. })
    ));
    assert!(matches!(
        CompositionInputs::new(&m, &[0, 2], 2.0, &good.select(&[0, 2]), &good, 2.0, 1e-9),
        Err(CompositionError::PMismatch { .. })
    ));
    assert!(matches!(
        CompositionInputs::new(&m, &[0, 2], 1.0, &good.select(&[0, 2]), &good, 0.0, 1e-9),
        Err(CompositionError::InvalidTau(_))
    ));
}

#[test]
fn transcripts_serialize() {
    let inputs = random_inputs(41, 7, 3, 1.0);
    let t = inputs.sample_transcript(&mut rng_from_seed(5));
    let text = serde_json::to_string(&t).unwrap();
    let back: CompositionTranscript = serde_json::from_str(&text).unwrap();
    assert_eq!(back, t);
    assert!(compose_once(&inputs, &back).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transcript_invariants(seed in 0u64..10_000, n in 3usize..12, k_frac in 0.0f64..1.0) {
        let k = ((n - 1) as f64 * k_frac) as usize;
        let inputs = random_inputs(seed, n, k, 1.0);
        let t = inputs.sample_transcript(&mut rng_from_seed(seed ^ 1));
        prop_assert!(t.b >= 2.0 && t.b <= 4.0);
        let mut seen: Vec<usize> = t.clusters.iter().flat_map(|c| c.members.clone()).collect();
        seen.sort_unstable();
        prop_assert_eq!(&seen, &inputs.outliers().to_vec());
        let mut last = 0;
        for c in &t.clusters {
            let pos = t.pi.iter().position(|&u| u == c.center).unwrap();
            prop_assert!(pos >= last);
            last = pos;
            for &v in &c.members {
                prop_assert!(inputs.metric().d(v, c.center) <= t.b * inputs.anchor_distance(v));
            }
        }
    }

    #[test]
    fn contraction_and_fast_distance(seed in 0u64..10_000, n in 3usize..10, k in 0usize..4, pi in 0usize..3) {
        let p = [1.0, 1.5, 2.0][pi];
        let k = k.min(n - 1);
        let inputs = random_inputs(seed, n, k, p);
        let t = inputs.sample_transcript(&mut rng_from_seed(seed.wrapping_mul(31)));
        let e = compose_once(&inputs, &t).unwrap();
        let factor = 3f64.powf(-1.0 + 1.0 / p);
        for x in 0..n {
            for y in (x + 1)..n {
                let d = inputs.metric().d(x, y);
                let full = e.points.distance(x, y);
                let fast = pair_distance(&inputs, &t, x, y);
                prop_assert!((full - fast).abs() <= 1e-9 * (1.0 + full));
                prop_assert!(full >= factor * d - 1e-9);
                if inputs.in_s(x) && inputs.in_s(y) {
                    prop_assert!(full >= d - 1e-9);
                }
            }
        }
    }
}

/// The contraction inequality only holds with the factor on the right-hand
/// side: an isometric pair violates `3^(-1+1/p) * dist >= d` for every p > 1.
#[test]
fn contraction_factor_sits_on_distance_side() {
    let inputs = line_inputs(&[0.0, 1.0], &[0, 1]);
    let t = inputs.transcript_from(2.0, &[]).unwrap();
    let dist = pair_distance(&inputs, &t, 0, 1);
    let p = 2.0;
    assert!(3f64.powf(-1.0 + 1.0 / p) * dist < 1.0 - 1e-9);
    assert!(dist >= 3f64.powf(-1.0 + 1.0 / p) * 1.0);
}
