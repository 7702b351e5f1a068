use privrewrite::embedding::UnitVector;
use privrewrite::style_pool::{
    detect_outliers, InsertOutcome, OutlierParams, PoolParams, StylePoolState, FIRST_PASS_SENTINEL,
};
use privrewrite::Error;
use proptest::prelude::*;

fn unit(v: Vec<f64>) -> Option<UnitVector> {
    UnitVector::normalize(v).ok()
}

fn vectors(dim: usize, max: usize) -> impl Strategy<Value = Vec<UnitVector>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), 2..max)
        .prop_map(|vs| vs.into_iter().filter_map(unit).collect::<Vec<_>>())
        .prop_filter("need two usable vectors", |v| v.len() >= 2)
}

fn angle(t: f64) -> UnitVector {
    UnitVector::normalize(vec![t.cos(), t.sin()]).unwrap()
}

/// Inserts into a fresh pool, returning it and the outcomes.
fn build(dim: usize, vs: &[UnitVector]) -> (StylePoolState, Vec<InsertOutcome>) {
    let mut pool = StylePoolState::new(dim, PoolParams::default()).unwrap();
    let outs = vs
        .iter()
        .enumerate()
        .map(|(i, v)| pool.mst_insert(&format!("t{i}"), v.clone()).unwrap())
        .collect();
    (pool, outs)
}

#[test]
fn planar_stream_matches_hand_trace() {
    // angles chosen so every distance is easy to reason about
    let (pool, outs) = build(2, &[angle(0.0), angle(1.5), angle(0.1), angle(1.45), angle(0.7)]);
    assert_eq!(outs[0], InsertOutcome::NewBranch { id: 0, parent: None });
    assert_eq!(outs[1], InsertOutcome::NewBranch { id: 1, parent: Some(0) });
    // 0.1 rad from node 0: far closer than node 0's nearest neighbour
    assert_eq!(outs[2], InsertOutcome::Merged { into: 0 });
    assert_eq!(outs[3], InsertOutcome::Merged { into: 1 });
    // nearer node 0 and inside its nearest-neighbour distance
    let d_mid = 1.0 - 0.7f64.cos();
    let d_01 = 1.0 - 1.5f64.cos();
    assert!(d_mid < d_01);
    assert_eq!(outs[4], InsertOutcome::Merged { into: 0 });
    assert_eq!(pool.total_weight(), 5);
    assert_eq!(pool.nodes()[0].weight, 3);
}

#[test]
fn identical_inserts_merge_into_first() {
    let mut pool = StylePoolState::new(2, PoolParams::default()).unwrap();
    pool.mst_insert("a", angle(0.0)).unwrap();
    pool.mst_insert("b", angle(2.0)).unwrap();
    for _ in 0..5 {
        assert_eq!(pool.mst_insert("a", angle(0.0)).unwrap(), InsertOutcome::Merged { into: 0 });
    }
    assert_eq!(pool.nodes()[0].weight, 6);
}

#[test]
fn dimension_mismatch_is_rejected() {
    let mut pool = StylePoolState::new(3, PoolParams::default()).unwrap();
    let err = pool.mst_insert("x", angle(0.0)).unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { expected: 3, actual: 2 }));
    assert!(pool.is_empty());
}

#[test]
fn sentinel_reported_for_isolated_points() {
    let pts = vec![angle(0.0), angle(0.01), angle(0.02), angle(3.0)];
    let rep = detect_outliers(&pts, OutlierParams { r: 0.1, k: 2, lambda: 1.0 }).unwrap();
    assert_eq!(rep.flags, vec![false, false, false, true]);
    assert_eq!(rep.avg_distances[3], FIRST_PASS_SENTINEL);
    assert_eq!(rep.neighbor_counts, vec![2, 2, 2, 0]);
}

#[test]
fn all_isolated_gives_zero_threshold() {
    let pts = vec![angle(0.0), angle(2.0), angle(4.0)];
    let rep = detect_outliers(&pts, OutlierParams { r: 0.1, k: 1, lambda: 2.0 }).unwrap();
    assert!(rep.flags.iter().all(|&f| f));
    assert_eq!((rep.mu, rep.sigma, rep.tau), (0.0, 0.0, 0.0));
}

#[test]
fn outlier_rejects_bad_params() {
    let pts = vec![angle(0.0), angle(1.0)];
    for p in [
        OutlierParams { r: 0.0, k: 1, lambda: 1.0 },
        OutlierParams { r: 0.5, k: 0, lambda: 1.0 },
        OutlierParams { r: 0.5, k: 1, lambda: -1.0 },
    ] {
        assert!(matches!(detect_outliers(&pts, p), Err(Error::InvalidParam(_))));
    }
    assert!(matches!(
        detect_outliers(&pts[..1], OutlierParams::default()),
        Err(Error::TooFewSamples { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tree_invariants_hold(vs in vectors(6, 60)) {
        let (pool, outs) = build(6, &vs);
        let n = pool.len();
        prop_assert_eq!(pool.edges().count(), n - 1);
        prop_assert_eq!(pool.total_weight(), vs.len() as u64);
        let branches = outs.iter().filter(|o| matches!(o, InsertOutcome::NewBranch { .. })).count();
        prop_assert_eq!(branches, n);
        for node in pool.nodes() {
            // parents precede children, so the parent graph is a tree rooted at 0
            match node.parent {
                None => prop_assert_eq!(node.id, 0),
                Some(p) => prop_assert!(p < node.id),
            }
            // min_dist is the distance to the nearest other node
            let brute = pool
                .nodes()
                .iter()
                .filter(|o| o.id != node.id)
                .map(|o| node.emb.distance(&o.emb))
                .fold(f64::INFINITY, f64::min);
            prop_assert!((node.min_dist - brute).abs() < 1e-12 || node.min_dist == brute);
        }
        prop_assert!(pool.validate().is_ok());
    }

    #[test]
    fn merge_target_is_most_similar_node(vs in vectors(4, 30), probe in prop::collection::vec(-1.0f64..1.0, 4)) {
        let Some(p) = unit(probe) else { return Ok(()) };
        let (mut pool, _) = build(4, &vs);
        let before = pool.clone();
        let (nearest, _) = before.nearest_style_neighbor(&p).unwrap();
        let nearest = nearest.id;
        match pool.mst_insert("probe", p).unwrap() {
            InsertOutcome::Merged { into } => prop_assert_eq!(into, nearest),
            InsertOutcome::NewBranch { parent, .. } => prop_assert_eq!(parent, Some(nearest)),
        }
    }

    #[test]
    fn outlier_flags_are_permutation_equivariant(vs in vectors(5, 25), seed in any::<u64>(), lambda in 0.0f64..3.0) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let params = OutlierParams { r: 0.8, k: 2, lambda };
        let base = detect_outliers(&vs, params).unwrap();
        let mut order: Vec<usize> = (0..vs.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<UnitVector> = order.iter().map(|&i| vs[i].clone()).collect();
        let rep = detect_outliers(&permuted, params).unwrap();
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(rep.flags[k], base.flags[i]);
        }
    }

    #[test]
    fn lower_lambda_flags_a_superset(vs in vectors(5, 25), lo in 0.0f64..2.0, gap in 0.0f64..2.0) {
        let strict = detect_outliers(&vs, OutlierParams { r: 0.9, k: 1, lambda: lo }).unwrap();
        let loose = detect_outliers(&vs, OutlierParams { r: 0.9, k: 1, lambda: lo + gap }).unwrap();
        for (s, l) in strict.flags.iter().zip(&loose.flags) {
            prop_assert!(*s || !*l);
        }
    }

    #[test]
    fn snapshot_round_trips(vs in vectors(3, 40), remember in prop::collection::vec(any::<bool>(), 40)) {
        let mut pool = StylePoolState::new(3, PoolParams { ring_capacity: 7, ..PoolParams::default() }).unwrap();
        for (i, v) in vs.iter().enumerate() {
            pool.mst_insert(&format!("line {i}\n\"quoted\""), v.clone()).unwrap();
            if remember[i] {
                pool.remember(&format!("r{i}"), v.clone()).unwrap();
            }
        }
        pool.refresh_stats().unwrap();
        prop_assert!(pool.ring().len() <= 7);
        let snap = pool.to_snapshot();
        let back = StylePoolState::from_snapshot(&snap).unwrap();
        prop_assert_eq!(&back, &pool);
        prop_assert_eq!(back.to_snapshot(), snap);
    }

    #[test]
    fn tampered_snapshot_is_rejected(vs in vectors(3, 10), at in any::<prop::sample::Index>()) {
        let (pool, _) = build(3, &vs);
        let snap = pool.to_snapshot();
        let body_end = snap.rfind("checksum").unwrap();
        let i = at.index(body_end);
        let mut bytes = snap.clone().into_bytes();
        bytes[i] = if bytes[i] == b'7' { b'8' } else { b'7' };
        let tampered = String::from_utf8_lossy(&bytes).into_owned();
        if tampered != snap {
            prop_assert!(StylePoolState::from_snapshot(&tampered).is_err());
        }
    }
}
