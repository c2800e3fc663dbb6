use ff_forge_core::ffscp::{final_score, raw_score_from_latents, score_latents, zero_score_from_latents, Branch, FfScpParams};
use ff_forge_core::goodness::{g_bounded, g_unbounded, prob};
use ff_forge_core::latent::{filter_set, manhattan_norm, point_set_distance, DistanceKind, LatentStore};
use ff_forge_core::metrics::{aupr, auroc, fpr_at_95tpr, MetricsRow, ScoreTable};
use ff_forge_core::snn::SpikeTrain;
use proptest::prelude::*;

fn spike_train() -> impl Strategy<Value = SpikeTrain> {
    (1usize..24, 1usize..24).prop_flat_map(|(n, t)| {
        proptest::collection::vec(proptest::bool::ANY, n * t)
            .prop_map(move |bits| SpikeTrain::from_fn(n, t, |i, j| bits[i * t + j]))
    })
}

fn vectors(dim: usize, min: usize, max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-8.0f64..8.0, dim), min..max)
}

fn integer_scores() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    let side = || proptest::collection::vec((0u32..40).prop_map(f64::from), 1..60);
    (side(), side())
}

fn brute_auroc(id: &[f64], ood: &[f64]) -> f64 {
    let mut wins = 0.0;
    for o in ood {
        for i in id {
            wins += if o > i { 1.0 } else if o == i { 0.5 } else { 0.0 };
        }
    }
    wins / (id.len() * ood.len()) as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn goodness_stays_in_range(latent in spike_train()) {
        let t = latent.timestep_count() as f64;
        let g0 = g_bounded(&latent);
        let ginf = g_unbounded(&latent);
        prop_assert!((0.0..=1.0).contains(&g0));
        prop_assert!(ginf >= 0.0 && ginf <= t * t);
    }

    #[test]
    fn bounded_goodness_ignores_column_duplication(latent in spike_train()) {
        let (n, t) = (latent.neuron_count(), latent.timestep_count());
        let doubled = SpikeTrain::from_fn(n, 2 * t, |i, j| latent.get(i, j / 2));
        prop_assert!((g_bounded(&doubled) - g_bounded(&latent)).abs() < 1e-15);
    }

    #[test]
    fn uniform_firing_links_the_two_goodness_forms(n in 1usize..30, t in 1usize..30, frac in 0.0f64..=1.0) {
        let k = (frac * t as f64).floor() as usize;
        let latent = SpikeTrain::from_fn(n, t, |_, j| j < k);
        let m = k as f64 / t as f64;
        prop_assert!((g_bounded(&latent) - m).abs() < 1e-12);
        prop_assert!((g_unbounded(&latent) - (t * t) as f64 * m * m).abs() < 1e-9);
    }

    #[test]
    fn probability_is_a_symmetric_increasing_logistic(
        g in -50.0f64..50.0, d in 1e-3f64..10.0, alpha in 0.01f64..10.0, theta in -20.0f64..20.0,
    ) {
        prop_assert_eq!(prob(theta, alpha, theta), 0.5);
        prop_assert!(prob(g + d, alpha, theta) >= prob(g, alpha, theta));
        prop_assert!((prob(g, alpha, theta) + prob(2.0 * theta - g, alpha, theta) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_ignore_increasing_transforms((id, ood) in integer_scores()) {
        let table = ScoreTable::new(id.clone(), ood.clone()).unwrap();
        let f = |v: &Vec<f64>| v.iter().map(|x| x * x * x + 2.0 * x - 7.0).collect::<Vec<_>>();
        let moved = ScoreTable::new(f(&id), f(&ood)).unwrap();
        prop_assert_eq!(MetricsRow::compute(&table), MetricsRow::compute(&moved));
    }

    #[test]
    fn swapping_sides_complements_auroc((id, ood) in integer_scores()) {
        let table = ScoreTable::new(id.clone(), ood.clone()).unwrap();
        prop_assert!((auroc(&table) + auroc(&table.swapped()) - 1.0).abs() < 1e-12);
        prop_assert!((auroc(&table) - brute_auroc(&id, &ood)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&aupr(&table)));
        prop_assert!((0.0..=1.0).contains(&fpr_at_95tpr(&table)));
    }

    #[test]
    fn point_set_distance_is_the_exhaustive_minimum(
        point in proptest::collection::vec(-8.0f64..8.0, 12),
        set in vectors(12, 1, 40),
        extra in vectors(12, 0, 10),
    ) {
        for kind in [DistanceKind::Manhattan, DistanceKind::Euclidean, DistanceKind::Cosine] {
            let scan = set.iter().map(|m| kind.distance(&point, m)).fold(f64::INFINITY, f64::min);
            let d = point_set_distance(&point, &set, kind).unwrap();
            prop_assert_eq!(d, scan);
            let mut grown = set.clone();
            grown.extend(extra.iter().cloned());
            prop_assert!(point_set_distance(&point, &grown, kind).unwrap() <= d);
        }
    }

    #[test]
    fn filtering_drops_the_right_tail(set in vectors(5, 1, 40), fraction in 0.0f64..0.9, diagonal in proptest::bool::ANY) {
        let mut kept = set.clone();
        filter_set(&mut kept, diagonal, fraction);
        let removed = (fraction * set.len() as f64).ceil() as usize;
        prop_assert_eq!(kept.len(), set.len() - removed.min(set.len()));
        let dropped: Vec<&Vec<f64>> = set.iter().filter(|v| !kept.contains(v)).collect();
        for d in &dropped {
            for k in &kept {
                if diagonal {
                    prop_assert!(manhattan_norm(d) <= manhattan_norm(k));
                } else {
                    prop_assert!(manhattan_norm(d) >= manhattan_norm(k));
                }
            }
        }
        let mut again = kept.clone();
        filter_set(&mut again, diagonal, 0.0);
        prop_assert_eq!(again, kept);
    }

    #[test]
    fn store_round_trips_bit_exactly(sets in proptest::collection::vec(vectors(3, 4, 9), 4), fraction in 0.0f64..0.5) {
        let store = LatentStore::from_sets(2, sets, 7, fraction, DistanceKind::Euclidean).unwrap();
        let bytes = store.write(Vec::new()).unwrap();
        let back = LatentStore::read(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.write(Vec::new()).unwrap(), bytes);
        prop_assert_eq!(back, store);
    }

    #[test]
    fn enlarging_a_store_set_never_raises_s(
        sets in proptest::collection::vec(vectors(4, 1, 5), 9),
        latents in vectors(4, 3, 4),
        extra in vectors(4, 1, 4),
        target in 0usize..9,
        beta in prop_oneof![Just(1.0), Just(2.0)],
    ) {
        let small = LatentStore::from_sets(3, sets.clone(), 3, 0.0, DistanceKind::Manhattan).unwrap();
        let mut bigger = sets;
        bigger[target].extend(extra);
        let big = LatentStore::from_sets(3, bigger, 3, 0.0, DistanceKind::Manhattan).unwrap();
        let s_small = raw_score_from_latents(&latents, &small, beta).unwrap().0;
        let s_big = raw_score_from_latents(&latents, &big, beta).unwrap().0;
        prop_assert!(s_big <= s_small);
    }

    #[test]
    fn scaling_latents_scales_scores_and_keeps_the_branch(
        sets in proptest::collection::vec(vectors(4, 1, 5), 9),
        latents in vectors(4, 3, 4),
        exponent in -6i32..6,
        beta in prop_oneof![Just(1.0), Just(2.0)],
        z in prop_oneof![Just(0.85), Just(1.0), Just(1.15), Just(1.4)],
    ) {
        let c = 2f64.powi(exponent);
        let scale = |v: &Vec<Vec<f64>>| v.iter().map(|x| x.iter().map(|y| y * c).collect()).collect::<Vec<Vec<f64>>>();
        let store = LatentStore::from_sets(3, sets.clone(), 3, 0.0, DistanceKind::Manhattan).unwrap();
        let scaled_sets: Vec<Vec<Vec<f64>>> = sets.iter().map(scale).collect();
        let scaled = LatentStore::from_sets(3, scaled_sets, 3, 0.0, DistanceKind::Manhattan).unwrap();
        let params = FfScpParams { beta, gamma: 1e12, zero_scale: z, ..FfScpParams::default() };
        let a = score_latents(&latents, &store, &params).unwrap();
        let b = score_latents(&scale(&latents), &scaled, &params).unwrap();
        let cb = c.powf(beta);
        prop_assert_eq!(b.s, a.s * cb);
        prop_assert_eq!(b.s0, a.s0 * cb);
        prop_assert_eq!(b.branch, a.branch);
        prop_assert_eq!(zero_score_from_latents(&latents, &store, beta).unwrap(), a.s0);
    }

    #[test]
    fn branches_order_scores_as_specified(
        s1 in 0.0f64..1e3, s2 in 0.0f64..1e3, s0 in 0.0f64..1e3,
        z in prop_oneof![Just(0.85), Just(1.0), Just(1.15), Just(1.4)],
    ) {
        let params = FfScpParams { gamma: 1e6, zero_scale: z, ..FfScpParams::default() };
        let a = final_score(s1, s0, 0, &params).unwrap();
        let b = final_score(s2, s0, 0, &params).unwrap();
        prop_assert_eq!(a.branch == Branch::Reversed, s1 > z * s0);
        if a.branch == b.branch && s1 != s2 {
            let same_order = (a.score < b.score) == (s1 < s2);
            prop_assert_eq!(same_order, a.branch == Branch::Normal);
        }
        if a.branch == Branch::Reversed && b.branch == Branch::Normal {
            prop_assert!(a.score > b.score);
        }
    }
}
