//! Property tests: order generation, extraction continuity, the
//! multiple-representation identity, spline round trips and negative-form
//! invariance over randomized inputs.

use proptest::prelude::*;

use relukit::construct::{
    apply_negative_forms, default_universal_globals, realize_single_order,
};
use relukit::geometry::{generate_translated_order, verify_order, OrderVerdict};
use relukit::network::{
    check_continuity, check_multiple_representations, extract_pieces, AffinePiece,
    PiecewiseLinear, ReluNetwork, ReluUnit,
};
use relukit::rng::SplitMix64;
use relukit::spline1d::{compile_one_sided, compile_two_sided, decompile, BasisPlan, Spline1D};

fn direction(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n).prop_filter("nonzero direction", |d| {
        d.iter().map(|v| v * v).sum::<f64>().sqrt() > 0.3
    })
}

fn offsets_for(direction: &[f64], picks: &[f64]) -> Vec<f64> {
    // Map unit-interval picks into strictly increasing offsets well inside
    // the feasible range of d . x over the box.
    let norm: f64 = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    let low: f64 = direction.iter().map(|v| (v / norm).min(0.0)).sum();
    let high: f64 = direction.iter().map(|v| (v / norm).max(0.0)).sum();
    let span = high - low;
    let mut sorted = picks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted
        .iter()
        .enumerate()
        .map(|(i, p)| low + span * (0.1 + 0.8 * (i as f64 + p) / (picks.len() as f64 + 1.0)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn translated_orders_always_verify(
        n in 1usize..=3,
        dir in direction(3),
        picks in prop::collection::vec(0.05f64..0.95, 1..=4),
        flip in any::<bool>(),
    ) {
        let dir = dir[..n].to_vec();
        prop_assume!(dir.iter().map(|v| v * v).sum::<f64>().sqrt() > 0.3);
        let offsets = offsets_for(&dir, &picks);
        let orientation = if flip { -1 } else { 1 };
        let (a, order) = generate_translated_order(n, &dir, &offsets, orientation).unwrap();
        prop_assert_eq!(verify_order(&a, &order).unwrap(), OrderVerdict::Holds);
        prop_assert_eq!(a.regions.len(), offsets.len() + 1);
        // Adjacency facets are full-dimensional by construction.
        for &(i, j, _) in &a.adjacency {
            prop_assert_eq!(
                relukit::geometry::facet_dimension(&a, i, j).unwrap(),
                n as i64 - 1
            );
        }
    }

    #[test]
    fn random_networks_extract_continuously(
        n in 1usize..=3,
        seeds in prop::collection::vec(any::<u64>(), 1),
        units in 1usize..=6,
    ) {
        let mut rng = SplitMix64::new(seeds[0]);
        let units: Vec<ReluUnit> = (0..units)
            .map(|_| {
                let w: Vec<f64> = (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect();
                ReluUnit::new(w, rng.uniform(-2.0, 2.0), rng.uniform(-3.0, 3.0))
            })
            .filter(|u| !u.is_degenerate())
            .collect();
        prop_assume!(!units.is_empty());
        let net = ReluNetwork::new(n, units);
        let pl = extract_pieces(&net);
        let report = check_continuity(&pl);
        prop_assert!(report.max_jump <= 1e-9, "max jump {}", report.max_jump);

        let reps = check_multiple_representations(&net, &pl);
        prop_assert!(reps.failures.is_empty(), "residual {}", reps.max_residual);

        // Piece values agree with eval at witnesses up to reassociation.
        for (region, piece) in pl.arrangement.regions.iter().zip(&pl.pieces) {
            let direct = net.eval(&region.witness);
            let scale = direct.abs().max(1.0);
            prop_assert!((direct - piece.eval(&region.witness)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn splines_round_trip_through_every_basis(seed in any::<u64>(), zeta in 2usize..=8) {
        let mut rng = SplitMix64::new(seed);
        let spline = relukit::spline1d::random_spline(&mut rng, zeta);
        let mut nets = vec![compile_one_sided(&spline, (-1.0, -0.5)).unwrap()];
        if let Some(plan) = BasisPlan::minimal_added(spline.knots.len()) {
            nets.push(compile_two_sided(&spline, &plan).unwrap());
        }
        nets.push(
            compile_two_sided(&spline, &BasisPlan::substituted([spline.knots.len() / 2]))
                .unwrap(),
        );
        if spline.knots.len() >= 2 {
            nets.push(
                compile_two_sided(
                    &spline,
                    &BasisPlan::compound([0], [spline.knots.len() - 1]),
                )
                .unwrap(),
            );
        }
        for net in &nets {
            let back: Spline1D = decompile(net).unwrap();
            for i in 0..=400 {
                let x = i as f64 / 400.0;
                prop_assert!((back.eval(x) - spline.eval(x)).abs() <= 1e-9);
                prop_assert!((net.eval(&[x]) - spline.eval(x)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn negative_forms_never_change_the_function(
        seed in any::<u64>(),
        n in 1usize..=3,
        len in 1usize..=4,
        flip_mask in 0usize..16,
    ) {
        let mut rng = SplitMix64::new(seed);
        let dir: Vec<f64> = (0..n).map(|_| rng.uniform(0.2, 1.0)).collect();
        let picks: Vec<f64> = (0..len).map(|_| rng.next_f64()).collect();
        let offsets = offsets_for(&dir, &picks);
        let (a, order) = generate_translated_order(n, &dir, &offsets, 1).unwrap();

        // Continuous target over the chain.
        let mut pieces = vec![AffinePiece::zero(n); a.regions.len()];
        let s0 = AffinePiece::new((0..n).map(|_| rng.uniform(-2.0, 2.0)).collect(), 0.3);
        pieces[order.initial_region] = s0;
        let mut prev = order.initial_region;
        for (&hid, &r) in order.chain.iter().zip(&order.ordered_regions) {
            let h = &a.hyperplanes[hid];
            let mut p = pieces[prev].clone();
            p.add_scaled(rng.uniform(-2.0, 2.0), &h.w, h.b);
            pieces[r] = p;
            prev = r;
        }
        let target = PiecewiseLinear { arrangement: a.clone(), pieces };
        let realization =
            realize_single_order(&a, &order, &target, &default_universal_globals(n)).unwrap();
        let flips: Vec<usize> = (0..len).filter(|i| flip_mask & (1 << i) != 0).collect();
        let flipped = apply_negative_forms(&realization, &flips).unwrap();
        let before = realization.network();
        let after = flipped.network();
        for _ in 0..200 {
            let x: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
            prop_assert!((before.eval(&x) - after.eval(&x)).abs() <= 1e-9);
        }
    }
}
