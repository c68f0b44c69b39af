//! Multi-order realization scenarios: a three-chain layout with leftover
//! regions, initial pieces taken from the hub, from an earlier chain and
//! from an undesigned region, and plan validation failures.

use std::collections::BTreeSet;

use relukit::analyzer;
use relukit::construct::{
    realize_multi_order, validate_plan, ConstructError, OrderPlan, PlanCondition,
};
use relukit::geometry::{build_arrangement, Arrangement, Hyperplane, StrictPartialOrder};
use relukit::network::{extract_pieces, PiecewiseLinear, ReluNetwork, ReluUnit};
use relukit::rng::SplitMix64;

fn hp(id: usize, w: Vec<f64>, b: f64) -> Hyperplane {
    Hyperplane::new(id, w, b).unwrap()
}

fn region_at(a: &Arrangement, x: f64, y: f64) -> usize {
    a.region_of_point(&[x, y]).expect("point inside the box")
}

/// A target realizable over the arrangement: extraction of a reference
/// network whose units sit on exactly the arrangement hyperplanes plus the
/// universal globals.
fn reference_target(
    a: &Arrangement,
    globals: &[Hyperplane],
    rng: &mut SplitMix64,
) -> PiecewiseLinear {
    let units: Vec<ReluUnit> = a
        .hyperplanes
        .iter()
        .chain(globals)
        .map(|h| ReluUnit::new(h.w.clone(), h.b, rng.uniform(-2.0, 2.0)))
        .collect();
    let net = ReluNetwork::new(a.n, units);
    let pl = extract_pieces(&net);
    // Map the extraction onto the original arrangement's region order.
    let pieces = a
        .regions
        .iter()
        .map(|r| {
            let idx = pl
                .arrangement
                .region_of_point(&r.witness)
                .expect("witness inside the box");
            pl.pieces[idx].clone()
        })
        .collect();
    PiecewiseLinear {
        arrangement: a.clone(),
        pieces,
    }
}

fn universal_globals_2d() -> Vec<Hyperplane> {
    vec![
        hp(1, vec![1.0, 0.0], 0.2),
        hp(2, vec![0.0, 1.0], 0.3),
        hp(3, vec![1.0, 1.0], 0.25),
    ]
}

/// Three chains over eleven regions: four vertical walls, a diagonal that
/// clips their upper corners, and two short chords in the hub's corner.
/// Three regions stay uncovered.
fn staircase_layout() -> (Arrangement, OrderPlan) {
    let hyperplanes = vec![
        hp(4, vec![1.0, 0.5], -0.85), // diagonal, positive to the upper right
        hp(5, vec![1.0, 0.0], -0.2),
        hp(6, vec![1.0, 0.0], -0.4),
        hp(7, vec![1.0, 0.0], -0.6),
        hp(8, vec![1.0, 0.0], -0.8),
        hp(9, vec![-1.0, 1.0], -0.9), // hub corner chords, positive upward
        hp(10, vec![-1.0, 1.0], -0.95),
    ];
    let a = build_arrangement(2, hyperplanes).unwrap();
    assert_eq!(a.regions.len(), 11);

    let hub = region_at(&a, 0.1, 0.4);
    let m = [
        region_at(&a, 0.3, 0.3),
        region_at(&a, 0.5, 0.3),
        region_at(&a, 0.7, 0.2),
        region_at(&a, 0.81, 0.02),
    ];
    let band = region_at(&a, 0.03, 0.955);
    let tip = region_at(&a, 0.01, 0.99);
    let u = [
        region_at(&a, 0.38, 0.97),
        region_at(&a, 0.42, 0.95),
        region_at(&a, 0.7, 0.6),
        region_at(&a, 0.95, 0.5),
    ];

    let orders = vec![
        StrictPartialOrder {
            chain: vec![5, 6, 7, 8],
            ordered_regions: m.to_vec(),
            initial_region: hub,
        },
        StrictPartialOrder {
            chain: vec![9, 10],
            ordered_regions: vec![band, tip],
            initial_region: hub,
        },
        StrictPartialOrder {
            chain: vec![4],
            ordered_regions: vec![u[2]],
            initial_region: m[2],
        },
    ];
    let plan = OrderPlan {
        orders,
        sequence: vec![0, 1, 2],
        universal_globals: universal_globals_2d(),
        hub_region: hub,
        uncovered: vec![u[0], u[1], u[3]],
    };
    (a, plan)
}

#[test]
fn staircase_plan_realizes_every_ordered_region() {
    let (a, plan) = staircase_layout();
    validate_plan(&a, &plan).unwrap();

    let mut rng = SplitMix64::new(0xF16);
    let target = reference_target(&a, &plan.universal_globals, &mut rng);
    let realization = realize_multi_order(&a, &plan, &target).unwrap();
    let net = realization.network();
    assert_eq!(net.theta(), 3 + 7); // globals + one unit per chain hyperplane

    let mut served: Vec<usize> = vec![plan.hub_region];
    for o in &plan.orders {
        served.extend(o.ordered_regions.iter());
    }
    for &r in &served {
        let region = &a.regions[r];
        for _ in 0..100 {
            let x: Vec<f64> = region
                .witness
                .iter()
                .map(|&c| c + rng.uniform(-0.5, 0.5) * region.chebyshev_radius)
                .collect();
            let err = (net.eval(&x) - target.pieces[r].eval(&x)).abs();
            assert!(err <= 1e-9, "region {r} error {err}");
        }
    }
    // Uncovered regions are reported, not constructed.
    let reported: BTreeSet<usize> = realization.uncovered.iter().cloned().collect();
    let expected: BTreeSet<usize> = plan.uncovered.iter().cloned().collect();
    assert_eq!(reported, expected);
    assert_eq!(reported.len(), 3);
}

#[test]
fn leftover_regions_are_forced_by_continuity() {
    let (a, plan) = staircase_layout();
    let mut rng = SplitMix64::new(0xBEEF);
    let target = reference_target(&a, &plan.universal_globals, &mut rng);
    let realization = realize_multi_order(&a, &plan, &target).unwrap();
    let net = realization.network();

    // The realized pieces on the uncovered regions coincide with the target
    // anyway: continuity leaves no freedom there.
    for &r in &plan.uncovered {
        let region = &a.regions[r];
        let err = (net.eval(&region.witness) - target.pieces[r].eval(&region.witness)).abs();
        assert!(err <= 1e-9, "uncovered region {r} differs by {err}");
    }

    // And the analyzer's coverage fixpoint reaches every region.
    let forest = analyzer::detect_orders(&net);
    let coverage = analyzer::coverage_by_continuity(&forest);
    assert_eq!(coverage.coverage, 1.0);
}

#[test]
fn degenerate_single_order_plan_matches_the_direct_route() {
    use relukit::construct::{default_universal_globals, realize_single_order};
    let (a, order) =
        relukit::geometry::generate_translated_order(2, &[1.0, 0.1], &[0.3, 0.6], 1).unwrap();
    let globals = default_universal_globals(2);
    let mut rng = SplitMix64::new(5);
    let target = reference_target(&a, &globals, &mut rng);

    let plan = OrderPlan {
        orders: vec![order.clone()],
        sequence: vec![0],
        universal_globals: globals.clone(),
        hub_region: order.initial_region,
        uncovered: vec![],
    };
    let multi = realize_multi_order(&a, &plan, &target).unwrap().network();
    let single = realize_single_order(&a, &order, &target, &globals)
        .unwrap()
        .network();
    assert_eq!(multi.theta(), single.theta());
    for _ in 0..500 {
        let x = [rng.next_f64(), rng.next_f64()];
        assert!((multi.eval(&x) - single.eval(&x)).abs() <= 1e-9);
    }
}

/// Two axis walls plus a second vertical: the last chain starts from a
/// region no order designed, which works exactly when the realized piece
/// there is continuous with the target across the chain's hyperplane.
fn undesigned_initial_layout() -> (Arrangement, OrderPlan) {
    let hyperplanes = vec![
        hp(1, vec![0.0, 1.0], -0.5),
        hp(2, vec![1.0, 0.0], -0.5),
        hp(3, vec![1.0, 0.0], -0.75),
    ];
    let a = build_arrangement(2, hyperplanes).unwrap();
    assert_eq!(a.regions.len(), 6);
    let sw = region_at(&a, 0.25, 0.25);
    let nw = region_at(&a, 0.25, 0.75);
    let se1 = region_at(&a, 0.6, 0.25);
    let se2 = region_at(&a, 0.9, 0.25);
    let ne1 = region_at(&a, 0.6, 0.75);
    let ne2 = region_at(&a, 0.9, 0.75);
    let orders = vec![
        StrictPartialOrder {
            chain: vec![1],
            ordered_regions: vec![nw],
            initial_region: sw,
        },
        StrictPartialOrder {
            chain: vec![2],
            ordered_regions: vec![se1],
            initial_region: sw,
        },
        StrictPartialOrder {
            chain: vec![3],
            ordered_regions: vec![ne2],
            initial_region: ne1, // no order designs this region
        },
    ];
    let plan = OrderPlan {
        orders,
        sequence: vec![0, 1, 2],
        universal_globals: universal_globals_2d(),
        hub_region: sw,
        uncovered: vec![ne1, se2],
    };
    (a, plan)
}

#[test]
fn undesigned_initial_region_works_when_continuity_holds() {
    let (a, plan) = undesigned_initial_layout();
    validate_plan(&a, &plan).unwrap();
    let mut rng = SplitMix64::new(0xCA5E);
    let target = reference_target(&a, &plan.universal_globals, &mut rng);
    let realization = realize_multi_order(&a, &plan, &target).unwrap();
    let net = realization.network();
    for (r, piece) in target.pieces.iter().enumerate() {
        let w = &a.regions[r].witness;
        assert!((net.eval(w) - piece.eval(w)).abs() <= 1e-9, "region {r}");
    }
}

#[test]
fn undesigned_initial_region_fails_on_discontinuous_targets() {
    let (a, plan) = undesigned_initial_layout();
    let mut rng = SplitMix64::new(0xCA5E);
    let mut target = reference_target(&a, &plan.universal_globals, &mut rng);
    // Corrupt the piece the third chain must reach: the realized piece on
    // its undesigned initial region no longer continues into it.
    let ne2 = plan.orders[2].ordered_regions[0];
    target.pieces[ne2].b += 0.25;
    match realize_multi_order(&a, &plan, &target) {
        Err(ConstructError::NotContinuous { .. }) => {}
        other => panic!("expected a continuity failure, got {other:?}"),
    }
}

#[test]
fn later_chain_cutting_an_earlier_region_is_rejected() {
    let (a, plan) = undesigned_initial_layout();
    // Run the second vertical's chain before the first: its ordered region
    // NE2 sits on the positive side of the later chain's hyperplane 2.
    let reordered = OrderPlan {
        sequence: vec![0, 2, 1],
        ..plan
    };
    match validate_plan(&a, &reordered) {
        Err(ConstructError::PlanInvalid { condition, .. }) => {
            assert_eq!(condition, PlanCondition::II);
        }
        other => panic!("expected plan condition II, got {other:?}"),
    }
}

#[test]
fn overlapping_region_claims_are_rejected() {
    let (a, mut plan) = undesigned_initial_layout();
    plan.uncovered.push(plan.orders[0].ordered_regions[0]);
    match validate_plan(&a, &plan) {
        Err(ConstructError::PlanInvalid { condition, .. }) => {
            assert_eq!(condition, PlanCondition::I);
        }
        other => panic!("expected plan condition I, got {other:?}"),
    }
}
