//! Interpretation of two-layer networks: unit taxonomy, detection of strict
//! partial orders among the unit hyperplanes, order trees, and coverage via
//! continuity restriction.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::geometry::{Arrangement, OrderVerdict, Side, StrictPartialOrder};
use crate::linalg;
use crate::network::{
    check_continuity, extract_pieces, wall_decomposition, AffinePiece, ContinuityReport,
    PiecewiseLinear, ReluNetwork, UnitWall,
};
use crate::rng::SplitMix64;

/// Units whose zero-output set covers at most this volume fraction of the
/// box count as universal globals.
pub const TAU_GLOBAL: f64 = 0.02;

/// Units whose positive-output set covers at most this volume fraction of
/// the box count as inactivated.
pub const TAU_DEAD: f64 = 0.001;

const MC_SAMPLES: usize = 20_000;
const MC_SEED: u64 = 0xA11CE;

/// Node budget for the maximal-chain search.
const SEARCH_BUDGET: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitClass {
    Inactivated,
    UniversalGlobal,
    GlobalForOrder,
    LocalPositive,
    LocalNegative,
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct UnitLabel {
    pub unit: usize,
    pub class: UnitClass,
    pub equivalence_group: Option<usize>,
    pub redundant: bool,
    pub bidirectional_partner: Option<usize>,
}

/// Detected chains over the deduplicated wall arrangement. Chains may use a
/// wall in either orientation; `arrangement` carries each wall oriented the
/// way its chain uses it (canonical orientation elsewhere), so every chain
/// passes `verify_order` against it.
#[derive(Debug, Clone)]
pub struct OrderForest {
    pub arrangement: Arrangement,
    pub orders: Vec<StrictPartialOrder>,
    /// Grouping of chain indices into order trees by initial-region
    /// provenance.
    pub trees: Vec<Vec<usize>>,
    /// Regions that are neither ordered nor initial regions of any chain.
    pub uncovered: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct CoverageReport {
    pub determined: Vec<bool>,
    pub coverage: f64,
}

#[derive(Debug)]
pub struct AnalysisReport {
    pub labels: Vec<UnitLabel>,
    pub forest: OrderForest,
    pub coverage: CoverageReport,
    pub continuity: ContinuityReport,
    pub piece_table: Vec<AffinePiece>,
}

impl AnalysisReport {
    /// Serde-shaped view of the report.
    pub fn json(&self) -> serde_json::Value {
        let orders: Vec<serde_json::Value> = self
            .forest
            .orders
            .iter()
            .map(|o| {
                serde_json::json!({
                    "chain": o.chain,
                    "regions": o.ordered_regions,
                    "initial": o.initial_region,
                })
            })
            .collect();
        serde_json::json!({
            "labels": self.labels,
            "orders": orders,
            "trees": self.forest.trees,
            "coverage": self.coverage.coverage,
            "continuity": { "max_jump": self.continuity.max_jump },
            "pieces": self.piece_table,
        })
    }
}

/// Fraction of Monte-Carlo box samples on the positive side of each unit.
fn positive_volumes(net: &ReluNetwork) -> Vec<f64> {
    let mut rng = SplitMix64::new(MC_SEED);
    let mut counts = vec![0usize; net.units.len()];
    let mut x = vec![0.0; net.n];
    for _ in 0..MC_SAMPLES {
        for v in x.iter_mut() {
            *v = rng.next_f64();
        }
        for (k, unit) in net.units.iter().enumerate() {
            if unit.preactivation(&x) > 0.0 {
                counts[k] += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|c| c as f64 / MC_SAMPLES as f64)
        .collect()
}

struct Analysis {
    pl: PiecewiseLinear,
    unit_wall: Vec<UnitWall>,
    forest: OrderForest,
}

impl Analysis {
    fn new(net: &ReluNetwork) -> Self {
        let pl = extract_pieces(net);
        let (_, unit_wall) = wall_decomposition(net);
        let forest = find_orders(&pl.arrangement);
        Analysis { pl, unit_wall, forest }
    }
}

/// State of one growing chain: walls with the orientation the chain uses
/// (true = canonical), plus the initial and ordered regions.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord)]
struct ChainState {
    walls: Vec<(usize, bool)>,
    initial: usize,
    ordered: Vec<usize>,
}

fn find_orders(a: &Arrangement) -> OrderForest {
    let nwalls = a.hyperplanes.len();
    // neighbor[r] = (other region, wall index) pairs.
    let mut neighbors: Vec<Vec<(usize, usize)>> = vec![Vec::new(); a.regions.len()];
    for &(i, j, hid) in &a.adjacency {
        let w = a.position_of_id(hid).expect("adjacency id");
        neighbors[i].push((j, w));
        neighbors[j].push((i, w));
    }
    let oriented_side = |region: usize, wall: usize, canonical: bool| -> Side {
        match (a.regions[region].signs.0[wall], canonical) {
            (Side::Positive, true) | (Side::Negative, false) => Side::Positive,
            (Side::Negative, true) | (Side::Positive, false) => Side::Negative,
            (Side::Zero, _) => Side::Zero,
        }
    };

    // Depth-first search for maximal chains. A chain extends by an unused
    // wall separating its last ordered region from a fresh one on the new
    // wall's positive side, keeping every strict-partial-order condition.
    let mut found: BTreeSet<ChainState> = BTreeSet::new();
    let mut budget = SEARCH_BUDGET;
    fn extend(
        state: &mut ChainState,
        neighbors: &[Vec<(usize, usize)>],
        oriented_side: &impl Fn(usize, usize, bool) -> Side,
        found: &mut BTreeSet<ChainState>,
        budget: &mut usize,
    ) {
        if *budget == 0 {
            return;
        }
        *budget -= 1;
        let last = *state.ordered.last().unwrap();
        let mut extended = false;
        let mut options: Vec<(usize, bool, usize)> = Vec::new();
        for &(r2, w) in &neighbors[last] {
            if state.walls.iter().any(|&(used, _)| used == w) {
                continue;
            }
            if state.ordered.contains(&r2) || r2 == state.initial {
                continue;
            }
            for canonical in [true, false] {
                if oriented_side(r2, w, canonical) != Side::Positive {
                    continue;
                }
                // New region must be positive for every chain wall so far.
                if !state
                    .walls
                    .iter()
                    .all(|&(u, c)| oriented_side(r2, u, c) == Side::Positive)
                {
                    continue;
                }
                // All earlier ordered regions must be quiet under the new wall.
                if !state
                    .ordered
                    .iter()
                    .all(|&r| oriented_side(r, w, canonical) == Side::Negative)
                {
                    continue;
                }
                options.push((w, canonical, r2));
            }
        }
        options.sort();
        for (w, canonical, r2) in options {
            extended = true;
            state.walls.push((w, canonical));
            state.ordered.push(r2);
            extend(state, neighbors, oriented_side, found, budget);
            state.walls.pop();
            state.ordered.pop();
        }
        if !extended {
            found.insert(state.clone());
        }
    }

    for w in 0..nwalls {
        for canonical in [true, false] {
            for &(i, j, hid) in &a.adjacency {
                if a.position_of_id(hid).unwrap() != w {
                    continue;
                }
                let (r0, r1) = if oriented_side(i, w, canonical) == Side::Positive {
                    (j, i)
                } else {
                    (i, j)
                };
                if oriented_side(r1, w, canonical) != Side::Positive
                    || oriented_side(r0, w, canonical) != Side::Negative
                {
                    continue;
                }
                let mut state = ChainState {
                    walls: vec![(w, canonical)],
                    initial: r0,
                    ordered: vec![r1],
                };
                extend(&mut state, &neighbors, &oriented_side, &mut found, &mut budget);
            }
        }
    }

    // Greedy selection: longest first, ties by wall ids then regions;
    // hyperplane sets stay pairwise disjoint.
    let mut candidates: Vec<ChainState> = found.into_iter().collect();
    // Longest first; ties by wall index with the canonical orientation
    // preferred, then by regions.
    let orient_key = |c: &ChainState| -> Vec<(usize, bool)> {
        c.walls.iter().map(|&(w, canonical)| (w, !canonical)).collect()
    };
    candidates.sort_by(|x, y| {
        y.walls
            .len()
            .cmp(&x.walls.len())
            .then_with(|| orient_key(x).cmp(&orient_key(y)))
            .then_with(|| (x.initial, &x.ordered).cmp(&(y.initial, &y.ordered)))
    });
    let mut used_walls = BTreeSet::new();
    let mut selected: Vec<ChainState> = Vec::new();
    for c in candidates {
        if c.walls.iter().all(|(w, _)| !used_walls.contains(w)) {
            used_walls.extend(c.walls.iter().map(|(w, _)| *w));
            selected.push(c);
        }
    }

    // Reorient the arrangement so every chain sees its walls positively.
    let mut arrangement = a.clone();
    for c in &selected {
        for &(w, canonical) in &c.walls {
            if !canonical {
                arrangement.hyperplanes[w] = arrangement.hyperplanes[w].negative_form();
                for region in arrangement.regions.iter_mut() {
                    region.signs.0[w] = match region.signs.0[w] {
                        Side::Positive => Side::Negative,
                        Side::Negative => Side::Positive,
                        Side::Zero => Side::Zero,
                    };
                }
            }
        }
    }
    let orders: Vec<StrictPartialOrder> = selected
        .iter()
        .map(|c| StrictPartialOrder {
            chain: c.walls.iter().map(|&(w, _)| arrangement.hyperplanes[w].id).collect(),
            ordered_regions: c.ordered.clone(),
            initial_region: c.initial,
        })
        .collect();
    for o in &orders {
        debug_assert_eq!(
            crate::geometry::verify_order(&arrangement, o).unwrap(),
            OrderVerdict::Holds
        );
    }

    // Order trees by initial-region provenance.
    let mut parent: Vec<Option<usize>> = vec![None; orders.len()];
    for (i, o) in orders.iter().enumerate() {
        parent[i] = orders
            .iter()
            .position(|other| other.ordered_regions.contains(&o.initial_region));
    }
    let root = |mut i: usize| -> usize {
        let mut guard = 0;
        while let Some(p) = parent[i] {
            if p == i || guard > orders.len() {
                break;
            }
            i = p;
            guard += 1;
        }
        i
    };
    let mut trees_map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..orders.len() {
        trees_map.entry(root(i)).or_default().push(i);
    }
    let trees: Vec<Vec<usize>> = trees_map.into_values().collect();

    let mut covered = BTreeSet::new();
    for o in &orders {
        covered.insert(o.initial_region);
        covered.extend(o.ordered_regions.iter());
    }
    let uncovered = (0..arrangement.regions.len())
        .filter(|r| !covered.contains(r))
        .collect();

    OrderForest {
        arrangement,
        orders,
        trees,
        uncovered,
    }
}

fn classify(net: &ReluNetwork, analysis: &Analysis) -> Vec<UnitLabel> {
    let volumes = positive_volumes(net);
    let forest = &analysis.forest;

    // Orientation of each chain wall as the chains use it, vs the canonical
    // wall: after reorientation the forest arrangement itself is the
    // reference, so compare unit normals against it directly.
    let unit_orientation_vs_forest = |unit: usize| -> Option<(usize, f64)> {
        match analysis.unit_wall[unit] {
            UnitWall::Degenerate => None,
            UnitWall::Wall { wall, orientation } => {
                // The forest arrangement may have flipped the wall.
                let canonical = &analysis.pl.arrangement.hyperplanes[wall];
                let current = &forest.arrangement.hyperplanes[wall];
                let flipped = linalg::dot(&canonical.w, &current.w) < 0.0;
                Some((wall, if flipped { -orientation } else { orientation }))
            }
        }
    };

    let chain_walls: BTreeSet<usize> = forest
        .orders
        .iter()
        .flat_map(|o| o.chain.iter())
        .map(|&id| forest.arrangement.position_of_id(id).unwrap())
        .collect();

    let mut labels = Vec::with_capacity(net.units.len());
    for (k, unit) in net.units.iter().enumerate() {
        let class = if unit.is_degenerate() {
            UnitClass::Degenerate
        } else if volumes[k] <= TAU_DEAD {
            UnitClass::Inactivated
        } else if 1.0 - volumes[k] <= TAU_GLOBAL {
            UnitClass::UniversalGlobal
        } else {
            match unit_orientation_vs_forest(k) {
                Some((wall, orientation)) if chain_walls.contains(&wall) => {
                    if orientation > 0.0 {
                        UnitClass::LocalPositive
                    } else {
                        UnitClass::LocalNegative
                    }
                }
                _ => {
                    // Positive over every region of some chain: a global for
                    // that order.
                    let serves_a_chain = forest.orders.iter().any(|o| {
                        o.ordered_regions
                            .iter()
                            .chain([&o.initial_region])
                            .all(|&r| {
                                unit.preactivation(&forest.arrangement.regions[r].witness) > 0.0
                            })
                    });
                    if serves_a_chain {
                        UnitClass::GlobalForOrder
                    } else {
                        UnitClass::LocalPositive
                    }
                }
            }
        };
        labels.push(UnitLabel {
            unit: k,
            class,
            equivalence_group: None,
            redundant: false,
            bidirectional_partner: None,
        });
    }

    // Equivalence groups: same wall, same orientation, at least two members.
    let mut groups: BTreeMap<(usize, i8), Vec<usize>> = BTreeMap::new();
    for (k, uw) in analysis.unit_wall.iter().enumerate() {
        if let UnitWall::Wall { wall, orientation } = uw {
            groups
                .entry((*wall, if *orientation > 0.0 { 1 } else { -1 }))
                .or_default()
                .push(k);
        }
    }
    let mut group_id = 0;
    for members in groups.values() {
        if members.len() >= 2 {
            for &k in members {
                labels[k].equivalence_group = Some(group_id);
            }
            group_id += 1;
        }
    }
    // Bidirectional partners: lowest-index unit on the same wall with the
    // opposite orientation.
    for ((wall, orient), members) in &groups {
        if let Some(partners) = groups.get(&(*wall, -orient)) {
            for &k in members {
                labels[k].bidirectional_partner =
                    partners.iter().copied().find(|&p| p != k);
            }
        }
    }

    // Redundancy among universal globals: columns beyond a rank-(n+1) basis
    // of the hub's linear-output matrix.
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for label in labels.iter_mut() {
        if label.class != UnitClass::UniversalGlobal {
            continue;
        }
        let unit = &net.units[label.unit];
        let mut col = unit.w.clone();
        col.push(unit.b);
        let mut candidate = basis.clone();
        candidate.push(col);
        if linalg::column_rank(&candidate) > basis.len() && basis.len() < net.n + 1 {
            basis = candidate;
        } else {
            label.redundant = true;
        }
    }
    labels
}

/// Label every hidden unit of the network.
pub fn classify_units(net: &ReluNetwork) -> Vec<UnitLabel> {
    let analysis = Analysis::new(net);
    classify(net, &analysis)
}

/// Detect disjoint strict partial orders among the unit hyperplanes and
/// group them into order trees.
pub fn detect_orders(net: &ReluNetwork) -> OrderForest {
    Analysis::new(net).forest
}

/// Fixpoint of the continuity-restriction rules, seeded with the chains'
/// regions: a region becomes determined when two determined neighbors sit
/// across crossing walls, or when a determined neighbor sits across a wall
/// whose weight another determined pair has already pinned.
pub fn coverage_by_continuity(forest: &OrderForest) -> CoverageReport {
    let a = &forest.arrangement;
    let nr = a.regions.len();
    let mut determined = vec![false; nr];
    for o in &forest.orders {
        determined[o.initial_region] = true;
        for &r in &o.ordered_regions {
            determined[r] = true;
        }
    }
    if forest.orders.is_empty() && nr == 1 {
        determined[0] = true;
    }

    let wall_of = |hid: usize| a.position_of_id(hid).unwrap();
    let unit_normals: Vec<Vec<f64>> = a
        .hyperplanes
        .iter()
        .map(|h| {
            let s = 1.0 / linalg::norm(&h.w);
            linalg::scale(&h.w, s)
        })
        .collect();
    let crossing = |p: usize, q: usize| -> bool {
        let d = linalg::dot(&unit_normals[p], &unit_normals[q]).abs();
        d < 1.0 - 1e-9
    };

    loop {
        // Walls pinned by a fully determined adjacent pair.
        let mut pinned = vec![false; a.hyperplanes.len()];
        for &(i, j, hid) in &a.adjacency {
            if determined[i] && determined[j] {
                pinned[wall_of(hid)] = true;
            }
        }
        let mut changed = false;
        for r in 0..nr {
            if determined[r] {
                continue;
            }
            let mut det_walls: Vec<usize> = Vec::new();
            let mut via_pinned = false;
            for &(i, j, hid) in &a.adjacency {
                let other = if i == r {
                    j
                } else if j == r {
                    i
                } else {
                    continue;
                };
                if !determined[other] {
                    continue;
                }
                let w = wall_of(hid);
                det_walls.push(w);
                if pinned[w] {
                    via_pinned = true;
                }
            }
            let via_crossing = det_walls
                .iter()
                .enumerate()
                .any(|(x, &p)| det_walls[x + 1..].iter().any(|&q| p != q && crossing(p, q)));
            if via_pinned || via_crossing {
                determined[r] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let coverage = determined.iter().filter(|d| **d).count() as f64 / nr.max(1) as f64;
    CoverageReport { determined, coverage }
}

/// Full interpretation of a network: taxonomy, chains, coverage, continuity
/// and the piece table.
pub fn analyze(net: &ReluNetwork) -> AnalysisReport {
    let analysis = Analysis::new(net);
    let labels = classify(net, &analysis);
    let coverage = coverage_by_continuity(&analysis.forest);
    let continuity = check_continuity(&analysis.pl);
    AnalysisReport {
        labels,
        forest: analysis.forest,
        coverage,
        continuity,
        piece_table: analysis.pl.pieces,
    }
}
