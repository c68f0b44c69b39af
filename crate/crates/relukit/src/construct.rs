//! Constructive realization of piecewise linear targets in n dimensions:
//! linear-output solves, perturbation to nonsingularity, chain recurrences
//! over one or several hyperplane orders, negative-form transforms, and the
//! grid boundary-determination pipeline.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::geometry::{
    self, box_corners, Arrangement, GeometryError, Hyperplane, OrderVerdict, Region, Side,
    StrictPartialOrder,
};
use crate::linalg;
use crate::network::{AffinePiece, PiecewiseLinear, ReluNetwork, ReluUnit};
use crate::trainer::{relative_error, FitReport};

/// Residual bound for linear-output solves.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// Default Lemma-style perturbation size; halved on failure, up to 6 retries.
pub const DEFAULT_PERTURBATION: f64 = 1e-6;

const CONTINUITY_GAP_TOL: f64 = 1e-8;

/// Which of the four multi-order plan conditions failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanCondition {
    I,
    II,
    III,
    IV,
}

impl std::fmt::Display for PlanCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("linear-output matrix is rank deficient: rank {0}")]
    RankDeficient(usize),
    #[error("perturbation pushed the region off the positive side")]
    PerturbationBreaksRegion,
    #[error("pieces disagree on the knot: gap {gap}")]
    NotContinuous { gap: f64 },
    #[error("region {region} is not on the positive side of hyperplane {hyperplane}")]
    RegionNotPositive { hyperplane: usize, region: usize },
    #[error("strict partial order does not hold: {0}")]
    OrderDoesNotHold(String),
    #[error("order plan violates condition {condition}: {detail}")]
    PlanInvalid {
        condition: PlanCondition,
        detail: String,
    },
    #[error("boundary pieces are not mutually continuous: {0}")]
    InconsistentBoundary(String),
    #[error("target disagrees with its boundary fill on region {region} (residual {residual})")]
    TargetNotRealizable { region: usize, residual: f64 },
    #[error("hyperplane {0} is not a chain unit of this realization")]
    FlipOutsideOrderTree(usize),
    #[error("negative forms require the order tree to cover every region")]
    FlipNeedsFullCoverage,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The columns `[w_i; b_i]` available to realize an affine piece on one
/// region; every column's hyperplane must keep the region on its positive
/// side.
#[derive(Debug, Clone)]
pub struct LinearOutputSystem {
    pub columns: Vec<Hyperplane>,
    pub region: Region,
}

impl LinearOutputSystem {
    pub fn new(columns: Vec<Hyperplane>, region: Region) -> Result<Self, ConstructError> {
        for h in &columns {
            if h.side(&region.witness) != Side::Positive {
                return Err(ConstructError::RegionNotPositive {
                    hyperplane: h.id,
                    region: usize::MAX,
                });
            }
        }
        Ok(LinearOutputSystem { columns, region })
    }
}

fn column_vec(h: &Hyperplane) -> Vec<f64> {
    let mut v = h.w.clone();
    v.push(h.b);
    v
}

fn piece_vec(p: &AffinePiece) -> Vec<f64> {
    let mut v = p.w.clone();
    v.push(p.b);
    v
}

/// Solve `sum_i lambda_i (w_i, b_i) = target` for the free columns, with some
/// weights pinned in advance. Returns the full weight vector (pinned entries
/// included); the free part is the minimum-norm solution.
pub fn solve_linear_output(
    sys: &LinearOutputSystem,
    target: &AffinePiece,
    fixed: &[(usize, f64)],
) -> Result<Vec<f64>, ConstructError> {
    let n1 = target.w.len() + 1;
    let fixed_map: BTreeMap<usize, f64> = fixed.iter().cloned().collect();
    let mut rhs = piece_vec(target);
    for (&idx, &lambda) in &fixed_map {
        let col = column_vec(&sys.columns[idx]);
        linalg::axpy(&mut rhs, -lambda, &col);
    }
    let free_idx: Vec<usize> = (0..sys.columns.len())
        .filter(|i| !fixed_map.contains_key(i))
        .collect();
    let columns: Vec<Vec<f64>> = free_idx
        .iter()
        .map(|&i| column_vec(&sys.columns[i]))
        .collect();
    let (free_lambda, rank) = linalg::min_norm_solve(&columns, &rhs);
    if rank < n1 {
        return Err(ConstructError::RankDeficient(rank));
    }
    let residual = linalg::solve_residual(&columns, &free_lambda, &rhs);
    let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if residual > SOLVE_RESIDUAL_TOL * scale {
        return Err(ConstructError::RankDeficient(rank));
    }
    let mut out = vec![0.0; sys.columns.len()];
    for (&idx, &lambda) in &fixed_map {
        out[idx] = lambda;
    }
    for (&idx, &lambda) in free_idx.iter().zip(&free_lambda) {
        out[idx] = lambda;
    }
    Ok(out)
}

/// Perturb `n+1` hyperplanes that all keep `region` positive so that their
/// stacked `(n+1) x (n+1)` matrix becomes nonsingular. The first hyperplane
/// is never changed; each dependent one is moved by `epsilon` along a unit
/// direction orthogonal to the span of its predecessors.
pub fn perturb_to_nonsingular(
    hs: &[Hyperplane],
    region: &Region,
    epsilon: f64,
) -> Result<Vec<Hyperplane>, ConstructError> {
    assert!(epsilon > 0.0);
    for h in hs {
        if h.side(&region.witness) != Side::Positive {
            return Err(ConstructError::RegionNotPositive {
                hyperplane: h.id,
                region: usize::MAX,
            });
        }
    }
    let dim = hs[0].w.len() + 1;
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(hs.len());
    let mut out = Vec::with_capacity(hs.len());
    for (k, h) in hs.iter().enumerate() {
        let candidate = column_vec(h);
        let basis = linalg::orthonormalize(&vectors);
        let mut residual = candidate.clone();
        for q in &basis {
            let c = linalg::dot(&residual, q);
            linalg::axpy(&mut residual, -c, q);
        }
        let independent = linalg::norm(&residual) > 1e-9 * linalg::norm(&candidate).max(1.0);
        let vector = if k == 0 || independent {
            candidate
        } else {
            let mut perp = linalg::perp_vector(&vectors, dim)
                .expect("fewer than dim vectors processed");
            // Canonical direction: last nonzero component negative.
            if let Some(v) = perp.iter().rev().find(|v| v.abs() > 1e-12) {
                if *v > 0.0 {
                    perp = linalg::scale(&perp, -1.0);
                }
            }
            let mut v = candidate;
            linalg::axpy(&mut v, epsilon, &perp);
            v
        };
        let h_new = Hyperplane::new(h.id, vector[..dim - 1].to_vec(), vector[dim - 1])
            .map_err(ConstructError::Geometry)?;
        if h_new.functional(&region.witness) <= 0.0 {
            return Err(ConstructError::PerturbationBreaksRegion);
        }
        vectors.push(vector);
        out.push(h_new);
    }
    debug_assert_eq!(linalg::column_rank(&vectors), dim.min(vectors.len()));
    Ok(out)
}

/// `n` affinely independent points on the knot hyperplane.
fn knot_points(knot: &Hyperplane) -> Vec<Vec<f64>> {
    let n = knot.w.len();
    let nn = linalg::dot(&knot.w, &knot.w);
    let base = linalg::scale(&knot.w, -knot.b / nn);
    let mut points = vec![base.clone()];
    for t in linalg::nullspace_basis(&[knot.w.clone()], n) {
        let mut p = base.clone();
        linalg::axpy(&mut p, 1.0, &t);
        points.push(p);
    }
    points
}

/// Largest disagreement of two affine pieces over the knot hyperplane.
fn knot_gap(a: &AffinePiece, b: &AffinePiece, knot: &Hyperplane) -> f64 {
    knot_points(knot)
        .iter()
        .map(|p| (a.eval(p) - b.eval(p)).abs())
        .fold(0.0, f64::max)
}

/// The unique weight with `s_next = s_prev + lambda * (w, b)` for pieces that
/// agree on the knot. Computed from one probe point off the knot where the
/// functional equals one.
pub fn adjacent_lambda(
    s_prev: &AffinePiece,
    s_next: &AffinePiece,
    knot: &Hyperplane,
) -> Result<f64, ConstructError> {
    let scale = s_prev.max_coeff().max(s_next.max_coeff()).max(1.0);
    let gap = knot_gap(s_prev, s_next, knot);
    if gap > CONTINUITY_GAP_TOL * scale {
        return Err(ConstructError::NotContinuous { gap });
    }
    let nn = linalg::dot(&knot.w, &knot.w);
    let mut probe = linalg::scale(&knot.w, -knot.b / nn);
    linalg::axpy(&mut probe, 1.0 / nn, &knot.w);
    let denom = knot.functional(&probe);
    let lambda = (s_next.eval(&probe) - s_prev.eval(&probe)) / denom;
    debug_assert!({
        let mut check = s_prev.clone();
        check.add_scaled(lambda, &knot.w, knot.b);
        check.sub(s_next).max_coeff() <= 1e-9 * scale.max(lambda.abs())
    });
    Ok(lambda)
}

/// One constructed hidden unit together with how it can be re-expressed.
#[derive(Debug, Clone)]
pub struct ChainUnit {
    /// The hyperplane as realized by the original (positive-form) chain.
    pub base: Hyperplane,
    pub lambda: f64,
    /// Which order in `chains` this unit belongs to.
    pub order: usize,
    /// Substituted by its negative form.
    pub flipped: bool,
    /// Weight of an added negative partner unit, if any.
    pub added_negative: Option<f64>,
}

/// A constructed network with enough bookkeeping to re-derive weights after
/// negative-form transforms.
#[derive(Debug, Clone)]
pub struct Realization {
    pub arrangement: Arrangement,
    pub globals: Vec<Hyperplane>,
    pub global_lambdas: Vec<f64>,
    pub chain_units: Vec<ChainUnit>,
    pub chains: Vec<StrictPartialOrder>,
    pub hub_region: usize,
    pub hub_piece: AffinePiece,
    /// Regions whose pieces the construction does not pin down.
    pub uncovered: Vec<usize>,
}

impl Realization {
    pub fn network(&self) -> ReluNetwork {
        let n = self.hub_piece.w.len();
        let mut units: Vec<ReluUnit> = self
            .globals
            .iter()
            .zip(&self.global_lambdas)
            .map(|(h, &l)| ReluUnit::new(h.w.clone(), h.b, l))
            .collect();
        for cu in &self.chain_units {
            if cu.flipped {
                let neg = cu.base.negative_form();
                units.push(ReluUnit::new(neg.w, neg.b, cu.lambda));
            } else if let Some(beta) = cu.added_negative {
                units.push(ReluUnit::new(cu.base.w.clone(), cu.base.b, cu.lambda - beta));
                let neg = cu.base.negative_form();
                units.push(ReluUnit::new(neg.w, neg.b, beta));
            } else {
                units.push(ReluUnit::new(cu.base.w.clone(), cu.base.b, cu.lambda));
            }
        }
        ReluNetwork::new(n, units)
    }

    pub fn theta(&self) -> usize {
        self.network().theta()
    }

    /// Affine target the globals must realize: the hub piece plus the
    /// compensation for every unit expressed in negative form. Flipping a
    /// unit `(w, b, l)` rewrites `l relu(w.x+b)` as `l relu(-(w.x+b)) +
    /// l (w.x+b)`, so the globals absorb `l (w, b)`; an added negative
    /// partner with weight `beta` absorbs `beta (w, b)` the same way.
    fn globals_target(&self) -> AffinePiece {
        let mut target = self.hub_piece.clone();
        for cu in &self.chain_units {
            if cu.flipped {
                target.add_scaled(cu.lambda, &cu.base.w, cu.base.b);
            } else if let Some(beta) = cu.added_negative {
                target.add_scaled(beta, &cu.base.w, cu.base.b);
            }
        }
        target
    }

    fn resolve_globals(&mut self) -> Result<(), ConstructError> {
        let sys = LinearOutputSystem {
            columns: self.globals.clone(),
            region: self.arrangement.regions[self.hub_region].clone(),
        };
        self.global_lambdas = solve_linear_output(&sys, &self.globals_target(), &[])?;
        Ok(())
    }
}

/// Perturb with retries: halve epsilon when the region breaks, up to six
/// attempts, and verify the extra side conditions after each attempt.
fn perturb_with_retry(
    hs: &[Hyperplane],
    region: &Region,
    check: impl Fn(&[Hyperplane]) -> bool,
) -> Result<Vec<Hyperplane>, ConstructError> {
    let mut eps = DEFAULT_PERTURBATION;
    let mut last = ConstructError::PerturbationBreaksRegion;
    for _ in 0..6 {
        match perturb_to_nonsingular(hs, region, eps) {
            Ok(out) => {
                if check(&out) {
                    return Ok(out);
                }
                last = ConstructError::PerturbationBreaksRegion;
                eps *= 0.5;
            }
            Err(ConstructError::PerturbationBreaksRegion) => {
                last = ConstructError::PerturbationBreaksRegion;
                eps *= 0.5;
            }
            Err(other) => return Err(other),
        }
    }
    Err(last)
}

/// Solve the globals for `piece` on `region`, perturbing them into general
/// position when the plain solve is rank deficient. `extra_check` validates
/// the perturbed hyperplanes against the caller's side conditions.
fn solve_globals(
    globals: &[Hyperplane],
    region: &Region,
    piece: &AffinePiece,
    extra_check: impl Fn(&[Hyperplane]) -> bool,
) -> Result<(Vec<Hyperplane>, Vec<f64>), ConstructError> {
    let n1 = piece.w.len() + 1;
    let sys = LinearOutputSystem::new(globals.to_vec(), region.clone())?;
    match solve_linear_output(&sys, piece, &[]) {
        Ok(lambdas) => Ok((globals.to_vec(), lambdas)),
        Err(ConstructError::RankDeficient(rank)) => {
            if globals.len() < n1 {
                return Err(ConstructError::RankDeficient(rank));
            }
            let mut fixed = perturb_with_retry(&globals[..n1], region, &extra_check)?;
            fixed.extend_from_slice(&globals[n1..]);
            let sys = LinearOutputSystem::new(fixed.clone(), region.clone())?;
            let lambdas = solve_linear_output(&sys, piece, &[])?;
            Ok((fixed, lambdas))
        }
        Err(other) => Err(other),
    }
}

/// Realize a continuous target over one strict partial order: the globals
/// produce the initial region's piece, then each chain hyperplane's weight
/// comes from the adjacent-piece relation.
pub fn realize_single_order(
    a: &Arrangement,
    order: &StrictPartialOrder,
    target: &PiecewiseLinear,
    globals: &[Hyperplane],
) -> Result<Realization, ConstructError> {
    assert_eq!(target.pieces.len(), a.regions.len(), "target not aligned");
    match geometry::verify_order(a, order)? {
        OrderVerdict::Holds => {}
        violated => return Err(ConstructError::OrderDoesNotHold(format!("{violated:?}"))),
    }
    let serves: Vec<usize> = std::iter::once(order.initial_region)
        .chain(order.ordered_regions.iter().cloned())
        .collect();
    for h in globals {
        for &r in &serves {
            if h.side(&a.regions[r].witness) != Side::Positive {
                return Err(ConstructError::RegionNotPositive {
                    hyperplane: h.id,
                    region: r,
                });
            }
        }
    }

    let initial_piece = target.pieces[order.initial_region].clone();
    let all_positive = |hs: &[Hyperplane]| {
        hs.iter().all(|h| {
            serves
                .iter()
                .all(|&r| h.side(&a.regions[r].witness) == Side::Positive)
        })
    };
    let (globals, global_lambdas) = solve_globals(
        globals,
        &a.regions[order.initial_region],
        &initial_piece,
        all_positive,
    )?;

    let mut chain_units = Vec::with_capacity(order.chain.len());
    let mut prev = order.initial_region;
    for (pos, &hid) in order.chain.iter().enumerate() {
        let cur = order.ordered_regions[pos];
        let h = &a.hyperplanes[a.position_of_id(hid)?];
        let lambda = adjacent_lambda(&target.pieces[prev], &target.pieces[cur], h)?;
        chain_units.push(ChainUnit {
            base: h.clone(),
            lambda,
            order: 0,
            flipped: false,
            added_negative: None,
        });
        prev = cur;
    }

    let covered: BTreeSet<usize> = serves.iter().cloned().collect();
    let uncovered = (0..a.regions.len()).filter(|r| !covered.contains(r)).collect();
    Ok(Realization {
        arrangement: a.clone(),
        globals,
        global_lambdas,
        chain_units,
        chains: vec![order.clone()],
        hub_region: order.initial_region,
        hub_piece: initial_piece,
        uncovered,
    })
}

/// A multi-order construction plan: disjoint chains executed in sequence, a
/// hub region realized by universal globals, and the leftover regions.
#[derive(Debug, Clone)]
pub struct OrderPlan {
    pub orders: Vec<StrictPartialOrder>,
    /// Execution order, as indices into `orders`.
    pub sequence: Vec<usize>,
    pub universal_globals: Vec<Hyperplane>,
    pub hub_region: usize,
    pub uncovered: Vec<usize>,
}

fn universal_on_box(h: &Hyperplane, n: usize) -> bool {
    box_corners(n).iter().all(|c| h.functional(c) > 0.0)
}

/// Check conditions I-IV of the multi-order construction against the
/// arrangement.
pub fn validate_plan(a: &Arrangement, plan: &OrderPlan) -> Result<(), ConstructError> {
    let n = a.n;
    fn invalid(condition: PlanCondition, detail: String) -> Result<(), ConstructError> {
        Err(ConstructError::PlanInvalid { condition, detail })
    }
    use PlanCondition::*;

    // Premises: chains are valid orders with disjoint hyperplane sets, the
    // sequence is a permutation, and enough universal globals exist.
    for (i, order) in plan.orders.iter().enumerate() {
        match geometry::verify_order(a, order)? {
            OrderVerdict::Holds => {}
            v => return invalid(I, format!("order {i} invalid: {v:?}")),
        }
    }
    let mut used_ids = BTreeSet::new();
    for order in &plan.orders {
        for &id in &order.chain {
            if !used_ids.insert(id) {
                return invalid(I, format!("hyperplane {id} appears in two orders"));
            }
        }
    }
    if plan.sequence.len() != plan.orders.len()
        || plan
            .sequence
            .iter()
            .collect::<BTreeSet<_>>()
            .len()
            != plan.orders.len()
        || plan.sequence.iter().any(|&s| s >= plan.orders.len())
    {
        return invalid(I, "sequence must list every order exactly once".into());
    }
    if plan.universal_globals.len() < n + 1 {
        return invalid(
            I,
            format!(
                "need at least {} universal globals, got {}",
                n + 1,
                plan.universal_globals.len()
            ),
        );
    }
    for h in &plan.universal_globals {
        if !universal_on_box(h, n) {
            return invalid(I, format!("global {} is not positive on the box", h.id));
        }
    }

    // Condition I: ordered regions, the hub and the uncovered set partition
    // the regions.
    let mut seen_regions: BTreeMap<usize, String> = BTreeMap::new();
    let mut claims: Vec<(usize, String)> = vec![(plan.hub_region, "hub".into())];
    for (i, order) in plan.orders.iter().enumerate() {
        for &r in &order.ordered_regions {
            claims.push((r, format!("order {i}")));
        }
    }
    for &r in &plan.uncovered {
        claims.push((r, "uncovered".into()));
    }
    for (r, who) in claims {
        if let Some(prev) = seen_regions.insert(r, who.clone()) {
            return invalid(I, format!("region {r} claimed by {prev} and {who}"));
        }
    }
    if seen_regions.len() != a.regions.len() {
        return invalid(
            I,
            format!(
                "{} regions assigned, arrangement has {}",
                seen_regions.len(),
                a.regions.len()
            ),
        );
    }

    // Condition II: later chains' hyperplanes are quiet on the hub and on
    // every earlier chain's ordered regions.
    let side = |hid: usize, region: usize| -> Result<Side, ConstructError> {
        let pos = a.position_of_id(hid)?;
        Ok(a.hyperplanes[pos].side(&a.regions[region].witness))
    };
    for (tau, &later) in plan.sequence.iter().enumerate() {
        for &hid in &plan.orders[later].chain {
            if side(hid, plan.hub_region)? != Side::Negative {
                return invalid(II, format!("hyperplane {hid} cuts or covers the hub"));
            }
            for &earlier in &plan.sequence[..tau] {
                for &r in &plan.orders[earlier].ordered_regions {
                    if side(hid, r)? != Side::Negative {
                        return invalid(
                            II,
                            format!("hyperplane {hid} disturbs region {r} of an earlier order"),
                        );
                    }
                }
            }
        }
    }

    // Condition III: hyperplanes positive on an order's initial region stay
    // positive on all its ordered regions.
    for (i, order) in plan.orders.iter().enumerate() {
        let initial = &a.regions[order.initial_region].witness;
        for h in &a.hyperplanes {
            if h.side(initial) == Side::Positive {
                for &r in &order.ordered_regions {
                    if h.side(&a.regions[r].witness) != Side::Positive {
                        return invalid(
                            III,
                            format!(
                                "order {i}: hyperplane {} is positive on the initial region \
                                 but not on ordered region {r}",
                                h.id
                            ),
                        );
                    }
                }
            }
        }
    }

    // Condition IV: each initial region must be the hub, an ordered region
    // of an earlier order, or uncovered (case c: its continuity with the
    // first ordered piece is verified during construction).
    let mut done: BTreeSet<usize> = BTreeSet::new();
    for &idx in &plan.sequence {
        let init = plan.orders[idx].initial_region;
        let ok = init == plan.hub_region
            || done.contains(&init)
            || plan.uncovered.contains(&init);
        if !ok {
            return invalid(
                IV,
                format!("order {idx}: initial region {init} is not available yet"),
            );
        }
        done.extend(plan.orders[idx].ordered_regions.iter());
    }
    Ok(())
}

/// Realize a target over several strict partial orders executed in the
/// plan's sequence. Uncovered regions are reported, not constructed; their
/// realized pieces are whatever continuity forces.
pub fn realize_multi_order(
    a: &Arrangement,
    plan: &OrderPlan,
    target: &PiecewiseLinear,
) -> Result<Realization, ConstructError> {
    assert_eq!(target.pieces.len(), a.regions.len(), "target not aligned");
    validate_plan(a, plan)?;

    let hub_piece = target.pieces[plan.hub_region].clone();
    let n = a.n;
    let (globals, global_lambdas) = solve_globals(
        &plan.universal_globals,
        &a.regions[plan.hub_region],
        &hub_piece,
        |hs| hs.iter().all(|h| universal_on_box(h, n)),
    )?;

    let mut realization = Realization {
        arrangement: a.clone(),
        globals,
        global_lambdas,
        chain_units: Vec::new(),
        chains: plan.orders.clone(),
        hub_region: plan.hub_region,
        hub_piece,
        uncovered: plan.uncovered.clone(),
    };

    let mut realized_ordered: BTreeSet<usize> = BTreeSet::new();
    for &idx in &plan.sequence {
        let order = &plan.orders[idx];
        let init = order.initial_region;
        // Initial piece: hub (case a), an accomplished ordered region
        // (case b), or whatever the network currently realizes there
        // (case c, verified by the continuity check inside adjacent_lambda).
        let s0 = if init == plan.hub_region || realized_ordered.contains(&init) {
            target.pieces[init].clone()
        } else {
            realized_piece(&realization, &a.regions[init].witness)
        };
        let mut prev_piece = s0;
        for (pos, &hid) in order.chain.iter().enumerate() {
            let cur = order.ordered_regions[pos];
            let h = &a.hyperplanes[a.position_of_id(hid)?];
            let lambda = adjacent_lambda(&prev_piece, &target.pieces[cur], h)?;
            realization.chain_units.push(ChainUnit {
                base: h.clone(),
                lambda,
                order: idx,
                flipped: false,
                added_negative: None,
            });
            prev_piece = target.pieces[cur].clone();
        }
        realized_ordered.extend(order.ordered_regions.iter());
    }
    Ok(realization)
}

/// The affine piece the current units realize at a point (used for initial
/// regions that no order has designed).
fn realized_piece(r: &Realization, witness: &[f64]) -> AffinePiece {
    let n = witness.len();
    let mut piece = AffinePiece::zero(n);
    for (h, &l) in r.globals.iter().zip(&r.global_lambdas) {
        piece.add_scaled(l, &h.w, h.b);
    }
    for cu in &r.chain_units {
        debug_assert!(!cu.flipped && cu.added_negative.is_none());
        if cu.base.functional(witness) > 0.0 {
            piece.add_scaled(cu.lambda, &cu.base.w, cu.base.b);
        }
    }
    piece
}

/// Substitute the listed chain hyperplanes by their negative forms, keeping
/// the realized function identical: the globals re-absorb the affine part
/// `lambda (w, b)` of each flipped unit.
pub fn apply_negative_forms(
    r: &Realization,
    flips: &[usize],
) -> Result<Realization, ConstructError> {
    if flips.is_empty() {
        return Ok(r.clone());
    }
    if !r.uncovered.is_empty() {
        return Err(ConstructError::FlipNeedsFullCoverage);
    }
    let mut out = r.clone();
    for &id in flips {
        let unit = out
            .chain_units
            .iter_mut()
            .find(|cu| cu.base.id == id && !cu.flipped)
            .ok_or(ConstructError::FlipOutsideOrderTree(id))?;
        unit.flipped = true;
    }
    out.resolve_globals()?;
    Ok(out)
}

/// Add a negative unit with weight `beta` at an existing chain knot, forming
/// a bidirectional knot without changing the realized function.
pub fn add_negative_unit(
    r: &Realization,
    id: usize,
    beta: f64,
) -> Result<Realization, ConstructError> {
    if !r.uncovered.is_empty() {
        return Err(ConstructError::FlipNeedsFullCoverage);
    }
    let mut out = r.clone();
    let unit = out
        .chain_units
        .iter_mut()
        .find(|cu| cu.base.id == id && !cu.flipped && cu.added_negative.is_none())
        .ok_or(ConstructError::FlipOutsideOrderTree(id))?;
    unit.added_negative = Some(beta);
    out.resolve_globals()?;
    Ok(out)
}

/// Axis-aligned grid of the unit box with `M_i` cells per axis.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub n: usize,
    pub per_axis: Vec<usize>,
    arrangement: Arrangement,
    region_of_cell: Vec<usize>,
}

impl GridSpec {
    pub fn new(n: usize, per_axis: Vec<usize>) -> Result<Self, GeometryError> {
        assert_eq!(per_axis.len(), n);
        assert!(per_axis.iter().all(|&m| m >= 2), "each axis needs M >= 2");
        let mut hyperplanes = Vec::new();
        let mut id = 0;
        for (axis, &m) in per_axis.iter().enumerate() {
            for j in 1..m {
                let mut w = vec![0.0; n];
                w[axis] = 1.0;
                hyperplanes.push(Hyperplane::new(id, w, -(j as f64) / m as f64)?);
                id += 1;
            }
        }
        let arrangement = geometry::build_arrangement(n, hyperplanes)?;
        let cell_count: usize = per_axis.iter().product();
        assert_eq!(arrangement.regions.len(), cell_count);

        let mut region_of_cell = vec![usize::MAX; cell_count];
        for (r, region) in arrangement.regions.iter().enumerate() {
            let mut cell = Vec::with_capacity(n);
            for (axis, &m) in per_axis.iter().enumerate() {
                let k = (region.witness[axis] * m as f64).floor() as usize;
                cell.push(k.min(m - 1));
            }
            region_of_cell[flat_index(&cell, &per_axis)] = r;
        }
        assert!(region_of_cell.iter().all(|&r| r != usize::MAX));
        Ok(GridSpec {
            n,
            per_axis,
            arrangement,
            region_of_cell,
        })
    }

    pub fn arrangement(&self) -> &Arrangement {
        &self.arrangement
    }

    pub fn region_count(&self) -> usize {
        self.region_of_cell.len()
    }

    /// Arrangement region index of a grid cell.
    pub fn region_index(&self, cell: &[usize]) -> usize {
        self.region_of_cell[flat_index(cell, &self.per_axis)]
    }

    /// The dividing hyperplane `x_axis = level / M_axis`.
    pub fn hyperplane(&self, axis: usize, level: usize) -> &Hyperplane {
        let mut id = 0;
        for a in 0..axis {
            id += self.per_axis[a] - 1;
        }
        id += level - 1;
        &self.arrangement.hyperplanes[id]
    }

    /// All cells in lexicographic order.
    pub fn cells(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.region_count());
        let mut cell = vec![0usize; self.n];
        loop {
            out.push(cell.clone());
            let mut d = self.n;
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                cell[d] += 1;
                if cell[d] < self.per_axis[d] {
                    break;
                }
                cell[d] = 0;
            }
        }
    }

    /// Boundary cells: the origin cell and the chains along each axis.
    pub fn boundary_set(&self) -> BoundarySet {
        let mut regions = vec![self.region_index(&vec![0; self.n])];
        for axis in 0..self.n {
            for j in 1..self.per_axis[axis] {
                let mut cell = vec![0; self.n];
                cell[axis] = j;
                regions.push(self.region_index(&cell));
            }
        }
        BoundarySet { regions }
    }
}

fn flat_index(cell: &[usize], per_axis: &[usize]) -> usize {
    let mut idx = 0;
    for (k, m) in cell.iter().zip(per_axis) {
        debug_assert!(k < m);
        idx = idx * m + k;
    }
    idx
}

/// Region indices of the boundary family: the origin cell plus every cell
/// with exactly one nonzero coordinate.
#[derive(Debug, Clone)]
pub struct BoundarySet {
    pub regions: Vec<usize>,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn contains(&self, region: usize) -> bool {
        self.regions.contains(&region)
    }
}

/// The unique affine piece continuous with `s_a` across `h_a` and with `s_b`
/// across `h_b`, for crossing hyperplanes. Fails when no such piece exists.
pub fn complete_fourth_piece(
    s_a: &AffinePiece,
    s_b: &AffinePiece,
    h_a: &Hyperplane,
    h_b: &Hyperplane,
) -> Result<AffinePiece, ConstructError> {
    let columns = vec![column_vec(h_a), linalg::scale(&column_vec(h_b), -1.0)];
    let rhs = piece_vec(&s_b.sub(s_a));
    let (coeff, rank) = linalg::min_norm_solve(&columns, &rhs);
    if rank < 2 {
        return Err(ConstructError::InconsistentBoundary(
            "completion hyperplanes are parallel".into(),
        ));
    }
    let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let residual = linalg::solve_residual(&columns, &coeff, &rhs);
    if residual > CONTINUITY_GAP_TOL * scale {
        return Err(ConstructError::InconsistentBoundary(format!(
            "pieces admit no common completion (residual {residual})"
        )));
    }
    let mut piece = s_a.clone();
    piece.add_scaled(coeff[0], &h_a.w, h_a.b);
    Ok(piece)
}

/// Fill all grid cells from the boundary family by repeated four-region
/// completion, sweeping cells in order of increasing coordinate sum.
pub fn propagate_boundary(
    grid: &GridSpec,
    boundary_pieces: &BTreeMap<usize, AffinePiece>,
) -> Result<PiecewiseLinear, ConstructError> {
    let boundary = grid.boundary_set();
    for &r in &boundary.regions {
        if !boundary_pieces.contains_key(&r) {
            return Err(ConstructError::InconsistentBoundary(format!(
                "missing piece for boundary region {r}"
            )));
        }
    }
    if boundary_pieces.len() != boundary.len() {
        return Err(ConstructError::InconsistentBoundary(
            "extra non-boundary pieces supplied".into(),
        ));
    }

    // Mutual continuity of the input along each axis chain.
    for axis in 0..grid.n {
        for j in 0..grid.per_axis[axis] - 1 {
            let mut a = vec![0; grid.n];
            a[axis] = j;
            let mut b = vec![0; grid.n];
            b[axis] = j + 1;
            let pa = &boundary_pieces[&grid.region_index(&a)];
            let pb = &boundary_pieces[&grid.region_index(&b)];
            let h = grid.hyperplane(axis, j + 1);
            let gap = knot_gap(pa, pb, h);
            let scale = pa.max_coeff().max(pb.max_coeff()).max(1.0);
            if gap > CONTINUITY_GAP_TOL * scale {
                return Err(ConstructError::InconsistentBoundary(format!(
                    "axis {axis} pieces {j} and {} disagree on their knot (gap {gap})",
                    j + 1
                )));
            }
        }
    }

    let mut pieces: Vec<Option<AffinePiece>> = vec![None; grid.region_count()];
    for (&r, piece) in boundary_pieces {
        pieces[r] = Some(piece.clone());
    }
    let mut cells = grid.cells();
    cells.sort_by_key(|c| c.iter().sum::<usize>());
    for cell in cells {
        let r = grid.region_index(&cell);
        if pieces[r].is_some() {
            continue;
        }
        let positives: Vec<usize> = (0..grid.n).filter(|&d| cell[d] > 0).collect();
        debug_assert!(positives.len() >= 2);
        let (i, j) = (positives[0], positives[1]);
        let mut cell_a = cell.clone();
        cell_a[i] -= 1;
        let mut cell_b = cell.clone();
        cell_b[j] -= 1;
        let s_a = pieces[grid.region_index(&cell_a)]
            .clone()
            .expect("lower cell already filled");
        let s_b = pieces[grid.region_index(&cell_b)]
            .clone()
            .expect("lower cell already filled");
        let completed = complete_fourth_piece(
            &s_a,
            &s_b,
            grid.hyperplane(i, cell[i]),
            grid.hyperplane(j, cell[j]),
        )?;
        pieces[r] = Some(completed);
    }
    Ok(PiecewiseLinear {
        arrangement: grid.arrangement().clone(),
        pieces: pieces.into_iter().map(|p| p.expect("all cells filled")).collect(),
    })
}

/// Default universal global hyperplanes: the axis functionals plus the
/// all-ones functional, offset so the box is strictly positive and the
/// stacked matrix is nonsingular.
pub fn default_universal_globals(n: usize) -> Vec<Hyperplane> {
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        out.push(Hyperplane::new(1_000_000 + i, w, 0.1 + 0.05 * i as f64).unwrap());
    }
    out.push(
        Hyperplane::new(1_000_000 + n, vec![1.0; n], 0.1 + 0.05 * n as f64).unwrap(),
    );
    out
}

/// Realize a continuous grid target with one chain per axis plus `n + 1`
/// universal globals; boundary determination supplies the interior regions.
pub fn realize_grid(
    grid: &GridSpec,
    target: &PiecewiseLinear,
) -> Result<Realization, ConstructError> {
    assert_eq!(
        target.pieces.len(),
        grid.region_count(),
        "target not aligned with the grid"
    );
    let boundary = grid.boundary_set();
    let boundary_pieces: BTreeMap<usize, AffinePiece> = boundary
        .regions
        .iter()
        .map(|&r| (r, target.pieces[r].clone()))
        .collect();
    let filled = propagate_boundary(grid, &boundary_pieces)?;
    for (r, (got, want)) in filled.pieces.iter().zip(&target.pieces).enumerate() {
        let scale = want.max_coeff().max(1.0);
        let residual = got.sub(want).max_coeff();
        if residual > 1e-8 * scale {
            return Err(ConstructError::TargetNotRealizable { region: r, residual });
        }
    }

    let a = grid.arrangement();
    let origin = grid.region_index(&vec![0; grid.n]);
    let n = grid.n;
    let (globals, global_lambdas) = solve_globals(
        &default_universal_globals(n),
        &a.regions[origin],
        &target.pieces[origin],
        |hs| hs.iter().all(|h| universal_on_box(h, n)),
    )?;

    let mut chain_units = Vec::new();
    let mut chains = Vec::new();
    for axis in 0..n {
        let mut chain = Vec::new();
        let mut ordered = Vec::new();
        let mut prev_cell = vec![0; n];
        for j in 1..grid.per_axis[axis] {
            let mut cell = vec![0; n];
            cell[axis] = j;
            let h = grid.hyperplane(axis, j);
            let lambda = adjacent_lambda(
                &target.pieces[grid.region_index(&prev_cell)],
                &target.pieces[grid.region_index(&cell)],
                h,
            )?;
            chain_units.push(ChainUnit {
                base: h.clone(),
                lambda,
                order: axis,
                flipped: false,
                added_negative: None,
            });
            chain.push(h.id);
            ordered.push(grid.region_index(&cell));
            prev_cell = cell;
        }
        chains.push(StrictPartialOrder {
            chain,
            ordered_regions: ordered,
            initial_region: origin,
        });
    }

    Ok(Realization {
        arrangement: a.clone(),
        globals,
        global_lambdas,
        chain_units,
        chains,
        hub_region: origin,
        hub_piece: target.pieces[origin].clone(),
        // Interior cells are forced by the boundary, so nothing is left
        // undetermined.
        uncovered: Vec::new(),
    })
}

/// Approximate a function by vertex interpolation on the grid's boundary
/// family, boundary propagation and an exact grid realization. The report
/// carries the range-normalized error over a dense sample lattice.
pub fn approximate_c1<F: Fn(&[f64]) -> f64>(
    f: F,
    grid: &GridSpec,
    samples_per_axis: usize,
) -> (Realization, FitReport) {
    let n = grid.n;
    // Seed cell: interpolate f at the origin corner and its axis neighbors.
    let f0 = f(&vec![0.0; n]);
    let mut w = Vec::with_capacity(n);
    for axis in 0..n {
        let mut v = vec![0.0; n];
        v[axis] = 1.0 / grid.per_axis[axis] as f64;
        w.push((f(&v) - f0) * grid.per_axis[axis] as f64);
    }
    let seed = AffinePiece::new(w, f0);

    let mut boundary_pieces = BTreeMap::new();
    boundary_pieces.insert(grid.region_index(&vec![0; n]), seed.clone());
    for axis in 0..n {
        let m = grid.per_axis[axis] as f64;
        let mut prev = seed.clone();
        for j in 1..grid.per_axis[axis] {
            let h = grid.hyperplane(axis, j);
            // New vertex on the far face of the cell, shared facet on h.
            let mut v = vec![0.0; n];
            v[axis] = (j + 1) as f64 / m;
            let alpha = (f(&v) - prev.eval(&v)) / h.functional(&v);
            let mut piece = prev.clone();
            piece.add_scaled(alpha, &h.w, h.b);
            let mut cell = vec![0; n];
            cell[axis] = j;
            boundary_pieces.insert(grid.region_index(&cell), piece.clone());
            prev = piece;
        }
    }

    let filled = propagate_boundary(grid, &boundary_pieces)
        .expect("vertex interpolation yields a consistent boundary");
    let realization = realize_grid(grid, &filled)
        .expect("boundary-determined targets are realizable");
    let net = realization.network();

    // Dense sample lattice for the error report.
    let mut targets = Vec::new();
    let mut predictions = Vec::new();
    let mut idx = vec![0usize; n];
    let k = samples_per_axis.max(2);
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| i as f64 / (k - 1) as f64).collect();
        targets.push(f(&x));
        predictions.push(net.eval(&x));
        let mut d = 0;
        loop {
            if d == n {
                let epsilon = relative_error(&targets, &predictions).unwrap_or(f64::INFINITY);
                let report = FitReport {
                    epsilon,
                    z_max: targets.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    z_min: targets.iter().cloned().fold(f64::INFINITY, f64::min),
                    samples: targets.len(),
                    loss_curve: Vec::new(),
                };
                return (realization, report);
            }
            idx[d] += 1;
            if idx[d] < k {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}
