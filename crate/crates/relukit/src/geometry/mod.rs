//! Hyperplane arrangements inside the unit box: region enumeration, side
//! tests, adjacency with facet-dimension checks, and strict partial orders of
//! hyperplanes.
//!
//! All cells live in `U = [0,1]^n`. The box faces are never arrangement
//! hyperplanes; they enter only as bounds of the feasibility LPs. A region is
//! the closure of a full-dimensional cell and is represented by its sign
//! vector together with a Chebyshev-center witness.

pub mod lp;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use lp::{Constraint, LpResult};

/// Side-test tolerance, applied to the functional after normalizing the
/// hyperplane to a unit normal.
pub const SIDE_TOL: f64 = 1e-9;

/// Cells whose Chebyshev radius falls below this are treated as empty.
pub const REGION_RADIUS_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("hyperplane normal must be nonzero")]
    ZeroNormal,
    #[error("duplicate hyperplane id {0}")]
    DuplicateId(usize),
    #[error("unknown hyperplane id {0}")]
    UnknownId(usize),
    #[error("index out of range: {0}")]
    IndexOutOfRange(usize),
    #[error("region pair must be distinct")]
    InvalidRegionPair,
    #[error("offsets must be strictly increasing")]
    OffsetsNotIncreasing,
    #[error("offset {offset} lies outside the box range ({low}, {high})")]
    OffsetOutsideBox { offset: f64, low: f64, high: f64 },
    #[error("order references no hyperplanes")]
    EmptyChain,
    #[error("chain repeats hyperplane id {0}")]
    RepeatedChainId(usize),
    #[error("chain and ordered region counts differ")]
    ChainRegionMismatch,
}

/// Which side of an oriented hyperplane a point falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Positive,
    Zero,
    Negative,
}

impl Side {
    fn as_char(self) -> char {
        match self {
            Side::Positive => '+',
            Side::Zero => '0',
            Side::Negative => '-',
        }
    }

    fn from_char(c: char) -> Option<Side> {
        match c {
            '+' => Some(Side::Positive),
            '0' => Some(Side::Zero),
            '-' => Some(Side::Negative),
            _ => None,
        }
    }
}

/// An oriented affine functional `w . x + b`. Orientation is semantic:
/// `(w, b)` and `(-w, -b)` denote the same wall but different values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperplane {
    pub id: usize,
    pub w: Vec<f64>,
    pub b: f64,
}

impl Hyperplane {
    pub fn new(id: usize, w: Vec<f64>, b: f64) -> Result<Self, GeometryError> {
        if linalg::norm(&w) <= 1e-12 {
            return Err(GeometryError::ZeroNormal);
        }
        Ok(Hyperplane { id, w, b })
    }

    /// The same wall with orientation reversed.
    pub fn negative_form(&self) -> Hyperplane {
        Hyperplane {
            id: self.id,
            w: self.w.iter().map(|v| -v).collect(),
            b: -self.b,
        }
    }

    pub fn functional(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.w, x) + self.b
    }

    /// Unit-normal form `(w, b) / ||w||`.
    pub fn normalized(&self) -> (Vec<f64>, f64) {
        let s = 1.0 / linalg::norm(&self.w);
        (linalg::scale(&self.w, s), self.b * s)
    }

    pub(crate) fn side(&self, x: &[f64]) -> Side {
        debug_assert_eq!(self.w.len(), x.len());
        let v = self.functional(x) / linalg::norm(&self.w);
        if v > SIDE_TOL {
            Side::Positive
        } else if v < -SIDE_TOL {
            Side::Negative
        } else {
            Side::Zero
        }
    }
}

/// Side test with the documented tolerance.
pub fn side_of(h: &Hyperplane, x: &[f64]) -> Result<Side, GeometryError> {
    if h.w.len() != x.len() {
        return Err(GeometryError::DimensionMismatch {
            expected: h.w.len(),
            got: x.len(),
        });
    }
    Ok(h.side(x))
}

/// One sign per hyperplane of an arrangement, in arrangement order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SignVector(pub Vec<Side>);

impl SignVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming(&self, other: &SignVector) -> usize {
        self.0
            .iter()
            .zip(&other.0)
            .filter(|(a, b)| a != b)
            .count()
    }
}

impl fmt::Debug for SignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl Serialize for SignVector {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let s: String = self.0.iter().map(|v| v.as_char()).collect();
        ser.serialize_str(&s)
    }
}

impl<'de> Deserialize<'de> for SignVector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        let signs = s
            .chars()
            .map(Side::from_char)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| serde::de::Error::custom("sign vector must contain only + - 0"))?;
        Ok(SignVector(signs))
    }
}

/// A full-dimensional cell, identified by its sign vector and carrying a
/// strictly interior witness point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Region {
    pub signs: SignVector,
    pub witness: Vec<f64>,
    #[serde(rename = "radius")]
    pub chebyshev_radius: f64,
}

/// Region adjacency entry: regions `i < j` share an (n-1)-facet on the
/// hyperplane with id `hyperplane`.
pub type Adjacency = (usize, usize, usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Arrangement {
    pub n: usize,
    pub hyperplanes: Vec<Hyperplane>,
    pub regions: Vec<Region>,
    pub adjacency: Vec<Adjacency>,
}

impl Arrangement {
    pub fn position_of_id(&self, id: usize) -> Result<usize, GeometryError> {
        self.hyperplanes
            .iter()
            .position(|h| h.id == id)
            .ok_or(GeometryError::UnknownId(id))
    }

    /// Separating hyperplane id of an adjacent region pair, if any.
    pub fn adjacency_of(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.adjacency
            .iter()
            .find(|(x, y, _)| *x == a && *y == b)
            .map(|(_, _, h)| *h)
    }

    /// Index of a region containing `x` (boundary points match any incident
    /// region; pieces of a continuous function agree there).
    pub fn region_of_point(&self, x: &[f64]) -> Option<usize> {
        self.regions.iter().position(|r| {
            r.signs
                .0
                .iter()
                .zip(&self.hyperplanes)
                .all(|(s, h)| match h.side(x) {
                    Side::Zero => true,
                    other => other == *s,
                })
        })
    }

    /// All witnesses, for side checks against a foreign hyperplane.
    pub fn witnesses(&self) -> impl Iterator<Item = &[f64]> {
        self.regions.iter().map(|r| r.witness.as_slice())
    }
}

/// Chebyshev center of the cell with the given signs, inside the unit box.
/// Returns `None` when the closed cell is empty.
fn chebyshev_cell(
    n: usize,
    rows: &[(Vec<f64>, f64)],
    signs: &[Side],
) -> Option<(Vec<f64>, f64)> {
    let mut constraints = Vec::with_capacity(rows.len() + 2 * n);
    for ((w, b), s) in rows.iter().zip(signs) {
        let mut coeffs = Vec::with_capacity(n + 1);
        match s {
            Side::Positive => {
                coeffs.extend(w.iter().map(|v| -v));
                coeffs.push(1.0);
                constraints.push(Constraint::new(coeffs, *b));
            }
            Side::Negative => {
                coeffs.extend_from_slice(w);
                coeffs.push(1.0);
                constraints.push(Constraint::new(coeffs, -*b));
            }
            Side::Zero => unreachable!("regions carry no zero signs"),
        }
    }
    for i in 0..n {
        let mut up = vec![0.0; n + 1];
        up[i] = 1.0;
        up[n] = 1.0;
        constraints.push(Constraint::new(up, 1.0));
        let mut lo = vec![0.0; n + 1];
        lo[i] = -1.0;
        lo[n] = 1.0;
        constraints.push(Constraint::new(lo, 0.0));
    }
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    match lp::maximize(&objective, &constraints, n) {
        LpResult::Optimal { x, objective } => Some((x[..n].to_vec(), objective)),
        LpResult::Infeasible => None,
        LpResult::Unbounded => unreachable!("radius is bounded by the box"),
    }
}

/// Enumerate the full-dimensional cells of the box under the given
/// hyperplanes, by splitting each existing region with each new hyperplane.
pub fn build_arrangement(
    n: usize,
    hyperplanes: Vec<Hyperplane>,
) -> Result<Arrangement, GeometryError> {
    assert!(n >= 1);
    let mut seen = HashSet::new();
    for h in &hyperplanes {
        if h.w.len() != n {
            return Err(GeometryError::DimensionMismatch {
                expected: n,
                got: h.w.len(),
            });
        }
        if !seen.insert(h.id) {
            return Err(GeometryError::DuplicateId(h.id));
        }
    }
    let rows: Vec<(Vec<f64>, f64)> = hyperplanes.iter().map(|h| h.normalized()).collect();

    let mut cells: Vec<(Vec<Side>, Vec<f64>, f64)> = vec![(Vec::new(), vec![0.5; n], 0.5)];
    for k in 0..hyperplanes.len() {
        let active = &rows[..=k];
        let mut next = Vec::with_capacity(cells.len() + 4);
        for (signs, witness, radius) in cells {
            let mut pos_signs = signs.clone();
            pos_signs.push(Side::Positive);
            let mut neg_signs = signs;
            neg_signs.push(Side::Negative);
            let pos = chebyshev_cell(n, active, &pos_signs)
                .filter(|(_, r)| *r >= REGION_RADIUS_TOL);
            let neg = chebyshev_cell(n, active, &neg_signs)
                .filter(|(_, r)| *r >= REGION_RADIUS_TOL);
            match (pos, neg) {
                (Some((cp, rp)), Some((cn, rn))) => {
                    next.push((pos_signs, cp, rp));
                    next.push((neg_signs, cn, rn));
                }
                (Some(_), None) => next.push((pos_signs, witness, radius)),
                (None, Some(_)) => next.push((neg_signs, witness, radius)),
                (None, None) => {
                    // The hyperplane grazes the cell; classify by the witness.
                    let raw = hyperplanes[k].functional(&witness);
                    if raw >= 0.0 {
                        next.push((pos_signs, witness, radius));
                    } else {
                        next.push((neg_signs, witness, radius));
                    }
                }
            }
        }
        cells = next;
    }

    // Canonical witnesses against the full constraint set.
    let mut regions = Vec::with_capacity(cells.len());
    for (signs, witness, radius) in cells {
        let (w, r) = chebyshev_cell(n, &rows, &signs).unwrap_or((witness, radius));
        regions.push(Region {
            signs: SignVector(signs),
            witness: w,
            chebyshev_radius: r,
        });
    }

    let mut arrangement = Arrangement {
        n,
        hyperplanes,
        regions,
        adjacency: Vec::new(),
    };
    arrangement.adjacency = compute_adjacency(&arrangement);
    Ok(arrangement)
}

fn compute_adjacency(a: &Arrangement) -> Vec<Adjacency> {
    let mut out = Vec::new();
    let n = a.n as i64;
    for i in 0..a.regions.len() {
        for j in (i + 1)..a.regions.len() {
            if a.regions[i].signs.hamming(&a.regions[j].signs) != 1 {
                continue;
            }
            let k = a.regions[i]
                .signs
                .0
                .iter()
                .zip(&a.regions[j].signs.0)
                .position(|(x, y)| x != y)
                .expect("hamming distance one");
            if facet_dimension_inner(a, i, j) == n - 1 {
                out.push((i, j, a.hyperplanes[k].id));
            }
        }
    }
    out
}

/// Geometry of a shared facet: an interior point, the inradius within the
/// facet's affine hull, and orthonormal tangent directions.
pub struct FacetInterior {
    pub center: Vec<f64>,
    pub radius: f64,
    pub tangents: Vec<Vec<f64>>,
}

/// Constraint rows of the intersection `r1 ∩ r2`: equalities where the signs
/// differ, inequalities (in `a.x <= c` form, unit rows) where they agree,
/// plus the box bounds.
fn pair_rows(
    a: &Arrangement,
    r1: usize,
    r2: usize,
) -> (Vec<(Vec<f64>, f64)>, Vec<(Vec<f64>, f64)>) {
    let mut equalities = Vec::new();
    let mut inequalities = Vec::new();
    for (k, h) in a.hyperplanes.iter().enumerate() {
        let (w, b) = h.normalized();
        let s1 = a.regions[r1].signs.0[k];
        let s2 = a.regions[r2].signs.0[k];
        if s1 != s2 {
            equalities.push((w, -b)); // w.x = -b
        } else {
            match s1 {
                // w.x + b >= 0  ->  -w.x <= b
                Side::Positive => inequalities.push((linalg::scale(&w, -1.0), b)),
                Side::Negative => inequalities.push((w, -b)),
                Side::Zero => unreachable!(),
            }
        }
    }
    for i in 0..a.n {
        let mut e = vec![0.0; a.n];
        e[i] = 1.0;
        inequalities.push((e.clone(), 1.0));
        e[i] = -1.0;
        inequalities.push((e, 0.0));
    }
    (equalities, inequalities)
}

/// Dimension of the relative interior of `r1 ∩ r2`; -1 when empty.
pub fn facet_dimension(a: &Arrangement, r1: usize, r2: usize) -> Result<i64, GeometryError> {
    if r1 == r2 {
        return Err(GeometryError::InvalidRegionPair);
    }
    for &r in &[r1, r2] {
        if r >= a.regions.len() {
            return Err(GeometryError::IndexOutOfRange(r));
        }
    }
    Ok(facet_dimension_inner(a, r1, r2))
}

fn facet_dimension_inner(a: &Arrangement, r1: usize, r2: usize) -> i64 {
    match facet_geometry(a, r1, r2) {
        None => -1,
        Some((dim, _)) => dim,
    }
}

/// Shared facet interior for an adjacent pair; `None` when the intersection
/// is empty or thinner than the facet's expected dimension.
pub fn facet_interior(a: &Arrangement, r1: usize, r2: usize) -> Option<FacetInterior> {
    match facet_geometry(a, r1, r2) {
        Some((_, Some(f))) => Some(f),
        _ => None,
    }
}

/// Returns the dimension of the relative interior, plus interior geometry
/// when the intersection is full-dimensional within its candidate subspace.
fn facet_geometry(a: &Arrangement, r1: usize, r2: usize) -> Option<(i64, Option<FacetInterior>)> {
    let n = a.n;
    let (equalities, inequalities) = pair_rows(a, r1, r2);
    let eq_rows: Vec<Vec<f64>> = equalities.iter().map(|(w, _)| w.clone()).collect();
    let eq_rhs: Vec<f64> = equalities.iter().map(|(_, c)| *c).collect();
    let point = linalg::affine_solution(&eq_rows, &eq_rhs, n)?;
    let basis = linalg::nullspace_basis(&eq_rows, n);
    let d0 = basis.len();

    if d0 == 0 {
        let ok = inequalities
            .iter()
            .all(|(w, c)| linalg::dot(w, &point) <= c + SIDE_TOL);
        return if ok {
            let interior = FacetInterior {
                center: point,
                radius: 0.0,
                tangents: Vec::new(),
            };
            Some((0, Some(interior)))
        } else {
            None
        };
    }

    // Reduce the inequalities to subspace coordinates x = point + V t.
    let mut reduced: Vec<(Vec<f64>, f64)> = Vec::new();
    for (w, c) in &inequalities {
        let coeffs: Vec<f64> = basis.iter().map(|v| linalg::dot(w, v)).collect();
        let rhs = c - linalg::dot(w, &point);
        if linalg::norm(&coeffs) <= 1e-12 {
            if rhs < -SIDE_TOL {
                return None;
            }
            continue;
        }
        reduced.push((coeffs, rhs));
    }

    let cheb = chebyshev_reduced(d0, &reduced)?;
    let (center_t, radius) = cheb;
    if radius >= REGION_RADIUS_TOL {
        let mut center = point.clone();
        for (v, t) in basis.iter().zip(&center_t) {
            linalg::axpy(&mut center, *t, v);
        }
        let interior = FacetInterior {
            center,
            radius,
            tangents: basis.clone(),
        };
        return Some((d0 as i64, Some(interior)));
    }

    // Thin polytope: find implicit equalities by maximizing each slack.
    let mut implicit: Vec<Vec<f64>> = Vec::new();
    for (coeffs, rhs) in &reduced {
        let objective: Vec<f64> = coeffs.iter().map(|v| -v).collect();
        let constraints: Vec<Constraint> = reduced
            .iter()
            .map(|(w, c)| Constraint::new(w.clone(), *c))
            .collect();
        match lp::maximize(&objective, &constraints, d0) {
            LpResult::Optimal { objective: obj, .. } => {
                let max_slack = rhs + obj;
                if max_slack <= SIDE_TOL {
                    implicit.push(coeffs.clone());
                }
            }
            LpResult::Unbounded => {}
            LpResult::Infeasible => return None,
        }
    }
    let rank = linalg::column_rank(&transpose(&implicit, d0));
    Some(((d0 - rank) as i64, None))
}

fn transpose(rows: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    (0..rows.len())
        .map(|i| {
            let mut c = Vec::with_capacity(dim);
            c.extend_from_slice(&rows[i]);
            c
        })
        .collect()
}

/// Chebyshev center of `{t : w.t <= c}` in d dimensions (t free).
fn chebyshev_reduced(d: usize, rows: &[(Vec<f64>, f64)]) -> Option<(Vec<f64>, f64)> {
    let mut constraints = Vec::with_capacity(rows.len());
    for (w, c) in rows {
        let nw = linalg::norm(w);
        let mut coeffs = linalg::scale(w, 1.0 / nw);
        coeffs.push(1.0);
        constraints.push(Constraint::new(coeffs, c / nw));
    }
    // Keep the center bounded even if the reduced polytope is unbounded.
    for i in 0..d {
        let mut up = vec![0.0; d + 1];
        up[i] = 1.0;
        constraints.push(Constraint::new(up, 10.0));
        let mut lo = vec![0.0; d + 1];
        lo[i] = -1.0;
        constraints.push(Constraint::new(lo, 10.0));
    }
    let mut cap = vec![0.0; d + 1];
    cap[d] = 1.0;
    constraints.push(Constraint::new(cap, 10.0));
    let mut objective = vec![0.0; d + 1];
    objective[d] = 1.0;
    match lp::maximize(&objective, &constraints, d) {
        LpResult::Optimal { x, objective } => Some((x[..d].to_vec(), objective)),
        LpResult::Infeasible => None,
        LpResult::Unbounded => unreachable!("radius is capped"),
    }
}

/// An ordered chain of hyperplanes with its ordered regions and the initial
/// region that seeds the chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrictPartialOrder {
    /// Hyperplane ids, first to last.
    pub chain: Vec<usize>,
    /// Region indices served by the chain, aligned with `chain`.
    pub ordered_regions: Vec<usize>,
    /// Region index on the zero side of the first hyperplane.
    pub initial_region: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderCondition {
    /// The initial region must lie on the zero side of the first hyperplane.
    InitialRegionSide,
    /// Ordered regions before position nu must lie on the zero side of l_nu.
    PriorRegionsQuiet,
    /// Region at position i must lie on the positive side of l_1..l_i.
    OnPositiveSides,
    /// Consecutive regions must share an (n-1)-facet on the chain hyperplane.
    Facet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrderVerdict {
    Holds,
    Violated {
        condition: OrderCondition,
        /// Chain position (0-based) where the condition fails.
        index: usize,
    },
}

/// Check every condition that makes `o` a strict partial order of `a`'s
/// hyperplanes. Region membership is tested at witness points; regions never
/// straddle arrangement hyperplanes, so the witness decides the region.
pub fn verify_order(
    a: &Arrangement,
    o: &StrictPartialOrder,
) -> Result<OrderVerdict, GeometryError> {
    if o.chain.is_empty() {
        return Err(GeometryError::EmptyChain);
    }
    if o.chain.len() != o.ordered_regions.len() {
        return Err(GeometryError::ChainRegionMismatch);
    }
    let mut chain_pos = Vec::with_capacity(o.chain.len());
    let mut seen = HashSet::new();
    for &id in &o.chain {
        if !seen.insert(id) {
            return Err(GeometryError::RepeatedChainId(id));
        }
        chain_pos.push(a.position_of_id(id)?);
    }
    for &r in o.ordered_regions.iter().chain([&o.initial_region]) {
        if r >= a.regions.len() {
            return Err(GeometryError::IndexOutOfRange(r));
        }
    }

    let side_at = |region: usize, chain_idx: usize| -> Side {
        a.hyperplanes[chain_pos[chain_idx]].side(&a.regions[region].witness)
    };

    if side_at(o.initial_region, 0) != Side::Negative {
        return Ok(OrderVerdict::Violated {
            condition: OrderCondition::InitialRegionSide,
            index: 0,
        });
    }
    for nu in 0..o.chain.len() {
        for mu in 0..=nu {
            if side_at(o.ordered_regions[nu], mu) != Side::Positive {
                return Ok(OrderVerdict::Violated {
                    condition: OrderCondition::OnPositiveSides,
                    index: nu,
                });
            }
        }
        for j in 0..nu {
            if side_at(o.ordered_regions[j], nu) != Side::Negative {
                return Ok(OrderVerdict::Violated {
                    condition: OrderCondition::PriorRegionsQuiet,
                    index: nu,
                });
            }
        }
        let prev = if nu == 0 {
            o.initial_region
        } else {
            o.ordered_regions[nu - 1]
        };
        let cur = o.ordered_regions[nu];
        match a.adjacency_of(prev, cur) {
            Some(hid) if hid == o.chain[nu] => {}
            _ => {
                return Ok(OrderVerdict::Violated {
                    condition: OrderCondition::Facet,
                    index: nu,
                });
            }
        }
    }
    Ok(OrderVerdict::Holds)
}

/// Range of `d . x` over the unit box for a unit direction `d`.
fn direction_range(direction: &[f64]) -> (f64, f64) {
    let low = direction.iter().map(|v| v.min(0.0)).sum();
    let high = direction.iter().map(|v| v.max(0.0)).sum();
    (low, high)
}

/// Build parallel hyperplanes `d . x = offset_i` ordered so the chain
/// conditions hold by construction. `orientation = -1` reverses the chain
/// (hyperplanes in negative form, ordered from the largest offset down).
pub fn generate_translated_order(
    n: usize,
    direction: &[f64],
    offsets: &[f64],
    orientation: i32,
) -> Result<(Arrangement, StrictPartialOrder), GeometryError> {
    if direction.len() != n {
        return Err(GeometryError::DimensionMismatch {
            expected: n,
            got: direction.len(),
        });
    }
    let norm = linalg::norm(direction);
    if norm <= 1e-12 {
        return Err(GeometryError::ZeroNormal);
    }
    let d = linalg::scale(direction, 1.0 / norm);
    if offsets.is_empty() {
        return Err(GeometryError::EmptyChain);
    }
    if offsets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GeometryError::OffsetsNotIncreasing);
    }
    let (low, high) = direction_range(&d);
    for &o in offsets {
        if o <= low + REGION_RADIUS_TOL || o >= high - REGION_RADIUS_TOL {
            return Err(GeometryError::OffsetOutsideBox { offset: o, low, high });
        }
    }

    let forward = orientation >= 0;
    let k = offsets.len();
    let hyperplanes: Vec<Hyperplane> = offsets
        .iter()
        .enumerate()
        .map(|(i, &o)| {
            if forward {
                Hyperplane::new(i, d.clone(), -o).expect("unit normal")
            } else {
                Hyperplane::new(i, linalg::scale(&d, -1.0), o).expect("unit normal")
            }
        })
        .collect();
    let arrangement = build_arrangement(n, hyperplanes)?;

    // Slab s (0..k) lies between offsets s-1 and s; find each by signs.
    let slab_index = |s: usize| -> usize {
        let want: Vec<Side> = (0..k)
            .map(|i| {
                let before = i < s; // d.x > offset_i on slab s iff i < s
                match (before, forward) {
                    (true, true) | (false, false) => Side::Positive,
                    _ => Side::Negative,
                }
            })
            .collect();
        arrangement
            .regions
            .iter()
            .position(|r| r.signs.0 == want)
            .expect("slab exists")
    };

    let order = if forward {
        StrictPartialOrder {
            chain: (0..k).collect(),
            ordered_regions: (1..=k).map(slab_index).collect(),
            initial_region: slab_index(0),
        }
    } else {
        StrictPartialOrder {
            chain: (0..k).rev().collect(),
            ordered_regions: (0..k).rev().map(slab_index).collect(),
            initial_region: slab_index(k),
        }
    };
    debug_assert_eq!(verify_order(&arrangement, &order).unwrap(), OrderVerdict::Holds);
    Ok((arrangement, order))
}

/// The 2^n corners of the unit box.
pub fn box_corners(n: usize) -> Vec<Vec<f64>> {
    (0..1usize << n)
        .map(|mask| (0..n).map(|i| ((mask >> i) & 1) as f64).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(id: usize, w: Vec<f64>, b: f64) -> Hyperplane {
        Hyperplane::new(id, w, b).unwrap()
    }

    #[test]
    fn side_of_examples() {
        let a = h(0, vec![1.0, 0.0], -0.5);
        assert_eq!(side_of(&a, &[0.75, 0.2]).unwrap(), Side::Positive);
        assert_eq!(side_of(&a, &[0.5, 0.9]).unwrap(), Side::Zero);
        let neg = h(1, vec![-1.0, 0.0], 0.5);
        assert_eq!(side_of(&neg, &[0.75, 0.2]).unwrap(), Side::Negative);
        assert!(side_of(&a, &[0.5]).is_err());
    }

    #[test]
    fn zero_normal_rejected() {
        assert!(Hyperplane::new(0, vec![0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn one_dimensional_knots_make_four_regions() {
        let hs = vec![
            h(0, vec![1.0], -0.25),
            h(1, vec![1.0], -0.5),
            h(2, vec![1.0], -0.75),
        ];
        let a = build_arrangement(1, hs).unwrap();
        assert_eq!(a.regions.len(), 4);
        assert_eq!(a.adjacency.len(), 3);
    }

    #[test]
    fn axis_grid_m3_has_nine_regions() {
        let hs = vec![
            h(0, vec![1.0, 0.0], -1.0 / 3.0),
            h(1, vec![1.0, 0.0], -2.0 / 3.0),
            h(2, vec![0.0, 1.0], -1.0 / 3.0),
            h(3, vec![0.0, 1.0], -2.0 / 3.0),
        ];
        let a = build_arrangement(2, hs).unwrap();
        assert_eq!(a.regions.len(), 9);
        // Interior grid: 12 shared edges.
        assert_eq!(a.adjacency.len(), 12);
    }

    #[test]
    fn hyperplane_missing_the_box_makes_one_region() {
        let a = build_arrangement(2, vec![h(0, vec![1.0, 0.0], 5.0)]).unwrap();
        assert_eq!(a.regions.len(), 1);
        assert_eq!(a.regions[0].signs.0, vec![Side::Positive]);
    }

    #[test]
    fn facet_dimensions_on_a_grid() {
        let hs = vec![
            h(0, vec![1.0, 0.0], -0.5),
            h(1, vec![0.0, 1.0], -0.5),
        ];
        let a = build_arrangement(2, hs).unwrap();
        let find = |sx: Side, sy: Side| {
            a.regions
                .iter()
                .position(|r| r.signs.0 == vec![sx, sy])
                .unwrap()
        };
        let sw = find(Side::Negative, Side::Negative);
        let se = find(Side::Positive, Side::Negative);
        let ne = find(Side::Positive, Side::Positive);
        let nw = find(Side::Negative, Side::Positive);
        assert_eq!(facet_dimension(&a, sw, se).unwrap(), 1);
        assert_eq!(facet_dimension(&a, sw, ne).unwrap(), 0);
        assert_eq!(facet_dimension(&a, se, nw).unwrap(), 0);
        assert!(facet_dimension(&a, sw, sw).is_err());
    }

    #[test]
    fn disjoint_regions_report_empty_intersection() {
        let hs = vec![
            h(0, vec![1.0], -0.25),
            h(1, vec![1.0], -0.5),
            h(2, vec![1.0], -0.75),
        ];
        let a = build_arrangement(1, hs).unwrap();
        let first = a
            .regions
            .iter()
            .position(|r| r.witness[0] < 0.25)
            .unwrap();
        let last = a
            .regions
            .iter()
            .position(|r| r.witness[0] > 0.75)
            .unwrap();
        assert_eq!(facet_dimension(&a, first, last).unwrap(), -1);
    }

    fn interval_order_1d(knots: &[f64], flip_middle: bool) -> (Arrangement, StrictPartialOrder) {
        let hs: Vec<Hyperplane> = knots
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if flip_middle && i == 1 {
                    h(i, vec![-1.0], x)
                } else {
                    h(i, vec![1.0], -x)
                }
            })
            .collect();
        let a = build_arrangement(1, hs).unwrap();
        let region_at = |x: f64| a.region_of_point(&[x]).unwrap();
        let order = StrictPartialOrder {
            chain: (0..knots.len()).collect(),
            ordered_regions: (0..knots.len())
                .map(|i| {
                    let right = if i + 1 < knots.len() { knots[i + 1] } else { 1.0 };
                    region_at((knots[i] + right) / 2.0)
                })
                .collect(),
            initial_region: region_at(knots[0] / 2.0),
        };
        (a, order)
    }

    #[test]
    fn one_dimensional_interval_order_holds() {
        let (a, o) = interval_order_1d(&[0.2, 0.4, 0.6], false);
        assert_eq!(verify_order(&a, &o).unwrap(), OrderVerdict::Holds);
    }

    #[test]
    fn negative_form_in_the_middle_breaks_the_order() {
        let (a, o) = interval_order_1d(&[0.2, 0.4, 0.6], true);
        match verify_order(&a, &o).unwrap() {
            OrderVerdict::Violated { condition, .. } => {
                assert_eq!(condition, OrderCondition::OnPositiveSides);
            }
            OrderVerdict::Holds => panic!("flipped chain should not hold"),
        }
    }

    #[test]
    fn single_hyperplane_chain_is_formally_valid() {
        let (a, o) = interval_order_1d(&[0.5], false);
        assert_eq!(o.chain.len(), 1);
        assert_eq!(verify_order(&a, &o).unwrap(), OrderVerdict::Holds);
    }

    #[test]
    fn translated_order_examples() {
        let (a, o) =
            generate_translated_order(2, &[1.0, 0.0], &[0.25, 0.5, 0.75], 1).unwrap();
        assert_eq!(a.regions.len(), 4);
        assert_eq!(o.chain.len(), 3);
        assert_eq!(verify_order(&a, &o).unwrap(), OrderVerdict::Holds);

        let (a1, o1) = generate_translated_order(1, &[1.0], &[0.5], 1).unwrap();
        assert_eq!(o1.chain.len(), 1);
        assert_eq!(verify_order(&a1, &o1).unwrap(), OrderVerdict::Holds);

        let s = 1.0 / 3.0f64.sqrt();
        let (a3, o3) =
            generate_translated_order(3, &[s, s, s], &[0.3, 0.9], 1).unwrap();
        assert_eq!(o3.chain.len(), 2);
        assert_eq!(verify_order(&a3, &o3).unwrap(), OrderVerdict::Holds);
    }

    #[test]
    fn reversed_translated_order_verifies() {
        let (a, o) = generate_translated_order(2, &[0.6, 0.8], &[0.3, 0.7], -1).unwrap();
        assert_eq!(verify_order(&a, &o).unwrap(), OrderVerdict::Holds);
    }

    #[test]
    fn offsets_outside_the_box_are_rejected() {
        let r = generate_translated_order(2, &[1.0, 0.0], &[1.5], 1);
        assert!(matches!(r, Err(GeometryError::OffsetOutsideBox { .. })));
    }

    #[test]
    fn witness_margins_respect_radius() {
        let hs = vec![
            h(0, vec![1.0, 1.0], -0.9),
            h(1, vec![1.0, -1.0], -0.1),
            h(2, vec![0.3, 1.0], -0.8),
        ];
        let a = build_arrangement(2, hs).unwrap();
        for r in &a.regions {
            for (k, hp) in a.hyperplanes.iter().enumerate() {
                let margin = hp.functional(&r.witness).abs() / linalg::norm(&hp.w);
                assert!(
                    margin + 1e-9 >= r.chebyshev_radius,
                    "margin {margin} radius {} sign {:?}",
                    r.chebyshev_radius,
                    r.signs.0[k]
                );
            }
        }
    }

    #[test]
    fn adjacency_is_symmetric_and_facets_are_full() {
        let hs = vec![
            h(0, vec![1.0, 0.2], -0.4),
            h(1, vec![-0.3, 1.0], -0.5),
            h(2, vec![1.0, -1.0], 0.1),
        ];
        let a = build_arrangement(2, hs).unwrap();
        for &(i, j, _) in &a.adjacency {
            assert!(i < j);
            assert_eq!(facet_dimension(&a, i, j).unwrap(), 1);
            assert_eq!(facet_dimension(&a, j, i).unwrap(), 1);
        }
    }

    #[test]
    fn arrangement_json_round_trip() {
        let hs = vec![h(0, vec![1.0, 0.0], -0.5), h(7, vec![0.0, 1.0], -0.25)];
        let a = build_arrangement(2, hs).unwrap();
        let text = crate::json::to_string(&a).unwrap();
        let back: Arrangement = serde_json::from_str(&text).unwrap();
        assert_eq!(back.regions.len(), a.regions.len());
        assert_eq!(back.adjacency, a.adjacency);
        assert_eq!(back.regions[0].signs.0, a.regions[0].signs.0);
    }
}
