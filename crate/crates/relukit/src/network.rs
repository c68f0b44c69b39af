//! Two-layer ReLU networks and their exact piecewise linear semantics.
//!
//! A network is a list of hidden units `lambda * relu(w . x + b)` plus a
//! fixed output bias. Its value over the unit box is a continuous piecewise
//! linear function; `extract_pieces` recovers that function exactly as one
//! affine piece per cell of the arrangement of the unit hyperplanes.

use serde::{Deserialize, Serialize};

use crate::geometry::{self, Arrangement, Hyperplane, Side};
use crate::linalg;

/// Units with `||w|| <=` this are folded into constants during extraction.
pub const DEGENERATE_NORMAL_TOL: f64 = 1e-12;

/// Co-located hyperplane matching tolerance on normalized `(w, b)` vectors.
pub const WALL_MATCH_TOL: f64 = 1e-6;

/// Facet jumps above this are continuity violations.
pub const CONTINUITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReluUnit {
    pub w: Vec<f64>,
    pub b: f64,
    pub lambda: f64,
}

impl ReluUnit {
    pub fn new(w: Vec<f64>, b: f64, lambda: f64) -> Self {
        ReluUnit { w, b, lambda }
    }

    pub fn is_degenerate(&self) -> bool {
        linalg::norm(&self.w) <= DEGENERATE_NORMAL_TOL
    }

    pub fn preactivation(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.w, x) + self.b
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        self.lambda * self.preactivation(x).max(0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReluNetwork {
    pub n: usize,
    pub output_bias: f64,
    pub units: Vec<ReluUnit>,
}

impl ReluNetwork {
    pub fn new(n: usize, units: Vec<ReluUnit>) -> Self {
        assert!(units.iter().all(|u| u.w.len() == n), "unit dimension mismatch");
        ReluNetwork {
            n,
            output_bias: 0.0,
            units,
        }
    }

    /// Hidden-layer size.
    pub fn theta(&self) -> usize {
        self.units.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n, "input dimension mismatch");
        self.units.iter().map(|u| u.output(x)).sum::<f64>() + self.output_bias
    }
}

/// An affine function `w . x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub w: Vec<f64>,
    pub b: f64,
}

impl AffinePiece {
    pub fn zero(n: usize) -> Self {
        AffinePiece { w: vec![0.0; n], b: 0.0 }
    }

    pub fn new(w: Vec<f64>, b: f64) -> Self {
        AffinePiece { w, b }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.w, x) + self.b
    }

    pub fn add_scaled(&mut self, alpha: f64, w: &[f64], b: f64) {
        linalg::axpy(&mut self.w, alpha, w);
        self.b += alpha * b;
    }

    pub fn sub(&self, other: &AffinePiece) -> AffinePiece {
        let mut out = self.clone();
        out.add_scaled(-1.0, &other.w, other.b);
        out
    }

    /// Largest coefficient magnitude, treating the intercept as one more
    /// coefficient.
    pub fn max_coeff(&self) -> f64 {
        self.w
            .iter()
            .map(|v| v.abs())
            .fold(self.b.abs(), f64::max)
    }
}

/// A partition of the unit box plus one affine piece per region.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseLinear {
    pub arrangement: Arrangement,
    pub pieces: Vec<AffinePiece>,
}

impl PiecewiseLinear {
    pub fn eval(&self, x: &[f64]) -> Option<f64> {
        self.arrangement
            .region_of_point(x)
            .map(|i| self.pieces[i].eval(x))
    }
}

/// How one unit relates to the deduplicated wall arrangement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitWall {
    /// Wall index and orientation: `+1.0` when the unit's positive side is the
    /// wall's positive side.
    Wall { wall: usize, orientation: f64 },
    Degenerate,
}

/// Deduplicate unit hyperplanes into oriented walls. Co-located units (equal
/// up to positive scale, or exact negative forms) share a wall.
pub fn wall_decomposition(net: &ReluNetwork) -> (Vec<Hyperplane>, Vec<UnitWall>) {
    let mut walls: Vec<Hyperplane> = Vec::new();
    let mut reps: Vec<Vec<f64>> = Vec::new(); // normalized (w, b) per wall
    let mut map = Vec::with_capacity(net.units.len());
    for unit in &net.units {
        if unit.is_degenerate() {
            map.push(UnitWall::Degenerate);
            continue;
        }
        let s = 1.0 / linalg::norm(&unit.w);
        let mut v = linalg::scale(&unit.w, s);
        v.push(unit.b * s);
        let mut found = None;
        for (k, rep) in reps.iter().enumerate() {
            let dist_same = v
                .iter()
                .zip(rep)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let dist_flip = v
                .iter()
                .zip(rep)
                .map(|(a, b)| (a + b).abs())
                .fold(0.0, f64::max);
            if dist_same <= WALL_MATCH_TOL {
                found = Some((k, 1.0));
                break;
            }
            if dist_flip <= WALL_MATCH_TOL {
                found = Some((k, -1.0));
                break;
            }
        }
        match found {
            Some((wall, orientation)) => map.push(UnitWall::Wall { wall, orientation }),
            None => {
                let wall = walls.len();
                walls.push(
                    Hyperplane::new(wall, v[..net.n].to_vec(), v[net.n])
                        .expect("non-degenerate unit normal"),
                );
                reps.push(v);
                map.push(UnitWall::Wall { wall, orientation: 1.0 });
            }
        }
    }
    (walls, map)
}

/// Exact piecewise linear function realized by the network on the unit box.
///
/// For each region the piece is the sum of `lambda_i (w_i, b_i)` over the
/// units active there, plus the constants of degenerate units; the piece
/// value equals `eval` at every interior point up to float reassociation.
pub fn extract_pieces(net: &ReluNetwork) -> PiecewiseLinear {
    let (walls, map) = wall_decomposition(net);
    let arrangement = geometry::build_arrangement(net.n, walls)
        .expect("unit walls are valid hyperplanes");
    let pieces = arrangement
        .regions
        .iter()
        .map(|region| {
            let mut piece = AffinePiece::zero(net.n);
            piece.b += net.output_bias;
            for (unit, uw) in net.units.iter().zip(&map) {
                match uw {
                    UnitWall::Degenerate => {
                        piece.b += unit.lambda * unit.b.max(0.0);
                    }
                    UnitWall::Wall { wall, orientation } => {
                        let sign = match region.signs.0[*wall] {
                            Side::Positive => 1.0,
                            Side::Negative => -1.0,
                            Side::Zero => unreachable!(),
                        };
                        if sign * orientation > 0.0 {
                            piece.add_scaled(unit.lambda, &unit.w, unit.b);
                        }
                    }
                }
            }
            piece
        })
        .collect();
    PiecewiseLinear { arrangement, pieces }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityViolation {
    pub regions: (usize, usize),
    pub hyperplane: usize,
    pub jump: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub max_jump: f64,
    pub violations: Vec<ContinuityViolation>,
}

impl ContinuityReport {
    pub fn is_continuous(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Sample points spanning the shared facet of an adjacent pair: the facet's
/// interior center plus steps along the facet tangents. Affine functions
/// that agree on these points agree on the whole facet hyperplane.
pub fn facet_sample_points(a: &Arrangement, i: usize, j: usize) -> Vec<Vec<f64>> {
    let Some(facet) = geometry::facet_interior(a, i, j) else {
        return Vec::new();
    };
    let mut points = vec![facet.center.clone()];
    let step = (facet.radius * 0.5).max(1e-6);
    for t in &facet.tangents {
        for dir in [step, -step] {
            let mut p = facet.center.clone();
            linalg::axpy(&mut p, dir, t);
            points.push(p);
        }
    }
    points
}

/// Compare adjacent pieces on their shared facets.
pub fn check_continuity(pl: &PiecewiseLinear) -> ContinuityReport {
    let mut max_jump = 0.0f64;
    let mut violations = Vec::new();
    for &(i, j, hid) in &pl.arrangement.adjacency {
        let mut jump = 0.0f64;
        for p in facet_sample_points(&pl.arrangement, i, j) {
            let d = (pl.pieces[i].eval(&p) - pl.pieces[j].eval(&p)).abs();
            jump = jump.max(d);
        }
        max_jump = max_jump.max(jump);
        if jump > CONTINUITY_TOL {
            violations.push(ContinuityViolation {
                regions: (i, j),
                hyperplane: hid,
                jump,
            });
        }
    }
    ContinuityReport { max_jump, violations }
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiRepFailure {
    pub regions: (usize, usize),
    pub hyperplane: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiRepReport {
    pub max_residual: f64,
    pub failures: Vec<MultiRepFailure>,
}

/// Verify that across every facet the piece difference equals the combined
/// contribution of the units on the separating wall (co-located units are
/// grouped): `piece_plus - piece_zero = sum +-lambda_k (w_k, b_k)`.
pub fn check_multiple_representations(net: &ReluNetwork, pl: &PiecewiseLinear) -> MultiRepReport {
    let (walls, map) = wall_decomposition(net);
    debug_assert_eq!(walls.len(), pl.arrangement.hyperplanes.len());
    let tol = 1e-8;
    let mut max_residual = 0.0f64;
    let mut failures = Vec::new();
    for &(i, j, wall_id) in &pl.arrangement.adjacency {
        let wall = pl
            .arrangement
            .position_of_id(wall_id)
            .expect("adjacency references arrangement walls");
        let (plus, zero) = match pl.arrangement.regions[i].signs.0[wall] {
            Side::Positive => (i, j),
            _ => (j, i),
        };
        let delta = pl.pieces[plus].sub(&pl.pieces[zero]);
        let mut expected = AffinePiece::zero(net.n);
        for (unit, uw) in net.units.iter().zip(&map) {
            if let UnitWall::Wall { wall: w, orientation } = uw {
                if *w == wall {
                    expected.add_scaled(orientation * unit.lambda, &unit.w, unit.b);
                }
            }
        }
        let residual = delta.sub(&expected).max_coeff();
        max_residual = max_residual.max(residual);
        if residual > tol {
            failures.push(MultiRepFailure {
                regions: (plus, zero),
                hyperplane: wall_id,
                residual,
            });
        }
    }
    MultiRepReport { max_residual, failures }
}
