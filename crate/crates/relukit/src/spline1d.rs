//! Univariate continuous linear splines and their exact compilation into
//! two-layer ReLU networks.
//!
//! The one-sided route places two auxiliary units left of the domain and one
//! positive unit per knot, with output weights given by the slope
//! differences. The two-sided routes replace or augment knot units with
//! negative-orientation units; the initial piece is then solved from the
//! units that remain free on the first interval.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::network::{ReluNetwork, ReluUnit};

/// Continuity slack allowed at a knot when constructing a spline directly.
pub const SPLINE_CONTINUITY_TOL: f64 = 1e-12;

/// Knots closer than this merge during decompilation.
pub const KNOT_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("knots must be strictly increasing inside (0, 1)")]
    BadKnots,
    #[error("piece count must be knot count + 1")]
    CountMismatch,
    #[error("pieces are discontinuous at knot {knot}: gap {gap}")]
    Discontinuous { knot: f64, gap: f64 },
    #[error("anchors must satisfy x_-1 < x_0 <= 0")]
    BadAnchors,
    #[error("plan is inconsistent with its basis kind")]
    PlanKindMismatch,
    #[error("plan references knot index {0} out of range")]
    PlanIndexOutOfRange(usize),
    #[error("initial piece unsolvable: free units on the first interval have rank {0} < 2")]
    UnsolvableInitialPiece(usize),
    #[error("network input dimension must be 1")]
    NotUnivariate,
}

/// One affine piece `a x + b` of a univariate spline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece1D {
    pub a: f64,
    pub b: f64,
}

impl Piece1D {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * x + self.b
    }
}

/// A continuous linear spline on `[0, 1]` with knots strictly inside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Spline1D {
    pub knots: Vec<f64>,
    pub pieces: Vec<Piece1D>,
}

impl Spline1D {
    pub fn new(knots: Vec<f64>, pieces: Vec<Piece1D>) -> Result<Self, SplineError> {
        Self::with_tolerance(knots, pieces, SPLINE_CONTINUITY_TOL)
    }

    /// Construction with a caller-chosen continuity tolerance. Decompilation
    /// uses a looser bound because merged knots shift pieces by up to the
    /// merge tolerance times the output weight.
    pub fn with_tolerance(
        knots: Vec<f64>,
        pieces: Vec<Piece1D>,
        tol: f64,
    ) -> Result<Self, SplineError> {
        if knots.iter().any(|&x| x <= 0.0 || x >= 1.0)
            || knots.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(SplineError::BadKnots);
        }
        if pieces.len() != knots.len() + 1 {
            return Err(SplineError::CountMismatch);
        }
        for (i, &x) in knots.iter().enumerate() {
            let gap = (pieces[i].eval(x) - pieces[i + 1].eval(x)).abs();
            if gap > tol * pieces[i].eval(x).abs().max(1.0) {
                return Err(SplineError::Discontinuous { knot: x, gap });
            }
        }
        Ok(Spline1D { knots, pieces })
    }

    /// Build a continuous spline from the first intercept and per-piece
    /// slopes; intercepts are chained through the knot values.
    pub fn from_slopes(knots: Vec<f64>, slopes: &[f64], b1: f64) -> Result<Self, SplineError> {
        if slopes.len() != knots.len() + 1 {
            return Err(SplineError::CountMismatch);
        }
        let mut pieces = vec![Piece1D { a: slopes[0], b: b1 }];
        for (i, &x) in knots.iter().enumerate() {
            let value = pieces[i].eval(x);
            pieces.push(Piece1D {
                a: slopes[i + 1],
                b: value - slopes[i + 1] * x,
            });
        }
        Self::new(knots, pieces)
    }

    /// Number of linear pieces.
    pub fn zeta(&self) -> usize {
        self.pieces.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let idx = self.knots.partition_point(|&k| k < x);
        self.pieces[idx].eval(x)
    }

    fn slope_difference(&self, knot_idx: usize) -> f64 {
        self.pieces[knot_idx + 1].a - self.pieces[knot_idx].a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisKind {
    #[serde(rename = "one-sided")]
    OneSided,
    #[serde(rename = "added")]
    TwoSidedAdded,
    #[serde(rename = "substituted")]
    TwoSidedSubstituted,
    #[serde(rename = "compound")]
    TwoSidedCompound,
}

fn default_free_lambda() -> f64 {
    1.0
}

/// Which units a compilation places at each knot.
///
/// `flipped_knots` carry only a negative unit; `bidirectional_knots` carry
/// both orientations, with the negative one's weight free.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BasisPlan {
    pub kind: BasisKind,
    pub anchor_knots: Option<(f64, f64)>,
    #[serde(default)]
    pub flipped_knots: BTreeSet<usize>,
    #[serde(default)]
    pub bidirectional_knots: BTreeSet<usize>,
    #[serde(default = "default_free_lambda")]
    pub free_lambda: f64,
}

/// Default auxiliary knots left of the domain.
pub const DEFAULT_ANCHORS: (f64, f64) = (-1.0, -0.5);

impl BasisPlan {
    pub fn one_sided() -> Self {
        BasisPlan {
            kind: BasisKind::OneSided,
            anchor_knots: Some(DEFAULT_ANCHORS),
            flipped_knots: BTreeSet::new(),
            bidirectional_knots: BTreeSet::new(),
            free_lambda: 1.0,
        }
    }

    /// The smallest added plan: two bidirectional knots and no anchors, so
    /// the first interval is produced entirely by the negative units. Needs
    /// at least two knots.
    pub fn minimal_added(knot_count: usize) -> Option<Self> {
        if knot_count < 2 {
            return None;
        }
        BasisPlan {
            kind: BasisKind::TwoSidedAdded,
            anchor_knots: None,
            flipped_knots: BTreeSet::new(),
            bidirectional_knots: BTreeSet::from([0, knot_count - 1]),
            free_lambda: 1.0,
        }
        .into()
    }

    pub fn substituted(flipped: impl IntoIterator<Item = usize>) -> Self {
        BasisPlan {
            kind: BasisKind::TwoSidedSubstituted,
            anchor_knots: Some(DEFAULT_ANCHORS),
            flipped_knots: flipped.into_iter().collect(),
            bidirectional_knots: BTreeSet::new(),
            free_lambda: 1.0,
        }
    }

    pub fn compound(
        flipped: impl IntoIterator<Item = usize>,
        bidirectional: impl IntoIterator<Item = usize>,
    ) -> Self {
        BasisPlan {
            kind: BasisKind::TwoSidedCompound,
            anchor_knots: Some(DEFAULT_ANCHORS),
            flipped_knots: flipped.into_iter().collect(),
            bidirectional_knots: bidirectional.into_iter().collect(),
            free_lambda: 1.0,
        }
    }

    fn validate(&self, knot_count: usize) -> Result<(), SplineError> {
        for &k in self.flipped_knots.iter().chain(&self.bidirectional_knots) {
            if k >= knot_count {
                return Err(SplineError::PlanIndexOutOfRange(k));
            }
        }
        if !self.flipped_knots.is_disjoint(&self.bidirectional_knots) {
            return Err(SplineError::PlanKindMismatch);
        }
        let ok = match self.kind {
            BasisKind::OneSided => {
                self.flipped_knots.is_empty() && self.bidirectional_knots.is_empty()
            }
            BasisKind::TwoSidedAdded => {
                self.flipped_knots.is_empty() && !self.bidirectional_knots.is_empty()
            }
            BasisKind::TwoSidedSubstituted => {
                !self.flipped_knots.is_empty() && self.bidirectional_knots.is_empty()
            }
            BasisKind::TwoSidedCompound => {
                !self.flipped_knots.is_empty() || !self.bidirectional_knots.is_empty()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SplineError::PlanKindMismatch)
        }
    }
}

fn check_anchors(anchors: (f64, f64)) -> Result<(), SplineError> {
    let (xm1, x0) = anchors;
    if xm1 < x0 && x0 <= 0.0 {
        Ok(())
    } else {
        Err(SplineError::BadAnchors)
    }
}

/// Compile with one-sided bases: two anchor units solve the first piece in
/// closed form and each knot's weight is the slope difference across it.
/// The result is unique for fixed anchors.
pub fn compile_one_sided(
    spline: &Spline1D,
    anchors: (f64, f64),
) -> Result<ReluNetwork, SplineError> {
    check_anchors(anchors)?;
    let (xm1, x0) = anchors;
    let first = spline.pieces[0];
    let lambda_m1 = (first.a * x0 + first.b) / (x0 - xm1);
    let lambda_0 = (first.a * xm1 + first.b) / (xm1 - x0);
    let mut units = vec![
        ReluUnit::new(vec![1.0], -xm1, lambda_m1),
        ReluUnit::new(vec![1.0], -x0, lambda_0),
    ];
    for (k, &x) in spline.knots.iter().enumerate() {
        units.push(ReluUnit::new(vec![1.0], -x, spline.slope_difference(k)));
    }
    Ok(ReluNetwork::new(1, units))
}

/// Compile with two-sided bases according to the plan.
///
/// Every unit's output weight equals the slope difference across its knot
/// (for a bidirectional knot the positive unit takes the remainder after the
/// free negative weight). The first interval is then produced by the units
/// still free there: the anchors when present, otherwise the negative units
/// of the bidirectional knots.
pub fn compile_two_sided(spline: &Spline1D, plan: &BasisPlan) -> Result<ReluNetwork, SplineError> {
    plan.validate(spline.knots.len())?;
    if plan.kind == BasisKind::OneSided {
        let anchors = plan.anchor_knots.ok_or(SplineError::BadAnchors)?;
        return compile_one_sided(spline, anchors);
    }
    if let Some(anchors) = plan.anchor_knots {
        check_anchors(anchors)?;
    }

    let first = spline.pieces[0];
    // Fixed contributions active on the first interval, as (w, b, lambda).
    let mut fixed: Vec<(f64, f64, f64)> = Vec::new();
    for (k, &x) in spline.knots.iter().enumerate() {
        if plan.flipped_knots.contains(&k) {
            fixed.push((-1.0, x, spline.slope_difference(k)));
        } else if plan.bidirectional_knots.contains(&k) && plan.anchor_knots.is_some() {
            fixed.push((-1.0, x, plan.free_lambda));
        }
    }
    // Free columns: anchors when present, else the bidirectional negatives.
    let free_cols: Vec<(f64, f64)> = match plan.anchor_knots {
        Some((xm1, x0)) => vec![(1.0, -xm1), (1.0, -x0)],
        None => plan
            .bidirectional_knots
            .iter()
            .map(|&k| (-1.0, spline.knots[k]))
            .collect(),
    };

    let mut rhs = vec![first.a, first.b];
    for &(w, b, lambda) in &fixed {
        rhs[0] -= lambda * w;
        rhs[1] -= lambda * b;
    }
    let columns: Vec<Vec<f64>> = free_cols.iter().map(|&(w, b)| vec![w, b]).collect();
    let (free_lambdas, rank) = linalg::min_norm_solve(&columns, &rhs);
    if rank < 2 {
        return Err(SplineError::UnsolvableInitialPiece(rank));
    }
    debug_assert!(linalg::solve_residual(&columns, &free_lambdas, &rhs) <= 1e-9);

    // Negative weight chosen for each bidirectional knot.
    let neg_lambda = |k: usize| -> f64 {
        if plan.anchor_knots.is_some() {
            plan.free_lambda
        } else {
            let pos = plan.bidirectional_knots.iter().position(|&b| b == k).unwrap();
            free_lambdas[pos]
        }
    };

    let mut units = Vec::new();
    if plan.anchor_knots.is_some() {
        let (xm1, x0) = plan.anchor_knots.unwrap();
        units.push(ReluUnit::new(vec![1.0], -xm1, free_lambdas[0]));
        units.push(ReluUnit::new(vec![1.0], -x0, free_lambdas[1]));
    }
    for (k, &x) in spline.knots.iter().enumerate() {
        let delta = spline.slope_difference(k);
        if plan.flipped_knots.contains(&k) {
            units.push(ReluUnit::new(vec![-1.0], x, delta));
        } else if plan.bidirectional_knots.contains(&k) {
            let neg = neg_lambda(k);
            units.push(ReluUnit::new(vec![1.0], -x, delta - neg));
            units.push(ReluUnit::new(vec![-1.0], x, neg));
        } else {
            units.push(ReluUnit::new(vec![1.0], -x, delta));
        }
    }
    Ok(ReluNetwork::new(1, units))
}

/// Recover the spline realized by a univariate network: knots from the unit
/// hyperplanes (merged within [`KNOT_MERGE_TOL`]), pieces from the active
/// units on each interval.
pub fn decompile(net: &ReluNetwork) -> Result<Spline1D, SplineError> {
    if net.n != 1 {
        return Err(SplineError::NotUnivariate);
    }
    let mut knots: Vec<f64> = net
        .units
        .iter()
        .filter(|u| !u.is_degenerate())
        .map(|u| -u.b / u.w[0])
        .filter(|x| *x > 0.0 && *x < 1.0)
        .collect();
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    knots.dedup_by(|next, prev| (*next - *prev).abs() <= KNOT_MERGE_TOL);

    let mut bounds = vec![0.0];
    bounds.extend_from_slice(&knots);
    bounds.push(1.0);
    let pieces = bounds
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let mut a = 0.0;
            let mut b = net.output_bias;
            for u in &net.units {
                if u.is_degenerate() {
                    b += u.lambda * u.b.max(0.0);
                } else if u.preactivation(&[mid]) > 0.0 {
                    a += u.lambda * u.w[0];
                    b += u.lambda * u.b;
                }
            }
            Piece1D { a, b }
        })
        .collect();
    Spline1D::with_tolerance(knots, pieces, 1e-8)
}

/// Random continuous spline with `zeta` pieces: knots spread inside (0, 1)
/// with a minimum gap, slopes uniform in [-5, 5].
pub fn random_spline(rng: &mut crate::rng::SplitMix64, zeta: usize) -> Spline1D {
    assert!(zeta >= 1);
    let k = zeta - 1;
    let knots: Vec<f64> = (0..k)
        .map(|i| {
            let lo = 0.05 + 0.9 * i as f64 / k as f64;
            let hi = 0.05 + 0.9 * (i as f64 + 0.8) / k as f64;
            rng.uniform(lo, hi)
        })
        .collect();
    let slopes: Vec<f64> = (0..zeta).map(|_| rng.uniform(-5.0, 5.0)).collect();
    let b1 = rng.uniform(-1.0, 1.0);
    Spline1D::from_slopes(knots, &slopes, b1).expect("generated spline is valid")
}
