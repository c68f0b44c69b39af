//! Construction, training and interpretation of two-layer ReLU networks.
//!
//! The crate builds exact networks for continuous piecewise linear functions
//! on the unit box (univariate splines, single and multiple hyperplane
//! chains, axis grids with boundary determination), trains small networks by
//! plain full-batch gradient descent, and explains arbitrary two-layer
//! networks through a unit taxonomy, detected hyperplane chains and
//! continuity-based coverage.

pub mod analyzer;
pub mod cli;
pub mod construct;
pub mod geometry;
pub mod json;
pub mod linalg;
pub mod network;
pub mod spline1d;
pub mod trainer;
pub mod rng;
pub mod svg;

pub use geometry::{Arrangement, Hyperplane, Region, Side, SignVector, StrictPartialOrder};
pub use network::{AffinePiece, PiecewiseLinear, ReluNetwork, ReluUnit};
