//! Sea-ice aware ship routing on a hexagonal ocean grid.
//!
//! The pipeline runs in stages, each in its own module:
//!
//! 1. [`hexgrid`] tiles a corridor polygon into hexagonal ocean cells.
//! 2. [`envdata`] maps gridded sea-ice samples onto those cells and derives
//!    calibration thresholds.
//! 3. [`model`] turns cells, features and weights into a constrained
//!    quadratic model over binary edge variables and unit flows.
//! 4. [`solvers`] minimizes the model (exhaustive oracle, turn-aware line
//!    graph search, simulated annealing, external adapter).
//! 5. [`recovery`] orders the activated edges into a route and scores it.
//!
//! [`synthbench`] generates synthetic binary quadratic benchmarks with the
//! same algebraic shape for solver comparisons.

pub mod envdata;
pub mod fixtures;
pub mod geo;
pub mod hexgrid;
pub mod model;
pub mod recovery;
pub mod solvers;
pub mod synthbench;

pub use geo::{haversine, GeoPoint, EARTH_RADIUS_KM};
pub use hexgrid::{CellId, CorridorGrid};
