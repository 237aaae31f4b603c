//! Nonlinear connections on the tangent bundle, horizontal autoparallels,
//! the tangent bundle exponential map and locally autoparallel charts for
//! Finsler geometries.
//!
//! Index conventions: `N^a_b` is stored with row `a` (upper) and column `b`
//! (lower); rank-3 arrays `T^a_bc` are stored `[a][b][c]`.

pub mod autocoords;
pub mod cli;
pub mod connection;
pub mod dynamics;
pub mod error;
pub mod lagrangian;
pub mod multidiff;
pub mod point;
pub mod sampling;
pub mod verify;

pub use error::{Error, Result};
pub use point::{TangentBundlePoint, ZERO_DIRECTION_GUARD};
