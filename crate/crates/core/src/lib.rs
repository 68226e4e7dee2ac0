//! Convex decomposition of amoebot structures on the triangular grid.
//!
//! The crate contains a centralized reference decomposition ([`decompose`]),
//! a simulator for amoebots with reconfigurable circuits ([`circuits`]), the
//! distributed subroutines built on it ([`primitives`]) and the distributed
//! decomposition pipeline ([`distalgo`]). [`oracle`] holds brute-force checks
//! for every structural property.

pub mod grid;
pub mod portals;
pub mod split;
pub mod decompose;
pub mod oracle;
pub mod generate;
pub mod circuits;
pub mod primitives;
pub mod distalgo;

pub use grid::{AmoebotStructure, Axis, Direction, GridError, GridPoint, Hole, HoleKind, Side};
