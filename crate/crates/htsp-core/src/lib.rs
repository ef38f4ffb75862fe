//! Parametric traveling-salesman constructions in R^N.
//!
//! The crate turns a finite point cloud (or an explicit net hierarchy) into a
//! piecewise-linear approximation of a (1/s)-Holder curve containing it, with
//! an explicit constant certificate, plus the multiscale flatness diagnostics
//! (beta numbers, alpha errors, variation excess) that drive the construction.
//!
//! Module map:
//! - [`geom`]: points, lines, minimax fitting, dyadic cubes, beta numbers.
//! - [`nets`]: net hierarchies (V0)-(V5), line fits, flat pairs, tube control.
//! - [`tour`]: tours on valence <= 2 graphs (the Step-0 subroutine).
//! - [`construct`]: the interval-refinement algorithm and its invariants.
//! - [`mass`]: the mass functional on interval trees.
//! - [`param`]: length reallocation, curve assembly, constant certificates.
//! - [`measures`]: L^p beta numbers of atomic measures and the selection pipeline.
//! - [`fractals`]: deterministic generators used as the test corpus.

pub mod construct;
pub mod fractals;
pub mod geom;
pub mod mass;
pub mod measures;
pub mod nets;
pub mod param;
pub mod tour;

pub use geom::{FitMode, Line, Point};
pub use nets::{NetHierarchy, Params};
pub use param::HolderCurve;
