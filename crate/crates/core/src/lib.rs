//! Polygonal inner approximations of branch MVA limits.
//!
//! [`polygeom`] builds regular and irregular polygons inscribed in the
//! `P² + Q² ≤ S²` circle, [`halfplanes`] turns them into linear constraints,
//! and [`lopf`] places those constraints in a linear OPF solved by the
//! simplex in [`lp`]. Case data is read by [`caseio`].

pub mod caseio;
pub mod format;
pub mod halfplanes;
pub mod lopf;
pub mod lp;
pub mod polygeom;
