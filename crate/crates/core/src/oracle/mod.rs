//! Reference solutions: Bessel functions, the rigid circular cylinder series
//! and a finite-difference Helmholtz solver on the unit square.

mod band;
mod bessel;
mod cylinder;
mod fdfd;

pub use band::BandLu;
pub use bessel::{bessel_jy, BesselTable, MAX_ORDER};
pub use cylinder::{cylinder_scatter, CylinderProblem, DEFAULT_TERMS};
pub use fdfd::{fdfd_solve, fdfd_solve_with, FdfdSolution, NodeKind, OuterForcing, DEFAULT_GRID, MIN_GRID};
