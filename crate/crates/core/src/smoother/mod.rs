//! Finite-element spatial spline regression.

pub mod assemble;
pub mod banded;
pub mod mesh;
pub mod sparse;
pub mod ssr;

pub use assemble::{assemble, assemble_with, element_mass, element_stiffness, BoundaryPenalty, FemSystem};
pub use mesh::{triangulate, triangulate_with, Diagonal, Triangulation};
pub use sparse::CsrMatrix;
pub use ssr::{ssr_eval, ssr_fit, SsrModel, SsrSolver};
