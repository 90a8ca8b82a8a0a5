//! Partial Dirichlet-to-Neumann operators for second-order elliptic
//! operators on planar polygons, discretized with P1 finite elements.

pub mod assemble;
pub mod coeffs;
pub mod exprlang;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod dtn;
pub mod spectral;
pub mod semigroup;
