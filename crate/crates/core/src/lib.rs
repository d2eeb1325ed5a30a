//! Primal-dual weak Galerkin finite elements for second-order elliptic
//! equations in non-divergence form on triangular meshes.
pub mod analysis;
pub mod assembly;
pub mod cli;
pub mod mesh;
pub mod polyquad;
pub mod problems;
pub mod solver;
pub mod wgspace;
