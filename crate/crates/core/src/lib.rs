//! Isoparametric tangled finite elements for plane-strain hyperelasticity.
//!
//! Bilinear quadrilateral (Q4) meshes may contain concave elements. A concave
//! element is integrated only over its simple polygon (the invertible part of
//! its parametric map), and field continuity across the fold it creates is
//! restored with one point-evaluated Lagrange multiplier constraint per
//! displacement component. On tangle-free meshes everything reduces to the
//! standard total-Lagrangian finite element method.
//!
//! Module map:
//! - [`mesh`]: mesh data model, benchmark generators, element classification, mesh files
//! - [`param`]: Q4 shape functions, Jacobians, inverse mapping, concave quadrature
//! - [`material`]: strain energies, first Piola-Kirchhoff stress, tangents, F-bar
//! - [`assembly`]: element kernels, loads, constraint matrix, global system
//! - [`solver`]: saddle-point linear solve, Newton-Raphson load stepping
//! - [`analysis`]: H1 seminorm error, probes, convergence studies
//! - [`problems`], [`config`], [`output`]: benchmark presets, run files, VTK/CSV writers

mod error;
pub mod analysis;
pub mod assembly;
pub mod config;
pub mod material;
pub mod mesh;
pub mod output;
pub mod param;
pub mod problems;
pub mod solver;

pub use error::{Error, Result};
pub use mesh::{ElementClass, Point2, QuadMesh, TangleReport};
