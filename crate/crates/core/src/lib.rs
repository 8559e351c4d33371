//! Virtual element discretization of `-div(kappa grad u) = f` on polygonal
//! meshes whose boundary (and interface) edges are exact curved arcs.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.

// `!(x > 0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod experiment;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod scalar;
pub mod solver;
pub mod vem;

pub use scalar::Scalar;

pub type Point = geometry::Point<f64>;
pub type BoundaryCurve = geometry::BoundaryCurve<f64>;
pub type CurveSegment = geometry::CurveSegment<f64>;
pub type Mesh = mesh::Mesh<f64>;
pub type Coefficient = vem::Coefficient<f64>;
pub type DofMap = solver::DofMap<f64>;
pub type ManufacturedProblem = analysis::ManufacturedProblem<f64>;
