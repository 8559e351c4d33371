//! Quadrature on edges, straight polygons and curvilinear polygons.

mod gauss;
mod green;

pub use gauss::{
    gauss_legendre, gauss_lobatto, rule, Family, QuadratureRule1D, RuleError, MAX_POINTS,
};
pub use green::{
    curved_polygon_quadrature, edge_quadrature, polygon_quadrature, EdgeRule, QuadratureError,
    QuadratureRule2D, DEFAULT_BOOST,
};
