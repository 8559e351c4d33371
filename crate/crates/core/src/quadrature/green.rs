//! Green's-theorem quadrature on (curvilinear) polygons.
//!
//! For `p` on a polygon `E` let `P(x, y) = int_alpha^x p(s, y) ds`. Then
//! `int_E p = int_{dE} P dy`, and both the boundary integral and the inner
//! `x`-integral are evaluated with Gauss-Legendre rules. On curved edges the
//! outer integral runs in the curve parameter with the `dy` factor `gamma_2'`.

use thiserror::Error;

use super::gauss::{gauss_legendre, rule, Family, RuleError, MAX_POINTS};
use crate::geometry::{BoundaryPiece, Point};
use crate::scalar::Scalar;

/// Extra Gauss points per direction on curved contributions.
pub const DEFAULT_BOOST: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("degenerate element: signed area {area:e}")]
    Degenerate { area: f64 },
    #[error("polygon_quadrature requires straight edges; piece {0} is curved")]
    CurvedPiece(usize),
}

/// Weighted point set on a planar region. Weights may be negative and nodes
/// may lie outside the region (but inside `bounding_box`).
#[derive(Clone, Debug)]
pub struct QuadratureRule2D<T> {
    pub points: Vec<Point<T>>,
    pub weights: Vec<T>,
    /// `(min, max)` corners of the rectangle containing every node.
    pub bounding_box: (Point<T>, Point<T>),
    /// Gauss points per direction on straight edges.
    pub straight_points: usize,
    /// Gauss points per direction on curved edges.
    pub curved_points: usize,
    /// The abscissa of the integration line `x = alpha`.
    pub alpha: T,
}

impl<T: Scalar> QuadratureRule2D<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(Point<T>) -> T) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| f(p) * w)
            .sum()
    }

    pub fn weight_sum(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// Node dump (`x,y,w` per line) for plotting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,w\n");
        for (p, w) in self.points.iter().zip(&self.weights) {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p.x, p.y, w));
        }
        s
    }
}

fn green_rule<T: Scalar>(
    boundary: &[BoundaryPiece<T>],
    straight_points: usize,
    curved_points: usize,
) -> Result<QuadratureRule2D<T>, QuadratureError> {
    let n = T::from_usize_lossy(boundary.len());
    let alpha = boundary.iter().map(|p| p.start().x).sum::<T>() / n;
    let straight = gauss_legendre::<T>(straight_points)?;
    let curved = gauss_legendre::<T>(curved_points)?;
    let half = T::lit(0.5);

    let mut points = Vec::new();
    let mut weights = Vec::new();
    for piece in boundary {
        let r = if piece.is_curved() {
            &curved
        } else {
            &straight
        };
        if let BoundaryPiece::Segment { a, b } = piece {
            if a.y == b.y {
                continue;
            }
        }
        for (&sj, &nu_j) in r.nodes.iter().zip(&r.weights) {
            let (pos, d) = piece.map(sj);
            let outer = nu_j * d.y;
            let half_len = (pos.x - alpha) * half;
            let mid = (pos.x + alpha) * half;
            for (&tm, &nu_m) in r.nodes.iter().zip(&r.weights) {
                points.push(Point::new(half_len * tm + mid, pos.y));
                weights.push(outer * half_len * nu_m);
            }
        }
    }
    let mut lo = Point::new(T::infinity(), T::infinity());
    let mut hi = Point::new(T::neg_infinity(), T::neg_infinity());
    for p in &points {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let rule = QuadratureRule2D {
        points,
        weights,
        bounding_box: (lo, hi),
        straight_points,
        curved_points,
        alpha,
    };
    let area = rule.weight_sum();
    let scale = boundary
        .iter()
        .map(|p| p.start().dist(p.end()))
        .fold(T::zero(), T::max);
    if !(area.abs() > T::lit(1e3) * T::epsilon() * scale * scale) {
        return Err(QuadratureError::Degenerate {
            area: area.as_f64(),
        });
    }
    Ok(rule)
}

/// Gauss-Green rule on a straight polygon given by its counterclockwise
/// vertices; exact for total degree `<= 2M` with at most `(M+1)^2 N_E` nodes.
pub fn polygon_quadrature<T: Scalar>(
    vertices: &[Point<T>],
    m: usize,
) -> Result<QuadratureRule2D<T>, QuadratureError> {
    let n = vertices.len();
    let pieces: Vec<BoundaryPiece<T>> = (0..n)
        .map(|i| BoundaryPiece::Segment {
            a: vertices[i],
            b: vertices[(i + 1) % n],
        })
        .collect();
    green_rule(&pieces, m + 1, m + 1)
}

/// Gauss-Green rule on a possibly curved element. Straight edges use
/// `M + 1` points per direction with `M = ceil(degree / 2)`, which makes the
/// rule exact for `degree` on straight elements; curved edges use
/// `M + 1 + boost` points per direction.
pub fn curved_polygon_quadrature<T: Scalar>(
    boundary: &[BoundaryPiece<T>],
    degree: usize,
    boost: usize,
) -> Result<QuadratureRule2D<T>, QuadratureError> {
    let m = degree.div_ceil(2);
    green_rule(boundary, m + 1, (m + 1 + boost).min(MAX_POINTS))
}

/// Line rule on one boundary piece: `int_e f ds ~ sum_j f(points[j]) weights[j]`.
#[derive(Clone, Debug)]
pub struct EdgeRule<T> {
    /// Reference coordinates in `[-1, 1]` along the traversal direction.
    pub reference: Vec<T>,
    /// Curve parameters (reference coordinates again for straight pieces).
    pub params: Vec<T>,
    pub points: Vec<Point<T>>,
    /// Weights including the `|gamma'|` (or chord length) scaling.
    pub weights: Vec<T>,
    /// Outward unit normals for a counterclockwise traversal.
    pub normals: Vec<Point<T>>,
}

impl<T: Scalar> EdgeRule<T> {
    pub fn integrate(&self, f: impl Fn(Point<T>) -> T) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&p, &w)| f(p) * w)
            .sum()
    }
}

/// Edge quadrature: the affine image of the 1D rule on straight edges, and
/// the rule on the parameter interval weighted by `|gamma'|` on curved edges.
pub fn edge_quadrature<T: Scalar>(
    piece: &BoundaryPiece<T>,
    npts: usize,
    family: Family,
) -> Result<EdgeRule<T>, QuadratureError> {
    let r = rule::<T>(family, npts)?;
    let mut out = EdgeRule {
        reference: Vec::with_capacity(npts),
        params: Vec::with_capacity(npts),
        points: Vec::with_capacity(npts),
        weights: Vec::with_capacity(npts),
        normals: Vec::with_capacity(npts),
    };
    for (&s, &w) in r.nodes.iter().zip(&r.weights) {
        let (p, d) = piece.map(s);
        let speed = d.norm();
        out.reference.push(s);
        out.params.push(piece.param(s));
        out.points.push(p);
        out.weights.push(w * speed);
        out.normals.push(d.rot_cw() * (T::one() / speed));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryCurve;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn square() -> Vec<Point<f64>> {
        vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ]
    }

    #[test]
    fn square_monomial() {
        let r = polygon_quadrature(&square(), 2).unwrap();
        assert!((r.integrate(|p| p.x * p.x * p.y * p.y) - 1.0 / 9.0).abs() < 1e-14);
        assert!(r.len() <= 9 * 4);
    }

    #[test]
    fn l_shaped_area() {
        let l = [
            (0.0, 0.0),
            (1.0, 0.0),
            (1.0, 0.5),
            (0.5, 0.5),
            (0.5, 1.0),
            (0.0, 1.0),
        ]
        .map(|(x, y)| Point::<f64>::new(x, y));
        let r = polygon_quadrature(&l, 1).unwrap();
        assert!((r.weight_sum() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn degenerate_polygon_is_rejected() {
        let flat = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)].map(|(x, y)| Point::new(x, y));
        assert!(matches!(
            polygon_quadrature(&flat, 1),
            Err(QuadratureError::Degenerate { .. })
        ));
    }

    fn half_disk() -> Vec<BoundaryPiece<f64>> {
        let c = Arc::new(
            BoundaryCurve::circle(0, 0.0, 2.0 * PI, Point::zero(), 1.0, 1.0, 0.0).unwrap(),
        );
        vec![
            BoundaryPiece::Segment {
                a: Point::new(-1.0, 0.0),
                b: Point::new(1.0, 0.0),
            },
            BoundaryPiece::Arc {
                segment: c.segment(0.0, PI).unwrap(),
                forward: true,
            },
        ]
    }

    #[test]
    fn upper_half_disk_symmetry() {
        let r = curved_polygon_quadrature(&half_disk(), 4, DEFAULT_BOOST).unwrap();
        assert!(r.integrate(|p| p.x).abs() < 1e-12);
        assert!(r.bounding_box.0.x >= -1.0 - 1e-12 && r.bounding_box.1.y <= 1.0 + 1e-12);
    }

    #[test]
    fn edge_rule_examples() {
        let seg = BoundaryPiece::<f64>::Segment {
            a: Point::new(0.0, 0.0),
            b: Point::new(2.0, 0.0),
        };
        let r = edge_quadrature(&seg, 3, Family::Lobatto).unwrap();
        assert!((r.integrate(|_| 1.0) - 2.0).abs() < 1e-15);
        assert!((r.normals[0].y + 1.0).abs() < 1e-15);

        let c = Arc::new(
            BoundaryCurve::circle(0, 0.0, 2.0 * PI, Point::zero(), 1.0, 1.0, 0.0).unwrap(),
        );
        let quarter = BoundaryPiece::Arc {
            segment: c.segment(0.0, PI / 2.0).unwrap(),
            forward: true,
        };
        let r = edge_quadrature(&quarter, 8, Family::Legendre).unwrap();
        assert!((r.integrate(|_| 1.0) - PI / 2.0).abs() < 1e-10);
        // outward normal of the disk
        for (p, n) in r.points.iter().zip(&r.normals) {
            assert!((p.x - n.x).abs() < 1e-14 && (p.y - n.y).abs() < 1e-14);
        }
    }

    #[test]
    fn rule_metadata() {
        let r = curved_polygon_quadrature(&half_disk(), 4, 3).unwrap();
        assert_eq!((r.straight_points, r.curved_points), (3, 6));
        assert!(r.to_csv().lines().count() == r.len() + 1);
    }
}
