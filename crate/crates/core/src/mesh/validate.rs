//! Shape-regularity checks: edge length ratio and star-shapedness with
//! respect to a ball of radius `rho h_E`.

use super::{sampled_polygon, Mesh};
use crate::geometry::Point;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ElementReport {
    pub element: usize,
    /// `min_e |e| / h_E`.
    pub min_edge_ratio: f64,
    pub edge_ratio_ok: bool,
    pub star_shaped: bool,
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub rho: f64,
    pub elements: Vec<ElementReport>,
    pub conformity: Vec<String>,
    pub pass: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &ElementReport> {
        self.elements
            .iter()
            .filter(|r| !r.edge_ratio_ok || !r.star_shaped)
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} elements checked with rho = {}: {}\n",
            self.elements.len(),
            self.rho,
            if self.pass { "pass" } else { "FAIL" }
        );
        for r in self.failures() {
            s.push_str(&format!(
                "  element {}: edge ratio {:.3e}{} star-shaped {}\n",
                r.element,
                r.min_edge_ratio,
                if r.edge_ratio_ok { "" } else { " (< rho)" },
                r.star_shaped
            ));
        }
        for c in &self.conformity {
            s.push_str(&format!("  conformity: {c}\n"));
        }
        s
    }
}

/// Clips a convex polygon against the half-plane `n . x >= c`.
fn clip<T: Scalar>(poly: &[Point<T>], n: Point<T>, c: T) -> Vec<Point<T>> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let dp = n.dot(p) - c;
        let dq = n.dot(q) - c;
        if dp >= T::zero() {
            out.push(p);
        }
        if (dp >= T::zero()) != (dq >= T::zero()) {
            out.push(p + (q - p) * (dp / (dp - dq)));
        }
    }
    out
}

/// True when the polygon contains a ball of radius `r` inside its kernel.
fn star_shaped_wrt_ball<T: Scalar>(pts: &[Point<T>], r: T) -> bool {
    let (mut lo, mut hi) = (pts[0], pts[0]);
    for p in pts {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let mut region = vec![lo, Point::new(hi.x, lo.y), hi, Point::new(lo.x, hi.y)];
    for i in 0..pts.len() {
        let a = pts[i];
        let b = pts[(i + 1) % pts.len()];
        let len = a.dist(b);
        if len == T::zero() {
            continue;
        }
        // inward unit normal of a counterclockwise edge
        let n = Point::new(a.y - b.y, b.x - a.x) * (T::one() / len);
        region = clip(&region, n, n.dot(a) + r);
        if region.is_empty() {
            return false;
        }
    }
    true
}

/// Checks every element for `|e| >= rho h_E` and star-shapedness with respect
/// to a ball of radius `rho h_E` (on the boundary polygon augmented with
/// samples of curved edges), plus edge adjacency counts.
pub fn validate_mesh<T: Scalar>(mesh: &Mesh<T>, rho: T) -> ValidationReport {
    let mut elements = Vec::with_capacity(mesh.n_elements());
    for (id, el) in mesh.elements.iter().enumerate() {
        let boundary = mesh.element_boundary(id);
        let min_len = boundary
            .iter()
            .map(|p| p.length().unwrap_or_else(|_| p.start().dist(p.end())))
            .fold(T::infinity(), T::min);
        let ratio = min_len / el.diameter;
        let pts = sampled_polygon(&boundary);
        elements.push(ElementReport {
            element: id,
            min_edge_ratio: ratio.as_f64(),
            edge_ratio_ok: ratio >= rho,
            star_shaped: star_shaped_wrt_ball(&pts, rho * el.diameter),
        });
    }
    let mut conformity = Vec::new();
    for (id, e) in mesh.edges.iter().enumerate() {
        if e.elements.is_empty() || e.elements.len() > 2 {
            conformity.push(format!(
                "edge {id} has {} adjacent elements",
                e.elements.len()
            ));
        }
        for &el in &e.elements {
            let vs = &mesh.elements[el].vertices;
            if !e.vertices.iter().all(|v| vs.contains(v)) {
                conformity.push(format!("edge {id} endpoints missing from element {el}"));
            }
        }
    }
    let pass = conformity.is_empty() && elements.iter().all(|r| r.edge_ratio_ok && r.star_shaped);
    ValidationReport {
        rho: rho.as_f64(),
        elements,
        conformity,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryCurve;
    use crate::mesh::{build_mapped_tensor_mesh, read_mesh, MeshBuilder};
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn unit_square_passes() {
        let mut b = MeshBuilder::new();
        for (x, y) in [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)] {
            b.add_vertex(Point::new(x, y));
        }
        b.add_polygon(vec![0, 1, 2, 3], 1);
        let r = validate_mesh(&b.build().unwrap(), 0.1);
        assert!(r.pass);
        assert!((r.elements[0].min_edge_ratio - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn tiny_edge_is_flagged() {
        let m: Mesh<f64> = read_mesh(
            "curvem-mesh 5 0 5 1\nv 0 0\nv 1 0\nv 1 1\nv 1e-6 1\nv 0 1\ne 0 1\ne 1 2\ne 2 3\ne 3 4\ne 4 0\np 5 0+ 1+ 2+ 3+ 4+\n",
        )
        .unwrap();
        let r = validate_mesh(&m, 0.1);
        assert!(!r.pass);
        assert!(!r.elements[0].edge_ratio_ok);
        assert!(r.elements[0].min_edge_ratio < 1e-5);
    }

    #[test]
    fn non_star_shaped_polygon_is_flagged() {
        // thin comb: two long teeth
        let mut b = MeshBuilder::new();
        for (x, y) in [
            (0.0, 0.0),
            (3.0, 0.0),
            (3.0, 3.0),
            (2.0, 3.0),
            (2.0, 0.2),
            (1.0, 0.2),
            (1.0, 3.0),
            (0.0, 3.0),
        ] {
            b.add_vertex(Point::new(x, y));
        }
        b.add_polygon((0..8).collect(), 1);
        let r = validate_mesh(&b.build().unwrap(), 0.05);
        assert!(!r.elements[0].star_shaped);
    }

    #[test]
    fn test1_mesh_passes() {
        let g1 = Arc::new(BoundaryCurve::graph(1, 0.0, 1.0, 0.0, 0.05, PI).unwrap());
        let g2 = Arc::new(BoundaryCurve::graph(2, 0.0, 1.0, 1.0, 0.05, 3.0 * PI).unwrap());
        let m = build_mapped_tensor_mesh(8, g1, g2).unwrap();
        let r = validate_mesh(&m, 0.05);
        assert!(r.pass, "{}", r.summary());
    }
}
