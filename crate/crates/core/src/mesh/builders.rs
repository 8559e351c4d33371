//! Mesh construction: a polygon-soup builder, the two generated mesh
//! families and chord straightening.

use std::collections::HashMap;
use std::sync::Arc;

use super::{EdgeGeometry, EdgeSpec, ElementSpec, Mesh, MeshError};
use crate::geometry::{BoundaryCurve, Point};
use crate::scalar::Scalar;

/// Incremental builder from counterclockwise vertex loops. Edges are shared
/// automatically between polygons; edges registered with
/// [`MeshBuilder::curved_edge`] become arcs of the given curve.
#[derive(Default)]
pub struct MeshBuilder<T> {
    positions: Vec<Point<T>>,
    curves: Vec<Arc<BoundaryCurve<T>>>,
    curved: HashMap<(usize, usize), (usize, T, T)>,
    polygons: Vec<(Vec<usize>, i32)>,
}

impl<T: Scalar> MeshBuilder<T> {
    pub fn new() -> Self {
        Self {
            positions: Vec::new(),
            curves: Vec::new(),
            curved: HashMap::new(),
            polygons: Vec::new(),
        }
    }

    pub fn add_vertex(&mut self, p: Point<T>) -> usize {
        self.positions.push(p);
        self.positions.len() - 1
    }

    pub fn add_curve(&mut self, curve: Arc<BoundaryCurve<T>>) {
        self.curves.push(curve);
    }

    /// Declares the edge `va -- vb` as the arc `gamma([ta, tb])` of curve `curve`,
    /// with `gamma(ta)` at `va` and `gamma(tb)` at `vb`.
    pub fn curved_edge(&mut self, va: usize, vb: usize, curve: usize, ta: T, tb: T) {
        let (key, val) = if va < vb {
            ((va, vb), (curve, ta, tb))
        } else {
            ((vb, va), (curve, tb, ta))
        };
        self.curved.insert(key, val);
    }

    pub fn add_polygon(&mut self, vertex_loop: Vec<usize>, label: i32) {
        self.polygons.push((vertex_loop, label));
    }

    pub fn build(self) -> Result<Mesh<T>, MeshError> {
        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<EdgeSpec<T>> = Vec::new();
        let mut elements = Vec::with_capacity(self.polygons.len());
        for (vloop, label) in &self.polygons {
            let n = vloop.len();
            let mut loop_edges = Vec::with_capacity(n);
            for i in 0..n {
                let (a, b) = (vloop[i], vloop[(i + 1) % n]);
                let key = (a.min(b), a.max(b));
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    let curve = self.curved.get(&key).copied();
                    edges.push(EdgeSpec {
                        vertices: [key.0, key.1],
                        curve,
                        chord_of: None,
                    });
                    edges.len() - 1
                });
                loop_edges.push((id, a == key.0));
            }
            elements.push(ElementSpec {
                edges: loop_edges,
                label: *label,
            });
        }
        Mesh::new(self.positions, self.curves, edges, elements)
    }
}

fn check_graph_curve<T: Scalar>(c: &BoundaryCurve<T>) -> Result<(), MeshError> {
    let (a, b) = c.interval();
    let ok = a <= T::zero()
        && b >= T::one()
        && (0..=8).all(|i| {
            let t = T::from_usize_lossy(i) / T::lit(8.0);
            (c.point(t).x - t).abs() <= T::epsilon() * T::lit(4.0)
        });
    if ok {
        Ok(())
    } else {
        Err(MeshError::InvalidParameter(format!(
            "curve {} is not a graph curve over [0, 1]",
            c.id()
        )))
    }
}

/// `n x n` uniform quadrilateral mesh of the unit square with its nodes moved
/// onto the region between the graphs of `g1` (bottom) and `g2` (top). The
/// lower half is stretched linearly between `g1` and `y = 1/2`, the upper
/// half between `y = 1/2` and `g2`. Bottom and top boundary edges become arcs
/// of the curves (unless a curve is a straight line).
pub fn build_mapped_tensor_mesh<T: Scalar>(
    n: usize,
    g1: Arc<BoundaryCurve<T>>,
    g2: Arc<BoundaryCurve<T>>,
) -> Result<Mesh<T>, MeshError> {
    if n < 2 {
        return Err(MeshError::InvalidParameter(format!("n = {n}, need n >= 2")));
    }
    if g1.id() == g2.id() {
        return Err(MeshError::InvalidParameter(
            "g1 and g2 must have distinct ids".into(),
        ));
    }
    check_graph_curve(&g1)?;
    check_graph_curve(&g2)?;
    let nf = T::from_usize_lossy(n);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut b = MeshBuilder::new();
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    for j in 0..=n {
        for i in 0..=n {
            let x = T::from_usize_lossy(i) / nf;
            let yq = T::from_usize_lossy(j) / nf;
            let p = if j == 0 {
                g1.point(x)
            } else if j == n {
                g2.point(x)
            } else if yq <= half {
                let lo = g1.point(x).y;
                Point::new(x, (T::one() - two * lo) * yq + lo)
            } else {
                let hi = g2.point(x).y;
                Point::new(x, (two * hi - T::one()) * yq + T::one() - hi)
            };
            b.add_vertex(p);
        }
    }
    for (curve, row) in [(&g1, 0), (&g2, n)] {
        if curve.is_straight() {
            continue;
        }
        for i in 0..n {
            let ta = T::from_usize_lossy(i) / nf;
            let tb = T::from_usize_lossy(i + 1) / nf;
            b.curved_edge(idx(i, row), idx(i + 1, row), curve.id(), ta, tb);
        }
    }
    b.add_curve(g1);
    b.add_curve(g2);
    for j in 0..n {
        for i in 0..n {
            b.add_polygon(
                vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)],
                1,
            );
        }
    }
    b.build()
}

/// Curve ids used by [`build_annulus_interface_mesh`].
pub const OUTER_CIRCLE: usize = 0;
pub const INTERFACE_CIRCLE: usize = 1;

/// Polar mesh of the unit disk matching the circle `r = 1/2`.
///
/// Both the inner disk and the outer annulus get `n_rings` rings of equal
/// width. Ring `j` (counted from the centre) carries
/// `n_sectors * 2^floor(log2 j)` nodes, so rings where the count doubles
/// produce pentagons with a hanging-type vertex. The centre is a fan of
/// triangles. Edges on `r = 1/2` and `r = 1` are exact arcs of
/// `gamma_2(t) = (cos 2t, sin 2t)/2, t in [0, pi]` and
/// `gamma_1(t) = (cos t, sin t), t in [0, 2 pi]`. Elements inside `r < 1/2`
/// have label 2, the others label 1.
pub fn build_annulus_interface_mesh<T: Scalar>(
    n_rings: usize,
    n_sectors: usize,
) -> Result<Mesh<T>, MeshError> {
    if n_rings < 2 || n_sectors < 4 {
        return Err(MeshError::InvalidParameter(format!(
            "n_rings = {n_rings}, n_sectors = {n_sectors}; need n_rings >= 2 and n_sectors >= 4"
        )));
    }
    let pi = T::PI();
    let two_pi = pi + pi;
    let outer = Arc::new(BoundaryCurve::circle(
        OUTER_CIRCLE,
        T::zero(),
        two_pi,
        Point::zero(),
        T::one(),
        T::one(),
        T::zero(),
    )?);
    let inner = Arc::new(BoundaryCurve::circle(
        INTERFACE_CIRCLE,
        T::zero(),
        pi,
        Point::zero(),
        T::lit(0.5),
        T::lit(2.0),
        T::zero(),
    )?);
    let n_total = 2 * n_rings;
    let dr = T::one() / T::from_usize_lossy(n_total);
    let count = |j: usize| n_sectors << (usize::BITS - 1 - j.leading_zeros());

    let mut b = MeshBuilder::new();
    let centre = b.add_vertex(Point::zero());
    // ring[j - 1][i]: vertex id of node i on ring j
    let mut ring: Vec<Vec<usize>> = Vec::with_capacity(n_total);
    for j in 1..=n_total {
        let nj = count(j);
        let r = dr * T::from_usize_lossy(j);
        let ids = (0..nj)
            .map(|i| {
                let theta = two_pi * T::from_usize_lossy(i) / T::from_usize_lossy(nj);
                let p = if j == n_rings {
                    inner.point(theta * T::lit(0.5))
                } else if j == n_total {
                    outer.point(theta)
                } else {
                    let (s, c) = theta.sin_cos();
                    Point::new(r * c, r * s)
                };
                b.add_vertex(p)
            })
            .collect();
        ring.push(ids);
    }
    for (j, curve, scale) in [(n_rings, &inner, T::lit(0.5)), (n_total, &outer, T::one())] {
        let ids = &ring[j - 1];
        let nj = ids.len();
        for i in 0..nj {
            let ta = two_pi * T::from_usize_lossy(i) / T::from_usize_lossy(nj) * scale;
            let tb = two_pi * T::from_usize_lossy(i + 1) / T::from_usize_lossy(nj) * scale;
            b.curved_edge(ids[i], ids[(i + 1) % nj], curve.id(), ta, tb);
        }
    }
    b.add_curve(outer);
    b.add_curve(inner);

    let first = &ring[0];
    for i in 0..first.len() {
        b.add_polygon(vec![centre, first[i], first[(i + 1) % first.len()]], 2);
    }
    for j in 1..n_total {
        let (inn, out) = (&ring[j - 1], &ring[j]);
        let ratio = out.len() / inn.len();
        let label = if j < n_rings { 2 } else { 1 };
        for i in 0..inn.len() {
            let mut poly = vec![inn[i]];
            for s in 0..=ratio {
                poly.push(out[(i * ratio + s) % out.len()]);
            }
            poly.push(inn[(i + 1) % inn.len()]);
            b.add_polygon(poly, label);
        }
    }
    b.build()
}

/// Replaces every curved edge by the chord between its endpoints. The chord
/// remembers the replaced curve in [`super::Edge::chord_of`].
pub fn straighten_mesh<T: Scalar>(mesh: &Mesh<T>) -> Result<Mesh<T>, MeshError> {
    let (pos, mut edges, elements) = mesh.to_specs();
    for (spec, e) in edges.iter_mut().zip(&mesh.edges) {
        if let EdgeGeometry::Curved(seg) = &e.geometry {
            spec.curve = None;
            spec.chord_of = Some(seg.curve().id());
        }
    }
    let keep_curves = if mesh.has_curved_edges() {
        Vec::new()
    } else {
        mesh.curves.clone()
    };
    Mesh::new(pos, keep_curves, edges, elements)
}
