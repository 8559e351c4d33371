//! Curved polygonal meshes.
//!
//! Edges are straight segments or sub-arcs of one [`BoundaryCurve`]. Elements
//! are counterclockwise loops of oriented edges and may carry any number of
//! curved edges.

mod builders;
mod io;
mod validate;

use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

pub use builders::{
    build_annulus_interface_mesh, build_mapped_tensor_mesh, straighten_mesh, MeshBuilder,
    INTERFACE_CIRCLE, OUTER_CIRCLE,
};
pub use io::{export_mesh, import_mesh, read_mesh, write_mesh};
pub use validate::{validate_mesh, ElementReport, ValidationReport};

use crate::geometry::{BoundaryCurve, BoundaryPiece, CurveSegment, GeometryError, Point};
use crate::quadrature::{curved_polygon_quadrature, QuadratureError};
use crate::scalar::Scalar;

/// Samples per curved edge used for diameters, orientation and star-shapedness.
pub const CURVE_SAMPLES: usize = 8;

/// Extra points per curved direction for element areas.
const GEOMETRY_BOOST: usize = 14;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("edge {edge} references missing vertex {vertex}")]
    MissingVertex { edge: usize, vertex: usize },
    #[error("edge {edge} references missing curve {curve}")]
    MissingCurve { edge: usize, curve: usize },
    #[error("element {element} references missing edge {edge}")]
    MissingEdge { element: usize, edge: usize },
    #[error("element {element}: edge loop is not closed at position {position}")]
    OpenLoop { element: usize, position: usize },
    #[error("element {element} is not counterclockwise (signed area {area:e})")]
    NotCounterclockwise { element: usize, area: f64 },
    #[error("edge {edge} is adjacent to {count} elements")]
    NonConforming { edge: usize, count: usize },
    #[error("edge {edge} is traversed in the same direction by elements {first} and {second}")]
    Orientation {
        edge: usize,
        first: usize,
        second: usize,
    },
    #[error("curved edge {edge}: curve endpoint misses vertex {vertex} by {gap:e}")]
    CurveMismatch {
        edge: usize,
        vertex: usize,
        gap: f64,
    },
    #[error("element {element}: {source}")]
    Quadrature {
        element: usize,
        source: QuadratureError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct Vertex<T> {
    pub position: Point<T>,
    pub on_boundary: bool,
    /// `(curve id, parameter)` when the vertex is the endpoint of a curved edge.
    pub on_curve: Option<(usize, T)>,
}

#[derive(Clone, Debug)]
pub enum EdgeGeometry<T> {
    Straight,
    Curved(CurveSegment<T>),
}

/// Mesh edge, stored from `vertices[0]` to `vertices[1]`. Curved edges are
/// stored in the direction of increasing curve parameter.
#[derive(Clone, Debug)]
pub struct Edge<T> {
    pub vertices: [usize; 2],
    pub geometry: EdgeGeometry<T>,
    /// One (boundary) or two (interior) adjacent elements.
    pub elements: Vec<usize>,
    /// For a chord produced by [`straighten_mesh`]: the curve it replaced.
    pub chord_of: Option<usize>,
}

impl<T: Scalar> Edge<T> {
    pub fn is_boundary(&self) -> bool {
        self.elements.len() == 1
    }

    pub fn is_curved(&self) -> bool {
        matches!(self.geometry, EdgeGeometry::Curved(_))
    }

    pub fn curve_id(&self) -> Option<usize> {
        match &self.geometry {
            EdgeGeometry::Curved(seg) => Some(seg.curve().id()),
            EdgeGeometry::Straight => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Element<T> {
    /// Counterclockwise loop of `(edge id, forward)`; `forward` means the
    /// element traverses the edge from `vertices[0]` to `vertices[1]`.
    pub edges: Vec<(usize, bool)>,
    /// Vertex loop: `vertices[i]` is the start of `edges[i]`.
    pub vertices: Vec<usize>,
    pub label: i32,
    pub area: T,
    /// Centroid of the sampled boundary polygon; centre of the scaled monomials.
    pub centroid: Point<T>,
    pub diameter: T,
}

impl<T> Element<T> {
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }
}

/// Raw edge input for [`Mesh::new`].
#[derive(Clone, Debug)]
pub struct EdgeSpec<T> {
    pub vertices: [usize; 2],
    /// `(curve id, t0, t1)` with `gamma(t0)` at `vertices[0]`.
    pub curve: Option<(usize, T, T)>,
    pub chord_of: Option<usize>,
}

/// Raw element input for [`Mesh::new`].
#[derive(Clone, Debug)]
pub struct ElementSpec {
    pub edges: Vec<(usize, bool)>,
    pub label: i32,
}

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    pub vertices: Vec<Vertex<T>>,
    pub edges: Vec<Edge<T>>,
    pub elements: Vec<Element<T>>,
    pub curves: Vec<Arc<BoundaryCurve<T>>>,
    h: T,
}

impl<T: Scalar> Mesh<T> {
    /// Assembles a mesh from raw parts, checking loop closure, orientation,
    /// conformity and curve/vertex consistency, and computing element areas,
    /// centroids and diameters.
    pub fn new(
        positions: Vec<Point<T>>,
        curves: Vec<Arc<BoundaryCurve<T>>>,
        edge_specs: Vec<EdgeSpec<T>>,
        element_specs: Vec<ElementSpec>,
    ) -> Result<Self, MeshError> {
        let curve_index: HashMap<usize, usize> = curves
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id(), i))
            .collect();
        let mut vertices: Vec<Vertex<T>> = positions
            .into_iter()
            .map(|p| Vertex {
                position: p,
                on_boundary: false,
                on_curve: None,
            })
            .collect();

        let mut flip = vec![false; edge_specs.len()];
        let mut edges = Vec::with_capacity(edge_specs.len());
        for (id, spec) in edge_specs.into_iter().enumerate() {
            for &v in &spec.vertices {
                if v >= vertices.len() {
                    return Err(MeshError::MissingVertex {
                        edge: id,
                        vertex: v,
                    });
                }
            }
            let mut vs = spec.vertices;
            let geometry = match spec.curve {
                None => EdgeGeometry::Straight,
                Some((cid, mut t0, mut t1)) => {
                    let &ci = curve_index.get(&cid).ok_or(MeshError::MissingCurve {
                        edge: id,
                        curve: cid,
                    })?;
                    if t1 < t0 {
                        std::mem::swap(&mut t0, &mut t1);
                        vs.swap(0, 1);
                        flip[id] = true;
                    }
                    let seg = CurveSegment::new(Arc::clone(&curves[ci]), t0, t1)?;
                    for (v, t, p) in [(vs[0], t0, seg.start()), (vs[1], t1, seg.end())] {
                        let q = vertices[v].position;
                        let gap = p.dist(q);
                        if gap > T::lit(1e-12) * (T::one() + q.norm()) {
                            return Err(MeshError::CurveMismatch {
                                edge: id,
                                vertex: v,
                                gap: gap.as_f64(),
                            });
                        }
                        if vertices[v].on_curve.is_none() {
                            vertices[v].on_curve = Some((cid, t));
                        }
                    }
                    EdgeGeometry::Curved(seg)
                }
            };
            edges.push(Edge {
                vertices: vs,
                geometry,
                elements: Vec::new(),
                chord_of: spec.chord_of,
            });
        }

        let mut elements = Vec::with_capacity(element_specs.len());
        let mut direction: Vec<Option<(usize, bool)>> = vec![None; edges.len()];
        for (eid, spec) in element_specs.into_iter().enumerate() {
            let loop_edges: Vec<(usize, bool)> = spec
                .edges
                .iter()
                .map(|&(e, fwd)| {
                    if e >= edges.len() {
                        Err(MeshError::MissingEdge {
                            element: eid,
                            edge: e,
                        })
                    } else {
                        Ok((e, fwd ^ flip[e]))
                    }
                })
                .collect::<Result<_, _>>()?;
            if loop_edges.len() < 2 {
                return Err(MeshError::OpenLoop {
                    element: eid,
                    position: 0,
                });
            }
            let ends: Vec<(usize, usize)> = loop_edges
                .iter()
                .map(|&(e, fwd)| {
                    let [a, b] = edges[e].vertices;
                    if fwd {
                        (a, b)
                    } else {
                        (b, a)
                    }
                })
                .collect();
            let n = loop_edges.len();
            for i in 0..n {
                if ends[i].1 != ends[(i + 1) % n].0 {
                    return Err(MeshError::OpenLoop {
                        element: eid,
                        position: i,
                    });
                }
            }
            for &(e, fwd) in &loop_edges {
                match direction[e] {
                    Some((other, ofwd)) if ofwd == fwd => {
                        return Err(MeshError::Orientation {
                            edge: e,
                            first: other,
                            second: eid,
                        })
                    }
                    None => direction[e] = Some((eid, fwd)),
                    _ => {}
                }
                edges[e].elements.push(eid);
            }
            let vloop: Vec<usize> = ends.iter().map(|&(a, _)| a).collect();
            elements.push(Element {
                edges: loop_edges,
                vertices: vloop,
                label: spec.label,
                area: T::zero(),
                centroid: Point::zero(),
                diameter: T::zero(),
            });
        }

        for (id, e) in edges.iter().enumerate() {
            if e.elements.is_empty() || e.elements.len() > 2 {
                return Err(MeshError::NonConforming {
                    edge: id,
                    count: e.elements.len(),
                });
            }
            if e.is_boundary() {
                for &v in &e.vertices {
                    vertices[v].on_boundary = true;
                }
            }
        }

        let mut mesh = Self {
            vertices,
            edges,
            elements,
            curves,
            h: T::zero(),
        };
        mesh.update_geometry()?;
        Ok(mesh)
    }

    /// Recomputes element areas, centroids, diameters and the mesh size.
    fn update_geometry(&mut self) -> Result<(), MeshError> {
        let mut h = T::zero();
        for eid in 0..self.elements.len() {
            let boundary = self.element_boundary(eid);
            let samples = sampled_polygon(&boundary);
            let (signed, centroid) = polygon_area_centroid(&samples);
            if !(signed > T::zero()) {
                return Err(MeshError::NotCounterclockwise {
                    element: eid,
                    area: signed.as_f64(),
                });
            }
            let rule =
                curved_polygon_quadrature(&boundary, 0, GEOMETRY_BOOST).map_err(|source| {
                    MeshError::Quadrature {
                        element: eid,
                        source,
                    }
                })?;
            let mut diam = T::zero();
            for i in 0..samples.len() {
                for j in (i + 1)..samples.len() {
                    diam = diam.max(samples[i].dist(samples[j]));
                }
            }
            let el = &mut self.elements[eid];
            el.area = rule.weight_sum();
            el.centroid = centroid;
            el.diameter = diam;
            h = h.max(diam);
        }
        self.h = h;
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// `h = max_E h_E`.
    pub fn mesh_size(&self) -> T {
        self.h
    }

    pub fn total_area(&self) -> T {
        self.elements.iter().map(|e| e.area).sum()
    }

    pub fn curve(&self, id: usize) -> Option<&Arc<BoundaryCurve<T>>> {
        self.curves.iter().find(|c| c.id() == id)
    }

    /// Edge `id` as a boundary piece traversed forward or backward.
    pub fn edge_piece(&self, id: usize, forward: bool) -> BoundaryPiece<T> {
        let e = &self.edges[id];
        match &e.geometry {
            EdgeGeometry::Straight => {
                let a = self.vertices[e.vertices[0]].position;
                let b = self.vertices[e.vertices[1]].position;
                if forward {
                    BoundaryPiece::Segment { a, b }
                } else {
                    BoundaryPiece::Segment { a: b, b: a }
                }
            }
            EdgeGeometry::Curved(seg) => BoundaryPiece::Arc {
                segment: seg.clone(),
                forward,
            },
        }
    }

    /// Counterclockwise boundary of element `id`.
    pub fn element_boundary(&self, id: usize) -> Vec<BoundaryPiece<T>> {
        self.elements[id]
            .edges
            .iter()
            .map(|&(e, fwd)| self.edge_piece(e, fwd))
            .collect()
    }

    /// Element vertex positions (counterclockwise).
    pub fn element_vertices(&self, id: usize) -> Vec<Point<T>> {
        self.elements[id]
            .vertices
            .iter()
            .map(|&v| self.vertices[v].position)
            .collect()
    }

    pub fn has_curved_edges(&self) -> bool {
        self.edges.iter().any(Edge::is_curved)
    }

    /// Raw parts reproducing this mesh through [`Mesh::new`].
    pub fn to_specs(&self) -> (Vec<Point<T>>, Vec<EdgeSpec<T>>, Vec<ElementSpec>) {
        let pos = self.vertices.iter().map(|v| v.position).collect();
        let edges = self
            .edges
            .iter()
            .map(|e| EdgeSpec {
                vertices: e.vertices,
                curve: match &e.geometry {
                    EdgeGeometry::Straight => None,
                    EdgeGeometry::Curved(seg) => {
                        let (t0, t1) = seg.sub_interval();
                        Some((seg.curve().id(), t0, t1))
                    }
                },
                chord_of: e.chord_of,
            })
            .collect();
        let elements = self
            .elements
            .iter()
            .map(|el| ElementSpec {
                edges: el.edges.clone(),
                label: el.label,
            })
            .collect();
        (pos, edges, elements)
    }
}

/// Vertices plus interior samples of curved pieces, counterclockwise.
pub(crate) fn sampled_polygon<T: Scalar>(boundary: &[BoundaryPiece<T>]) -> Vec<Point<T>> {
    let mut pts = Vec::new();
    for piece in boundary {
        pts.push(piece.start());
        if piece.is_curved() {
            pts.extend(piece.interior_samples(CURVE_SAMPLES));
        }
    }
    pts
}

/// Signed area and centroid of a closed polygon.
pub(crate) fn polygon_area_centroid<T: Scalar>(pts: &[Point<T>]) -> (T, Point<T>) {
    let n = pts.len();
    // shift to the first vertex for accuracy
    let o = pts[0];
    let mut a2 = T::zero();
    let mut c = Point::zero();
    for i in 0..n {
        let p = pts[i] - o;
        let q = pts[(i + 1) % n] - o;
        let cr = p.cross(q);
        a2 = a2 + cr;
        c = c + (p + q) * cr;
    }
    let area = a2 * T::lit(0.5);
    if area == T::zero() {
        return (area, o);
    }
    (area, o + c * (T::one() / (T::lit(3.0) * a2)))
}
