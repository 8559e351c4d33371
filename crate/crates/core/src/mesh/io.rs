//! Line-oriented text mesh format.
//!
//! ```text
//! curvem-mesh <n_vertices> <n_curves> <n_edges> <n_elements>
//! c <id> circle <a> <b> <cx> <cy> <radius> <speed> <phase>
//! c <id> graph <a> <b> <offset> <amplitude> <frequency>
//! c <id> line <a> <b> <x0> <y0> <x1> <y1>
//! v <x> <y>
//! e <v0> <v1> [<curve id> <t0> <t1> | chord <curve id>]
//! p <k> <e1>(+|-) ... <ek>(+|-) label <L>
//! ```
//!
//! Ids of vertices, edges and elements are implicit (0-based, in file order).
//! Blank lines and lines starting with `#` are ignored. Reals are written with
//! 17 significant digits, which round-trips doubles exactly.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::{EdgeSpec, ElementSpec, Mesh, MeshError};
use crate::geometry::{BoundaryCurve, CurveKind, Point};
use crate::scalar::Scalar;

const MAGIC: &str = "curvem-mesh";

fn num<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

/// Serializes a mesh. Fails for curves given as opaque callables.
pub fn write_mesh<T: Scalar>(mesh: &Mesh<T>) -> Result<String, MeshError> {
    let mut s = String::new();
    let (positions, edges, elements) = mesh.to_specs();
    let _ = writeln!(
        s,
        "{MAGIC} {} {} {} {}",
        positions.len(),
        mesh.curves.len(),
        edges.len(),
        elements.len()
    );
    for c in &mesh.curves {
        let (a, b) = c.interval();
        let body = match c.kind() {
            CurveKind::Circle {
                center,
                radius,
                speed,
                phase,
            } => format!(
                "circle {} {} {} {} {} {} {}",
                num(a),
                num(b),
                num(center.x),
                num(center.y),
                num(*radius),
                num(*speed),
                num(*phase)
            ),
            CurveKind::Graph {
                offset,
                amplitude,
                frequency,
            } => {
                format!(
                    "graph {} {} {} {} {}",
                    num(a),
                    num(b),
                    num(*offset),
                    num(*amplitude),
                    num(*frequency)
                )
            }
            CurveKind::Line { start, end } => format!(
                "line {} {} {} {} {} {}",
                num(a),
                num(b),
                num(start.x),
                num(start.y),
                num(end.x),
                num(end.y)
            ),
            CurveKind::Callable { .. } => {
                return Err(MeshError::InvalidParameter(format!(
                    "curve {} is a callable and cannot be exported",
                    c.id()
                )))
            }
        };
        let _ = writeln!(s, "c {} {body}", c.id());
    }
    for p in &positions {
        let _ = writeln!(s, "v {} {}", num(p.x), num(p.y));
    }
    for e in &edges {
        let _ = match (e.curve, e.chord_of) {
            (Some((cid, t0, t1)), _) => writeln!(
                s,
                "e {} {} {cid} {} {}",
                e.vertices[0],
                e.vertices[1],
                num(t0),
                num(t1)
            ),
            (None, Some(cid)) => writeln!(s, "e {} {} chord {cid}", e.vertices[0], e.vertices[1]),
            (None, None) => writeln!(s, "e {} {}", e.vertices[0], e.vertices[1]),
        };
    }
    for el in &elements {
        let loop_str: Vec<String> = el
            .edges
            .iter()
            .map(|&(e, fwd)| format!("{e}{}", if fwd { '+' } else { '-' }))
            .collect();
        let _ = writeln!(
            s,
            "p {} {} label {}",
            el.edges.len(),
            loop_str.join(" "),
            el.label
        );
    }
    Ok(s)
}

struct Parser {
    line: usize,
}

impl Parser {
    fn err(&self, message: impl Into<String>) -> MeshError {
        MeshError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn real<T: Scalar>(&self, tok: Option<&str>, what: &str) -> Result<T, MeshError> {
        let tok = tok.ok_or_else(|| self.err(format!("missing {what}")))?;
        let v: f64 = tok
            .parse()
            .map_err(|_| self.err(format!("invalid {what} '{tok}'")))?;
        T::from_f64(v).ok_or_else(|| self.err(format!("{what} out of range")))
    }

    fn int(&self, tok: Option<&str>, what: &str) -> Result<usize, MeshError> {
        let tok = tok.ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.err(format!("invalid {what} '{tok}'")))
    }
}

/// Parses the text format produced by [`write_mesh`].
pub fn read_mesh<T: Scalar>(text: &str) -> Result<Mesh<T>, MeshError> {
    let mut p = Parser { line: 0 };
    let mut header: Option<[usize; 4]> = None;
    let mut curves: Vec<Arc<BoundaryCurve<T>>> = Vec::new();
    let mut positions: Vec<Point<T>> = Vec::new();
    let mut edges: Vec<EdgeSpec<T>> = Vec::new();
    let mut elements: Vec<ElementSpec> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let tag = toks.next().unwrap_or_default();
        let Some(counts) = header else {
            if tag != MAGIC {
                return Err(p.err(format!("expected header '{MAGIC} <nv> <nc> <ne> <np>'")));
            }
            let mut c = [0usize; 4];
            for (k, what) in ["vertex count", "curve count", "edge count", "element count"]
                .iter()
                .enumerate()
            {
                c[k] = p.int(toks.next(), what)?;
            }
            header = Some(c);
            continue;
        };
        match tag {
            "c" => {
                let id = p.int(toks.next(), "curve id")?;
                let kind = toks.next().ok_or_else(|| p.err("missing curve kind"))?;
                let a: T = p.real(toks.next(), "interval start")?;
                let b: T = p.real(toks.next(), "interval end")?;
                let mut r = |what: &str| p.real::<T>(toks.next(), what);
                let curve = match kind {
                    "circle" => {
                        let (cx, cy, rad, sp, ph) =
                            (r("cx")?, r("cy")?, r("radius")?, r("speed")?, r("phase")?);
                        BoundaryCurve::circle(id, a, b, Point::new(cx, cy), rad, sp, ph)
                    }
                    "graph" => {
                        let (o, am, fr) = (r("offset")?, r("amplitude")?, r("frequency")?);
                        BoundaryCurve::graph(id, a, b, o, am, fr)
                    }
                    "line" => {
                        let (x0, y0, x1, y1) = (r("x0")?, r("y0")?, r("x1")?, r("y1")?);
                        BoundaryCurve::line(id, a, b, Point::new(x0, y0), Point::new(x1, y1))
                    }
                    other => return Err(p.err(format!("unknown curve kind '{other}'"))),
                }
                .map_err(|e| p.err(format!("curve {id}: {e}")))?;
                if curves.iter().any(|c| c.id() == id) {
                    return Err(p.err(format!("duplicate curve id {id}")));
                }
                curves.push(Arc::new(curve));
            }
            "v" => {
                let x = p.real(toks.next(), "x")?;
                let y = p.real(toks.next(), "y")?;
                positions.push(Point::new(x, y));
            }
            "e" => {
                let eid = edges.len();
                let mut vs = [0usize; 2];
                for v in vs.iter_mut() {
                    *v = p.int(toks.next(), "edge vertex")?;
                    if *v >= counts[0] {
                        return Err(p.err(format!("edge {eid} references missing vertex {v}")));
                    }
                }
                let (curve, chord_of) = match toks.next() {
                    None => (None, None),
                    Some("chord") => (None, Some(p.int(toks.next(), "chord curve id")?)),
                    Some(tok) => {
                        let cid = p.int(Some(tok), "curve id")?;
                        let t0 = p.real(toks.next(), "t0")?;
                        let t1 = p.real(toks.next(), "t1")?;
                        (Some((cid, t0, t1)), None)
                    }
                };
                edges.push(EdgeSpec {
                    vertices: vs,
                    curve,
                    chord_of,
                });
            }
            "p" => {
                let pid = elements.len();
                let k = p.int(toks.next(), "edge count")?;
                let mut loop_edges = Vec::with_capacity(k);
                for _ in 0..k {
                    let tok = toks
                        .next()
                        .ok_or_else(|| p.err(format!("element {pid}: too few edges")))?;
                    let (digits, fwd) = match tok.as_bytes().last() {
                        Some(b'+') => (&tok[..tok.len() - 1], true),
                        Some(b'-') => (&tok[..tok.len() - 1], false),
                        _ => {
                            return Err(p.err(format!(
                                "element {pid}: edge '{tok}' lacks an orientation sign"
                            )))
                        }
                    };
                    let e = p.int(Some(digits), "edge id")?;
                    if e >= counts[2] {
                        return Err(p.err(format!("element {pid} references missing edge {e}")));
                    }
                    loop_edges.push((e, fwd));
                }
                let label = match toks.next() {
                    None => 0,
                    Some("label") => {
                        let t = toks.next().ok_or_else(|| p.err("missing label value"))?;
                        t.parse()
                            .map_err(|_| p.err(format!("invalid label '{t}'")))?
                    }
                    Some(other) => return Err(p.err(format!("unexpected token '{other}'"))),
                };
                elements.push(ElementSpec {
                    edges: loop_edges,
                    label,
                });
            }
            other => return Err(p.err(format!("unknown record '{other}'"))),
        }
        if let Some(extra) = toks.next() {
            return Err(p.err(format!("trailing token '{extra}'")));
        }
    }
    let counts = header.ok_or_else(|| p.err("empty mesh file"))?;
    let got = [positions.len(), curves.len(), edges.len(), elements.len()];
    if got != counts {
        return Err(p.err(format!(
            "header announces {counts:?} records, file contains {got:?}"
        )));
    }
    Mesh::new(positions, curves, edges, elements)
}

pub fn export_mesh<T: Scalar>(mesh: &Mesh<T>, path: impl AsRef<Path>) -> Result<(), MeshError> {
    std::fs::write(path, write_mesh(mesh)?)?;
    Ok(())
}

pub fn import_mesh<T: Scalar>(path: impl AsRef<Path>) -> Result<Mesh<T>, MeshError> {
    read_mesh(&std::fs::read_to_string(path)?)
}
