//! Global DoF numbering, assembly, Dirichlet elimination and linear solve.
//!
//! Global numbering: vertices first, then `k - 1` values per edge (along the
//! edge's stored orientation), then `dim P_{k-2}` moments per element.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Point;
use crate::linalg::{cholesky_solve, conjugate_gradient, CsrMatrix, DenseMatrix, LinalgError};
use crate::mesh::Mesh;
use crate::quadrature::gauss_lobatto;
use crate::scalar::Scalar;
use crate::vem::{
    dim_p, layout_dofs, local_operators, Coefficient, DofAnchor, VemError, VemOptions,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Vem(#[from] VemError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),
    #[error("dense direct solve limited to {limit} unknowns, system has {n}")]
    TooLarge { n: usize, limit: usize },
}

/// Largest system handled by the dense Cholesky solver.
pub const DENSE_LIMIT: usize = 2000;

/// A boundary mesh entity carrying Dirichlet DoFs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryEntity {
    Vertex(usize),
    Edge(usize),
}

#[derive(Clone, Debug)]
pub struct DofMap<T> {
    pub k: usize,
    pub n_vertices: usize,
    pub n_edges: usize,
    pub moments_per_element: usize,
    pub total: usize,
    /// Local-to-global index map, per element.
    pub element_dofs: Vec<Vec<usize>>,
    /// `Some(entity)` for DoFs on the boundary.
    pub boundary: Vec<Option<BoundaryEntity>>,
    /// Evaluation point of every point-value DoF.
    pub points: Vec<Option<Point<T>>>,
}

impl<T: Scalar> DofMap<T> {
    pub fn vertex_dof(&self, v: usize) -> usize {
        v
    }

    pub fn edge_dof(&self, e: usize, index: usize) -> usize {
        self.n_vertices + e * (self.k - 1) + index
    }

    pub fn moment_dof(&self, element: usize, beta: usize) -> usize {
        self.n_vertices + self.n_edges * (self.k - 1) + element * self.moments_per_element + beta
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.iter().filter(|b| b.is_some()).count()
    }

    pub fn is_boundary(&self, dof: usize) -> bool {
        self.boundary[dof].is_some()
    }
}

pub fn build_dof_map<T: Scalar>(mesh: &Mesh<T>, k: usize) -> Result<DofMap<T>, SolverError> {
    if k == 0 {
        return Err(VemError::InvalidOrder(k).into());
    }
    let nv = mesh.n_vertices();
    let ne = mesh.n_edges();
    let mpe = dim_p(k as isize - 2);
    let total = nv + ne * (k - 1) + mesh.n_elements() * mpe;
    let mut map = DofMap {
        k,
        n_vertices: nv,
        n_edges: ne,
        moments_per_element: mpe,
        total,
        element_dofs: Vec::with_capacity(mesh.n_elements()),
        boundary: vec![None; total],
        points: vec![None; total],
    };
    for (eid, el) in mesh.elements.iter().enumerate() {
        for &(e, _) in &el.edges {
            if !mesh.edges[e].elements.contains(&eid) {
                return Err(SolverError::NonConforming(format!(
                    "edge {e} does not list element {eid}"
                )));
            }
        }
        let dofs = layout_dofs(mesh, eid, k)
            .iter()
            .map(|d| match d.anchor {
                DofAnchor::Vertex(v) => map.vertex_dof(v),
                DofAnchor::Edge { edge, index } => map.edge_dof(edge, index),
                DofAnchor::Moment(b) => map.moment_dof(eid, b),
            })
            .collect();
        map.element_dofs.push(dofs);
    }
    for (v, vert) in mesh.vertices.iter().enumerate() {
        map.points[v] = Some(vert.position);
        if vert.on_boundary {
            map.boundary[v] = Some(BoundaryEntity::Vertex(v));
        }
    }
    if k > 1 {
        let nodes = gauss_lobatto::<T>(k + 1)
            .map_err(|_| VemError::InvalidOrder(k))?
            .nodes;
        for (e, edge) in mesh.edges.iter().enumerate() {
            let piece = mesh.edge_piece(e, true);
            for j in 0..k - 1 {
                let g = map.edge_dof(e, j);
                map.points[g] = Some(piece.map(nodes[j + 1]).0);
                if edge.is_boundary() {
                    map.boundary[g] = Some(BoundaryEntity::Edge(e));
                }
            }
        }
    }
    Ok(map)
}

/// Sparse symmetric matrix and right-hand side.
#[derive(Clone, Debug)]
pub struct LinearSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
}

/// Assembled global system before boundary conditions.
#[derive(Clone, Debug)]
pub struct Assembled<T> {
    pub system: LinearSystem<T>,
    pub dof_map: DofMap<T>,
}

/// Sums the local stiffness matrices and load vectors. Local contributions
/// are computed in parallel, collected in element order, then sorted by
/// `(row, col)` with a stable sort, so the result is bitwise independent of
/// the thread count.
pub fn assemble<T: Scalar>(
    mesh: &Mesh<T>,
    k: usize,
    coefficient: &Coefficient<T>,
    options: VemOptions,
) -> Result<Assembled<T>, SolverError> {
    coefficient.check_mesh(mesh)?;
    let dof_map = build_dof_map(mesh, k)?;
    let locals = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| local_operators(mesh, e, k, coefficient, options).map(|(_, ops)| ops))
        .collect::<Result<Vec<_>, _>>()?;
    let mut triplets = Vec::with_capacity(locals.iter().map(|o| o.load.len().pow(2)).sum());
    let mut rhs = vec![T::zero(); dof_map.total];
    for (e, ops) in locals.iter().enumerate() {
        let g = &dof_map.element_dofs[e];
        for (a, &ga) in g.iter().enumerate() {
            rhs[ga] = rhs[ga] + ops.load[a];
            for (b, &gb) in g.iter().enumerate() {
                triplets.push((ga, gb, ops.stiffness[(a, b)]));
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(dof_map.total, dof_map.total, triplets);
    Ok(Assembled {
        system: LinearSystem { matrix, rhs },
        dof_map,
    })
}

/// System restricted to the free DoFs after symmetric elimination.
#[derive(Clone, Debug)]
pub struct ReducedSystem<T> {
    pub system: LinearSystem<T>,
    /// Global index of every free unknown.
    pub free: Vec<usize>,
    /// Full-length vector holding the prescribed boundary values.
    pub values: Vec<T>,
}

impl<T: Scalar> ReducedSystem<T> {
    /// Full DoF vector from a solution of the reduced system.
    pub fn expand(&self, x: &[T]) -> Vec<T> {
        let mut out = self.values.clone();
        for (&g, &v) in self.free.iter().zip(x) {
            out[g] = v;
        }
        out
    }
}

/// Prescribes `g` at every boundary DoF point and eliminates those unknowns
/// by moving the known columns to the right-hand side.
pub fn apply_dirichlet<T: Scalar>(
    assembled: &Assembled<T>,
    g: impl Fn(Point<T>, BoundaryEntity) -> T,
) -> ReducedSystem<T> {
    let map = &assembled.dof_map;
    let mut values = vec![T::zero(); map.total];
    for (i, b) in map.boundary.iter().enumerate() {
        if let (Some(entity), Some(p)) = (b, map.points[i]) {
            values[i] = g(p, *entity);
        }
    }
    eliminate(
        &assembled.system,
        &map.boundary.iter().map(Option::is_some).collect::<Vec<_>>(),
        values,
    )
}

/// Symmetric elimination of the unknowns flagged in `fixed`, whose values are
/// taken from `values`.
pub fn eliminate<T: Scalar>(
    system: &LinearSystem<T>,
    fixed: &[bool],
    values: Vec<T>,
) -> ReducedSystem<T> {
    let n = system.rhs.len();
    let mut position = vec![usize::MAX; n];
    let mut free = Vec::new();
    for i in 0..n {
        if !fixed[i] {
            position[i] = free.len();
            free.push(i);
        }
    }
    let mut triplets = Vec::new();
    let mut rhs = Vec::with_capacity(free.len());
    for &i in &free {
        let mut b = system.rhs[i];
        for (j, a) in system.matrix.row(i) {
            if fixed[j] {
                b = b - a * values[j];
            } else {
                triplets.push((position[i], position[j], a));
            }
        }
        rhs.push(b);
    }
    let matrix = CsrMatrix::from_triplets(free.len(), free.len(), triplets);
    ReducedSystem {
        system: LinearSystem { matrix, rhs },
        free,
        values,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverMethod {
    /// Jacobi-preconditioned conjugate gradient.
    Cg,
    /// Dense Cholesky, for at most [`DENSE_LIMIT`] unknowns.
    DenseDirect,
}

#[derive(Clone, Debug)]
pub struct Solution<T> {
    /// All global DoF values, boundary values included.
    pub values: Vec<T>,
    pub iterations: usize,
    pub relative_residual: T,
}

pub fn solve<T: Scalar>(
    reduced: &ReducedSystem<T>,
    method: SolverMethod,
    tol: T,
    max_iter: usize,
) -> Result<Solution<T>, SolverError> {
    let a = &reduced.system.matrix;
    let b = &reduced.system.rhs;
    let n = b.len();
    let (x, iterations) = match method {
        SolverMethod::Cg => {
            let out = conjugate_gradient(a, b, tol, max_iter)?;
            (out.solution, out.iterations)
        }
        SolverMethod::DenseDirect => {
            if n > DENSE_LIMIT {
                return Err(SolverError::TooLarge {
                    n,
                    limit: DENSE_LIMIT,
                });
            }
            let dense: DenseMatrix<T> = a.to_dense();
            let l = dense.cholesky()?;
            (cholesky_solve(&l, b), 0)
        }
    };
    let r = a.matvec(&x);
    let num = r
        .iter()
        .zip(b)
        .map(|(&ri, &bi)| (ri - bi) * (ri - bi))
        .sum::<T>()
        .sqrt();
    let den = b.iter().map(|&v| v * v).sum::<T>().sqrt();
    let relative_residual = if den > T::zero() { num / den } else { num };
    Ok(Solution {
        values: reduced.expand(&x),
        iterations,
        relative_residual,
    })
}

/// Coordinate text dump, one `row col value` triple per line (0-based).
pub fn write_coo<T: Scalar>(matrix: &CsrMatrix<T>) -> String {
    let mut s = format!(
        "% {} {} {}\n",
        matrix.n_rows(),
        matrix.n_cols(),
        matrix.nnz()
    );
    for (i, j, v) in matrix.triplets() {
        let _ = writeln!(s, "{i} {j} {:.17e}", v.as_f64());
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshBuilder;
    use crate::vem::SourceFn;
    use std::sync::Arc;

    fn grid(n: usize) -> Mesh<f64> {
        let mut b = MeshBuilder::new();
        for j in 0..=n {
            for i in 0..=n {
                b.add_vertex(Point::new(i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                b.add_polygon(
                    vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)],
                    1,
                );
            }
        }
        b.build().unwrap()
    }

    fn coeff(
        m: &Mesh<f64>,
        f: impl Fn(Point<f64>) -> f64 + Send + Sync + 'static,
    ) -> Coefficient<f64> {
        let src: SourceFn<f64> = Arc::new(move |p, _| f(p));
        Coefficient::uniform(m, 1.0, src).unwrap()
    }

    #[test]
    fn dof_counts_on_grid() {
        let m = grid(2);
        let d1 = build_dof_map(&m, 1).unwrap();
        assert_eq!((d1.total, d1.n_boundary()), (9, 8));
        let d2 = build_dof_map(&m, 2).unwrap();
        assert_eq!(d2.total, 9 + 12 + 4);
        assert_eq!(d2.n_boundary(), 16);
    }

    #[test]
    fn shared_edge_points_agree() {
        let m = grid(3);
        let map = build_dof_map(&m, 4).unwrap();
        for e in 0..m.n_elements() {
            for (d, g) in layout_dofs(&m, e, 4).iter().zip(&map.element_dofs[e]) {
                if let Some(p) = d.point {
                    assert!(p.dist(map.points[*g].unwrap()) < 1e-15);
                }
            }
        }
    }

    #[test]
    fn single_element_system_is_local_matrix() {
        let m = grid(1);
        let c = coeff(&m, |_| 1.0);
        let a = assemble(&m, 1, &c, VemOptions::default()).unwrap();
        let (_, ops) = local_operators(&m, 0, 1, &c, VemOptions::default()).unwrap();
        let g = &a.dof_map.element_dofs[0];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(a.system.matrix.get(g[i], g[j]), ops.stiffness[(i, j)]);
            }
        }
    }

    #[test]
    fn constants_in_kernel_and_exact_symmetry() {
        let m = grid(3);
        let c = coeff(&m, |_| 1.0);
        for k in 1..=3 {
            let a = assemble(&m, k, &c, VemOptions::default()).unwrap();
            assert_eq!(a.system.matrix.asymmetry(), 0.0);
            let map = &a.dof_map;
            let mut one = vec![1.0; map.total];
            for e in 0..m.n_elements() {
                for b in 0..map.moments_per_element {
                    // moments of the constant: (1/|E|) int m_b, zero for b >= 1 by symmetry on squares
                    if b > 0 {
                        one[map.moment_dof(e, b)] = 0.0;
                    }
                }
            }
            let r = a.system.matrix.matvec(&one);
            assert!(r.iter().all(|v| v.abs() < 1e-12), "k={k}");
        }
    }

    #[test]
    fn homogeneous_elimination_keeps_rhs() {
        let m = grid(2);
        let c = coeff(&m, |p| p.x + 1.0);
        let a = assemble(&m, 2, &c, VemOptions::default()).unwrap();
        let red = apply_dirichlet(&a, |_, _| 0.0);
        for (i, &g) in red.free.iter().enumerate() {
            assert_eq!(red.system.rhs[i], a.system.rhs[g]);
        }
        assert!(red.system.matrix.diagonal().iter().all(|&d| d > 0.0));
    }

    #[test]
    fn identity_system() {
        let matrix = CsrMatrix::from_triplets(3, 3, (0..3).map(|i| (i, i, 1.0)).collect());
        let red = eliminate(
            &LinearSystem {
                matrix,
                rhs: vec![1.0, 2.0, 3.0],
            },
            &[false; 3],
            vec![0.0; 3],
        );
        for method in [SolverMethod::Cg, SolverMethod::DenseDirect] {
            assert_eq!(
                solve(&red, method, 1e-12, 10).unwrap().values,
                vec![1.0, 2.0, 3.0]
            );
        }
    }

    #[test]
    fn linear_patch_test() {
        let m = grid(3);
        let c = coeff(&m, |_| 0.0);
        let u = |p: Point<f64>| 1.0 + 2.0 * p.x - 3.0 * p.y;
        for k in 1..=3 {
            let a = assemble(&m, k, &c, VemOptions::default()).unwrap();
            let red = apply_dirichlet(&a, |p, _| u(p));
            let sol = solve(&red, SolverMethod::Cg, 1e-14, 1000).unwrap();
            for (i, p) in a.dof_map.points.iter().enumerate() {
                if let Some(p) = p {
                    assert!((sol.values[i] - u(*p)).abs() < 1e-10, "k={k}");
                }
            }
        }
    }

    #[test]
    fn coo_dump() {
        let matrix = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 2.0), (1, 0, -1.0), (0, 1, -1.0)]);
        let s = write_coo(&matrix);
        assert_eq!(s.lines().count(), 4);
        assert!(s.lines().nth(2).unwrap().starts_with("0 1 "));
    }
}
