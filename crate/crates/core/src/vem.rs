//! Element-level virtual element machinery: scaled monomials, degrees of
//! freedom, the projectors onto `P_k` and `P_{k-2}`, the local stiffness
//! matrix with dofi-dofi stabilization and the local load vector.
//!
//! Local DoF order: vertex values (counterclockwise), then for each edge in
//! loop order its `k - 1` interior Gauss-Lobatto values in traversal
//! direction, then the moments `(1/|E|) int_E v m_alpha` for `|alpha| <= k - 2`.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::geometry::{BoundaryPiece, Point};
use crate::linalg::{DenseMatrix, Lu};
use crate::mesh::Mesh;
use crate::quadrature::{
    curved_polygon_quadrature, gauss_legendre, gauss_lobatto, QuadratureError, QuadratureRule2D,
};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VemError {
    #[error("polynomial order k = {0} is not supported (1 <= k <= {MAX_ORDER})")]
    InvalidOrder(usize),
    #[error("element {element}: matrix {matrix} is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular {
        element: usize,
        matrix: &'static str,
        condition: f64,
    },
    #[error("element {element}: {source}")]
    Quadrature {
        element: usize,
        source: QuadratureError,
    },
    #[error("no diffusion coefficient for label {0}")]
    MissingKappa(i32),
    #[error("diffusion coefficient {value} for label {label} is not positive")]
    NonPositiveKappa { label: i32, value: f64 },
}

/// Largest supported polynomial order.
pub const MAX_ORDER: usize = 6;

/// `dim P_k = (k+1)(k+2)/2`, zero for negative `k`.
pub fn dim_p(k: isize) -> usize {
    if k < 0 {
        0
    } else {
        let k = k as usize;
        (k + 1) * (k + 2) / 2
    }
}

/// Scaled monomials `((x - x_E) / h_E)^alpha`, ordered by total degree and
/// then by decreasing power of `x`.
#[derive(Clone, Debug)]
pub struct ScaledMonomialBasis<T> {
    pub order: usize,
    pub centroid: Point<T>,
    pub diameter: T,
    pub exponents: Vec<(usize, usize)>,
}

impl<T: Scalar> ScaledMonomialBasis<T> {
    pub fn new(order: usize, centroid: Point<T>, diameter: T) -> Self {
        let mut exponents = Vec::with_capacity(dim_p(order as isize));
        for d in 0..=order {
            for a2 in 0..=d {
                exponents.push((d - a2, a2));
            }
        }
        Self {
            order,
            centroid,
            diameter,
            exponents,
        }
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    /// Position of `(a1, a2)` in the ordering.
    pub fn index_of(a1: usize, a2: usize) -> usize {
        let d = a1 + a2;
        d * (d + 1) / 2 + a2
    }

    fn powers(&self, p: Point<T>) -> (Vec<T>, Vec<T>) {
        let inv = T::one() / self.diameter;
        let (xi, eta) = ((p.x - self.centroid.x) * inv, (p.y - self.centroid.y) * inv);
        let mut px = vec![T::one(); self.order + 1];
        let mut py = vec![T::one(); self.order + 1];
        for i in 1..=self.order {
            px[i] = px[i - 1] * xi;
            py[i] = py[i - 1] * eta;
        }
        (px, py)
    }

    /// Values of every basis function at `p`.
    pub fn eval(&self, p: Point<T>) -> Vec<T> {
        let (px, py) = self.powers(p);
        self.exponents.iter().map(|&(a, b)| px[a] * py[b]).collect()
    }

    /// Gradients of every basis function at `p`.
    pub fn eval_grad(&self, p: Point<T>) -> Vec<Point<T>> {
        let (px, py) = self.powers(p);
        let inv = T::one() / self.diameter;
        self.exponents
            .iter()
            .map(|&(a, b)| {
                let gx = if a > 0 {
                    T::from_usize_lossy(a) * px[a - 1] * py[b] * inv
                } else {
                    T::zero()
                };
                let gy = if b > 0 {
                    T::from_usize_lossy(b) * px[a] * py[b - 1] * inv
                } else {
                    T::zero()
                };
                Point::new(gx, gy)
            })
            .collect()
    }

    /// `sum_alpha c_alpha m_alpha(p)`.
    pub fn eval_poly(&self, coeffs: &[T], p: Point<T>) -> T {
        self.eval(p).iter().zip(coeffs).map(|(&m, &c)| m * c).sum()
    }

    pub fn eval_poly_grad(&self, coeffs: &[T], p: Point<T>) -> Point<T> {
        self.eval_grad(p)
            .iter()
            .zip(coeffs)
            .fold(Point::zero(), |acc, (&g, &c)| acc + g * c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofKind {
    VertexValue,
    StraightEdgeGL,
    CurvedEdgeGL,
    InteriorMoment,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DofAnchor {
    /// Global vertex id.
    Vertex(usize),
    /// Global edge id and the index of the Gauss-Lobatto point counted along
    /// the edge's stored orientation.
    Edge { edge: usize, index: usize },
    /// Index of the scaled monomial in `P_{k-2}`.
    Moment(usize),
}

#[derive(Clone, Debug)]
pub struct DofDescriptor<T> {
    pub kind: DofKind,
    pub anchor: DofAnchor,
    /// Evaluation point of point-value DoFs.
    pub point: Option<Point<T>>,
}

/// Reference coordinates of the `k + 1` Gauss-Lobatto nodes on `[-1, 1]`.
fn lobatto_nodes<T: Scalar>(k: usize) -> Vec<T> {
    gauss_lobatto::<T>(k + 1)
        .expect("order within rule range")
        .nodes
}

/// Degrees of freedom of element `element` for order `k`.
pub fn layout_dofs<T: Scalar>(mesh: &Mesh<T>, element: usize, k: usize) -> Vec<DofDescriptor<T>> {
    let el = &mesh.elements[element];
    let n = el.n_edges();
    let mut dofs = Vec::with_capacity(n * k + k * (k.max(1) - 1) / 2);
    for &v in &el.vertices {
        dofs.push(DofDescriptor {
            kind: DofKind::VertexValue,
            anchor: DofAnchor::Vertex(v),
            point: Some(mesh.vertices[v].position),
        });
    }
    let nodes = lobatto_nodes::<T>(k);
    for &(e, fwd) in &el.edges {
        let piece = mesh.edge_piece(e, fwd);
        let kind = if piece.is_curved() {
            DofKind::CurvedEdgeGL
        } else {
            DofKind::StraightEdgeGL
        };
        for (j, &node) in nodes.iter().enumerate().take(k).skip(1) {
            let index = if fwd { j - 1 } else { k - 1 - j };
            dofs.push(DofDescriptor {
                kind,
                anchor: DofAnchor::Edge { edge: e, index },
                point: Some(piece.map(node).0),
            });
        }
    }
    for beta in 0..dim_p(k as isize - 2) {
        dofs.push(DofDescriptor {
            kind: DofKind::InteriorMoment,
            anchor: DofAnchor::Moment(beta),
            point: None,
        });
    }
    dofs
}

/// Default boost for element integrals. Boost 2 leaves the constant-kernel
/// residual of coarse, strongly curved elements near `1e-7`; 6 reaches
/// round-off on every mesh family built here.
pub const DEFAULT_VEM_BOOST: usize = 6;

/// Quadrature settings for the element integrals.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VemOptions {
    /// Extra Gauss points per direction on curved edges.
    pub boost: usize,
    /// Polynomial degree targeted by the load and interpolation rules;
    /// `None` means `2k + 2`.
    pub load_degree: Option<usize>,
    pub load: LoadRule,
}

/// Approximation of `(f, v)` for `k >= 2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LoadRule {
    /// [`LoadRule::MeanCorrected`] for `k = 2`, [`LoadRule::Pi0`] otherwise.
    /// With `Pi0` alone the `k = 2` load is only `O(h^2)` consistent, which
    /// caps the L2 rate at 2.
    #[default]
    Auto,
    /// `int_E f Pi^0_{k-2} v`.
    Pi0,
    /// `int_E f Pi^hat v` with `Pi^nabla_k` shifted to the right mean; see
    /// [`local_load_mean_corrected`].
    MeanCorrected,
}

impl Default for VemOptions {
    fn default() -> Self {
        Self {
            boost: DEFAULT_VEM_BOOST,
            load_degree: None,
            load: LoadRule::Auto,
        }
    }
}

/// Everything needed to build the local operators of one element.
pub struct LocalSpace<'m, T: Scalar> {
    pub mesh: &'m Mesh<T>,
    pub element: usize,
    pub k: usize,
    pub basis: ScaledMonomialBasis<T>,
    pub dofs: Vec<DofDescriptor<T>>,
    pub boundary: Vec<BoundaryPiece<T>>,
    /// Rule for polynomial integrands of degree `<= 2k`.
    pub rule: QuadratureRule2D<T>,
    /// Rule for the load and interpolation integrals.
    pub load_rule: QuadratureRule2D<T>,
    pub options: VemOptions,
}

impl<'m, T: Scalar> LocalSpace<'m, T> {
    pub fn new(
        mesh: &'m Mesh<T>,
        element: usize,
        k: usize,
        options: VemOptions,
    ) -> Result<Self, VemError> {
        if k == 0 || k > MAX_ORDER {
            return Err(VemError::InvalidOrder(k));
        }
        let el = &mesh.elements[element];
        let boundary = mesh.element_boundary(element);
        let quad = |degree| {
            curved_polygon_quadrature(&boundary, degree, options.boost)
                .map_err(|source| VemError::Quadrature { element, source })
        };
        let rule = quad(2 * k)?;
        let load_rule = quad(options.load_degree.unwrap_or(2 * k + 2))?;
        Ok(Self {
            mesh,
            element,
            k,
            basis: ScaledMonomialBasis::new(k, el.centroid, el.diameter),
            dofs: layout_dofs(mesh, element, k),
            boundary,
            rule,
            load_rule,
            options,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.boundary.len()
    }

    pub fn area(&self) -> T {
        self.mesh.elements[self.element].area
    }

    fn moment_offset(&self) -> usize {
        self.n_vertices() * self.k
    }

    /// Local index of the DoF sitting at Lobatto node `j` (0..=k) of loop edge `i`.
    fn edge_node_dof(&self, i: usize, j: usize) -> usize {
        let n = self.n_vertices();
        if j == 0 {
            i
        } else if j == self.k {
            (i + 1) % n
        } else {
            n + i * (self.k - 1) + j - 1
        }
    }

    /// `D[i][alpha] = dof_i(m_alpha)`.
    pub fn dof_matrix(&self) -> DenseMatrix<T> {
        let p = self.basis.dim();
        let mut d = DenseMatrix::zeros(self.n_dofs(), p);
        let inv_area = T::one() / self.area();
        let n_mom = dim_p(self.k as isize - 2);
        let mut moments = DenseMatrix::<T>::zeros(n_mom, p);
        for (q, &w) in self.rule.points.iter().zip(&self.rule.weights) {
            let m = self.basis.eval(*q);
            for b in 0..n_mom {
                for a in 0..p {
                    moments[(b, a)] = moments[(b, a)] + w * m[b] * m[a];
                }
            }
        }
        for (i, dof) in self.dofs.iter().enumerate() {
            match (dof.point, dof.anchor) {
                (Some(x), _) => {
                    for (a, v) in self.basis.eval(x).into_iter().enumerate() {
                        d[(i, a)] = v;
                    }
                }
                (None, DofAnchor::Moment(b)) => {
                    for a in 0..p {
                        d[(i, a)] = moments[(b, a)] * inv_area;
                    }
                }
                (None, _) => unreachable!("point DoF without a point"),
            }
        }
        d
    }
}

/// Lagrange basis on `nodes` evaluated at `s`.
fn lagrange<T: Scalar>(nodes: &[T], s: T) -> Vec<T> {
    (0..nodes.len())
        .map(|j| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != j)
                .fold(T::one(), |acc, (_, &sm)| acc * (s - sm) / (nodes[j] - sm))
        })
        .collect()
}

/// Boundary contributions `int_{dE} g phi_i ds` for a family of integrands:
/// returns, for every quadrature point on the boundary, the point, the
/// weighted outward normal `n ds`, the arc-length weight `ds` and the
/// `(local dof, coefficient)` pairs expressing the virtual trace there.
struct BoundaryQuad<T> {
    point: Point<T>,
    normal_ds: Point<T>,
    ds: T,
    trace: Vec<(usize, T)>,
}

fn boundary_quadrature<T: Scalar>(space: &LocalSpace<'_, T>) -> Vec<BoundaryQuad<T>> {
    let k = space.k;
    let lob = gauss_lobatto::<T>(k + 1).expect("order within rule range");
    let leg = gauss_legendre::<T>(k + 1 + space.options.boost).expect("order within rule range");
    let mut out = Vec::new();
    for (i, piece) in space.boundary.iter().enumerate() {
        if piece.is_curved() {
            // the trace is a polynomial of degree k in the curve parameter
            for (&s, &w) in leg.nodes.iter().zip(&leg.weights) {
                let (x, d) = piece.map(s);
                let trace = lagrange(&lob.nodes, s)
                    .into_iter()
                    .enumerate()
                    .map(|(j, l)| (space.edge_node_dof(i, j), l))
                    .collect();
                out.push(BoundaryQuad {
                    point: x,
                    normal_ds: d.rot_cw() * w,
                    ds: d.norm() * w,
                    trace,
                });
            }
        } else {
            // Lobatto nodes are the DoF points: exact for degree 2k - 1
            for (j, (&s, &w)) in lob.nodes.iter().zip(&lob.weights).enumerate() {
                let (x, d) = piece.map(s);
                out.push(BoundaryQuad {
                    point: x,
                    normal_ds: d.rot_cw() * w,
                    ds: d.norm() * w,
                    trace: vec![(space.edge_node_dof(i, j), T::one())],
                });
            }
        }
    }
    out
}

/// Factorizes a small projector matrix, rejecting singular or badly
/// conditioned ones.
fn factor<T: Scalar>(
    m: &DenseMatrix<T>,
    element: usize,
    matrix: &'static str,
) -> Result<Lu<T>, VemError> {
    let limit = T::lit(1e-2) / T::epsilon();
    match Lu::new(m) {
        Ok(lu) => {
            let cond = m.condition_estimate();
            if cond > limit {
                Err(VemError::Singular {
                    element,
                    matrix,
                    condition: cond.as_f64(),
                })
            } else {
                Ok(lu)
            }
        }
        Err(_) => Err(VemError::Singular {
            element,
            matrix,
            condition: m.condition_estimate().as_f64(),
        }),
    }
}

/// `Pi^nabla_k` in matrix form.
#[derive(Clone, Debug)]
pub struct PiNabla<T> {
    /// Monomial coefficients of `Pi v` from DoF values (`dim P_k x n_dof`).
    pub star: DenseMatrix<T>,
    /// Monomial stiffness with the constraint row (`G`).
    pub g: DenseMatrix<T>,
    /// Monomial stiffness `int grad m_a . grad m_b` (`G` with zero first row).
    pub g_tilde: DenseMatrix<T>,
    /// The right-hand side `B`.
    pub b: DenseMatrix<T>,
    /// `D`: DoFs of the monomials.
    pub d: DenseMatrix<T>,
    /// `Pi = D * star`: `Pi v` expressed in DoF space.
    pub pi: DenseMatrix<T>,
}

pub fn compute_pi_nabla<T: Scalar>(space: &LocalSpace<'_, T>) -> Result<PiNabla<T>, VemError> {
    let p = space.basis.dim();
    let n = space.n_dofs();
    let h = space.basis.diameter;
    let area = space.area();

    let mut g_tilde = DenseMatrix::zeros(p, p);
    for (q, &w) in space.rule.points.iter().zip(&space.rule.weights) {
        let grads = space.basis.eval_grad(*q);
        for a in 1..p {
            for b in a..p {
                g_tilde[(a, b)] = g_tilde[(a, b)] + w * grads[a].dot(grads[b]);
            }
        }
    }
    for a in 1..p {
        for b in 0..a {
            g_tilde[(a, b)] = g_tilde[(b, a)];
        }
    }

    let mut g = g_tilde.clone();
    let mut bm = DenseMatrix::zeros(p, n);
    for bq in boundary_quadrature(space) {
        let m = space.basis.eval(bq.point);
        let grads = space.basis.eval_grad(bq.point);
        for b in 0..p {
            g[(0, b)] = g[(0, b)] + bq.ds * m[b];
        }
        for &(i, c) in &bq.trace {
            bm[(0, i)] = bm[(0, i)] + bq.ds * c;
            for a in 1..p {
                bm[(a, i)] = bm[(a, i)] + grads[a].dot(bq.normal_ds) * c;
            }
        }
    }
    // -int_E (Lap m_a) v, with Lap m_a in P_{k-2} read off the moments
    let off = space.moment_offset();
    let scale = area / (h * h);
    for (a, &(a1, a2)) in space.basis.exponents.iter().enumerate() {
        if a1 >= 2 {
            let beta = ScaledMonomialBasis::<T>::index_of(a1 - 2, a2);
            bm[(a, off + beta)] = bm[(a, off + beta)] - scale * T::from_usize_lossy(a1 * (a1 - 1));
        }
        if a2 >= 2 {
            let beta = ScaledMonomialBasis::<T>::index_of(a1, a2 - 2);
            bm[(a, off + beta)] = bm[(a, off + beta)] - scale * T::from_usize_lossy(a2 * (a2 - 1));
        }
    }

    let lu = factor(&g, space.element, "G")?;
    let star = lu.solve_matrix(&bm).expect("dimensions agree");
    let d = space.dof_matrix();
    let pi = d.matmul(&star);
    Ok(PiNabla {
        star,
        g,
        g_tilde,
        b: bm,
        d,
        pi,
    })
}

/// `Pi^0_{k-2}` as a `dim P_{k-2} x n_dof` matrix of monomial coefficients.
/// For `k = 1` it is the single row averaging the vertex values.
pub fn compute_pi0<T: Scalar>(space: &LocalSpace<'_, T>) -> Result<DenseMatrix<T>, VemError> {
    let n = space.n_dofs();
    if space.k == 1 {
        let nv = T::from_usize_lossy(space.n_vertices());
        return Ok(DenseMatrix::from_fn(1, n, |_, _| T::one() / nv));
    }
    let pm = dim_p(space.k as isize - 2);
    let mut h = DenseMatrix::zeros(pm, pm);
    for (q, &w) in space.rule.points.iter().zip(&space.rule.weights) {
        let m = space.basis.eval(*q);
        for a in 0..pm {
            for b in a..pm {
                h[(a, b)] = h[(a, b)] + w * m[a] * m[b];
            }
        }
    }
    for a in 1..pm {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    let off = space.moment_offset();
    let area = space.area();
    let c = DenseMatrix::from_fn(pm, n, |b, i| if i == off + b { area } else { T::zero() });
    let lu = factor(&h, space.element, "H")?;
    Ok(lu.solve_matrix(&c).expect("dimensions agree"))
}

/// dofi-dofi stabilization `(I - Pi)^T (I - Pi)`.
pub fn stabilization<T: Scalar>(pi: &PiNabla<T>) -> DenseMatrix<T> {
    let n = pi.pi.rows();
    let r = DenseMatrix::identity(n).sub(&pi.pi);
    r.transpose().matmul(&r)
}

/// `K = kappa (Pi*^T G~ Pi* + (I - Pi)^T (I - Pi))`, bitwise symmetric.
pub fn local_stiffness<T: Scalar>(pi: &PiNabla<T>, kappa: T) -> DenseMatrix<T> {
    let consistency = pi.star.transpose().matmul(&pi.g_tilde).matmul(&pi.star);
    consistency
        .add(&stabilization(pi))
        .scale(kappa)
        .symmetrized()
}

/// Load vector: `F_i = int_E f Pi^0_{k-2} phi_i` for `k >= 2` and
/// `F_i = (int_E f) / N_E` at the vertices for `k = 1`.
pub fn local_load<T: Scalar>(
    space: &LocalSpace<'_, T>,
    pi0: &DenseMatrix<T>,
    f: impl Fn(Point<T>) -> T,
) -> Vec<T> {
    let n = space.n_dofs();
    if space.k == 1 {
        let total = space.load_rule.integrate(&f);
        let share = total / T::from_usize_lossy(space.n_vertices());
        return vec![share; n];
    }
    project_load(space, pi0, f)
}

/// `F_i = int_E f (sum_b P[b][i] m_b)` for a projector `P` onto the first
/// `P.rows()` scaled monomials.
fn project_load<T: Scalar>(
    space: &LocalSpace<'_, T>,
    projector: &DenseMatrix<T>,
    f: impl Fn(Point<T>) -> T,
) -> Vec<T> {
    let pm = projector.rows();
    let mut fm = vec![T::zero(); pm];
    for (q, &w) in space.load_rule.points.iter().zip(&space.load_rule.weights) {
        let fw = f(*q) * w;
        if fw == T::zero() {
            continue;
        }
        let m = space.basis.eval(*q);
        for b in 0..pm {
            fm[b] = fm[b] + fw * m[b];
        }
    }
    (0..space.n_dofs())
        .map(|i| (0..pm).map(|b| projector[(b, i)] * fm[b]).sum())
        .collect()
}

/// Alternative load `F_i = int_E f Pi^hat phi_i`, where `Pi^hat` is
/// `Pi^nabla_k` shifted by a constant so that its mean over `E` equals the
/// first moment DoF. Requires `k >= 2`.
pub fn local_load_mean_corrected<T: Scalar>(
    space: &LocalSpace<'_, T>,
    pi: &PiNabla<T>,
    f: impl Fn(Point<T>) -> T,
) -> Vec<T> {
    assert!(
        space.k >= 2,
        "the mean-corrected load needs the zeroth moment DoF"
    );
    let mut proj = pi.star.clone();
    let mom0 = space.moment_offset();
    for i in 0..space.n_dofs() {
        // mean of Pi v over E is D[mom0, :] . star[:, i]
        let mean: T = (0..proj.rows())
            .map(|a| pi.d[(mom0, a)] * pi.star[(a, i)])
            .sum();
        let target = if i == mom0 { T::one() } else { T::zero() };
        proj[(0, i)] = proj[(0, i)] + target - mean;
    }
    project_load(space, &proj, f)
}

/// DoF values of a function: point values and moments.
pub fn interpolate<T: Scalar>(space: &LocalSpace<'_, T>, u: impl Fn(Point<T>) -> T) -> Vec<T> {
    let pm = dim_p(space.k as isize - 2);
    let mut moments = vec![T::zero(); pm];
    if pm > 0 {
        for (q, &w) in space.load_rule.points.iter().zip(&space.load_rule.weights) {
            let uw = u(*q) * w;
            let m = space.basis.eval(*q);
            for b in 0..pm {
                moments[b] = moments[b] + uw * m[b];
            }
        }
    }
    let inv_area = T::one() / space.area();
    space
        .dofs
        .iter()
        .map(|dof| match (dof.point, dof.anchor) {
            (Some(x), _) => u(x),
            (None, DofAnchor::Moment(b)) => moments[b] * inv_area,
            (None, _) => unreachable!("point DoF without a point"),
        })
        .collect()
}

/// DoF values of the constant function 1, consistent with the element's own
/// quadrature (point DoFs 1, moments of the monomials).
pub fn constant_dofs<T: Scalar>(space: &LocalSpace<'_, T>) -> Vec<T> {
    let d = space.dof_matrix();
    (0..space.n_dofs()).map(|i| d[(i, 0)]).collect()
}

pub type SourceFn<T> = Arc<dyn Fn(Point<T>, i32) -> T + Send + Sync>;

/// Piecewise-constant diffusion per element label and a source term that may
/// depend on the label of the element it is evaluated in.
#[derive(Clone)]
pub struct Coefficient<T> {
    kappa: BTreeMap<i32, T>,
    source: SourceFn<T>,
}

impl<T: Scalar> Coefficient<T> {
    pub fn new(
        kappa: impl IntoIterator<Item = (i32, T)>,
        source: SourceFn<T>,
    ) -> Result<Self, VemError> {
        let kappa: BTreeMap<i32, T> = kappa.into_iter().collect();
        for (&label, &value) in &kappa {
            if !(value > T::zero()) {
                return Err(VemError::NonPositiveKappa {
                    label,
                    value: value.as_f64(),
                });
            }
        }
        Ok(Self { kappa, source })
    }

    /// Same `kappa` for every label present in `mesh`.
    pub fn uniform(mesh: &Mesh<T>, kappa: T, source: SourceFn<T>) -> Result<Self, VemError> {
        let labels: Vec<i32> = mesh.elements.iter().map(|e| e.label).collect();
        Self::new(labels.into_iter().map(|l| (l, kappa)), source)
    }

    pub fn kappa(&self, label: i32) -> Result<T, VemError> {
        self.kappa
            .get(&label)
            .copied()
            .ok_or(VemError::MissingKappa(label))
    }

    pub fn source(&self, p: Point<T>, label: i32) -> T {
        (self.source)(p, label)
    }

    /// Checks that every label of `mesh` has a coefficient.
    pub fn check_mesh(&self, mesh: &Mesh<T>) -> Result<(), VemError> {
        for el in &mesh.elements {
            self.kappa(el.label)?;
        }
        Ok(())
    }
}

impl<T: Scalar> std::fmt::Debug for Coefficient<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Coefficient")
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

/// All local matrices of one element.
#[derive(Clone, Debug)]
pub struct LocalOperators<T> {
    pub pi_nabla: DenseMatrix<T>,
    pub pi0: DenseMatrix<T>,
    pub stiffness: DenseMatrix<T>,
    pub load: Vec<T>,
}

pub fn local_operators<'m, T: Scalar>(
    mesh: &'m Mesh<T>,
    element: usize,
    k: usize,
    coefficient: &Coefficient<T>,
    options: VemOptions,
) -> Result<(LocalSpace<'m, T>, LocalOperators<T>), VemError> {
    let space = LocalSpace::new(mesh, element, k, options)?;
    let label = mesh.elements[element].label;
    let kappa = coefficient.kappa(label)?;
    let pn = compute_pi_nabla(&space)?;
    let pi0 = compute_pi0(&space)?;
    let stiffness = local_stiffness(&pn, kappa);
    let f = |p| coefficient.source(p, label);
    let load = match options.load {
        LoadRule::MeanCorrected if k >= 2 => local_load_mean_corrected(&space, &pn, f),
        LoadRule::Auto if k == 2 => local_load_mean_corrected(&space, &pn, f),
        _ => local_load(&space, &pi0, f),
    };
    Ok((
        space,
        LocalOperators {
            pi_nabla: pn.star,
            pi0,
            stiffness,
            load,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryCurve;
    use crate::mesh::{build_mapped_tensor_mesh, MeshBuilder};
    use std::f64::consts::PI;

    fn polygon_mesh(pts: &[(f64, f64)]) -> Mesh<f64> {
        let mut b = MeshBuilder::new();
        for &(x, y) in pts {
            b.add_vertex(Point::new(x, y));
        }
        b.add_polygon((0..pts.len()).collect(), 1);
        b.build().unwrap()
    }

    fn unit_square() -> Mesh<f64> {
        polygon_mesh(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    }

    fn test1_mesh(n: usize) -> Mesh<f64> {
        let g1 = Arc::new(BoundaryCurve::graph(1, 0.0, 1.0, 0.0, 0.05, PI).unwrap());
        let g2 = Arc::new(BoundaryCurve::graph(2, 0.0, 1.0, 1.0, 0.05, 3.0 * PI).unwrap());
        build_mapped_tensor_mesh(n, g1, g2).unwrap()
    }

    fn space(m: &Mesh<f64>, e: usize, k: usize) -> LocalSpace<'_, f64> {
        LocalSpace::new(m, e, k, VemOptions::default()).unwrap()
    }

    #[test]
    fn monomial_ordering() {
        let b = ScaledMonomialBasis::new(2, Point::new(0.0, 0.0), 1.0);
        assert_eq!(
            b.exponents,
            vec![(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        );
        for (i, &(a1, a2)) in b.exponents.iter().enumerate() {
            assert_eq!(ScaledMonomialBasis::<f64>::index_of(a1, a2), i);
        }
        let g = b.eval_grad(Point::new(0.5, 2.0));
        assert_eq!((g[4].x, g[4].y), (2.0, 0.5));
    }

    #[test]
    fn dof_counts() {
        let pent = polygon_mesh(&[(0.0, 0.0), (1.0, 0.0), (1.3, 0.8), (0.5, 1.3), (-0.3, 0.8)]);
        assert_eq!(layout_dofs(&pent, 0, 2).len(), 11);
        let sq = unit_square();
        let d = layout_dofs(&sq, 0, 1);
        assert_eq!(d.len(), 4);
        assert!(d.iter().all(|x| x.kind == DofKind::VertexValue));
        for k in 1..=4 {
            assert_eq!(layout_dofs(&pent, 0, k).len(), 5 * k + k * (k - 1) / 2);
        }
    }

    #[test]
    fn curved_dof_points_are_mapped_lobatto_nodes() {
        let m = test1_mesh(4);
        let e = 0; // bottom row touches the lower curve
        let dofs = layout_dofs(&m, e, 3);
        let curved: Vec<_> = dofs
            .iter()
            .filter(|d| d.kind == DofKind::CurvedEdgeGL)
            .collect();
        assert_eq!(curved.len(), 2);
        // independent Lobatto nodes for 4 points: +-sqrt(1/5)
        let r = (0.2f64).sqrt();
        let (x0, x1) = (0.0, 0.25);
        for d in curved {
            let p = d.point.unwrap();
            let DofAnchor::Edge { index, .. } = d.anchor else {
                panic!()
            };
            let s = if index == 0 { -r } else { r };
            let t = x0 + (s + 1.0) * 0.5 * (x1 - x0);
            assert!((p.x - t).abs() < 1e-12);
            assert!((p.y - 0.05 * (PI * t).sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_are_reproduced() {
        let m = test1_mesh(4);
        for k in 1..=4 {
            for e in [0, 5, 15] {
                let s = space(&m, e, k);
                let pn = compute_pi_nabla(&s).unwrap();
                let one = constant_dofs(&s);
                let c = pn.star.matvec(&one);
                assert!((c[0] - 1.0).abs() < 1e-12, "k={k} e={e} {c:?}");
                assert!(c[1..].iter().all(|v| v.abs() < 1e-12), "k={k} e={e} {c:?}");
                let k_mat = local_stiffness(&pn, 1.0);
                let r = k_mat.matvec(&one);
                let scale = k_mat.max_abs();
                assert!(r.iter().all(|v| v.abs() < 1e-10 * scale), "k={k} e={e}");
            }
        }
    }

    #[test]
    fn pi_nabla_reproduces_p2_on_square() {
        let m = unit_square();
        let s = space(&m, 0, 2);
        let pn = compute_pi_nabla(&s).unwrap();
        let p = |q: Point<f64>| q.x * q.x - q.y * q.y;
        let c = pn.star.matvec(&interpolate(&s, p));
        for (x, y) in [(0.1, 0.2), (0.7, 0.9), (0.5, 0.5)] {
            let q = Point::new(x, y);
            assert!((s.basis.eval_poly(&c, q) - p(q)).abs() < 1e-12);
        }
    }

    #[test]
    fn pi0_reproduces_p1_on_square() {
        let m = unit_square();
        let s = space(&m, 0, 3);
        let pi0 = compute_pi0(&s).unwrap();
        let q = |p: Point<f64>| 2.0 - p.x + 3.0 * p.y;
        let c = pi0.matvec(&interpolate(&s, q));
        let b1 = ScaledMonomialBasis::new(1, s.basis.centroid, s.basis.diameter);
        for (x, y) in [(0.1, 0.2), (0.9, 0.4)] {
            let p = Point::new(x, y);
            assert!((b1.eval_poly(&c, p) - q(p)).abs() < 1e-12);
        }
    }

    #[test]
    fn pi0_recovers_p1_on_curved_element() {
        let m = test1_mesh(4);
        let s = space(&m, 1, 3);
        let pi0 = compute_pi0(&s).unwrap();
        let coeffs = [0.3, -1.2, 0.7];
        let b1 = ScaledMonomialBasis::new(1, s.basis.centroid, s.basis.diameter);
        let q = |p: Point<f64>| b1.eval_poly(&coeffs, p);
        // moments from an independent high-order rule
        let oracle = curved_polygon_quadrature(&s.boundary, 12, 20).unwrap();
        let mut dofs = interpolate(&s, q);
        let off = s.moment_offset();
        for b in 0..3 {
            dofs[off + b] = oracle.integrate(|p| q(p) * s.basis.eval(p)[b]) / s.area();
        }
        let c = pi0.matvec(&dofs);
        for (x, y) in c.iter().zip(coeffs) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn square_k1_energy_of_x() {
        let m = unit_square();
        let s = space(&m, 0, 1);
        let k = local_stiffness(&compute_pi_nabla(&s).unwrap(), 1.0);
        let d = interpolate(&s, |p| p.x);
        let e: f64 = d.iter().zip(k.matvec(&d)).map(|(a, b)| a * b).sum();
        assert!((e - 1.0).abs() < 1e-14);
    }

    #[test]
    fn load_examples() {
        let m = unit_square();
        let s = space(&m, 0, 1);
        let f = local_load(&s, &compute_pi0(&s).unwrap(), |_| 1.0);
        assert!(f.iter().all(|v| (v - 0.25).abs() < 1e-15));
        let s2 = space(&m, 0, 2);
        let pi0 = compute_pi0(&s2).unwrap();
        assert!(local_load(&s2, &pi0, |_| 0.0).iter().all(|&v| v == 0.0));
        let f = local_load(&s2, &pi0, |_| 1.0);
        let pairing: f64 = f.iter().zip(constant_dofs(&s2)).map(|(a, b)| a * b).sum();
        assert!((pairing - 1.0).abs() < 1e-14);
    }

    #[test]
    fn interpolating_constants() {
        let m = test1_mesh(4);
        let s = space(&m, 2, 3);
        let d = interpolate(&s, |_| 2.5);
        let off = s.moment_offset();
        assert!(d[..off].iter().all(|&v| v == 2.5));
        assert!((d[off] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn coefficient_validation() {
        let f: SourceFn<f64> = Arc::new(|_, _| 1.0);
        assert!(Coefficient::new([(1, 0.0)], f.clone()).is_err());
        let c = Coefficient::new([(1, 5.0), (2, 1.0)], f).unwrap();
        assert_eq!(c.kappa(2).unwrap(), 1.0);
        assert!(matches!(c.kappa(3), Err(VemError::MissingKappa(3))));
    }

    #[test]
    fn degenerate_orders_are_rejected() {
        let m = unit_square();
        assert!(matches!(
            LocalSpace::new(&m, 0, 0, VemOptions::default()),
            Err(VemError::InvalidOrder(0))
        ));
    }
}
