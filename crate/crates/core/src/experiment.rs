//! End-to-end runs: mesh, assemble, solve, measure. Used by the command line
//! driver and the acceptance tests.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::analysis::{
    compute_errors, interpolate_global, test1_problem, test2_problem, AnalysisError,
    ConvergenceReport, ConvergenceRow, ErrorNorms, LabeledFn, ManufacturedProblem,
};
use crate::geometry::{BoundaryCurve, BoundaryPiece, Point};
use crate::mesh::{build_annulus_interface_mesh, straighten_mesh, validate_mesh, Mesh, MeshError};
use crate::quadrature::{
    curved_polygon_quadrature, polygon_quadrature, QuadratureError, DEFAULT_BOOST,
};
use crate::scalar::Scalar;
use crate::solver::{
    apply_dirichlet, assemble, solve, Assembled, BoundaryEntity, SolverError, SolverMethod,
};
use crate::vem::{SourceFn, VemOptions};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("mesh validation failed for n = {n}:\n{summary}")]
    Validation { n: usize, summary: String },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Test1Curved,
    Test1Straight,
    Test2,
    Patch,
    QuadratureAudit,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Test1Curved,
        ExperimentKind::Test1Straight,
        ExperimentKind::Test2,
        ExperimentKind::Patch,
        ExperimentKind::QuadratureAudit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Test1Curved => "test1-curved",
            ExperimentKind::Test1Straight => "test1-straight",
            ExperimentKind::Test2 => "test2",
            ExperimentKind::Patch => "patch",
            ExperimentKind::QuadratureAudit => "quadrature-audit",
        }
    }

    /// Human-readable mesh family.
    pub fn mesh_family(self) -> &'static str {
        match self {
            ExperimentKind::Test1Curved => "mapped tensor mesh with curved top and bottom edges",
            ExperimentKind::Test1Straight => {
                "mapped tensor mesh with curved edges replaced by chords"
            }
            ExperimentKind::Test2 => {
                "polar disk mesh with curved boundary and interface (8 sectors)"
            }
            ExperimentKind::Patch => {
                "straightened polar disk mesh (triangles, quadrilaterals, pentagons)"
            }
            ExperimentKind::QuadratureAudit => "random star-shaped polygons",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                format!(
                    "unknown experiment '{s}' (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSettings {
    pub options: VemOptions,
    pub solver: SolverMethod,
    pub tol: f64,
    pub max_iter: usize,
    /// Validate each generated mesh with this chunkiness parameter.
    pub rho: Option<f64>,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            options: VemOptions::default(),
            solver: SolverMethod::Cg,
            tol: 1e-12,
            max_iter: 100_000,
            rho: None,
        }
    }
}

/// One solve on one mesh.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub k: usize,
    pub n: usize,
    pub h: f64,
    pub ndof: usize,
    pub n_elements: usize,
    pub errors: ErrorNorms<f64>,
    pub iterations: usize,
}

/// Assembles, imposes `dirichlet` and solves.
pub fn solve_on_mesh<T: Scalar>(
    mesh: &Mesh<T>,
    k: usize,
    source: SourceFn<T>,
    kappa: &[(i32, T)],
    dirichlet: impl Fn(Point<T>, BoundaryEntity) -> T,
    settings: &RunSettings,
) -> Result<(Assembled<T>, Vec<T>, usize), ExperimentError> {
    let coefficient =
        crate::vem::Coefficient::new(kappa.iter().copied(), source).map_err(SolverError::from)?;
    let assembled = assemble(mesh, k, &coefficient, settings.options)?;
    let reduced = apply_dirichlet(&assembled, dirichlet);
    let sol = solve(
        &reduced,
        settings.solver,
        T::lit(settings.tol),
        settings.max_iter,
    )?;
    Ok((assembled, sol.values, sol.iterations))
}

fn check_mesh<T: Scalar>(
    mesh: &Mesh<T>,
    n: usize,
    settings: &RunSettings,
) -> Result<(), ExperimentError> {
    if let Some(rho) = settings.rho {
        let report = validate_mesh(mesh, T::lit(rho));
        if !report.pass {
            return Err(ExperimentError::Validation {
                n,
                summary: report.summary(),
            });
        }
    }
    Ok(())
}

/// Solves `problem` on the family mesh for parameter `n`. When `straighten`
/// is set the curved edges are replaced by chords, on which zero data is
/// imposed (the exact solution vanishes on the curves it approximates).
pub fn run_manufactured<T: Scalar>(
    problem: &ManufacturedProblem<T>,
    k: usize,
    n: usize,
    straighten: bool,
    settings: &RunSettings,
) -> Result<RunRecord, ExperimentError> {
    let mesh = (problem.mesh)(n)?;
    run_manufactured_on(problem, &mesh, k, n, straighten, settings)
}

/// As [`run_manufactured`] on a given mesh; `n` only labels the record.
pub fn run_manufactured_on<T: Scalar>(
    problem: &ManufacturedProblem<T>,
    mesh: &Mesh<T>,
    k: usize,
    n: usize,
    straighten: bool,
    settings: &RunSettings,
) -> Result<RunRecord, ExperimentError> {
    let straightened;
    let mesh = if straighten {
        straightened = straighten_mesh(mesh)?;
        &straightened
    } else {
        mesh
    };
    check_mesh(mesh, n, settings)?;
    let chords: Vec<bool> = mesh.edges.iter().map(|e| e.chord_of.is_some()).collect();
    let dirichlet = |p: Point<T>, entity: BoundaryEntity| match entity {
        BoundaryEntity::Edge(e) if chords[e] => T::zero(),
        _ => problem.boundary_value(p),
    };
    let (assembled, values, iterations) = solve_on_mesh(
        mesh,
        k,
        problem.source.clone(),
        &problem.kappa,
        dirichlet,
        settings,
    )?;
    let errors = compute_errors(mesh, &assembled.dof_map, &values, problem, settings.options)?;
    Ok(RunRecord {
        k,
        n,
        h: mesh.mesh_size().as_f64(),
        ndof: assembled.dof_map.total,
        n_elements: mesh.n_elements(),
        errors: ErrorNorms {
            h1: errors.h1.as_f64(),
            l2: errors.l2.as_f64(),
            h1_abs: errors.h1_abs.as_f64(),
            l2_abs: errors.l2_abs.as_f64(),
            u_h1: errors.u_h1.as_f64(),
            u_l2: errors.u_l2.as_f64(),
        },
        iterations,
    })
}

/// Problem solved by a convergence experiment.
pub fn problem_for<T: Scalar>(kind: ExperimentKind) -> Option<(ManufacturedProblem<T>, bool)> {
    match kind {
        ExperimentKind::Test1Curved => Some((test1_problem(), false)),
        ExperimentKind::Test1Straight => Some((test1_problem(), true)),
        ExperimentKind::Test2 => Some((test2_problem(), false)),
        _ => None,
    }
}

/// Runs a convergence experiment for one `k` over the refinement sequence.
pub fn run_convergence<T: Scalar>(
    kind: ExperimentKind,
    k: usize,
    ns: &[usize],
    settings: &RunSettings,
) -> Result<(ConvergenceReport, Vec<RunRecord>), ExperimentError> {
    let (problem, straighten) =
        problem_for::<T>(kind).unwrap_or_else(|| panic!("{kind} is not a convergence experiment"));
    let mut report = ConvergenceReport::default();
    let mut records = Vec::with_capacity(ns.len());
    for &n in ns {
        let rec = run_manufactured(&problem, k, n, straighten, settings)?;
        report.push(ConvergenceRow {
            h: rec.h,
            ndof: rec.ndof,
            err_h1: rec.errors.h1,
            err_l2: rec.errors.l2,
        });
        records.push(rec);
    }
    Ok((report, records))
}

/// Polynomial of total degree `k` with every monomial present.
pub fn patch_polynomial<T: Scalar>(k: usize) -> (LabeledFn<T>, SourceFn<T>) {
    let mut terms = Vec::new();
    for d in 0..=k {
        for b in 0..=d {
            let a = d - b;
            let sign = if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
            terms.push((
                a as i32,
                b as i32,
                T::lit(sign / (1.0 + a as f64 + 2.0 * b as f64)),
            ));
        }
    }
    let terms = Arc::new(terms);
    let t2 = terms.clone();
    let u: LabeledFn<T> = Arc::new(move |p, _| {
        terms
            .iter()
            .map(|&(a, b, c)| c * p.x.powi(a) * p.y.powi(b))
            .sum()
    });
    let f: SourceFn<T> = Arc::new(move |p, _| {
        -t2.iter()
            .map(|&(a, b, c)| {
                let mut s = T::zero();
                if a >= 2 {
                    s = s + T::lit((a * (a - 1)) as f64) * p.x.powi(a - 2) * p.y.powi(b);
                }
                if b >= 2 {
                    s = s + T::lit((b * (b - 1)) as f64) * p.x.powi(a) * p.y.powi(b - 2);
                }
                c * s
            })
            .sum::<T>()
    });
    (u, f)
}

/// Patch test on the straightened disk mesh with `n` refinement rings:
/// returns the largest DoF-wise error relative to the largest DoF of the
/// interpolated polynomial, and the number of DoFs.
pub fn patch_test<T: Scalar>(
    k: usize,
    n: usize,
    settings: &RunSettings,
) -> Result<(f64, usize), ExperimentError> {
    let mesh = straighten_mesh(&build_annulus_interface_mesh::<T>(n, 8)?)?;
    patch_test_on(&mesh, k, n, settings)
}

/// Patch test on a given mesh, which must have straight edges only for the
/// error to vanish.
pub fn patch_test_on<T: Scalar>(
    mesh: &Mesh<T>,
    k: usize,
    n: usize,
    settings: &RunSettings,
) -> Result<(f64, usize), ExperimentError> {
    check_mesh(mesh, n, settings)?;
    let (u, f) = patch_polynomial::<T>(k);
    let labels: Vec<(i32, T)> = mesh.elements.iter().map(|e| (e.label, T::one())).collect();
    let (assembled, values, _) = solve_on_mesh(mesh, k, f, &labels, |p, _| u(p, 0), settings)?;
    let exact = interpolate_global(mesh, &assembled.dof_map, &u, settings.options)
        .map_err(SolverError::from)?;
    let scale = exact.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let err = values
        .iter()
        .zip(&exact)
        .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
    Ok(((err / scale).as_f64(), assembled.dof_map.total))
}

/// Random polygon star-shaped with respect to `center`, inside the disk of
/// radius `radius` around it.
pub fn random_star_polygon(
    rng: &mut impl Rng,
    center: Point<f64>,
    radius: f64,
    n: usize,
) -> Vec<Point<f64>> {
    // jittered equal sectors keep every angular gap in (0.6, 1.4) * 2pi/n,
    // below pi for n >= 3, so `center` stays in the kernel
    let sector = std::f64::consts::TAU / n as f64;
    let offset = rng.gen_range(0.0..std::f64::consts::TAU);
    (0..n)
        .map(|i| {
            let t = offset + (i as f64 + rng.gen_range(-0.2..0.2)) * sector;
            let r = radius * rng.gen_range(0.35..1.0);
            Point::new(center.x + r * t.cos(), center.y + r * t.sin())
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Exact `int_T x^a y^b` over the triangle `(p0, p1, p2)` by expanding the
/// monomial in the affine reference coordinates.
pub fn triangle_monomial_integral(
    p0: Point<f64>,
    p1: Point<f64>,
    p2: Point<f64>,
    a: usize,
    b: usize,
) -> f64 {
    let (u, v) = (p1 - p0, p2 - p0);
    let jac = u.cross(v);
    // coefficients of x^a and y^b as polynomials in (s, t)
    let expand = |c0: f64, cs: f64, ct: f64, n: usize| {
        let mut out = Vec::new();
        for i in 0..=n {
            for j in 0..=(n - i) {
                let l = n - i - j;
                let coef = binomial(n, i)
                    * binomial(n - i, j)
                    * c0.powi(i as i32)
                    * cs.powi(j as i32)
                    * ct.powi(l as i32);
                out.push((j, l, coef));
            }
        }
        out
    };
    let xs = expand(p0.x, u.x, v.x, a);
    let ys = expand(p0.y, u.y, v.y, b);
    let mut total = 0.0;
    for &(s1, t1, c1) in &xs {
        for &(s2, t2, c2) in &ys {
            let (p, q) = (s1 + s2, t1 + t2);
            total += c1 * c2 * factorial(p) * factorial(q) / factorial(p + q + 2);
        }
    }
    total * jac
}

/// Largest relative error of the Gauss-Green rule over all monomials of
/// degree `<= 2M`, on `trials` random star-shaped polygons in the positive
/// quadrant, against fan triangulations integrated exactly.
pub fn audit_polygon_rule(m: usize, trials: usize, seed: u64) -> Result<f64, QuadratureError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let nv = rng.gen_range(3..=10);
        let center = Point::new(rng.gen_range(1.5..3.0), rng.gen_range(1.5..3.0));
        let poly = random_star_polygon(&mut rng, center, 1.2, nv);
        let rule = polygon_quadrature(&poly, m)?;
        for d in 0..=2 * m {
            for b in 0..=d {
                let a = d - b;
                let q = rule.integrate(|p| p.x.powi(a as i32) * p.y.powi(b as i32));
                let exact: f64 = (0..nv)
                    .map(|i| triangle_monomial_integral(center, poly[i], poly[(i + 1) % nv], a, b))
                    .sum();
                worst = worst.max((q - exact).abs() / exact.abs());
            }
        }
    }
    Ok(worst)
}

/// Area error of the unit disk from the curved rule on four quarter arcs.
/// The quarter split pairs every node with one rotated by `pi/2`, which makes
/// the result exact for any rule; see [`disk_area_error_uneven`].
pub fn disk_area_error(degree: usize, boost: usize) -> Result<f64, QuadratureError> {
    let q = std::f64::consts::FRAC_PI_2;
    disk_area_error_with(&[0.0, q, 2.0 * q, 3.0 * q], degree, boost)
}

/// Area error of the unit disk split into three arcs of unequal length.
pub fn disk_area_error_uneven(degree: usize, boost: usize) -> Result<f64, QuadratureError> {
    disk_area_error_with(&[0.0, 1.0, 3.0], degree, boost)
}

/// Area error of the unit disk whose boundary is split at the given
/// increasing angles in `[0, 2 pi)`, starting with 0.
pub fn disk_area_error_with(
    breaks: &[f64],
    degree: usize,
    boost: usize,
) -> Result<f64, QuadratureError> {
    let tau = std::f64::consts::TAU;
    let c = Arc::new(
        BoundaryCurve::circle(0, 0.0, tau, Point::zero(), 1.0, 1.0, 0.0).expect("valid circle"),
    );
    let n = breaks.len();
    let pieces: Vec<BoundaryPiece<f64>> = (0..n)
        .map(|i| {
            let t1 = if i + 1 < n { breaks[i + 1] } else { tau };
            BoundaryPiece::Arc {
                segment: c.segment(breaks[i], t1).expect("inside interval"),
                forward: true,
            }
        })
        .collect();
    let rule = curved_polygon_quadrature(&pieces, degree, boost)?;
    Ok((rule.weight_sum() - std::f64::consts::PI).abs())
}

/// Degree of the disk-area check in [`quadrature_audit`]: with the default
/// boost every arc (the longest spans 3.3 rad) gets 9 points, enough for
/// `1e-10`.
pub const DISK_AUDIT_DEGREE: usize = 12;

/// Audit summary lines (also written to CSV by the driver).
#[derive(Clone, Debug)]
pub struct AuditRow {
    pub m: usize,
    pub max_relative_error: f64,
}

/// Worst relative error of the polygon rule per `M`, and the area error of
/// the unevenly split disk.
pub fn quadrature_audit(
    ms: &[usize],
    trials: usize,
    seed: u64,
) -> Result<(Vec<AuditRow>, f64), QuadratureError> {
    let rows = ms
        .iter()
        .map(|&m| {
            audit_polygon_rule(m, trials, seed).map(|e| AuditRow {
                m,
                max_relative_error: e,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((
        rows,
        disk_area_error_uneven(DISK_AUDIT_DEGREE, DEFAULT_BOOST)?,
    ))
}
