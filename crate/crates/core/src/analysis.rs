//! Manufactured problems, discrete error norms and convergence rates.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{BoundaryCurve, Point};
use crate::mesh::{build_annulus_interface_mesh, build_mapped_tensor_mesh, Mesh, MeshError};
use crate::quadrature::{curved_polygon_quadrature, DEFAULT_BOOST};
use crate::scalar::Scalar;
use crate::solver::DofMap;
use crate::vem::{compute_pi_nabla, interpolate, LocalSpace, SourceFn, VemError, VemOptions};

pub type LabeledFn<T> = Arc<dyn Fn(Point<T>, i32) -> T + Send + Sync>;
pub type LabeledGrad<T> = Arc<dyn Fn(Point<T>, i32) -> Point<T> + Send + Sync>;
pub type MeshFactory<T> = Arc<dyn Fn(usize) -> Result<Mesh<T>, MeshError> + Send + Sync>;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Vem(#[from] VemError),
    #[error("rate fit needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("dof vector has length {got}, expected {expected}")]
    Length { got: usize, expected: usize },
}

/// A problem `-div(kappa grad u) = f` with known solution. Every function
/// takes the label of the element it is evaluated in, so piecewise-defined
/// solutions are evaluated by the analytic extension of the right branch.
#[derive(Clone)]
pub struct ManufacturedProblem<T> {
    pub name: String,
    pub u: LabeledFn<T>,
    pub grad: LabeledGrad<T>,
    pub source: SourceFn<T>,
    pub kappa: Vec<(i32, T)>,
    /// Label whose branch provides the Dirichlet data.
    pub boundary_label: i32,
    /// Mesh of the family for refinement parameter `n`.
    pub mesh: MeshFactory<T>,
}

impl<T: Scalar> ManufacturedProblem<T> {
    pub fn kappa(&self, label: i32) -> Option<T> {
        self.kappa
            .iter()
            .find(|(l, _)| *l == label)
            .map(|&(_, k)| k)
    }

    /// Dirichlet data at `p`.
    pub fn boundary_value(&self, p: Point<T>) -> T {
        (self.u)(p, self.boundary_label)
    }

    /// `-div(kappa grad u)(p)` by the five-point stencil with step `h`.
    pub fn fd_source(&self, p: Point<T>, label: i32, h: T) -> T {
        let u = |x: T, y: T| (self.u)(Point::new(x, y), label);
        let lap = (u(p.x + h, p.y) + u(p.x - h, p.y) + u(p.x, p.y + h) + u(p.x, p.y - h)
            - T::lit(4.0) * u(p.x, p.y))
            / (h * h);
        -self.kappa(label).unwrap_or(T::one()) * lap
    }
}

impl<T: Scalar> std::fmt::Debug for ManufacturedProblem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedProblem")
            .field("name", &self.name)
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

/// Lower and upper boundary curves of the first test domain,
/// `y = sin(pi x)/20` and `y = 1 + sin(3 pi x)/20`.
pub fn test1_curves<T: Scalar>() -> (Arc<BoundaryCurve<T>>, Arc<BoundaryCurve<T>>) {
    let (zero, one, amp, pi) = (T::zero(), T::one(), T::lit(0.05), T::PI());
    let g1 = BoundaryCurve::graph(1, zero, one, zero, amp, pi).expect("valid curve");
    let g2 = BoundaryCurve::graph(2, zero, one, one, amp, T::lit(3.0) * pi).expect("valid curve");
    (Arc::new(g1), Arc::new(g2))
}

/// `u = -(y - g1(x)) (y - g2(x)) (3 + sin 5x sin 7y)` on the domain between
/// the two graphs, with `kappa = 1` and homogeneous data on both curves.
pub fn test1_problem<T: Scalar>() -> ManufacturedProblem<T> {
    let (c1, c2) = test1_curves::<T>();
    let graph = |c: &BoundaryCurve<T>| match c.kind() {
        crate::geometry::CurveKind::Graph {
            amplitude,
            frequency,
            ..
        } => (*amplitude, *frequency),
        _ => unreachable!(),
    };
    let (a1, w1) = graph(&c1);
    let (a2, w2) = graph(&c2);
    let (five, seven, three) = (T::lit(5.0), T::lit(7.0), T::lit(3.0));

    // P = A B with A = y - g1, B = y - g2; C = 3 + sin 5x sin 7y
    #[derive(Clone, Copy)]
    struct Parts<T> {
        p: T,
        px: T,
        py: T,
        lap_p: T,
        c: T,
        cx: T,
        cy: T,
        lap_c: T,
    }
    let parts = {
        let (c1, c2) = (c1.clone(), c2.clone());
        move |q: Point<T>| {
            let (x, y) = (q.x, q.y);
            let a = y - c1.point(x).y;
            let b = y - c2.point(x).y;
            let (s1, k1) = (w1 * x).sin_cos();
            let (s2, k2) = (w2 * x).sin_cos();
            let (d1, d2) = (a1 * w1 * k1, a2 * w2 * k2);
            let (dd1, dd2) = (-a1 * w1 * w1 * s1, -a2 * w2 * w2 * s2);
            let (s5, k5) = (five * x).sin_cos();
            let (s7, k7) = (seven * y).sin_cos();
            Parts {
                p: a * b,
                px: -d1 * b - a * d2,
                py: a + b,
                lap_p: -dd1 * b + T::lit(2.0) * d1 * d2 - a * dd2 + T::lit(2.0),
                c: three + s5 * s7,
                cx: five * k5 * s7,
                cy: seven * s5 * k7,
                lap_c: -T::lit(74.0) * s5 * s7,
            }
        }
    };
    let pu = parts.clone();
    let pg = parts.clone();
    let pf = parts;
    let mesh: MeshFactory<T> =
        Arc::new(move |n| build_mapped_tensor_mesh(n, c1.clone(), c2.clone()));
    ManufacturedProblem {
        name: "test1".into(),
        u: Arc::new(move |q, _| {
            let s = pu(q);
            -s.p * s.c
        }),
        grad: Arc::new(move |q, _| {
            let s = pg(q);
            Point::new(-(s.px * s.c + s.p * s.cx), -(s.py * s.c + s.p * s.cy))
        }),
        source: Arc::new(move |q, _| {
            let s = pf(q);
            s.lap_p * s.c + T::lit(2.0) * (s.px * s.cx + s.py * s.cy) + s.p * s.lap_c
        }),
        kappa: vec![(1, T::one())],
        boundary_label: 1,
        mesh,
    }
}

/// Outer region `1/2 < r < 1` of the interface problem.
pub const OUTER_LABEL: i32 = 1;
/// Inner disk `r < 1/2`.
pub const INNER_LABEL: i32 = 2;

/// Interface problem on the unit disk: `kappa = 5, f = 1` for `r > 1/2` and
/// `kappa = 1, f = 5` inside, with the radial solution continuous in value
/// and flux across `r = 1/2` and zero on `r = 1`. Meshes use 8 sectors.
pub fn test2_problem<T: Scalar>() -> ManufacturedProblem<T> {
    let c = |x: f64| T::lit(x);
    let u = move |q: Point<T>, label: i32| {
        let r2 = q.dot(q);
        if label == INNER_LABEL {
            -c(1.25) * r2 + c(0.35) + T::LN_2() / c(10.0)
        } else {
            -r2 / c(20.0) - r2.ln() / c(20.0) + c(0.05)
        }
    };
    let grad = move |q: Point<T>, label: i32| {
        if label == INNER_LABEL {
            q * c(-2.5)
        } else {
            // d/dr (-r^2/20 - ln r / 10) = -r/10 - 1/(10 r)
            q * (-c(0.1) - c(0.1) / q.dot(q))
        }
    };
    ManufacturedProblem {
        name: "test2".into(),
        u: Arc::new(u),
        grad: Arc::new(grad),
        source: Arc::new(|_, label| {
            if label == INNER_LABEL {
                T::lit(5.0)
            } else {
                T::one()
            }
        }),
        kappa: vec![(OUTER_LABEL, T::lit(5.0)), (INNER_LABEL, T::one())],
        boundary_label: OUTER_LABEL,
        mesh: Arc::new(|n| build_annulus_interface_mesh(n, 8)),
    }
}

/// Global DoF vector of `u`: point values plus per-element moments.
pub fn interpolate_global<T: Scalar>(
    mesh: &Mesh<T>,
    dof_map: &DofMap<T>,
    u: &LabeledFn<T>,
    options: VemOptions,
) -> Result<Vec<T>, VemError> {
    let locals = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let space = LocalSpace::new(mesh, e, dof_map.k, options)?;
            let label = mesh.elements[e].label;
            Ok(interpolate(&space, |p| u(p, label)))
        })
        .collect::<Result<Vec<_>, VemError>>()?;
    let mut out = vec![T::zero(); dof_map.total];
    for (e, vals) in locals.into_iter().enumerate() {
        for (&g, v) in dof_map.element_dofs[e].iter().zip(vals) {
            out[g] = v;
        }
    }
    Ok(out)
}

/// Errors of `Pi^nabla u_h` against the exact solution, in absolute and
/// relative form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms<T> {
    /// `|u - Pi u_h|_{1,h} / |u|_1`.
    pub h1: T,
    /// `||u - Pi u_h||_0 / ||u||_0`.
    pub l2: T,
    pub h1_abs: T,
    pub l2_abs: T,
    /// `|u|_1` and `||u||_0` with the same rules.
    pub u_h1: T,
    pub u_l2: T,
}

/// Lowest degree of the error rule. The manufactured solutions oscillate on
/// the scale of the coarsest meshes, where `2k + 2 = 4` leaves `|u|_1`
/// wrong in the fifth digit.
pub const MIN_ERROR_DEGREE: usize = 8;

/// Element-wise integration with the curved rule of degree
/// `max(2k + 2, MIN_ERROR_DEGREE)` and the default boost, summed in element
/// order.
pub fn compute_errors<T: Scalar>(
    mesh: &Mesh<T>,
    dof_map: &DofMap<T>,
    values: &[T],
    problem: &ManufacturedProblem<T>,
    options: VemOptions,
) -> Result<ErrorNorms<T>, AnalysisError> {
    if values.len() != dof_map.total {
        return Err(AnalysisError::Length {
            got: values.len(),
            expected: dof_map.total,
        });
    }
    let k = dof_map.k;
    let parts = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let space = LocalSpace::new(mesh, e, k, options)?;
            let pn = compute_pi_nabla(&space)?;
            let local: Vec<T> = dof_map.element_dofs[e].iter().map(|&g| values[g]).collect();
            let c = pn.star.matvec(&local);
            let rule = curved_polygon_quadrature(
                &space.boundary,
                (2 * k + 2).max(MIN_ERROR_DEGREE),
                DEFAULT_BOOST,
            )
            .map_err(|source| VemError::Quadrature { element: e, source })?;
            let label = mesh.elements[e].label;
            let mut acc = [T::zero(); 4];
            for (&q, &w) in rule.points.iter().zip(&rule.weights) {
                let u = (problem.u)(q, label);
                let gu = (problem.grad)(q, label);
                let du = u - space.basis.eval_poly(&c, q);
                let dg = gu - space.basis.eval_poly_grad(&c, q);
                acc[0] = acc[0] + w * dg.dot(dg);
                acc[1] = acc[1] + w * du * du;
                acc[2] = acc[2] + w * gu.dot(gu);
                acc[3] = acc[3] + w * u * u;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, VemError>>()?;
    let mut tot = [T::zero(); 4];
    for p in parts {
        for i in 0..4 {
            tot[i] = tot[i] + p[i];
        }
    }
    let [eh1, el2, uh1, ul2] = tot.map(|v| v.max(T::zero()).sqrt());
    Ok(ErrorNorms {
        h1: eh1 / uh1,
        l2: el2 / ul2,
        h1_abs: eh1,
        l2_abs: el2,
        u_h1: uh1,
        u_l2: ul2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub ndof: usize,
    pub err_h1: f64,
    pub err_l2: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rates {
    /// Least-squares slopes of `log err` against `log h`.
    pub fit_h1: f64,
    pub fit_l2: f64,
    /// Slopes between consecutive rows.
    pub pairwise: Vec<(f64, f64)>,
}

impl Rates {
    /// Slopes over the last refinement interval.
    pub fn last(&self) -> (f64, f64) {
        *self.pairwise.last().expect("at least one interval")
    }
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn fit_rates(report: &ConvergenceReport) -> Result<Rates, AnalysisError> {
    let rows = &report.rows;
    if rows.len() < 2 {
        return Err(AnalysisError::TooFewRows(rows.len()));
    }
    let lh: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
    let l1: Vec<f64> = rows.iter().map(|r| r.err_h1.ln()).collect();
    let l0: Vec<f64> = rows.iter().map(|r| r.err_l2.ln()).collect();
    let pairwise = (1..rows.len())
        .map(|i| {
            let dh = lh[i] - lh[i - 1];
            ((l1[i] - l1[i - 1]) / dh, (l0[i] - l0[i - 1]) / dh)
        })
        .collect();
    Ok(Rates {
        fit_h1: slope(&lh, &l1),
        fit_l2: slope(&lh, &l0),
        pairwise,
    })
}

impl ConvergenceReport {
    pub fn push(&mut self, row: ConvergenceRow) {
        self.rows.push(row);
    }

    /// CSV with columns `h,ndof,errH1,errL2,rateH1,rateL2`; the rates are the
    /// slopes from the previous row and empty on the first one.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,ndof,errH1,errL2,rateH1,rateL2\n");
        for line in self.csv_lines() {
            s.push_str(&line);
            s.push('\n');
        }
        s
    }

    /// Data lines of [`Self::to_csv`] without the header.
    pub fn csv_lines(&self) -> Vec<String> {
        let rates = fit_rates(self).map(|r| r.pairwise).unwrap_or_default();
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut line = format!(
                    "{:.16e},{},{:.16e},{:.16e},",
                    r.h, r.ndof, r.err_h1, r.err_l2
                );
                if i > 0 {
                    let (a, b) = rates[i - 1];
                    let _ = write!(line, "{a:.6},{b:.6}");
                } else {
                    line.push(',');
                }
                line
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_examples() {
        let mut r = ConvergenceReport::default();
        r.push(ConvergenceRow {
            h: 1.0,
            ndof: 1,
            err_h1: 1.0,
            err_l2: 1.0,
        });
        r.push(ConvergenceRow {
            h: 0.5,
            ndof: 4,
            err_h1: 0.25,
            err_l2: 1.0,
        });
        let rates = fit_rates(&r).unwrap();
        assert!((rates.fit_h1 - 2.0).abs() < 1e-14);
        assert_eq!(rates.fit_l2, 0.0);
        assert_eq!(rates.last(), (rates.fit_h1, 0.0));
        assert!(fit_rates(&ConvergenceReport::default()).is_err());
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().ends_with(",,"));
    }

    #[test]
    fn test2_identities() {
        let p = test2_problem::<f64>();
        let q = Point::new(0.3, 0.4); // r = 1/2
        let expected = 3.0 / 80.0 + 2f64.ln() / 10.0;
        assert!(((p.u)(q, OUTER_LABEL) - expected).abs() < 1e-12);
        assert!(((p.u)(q, INNER_LABEL) - expected).abs() < 1e-12);
        assert!((expected - 0.106814).abs() < 1e-6);
        let flux = |label| p.kappa(label).unwrap() * (p.grad)(q, label).dot(q) / 0.5;
        assert!((flux(OUTER_LABEL) + 1.25).abs() < 1e-12);
        assert!((flux(INNER_LABEL) + 1.25).abs() < 1e-12);
        assert!((p.u)(Point::new(0.6, 0.8), OUTER_LABEL).abs() < 1e-15);
    }

    #[test]
    fn test1_vanishes_on_curves() {
        let p = test1_problem::<f64>();
        let (g1, g2) = test1_curves::<f64>();
        for i in 0..20 {
            let x = i as f64 / 19.0;
            assert_eq!((p.u)(g1.point(x), 1), 0.0);
            assert_eq!((p.u)(g2.point(x), 1), 0.0);
        }
    }

    #[test]
    fn sources_match_finite_differences() {
        let p1 = test1_problem::<f64>();
        let p2 = test2_problem::<f64>();
        let cases: [(&ManufacturedProblem<f64>, i32, Point<f64>); 4] = [
            (&p1, 1, Point::new(0.3, 0.4)),
            (&p1, 1, Point::new(0.8, 0.9)),
            (&p2, OUTER_LABEL, Point::new(-0.5, 0.6)),
            (&p2, INNER_LABEL, Point::new(0.1, -0.2)),
        ];
        for (p, label, q) in cases {
            let f = (p.source)(q, label);
            let fd = p.fd_source(q, label, 1e-4);
            assert!(
                (f - fd).abs() < 1e-4 * f.abs().max(1.0),
                "{}: {f} vs {fd}",
                p.name
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (p, label, q) in [
            (test1_problem::<f64>(), 1, Point::new(0.37, 0.52)),
            (test2_problem::<f64>(), OUTER_LABEL, Point::new(0.7, -0.1)),
            (test2_problem::<f64>(), INNER_LABEL, Point::new(0.2, 0.1)),
        ] {
            let h = 1e-6;
            let u = |x: f64, y: f64| (p.u)(Point::new(x, y), label);
            let fd = Point::new(
                (u(q.x + h, q.y) - u(q.x - h, q.y)) / (2.0 * h),
                (u(q.x, q.y + h) - u(q.x, q.y - h)) / (2.0 * h),
            );
            let g = (p.grad)(q, label);
            assert!(g.dist(fd) < 1e-7, "{}", p.name);
        }
    }
}
