//! Parametrized boundary and interface curves.
//!
//! A [`BoundaryCurve`] is a fixed regular map `t -> gamma(t)` over a closed
//! parameter interval together with its derivative. Mesh edges lying on a
//! curve refer to a [`CurveSegment`], i.e. the restriction of the curve to a
//! sub-interval.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("parameter {t} outside of [{lo}, {hi}]")]
    ParameterOutOfRange { t: f64, lo: f64, hi: f64 },
    #[error("degenerate parametrization: zero speed at t = {t}")]
    ZeroSpeed { t: f64 },
    #[error("invalid parameter interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("curve {id} is not injective (samples {i} and {j} coincide)")]
    NotInjective { id: usize, i: usize, j: usize },
    #[error("adaptive arc length integration did not converge on [{lo}, {hi}]")]
    NonConvergent { lo: f64, hi: f64 },
}

/// Point (or vector) in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    /// Clockwise rotation by a right angle: the outward normal direction of a
    /// counterclockwise traversal with this tangent.
    pub fn rot_cw(self) -> Self {
        Self::new(self.y, -self.x)
    }

    pub fn lerp(self, o: Self, s: T) -> Self {
        self + (o - self) * s
    }
}

impl<T: Scalar> Add for Point<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Point<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Mul<T> for Point<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl<T: Scalar> Neg for Point<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

pub type CurveFn<T> = Arc<dyn Fn(T) -> Point<T> + Send + Sync>;

/// Closed-form curve families plus an escape hatch for user callables.
#[derive(Clone)]
pub enum CurveKind<T> {
    /// `center + radius * (cos(speed t + phase), sin(speed t + phase))`
    Circle {
        center: Point<T>,
        radius: T,
        speed: T,
        phase: T,
    },
    /// Graph of `x -> offset + amplitude * sin(frequency x)`, parametrized by `x = t`.
    Graph {
        offset: T,
        amplitude: T,
        frequency: T,
    },
    /// Affine segment from `start` (at `a`) to `end` (at `b`).
    Line { start: Point<T>, end: Point<T> },
    /// User-supplied map and derivative.
    Callable {
        eval: CurveFn<T>,
        derivative: CurveFn<T>,
    },
}

impl<T: fmt::Debug> fmt::Debug for CurveKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveKind::Circle {
                center,
                radius,
                speed,
                phase,
            } => f
                .debug_struct("Circle")
                .field("center", center)
                .field("radius", radius)
                .field("speed", speed)
                .field("phase", phase)
                .finish(),
            CurveKind::Graph {
                offset,
                amplitude,
                frequency,
            } => f
                .debug_struct("Graph")
                .field("offset", offset)
                .field("amplitude", amplitude)
                .field("frequency", frequency)
                .finish(),
            CurveKind::Line { start, end } => f
                .debug_struct("Line")
                .field("start", start)
                .field("end", end)
                .finish(),
            CurveKind::Callable { .. } => f.write_str("Callable"),
        }
    }
}

/// A fixed regular parametrization of one boundary or interface curve.
#[derive(Clone, Debug)]
pub struct BoundaryCurve<T> {
    id: usize,
    interval: (T, T),
    kind: CurveKind<T>,
}

/// Number of samples used for the regularity and injectivity checks.
const CHECK_SAMPLES: usize = 64;

impl<T: Scalar> BoundaryCurve<T> {
    /// Builds a curve and checks regularity (and, for closed-form kinds,
    /// injectivity on `[a, b)`) by sampling.
    pub fn new(id: usize, a: T, b: T, kind: CurveKind<T>) -> Result<Self, GeometryError> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(GeometryError::InvalidInterval {
                lo: a.as_f64(),
                hi: b.as_f64(),
            });
        }
        let curve = Self {
            id,
            interval: (a, b),
            kind,
        };
        let samples: Vec<(T, Point<T>)> = (0..=CHECK_SAMPLES)
            .map(|i| {
                let t = a + (b - a) * T::from_usize_lossy(i) / T::from_usize_lossy(CHECK_SAMPLES);
                (t, curve.point(t))
            })
            .collect();
        for &(t, _) in &samples {
            if curve.derivative(t).norm() <= T::epsilon() {
                return Err(GeometryError::ZeroSpeed { t: t.as_f64() });
            }
        }
        if !matches!(curve.kind, CurveKind::Callable { .. }) {
            let tol = T::lit(1e-10) * (T::one() + curve.point(a).norm());
            // the endpoint at b may close the curve, so it is excluded
            for i in 0..CHECK_SAMPLES {
                for j in (i + 1)..CHECK_SAMPLES {
                    if samples[i].1.dist(samples[j].1) <= tol {
                        return Err(GeometryError::NotInjective { id, i, j });
                    }
                }
            }
        }
        Ok(curve)
    }

    pub fn circle(
        id: usize,
        a: T,
        b: T,
        center: Point<T>,
        radius: T,
        speed: T,
        phase: T,
    ) -> Result<Self, GeometryError> {
        Self::new(
            id,
            a,
            b,
            CurveKind::Circle {
                center,
                radius,
                speed,
                phase,
            },
        )
    }

    pub fn graph(
        id: usize,
        a: T,
        b: T,
        offset: T,
        amplitude: T,
        frequency: T,
    ) -> Result<Self, GeometryError> {
        Self::new(
            id,
            a,
            b,
            CurveKind::Graph {
                offset,
                amplitude,
                frequency,
            },
        )
    }

    pub fn line(
        id: usize,
        a: T,
        b: T,
        start: Point<T>,
        end: Point<T>,
    ) -> Result<Self, GeometryError> {
        Self::new(id, a, b, CurveKind::Line { start, end })
    }

    pub fn callable(
        id: usize,
        a: T,
        b: T,
        eval: CurveFn<T>,
        derivative: CurveFn<T>,
    ) -> Result<Self, GeometryError> {
        Self::new(id, a, b, CurveKind::Callable { eval, derivative })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn interval(&self) -> (T, T) {
        self.interval
    }

    pub fn kind(&self) -> &CurveKind<T> {
        &self.kind
    }

    /// True when the curve is an affine image of its parameter interval.
    pub fn is_straight(&self) -> bool {
        match &self.kind {
            CurveKind::Line { .. } => true,
            CurveKind::Graph {
                amplitude,
                frequency,
                ..
            } => *amplitude == T::zero() || *frequency == T::zero(),
            _ => false,
        }
    }

    /// `gamma(t)` without range checking.
    pub fn point(&self, t: T) -> Point<T> {
        match &self.kind {
            CurveKind::Circle {
                center,
                radius,
                speed,
                phase,
            } => {
                let (s, c) = (*speed * t + *phase).sin_cos();
                Point::new(center.x + *radius * c, center.y + *radius * s)
            }
            CurveKind::Graph {
                offset,
                amplitude,
                frequency,
            } => Point::new(t, *offset + *amplitude * (*frequency * t).sin()),
            CurveKind::Line { start, end } => {
                let (a, b) = self.interval;
                start.lerp(*end, (t - a) / (b - a))
            }
            CurveKind::Callable { eval, .. } => eval(t),
        }
    }

    /// `gamma'(t)` without range checking.
    pub fn derivative(&self, t: T) -> Point<T> {
        match &self.kind {
            CurveKind::Circle {
                radius,
                speed,
                phase,
                ..
            } => {
                let (s, c) = (*speed * t + *phase).sin_cos();
                Point::new(-*radius * *speed * s, *radius * *speed * c)
            }
            CurveKind::Graph {
                amplitude,
                frequency,
                ..
            } => Point::new(T::one(), *amplitude * *frequency * (*frequency * t).cos()),
            CurveKind::Line { start, end } => {
                let (a, b) = self.interval;
                (*end - *start) * (T::one() / (b - a))
            }
            CurveKind::Callable { derivative, .. } => derivative(t),
        }
    }

    /// Restriction of the curve to `[t0, t1]`.
    pub fn segment(self: &Arc<Self>, t0: T, t1: T) -> Result<CurveSegment<T>, GeometryError> {
        CurveSegment::new(Arc::clone(self), t0, t1)
    }
}

/// Unit tangent, outward unit normal and speed at a curve parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame<T> {
    pub tangent: Point<T>,
    pub normal: Point<T>,
    pub speed: T,
}

/// Restriction of a [`BoundaryCurve`] to a parameter sub-interval `[t0, t1]`, `t0 < t1`.
#[derive(Clone, Debug)]
pub struct CurveSegment<T> {
    curve: Arc<BoundaryCurve<T>>,
    t0: T,
    t1: T,
}

impl<T: Scalar> CurveSegment<T> {
    pub fn new(curve: Arc<BoundaryCurve<T>>, t0: T, t1: T) -> Result<Self, GeometryError> {
        let (a, b) = curve.interval;
        let slack = (b - a) * T::lit(1e-13);
        if !(t0 < t1) || t0 < a - slack || t1 > b + slack {
            return Err(GeometryError::InvalidInterval {
                lo: t0.as_f64(),
                hi: t1.as_f64(),
            });
        }
        Ok(Self { curve, t0, t1 })
    }

    pub fn curve(&self) -> &Arc<BoundaryCurve<T>> {
        &self.curve
    }

    pub fn sub_interval(&self) -> (T, T) {
        (self.t0, self.t1)
    }

    /// Length of the parameter interval `|I_e|`.
    pub fn param_length(&self) -> T {
        self.t1 - self.t0
    }

    fn check(&self, t: T) -> Result<(), GeometryError> {
        let slack = (self.t1 - self.t0) * T::lit(1e-12);
        if t < self.t0 - slack || t > self.t1 + slack || t.is_nan() {
            return Err(GeometryError::ParameterOutOfRange {
                t: t.as_f64(),
                lo: self.t0.as_f64(),
                hi: self.t1.as_f64(),
            });
        }
        Ok(())
    }

    pub fn eval_point(&self, t: T) -> Result<Point<T>, GeometryError> {
        self.check(t)?;
        Ok(self.curve.point(t))
    }

    /// Tangent, normal and speed at `t`. `forward` is the orientation flag
    /// supplied by the owning element: `true` when the element traverses the
    /// edge in the direction of increasing parameter.
    pub fn eval_tangent_normal(&self, t: T, forward: bool) -> Result<Frame<T>, GeometryError> {
        self.check(t)?;
        let d = self.curve.derivative(t);
        let speed = d.norm();
        if speed <= T::epsilon() {
            return Err(GeometryError::ZeroSpeed { t: t.as_f64() });
        }
        let mut tangent = d * (T::one() / speed);
        if !forward {
            tangent = -tangent;
        }
        Ok(Frame {
            tangent,
            normal: tangent.rot_cw(),
            speed,
        })
    }

    /// Arc length of the segment.
    pub fn arc_length(&self) -> Result<T, GeometryError> {
        arc_length(&self.curve, self.t0, self.t1)
    }

    pub fn start(&self) -> Point<T> {
        self.curve.point(self.t0)
    }

    pub fn end(&self) -> Point<T> {
        self.curve.point(self.t1)
    }
}

/// One oriented piece of an element boundary: a straight segment or a curve
/// segment traversed forward or backward.
#[derive(Clone, Debug)]
pub enum BoundaryPiece<T> {
    Segment {
        a: Point<T>,
        b: Point<T>,
    },
    Arc {
        segment: CurveSegment<T>,
        forward: bool,
    },
}

impl<T: Scalar> BoundaryPiece<T> {
    pub fn start(&self) -> Point<T> {
        match self {
            BoundaryPiece::Segment { a, .. } => *a,
            BoundaryPiece::Arc { segment, forward } => {
                if *forward {
                    segment.start()
                } else {
                    segment.end()
                }
            }
        }
    }

    pub fn end(&self) -> Point<T> {
        match self {
            BoundaryPiece::Segment { b, .. } => *b,
            BoundaryPiece::Arc { segment, forward } => {
                if *forward {
                    segment.end()
                } else {
                    segment.start()
                }
            }
        }
    }

    pub fn is_curved(&self) -> bool {
        matches!(self, BoundaryPiece::Arc { .. })
    }

    /// Curve parameter (or chord coordinate in `[-1, 1]` for segments)
    /// corresponding to the reference coordinate `s` in `[-1, 1]`, following
    /// the traversal direction.
    pub fn param(&self, s: T) -> T {
        match self {
            BoundaryPiece::Segment { .. } => s,
            BoundaryPiece::Arc { segment, forward } => {
                let (t0, t1) = segment.sub_interval();
                let half = (t1 - t0) * T::lit(0.5);
                let mid = (t0 + t1) * T::lit(0.5);
                if *forward {
                    mid + half * s
                } else {
                    mid - half * s
                }
            }
        }
    }

    /// Position and derivative with respect to the reference coordinate `s`.
    pub fn map(&self, s: T) -> (Point<T>, Point<T>) {
        let half = T::lit(0.5);
        match self {
            BoundaryPiece::Segment { a, b } => {
                ((*a + *b) * half + (*b - *a) * (half * s), (*b - *a) * half)
            }
            BoundaryPiece::Arc { segment, forward } => {
                let t = self.param(s);
                let scale = segment.param_length() * half;
                let d = segment.curve().derivative(t) * scale;
                (segment.curve().point(t), if *forward { d } else { -d })
            }
        }
    }

    /// Sample `count` interior points (excluding both endpoints).
    pub fn interior_samples(&self, count: usize) -> Vec<Point<T>> {
        (1..=count)
            .map(|i| {
                let s = T::lit(2.0) * T::from_usize_lossy(i) / T::from_usize_lossy(count + 1)
                    - T::one();
                self.map(s).0
            })
            .collect()
    }

    pub fn length(&self) -> Result<T, GeometryError> {
        match self {
            BoundaryPiece::Segment { a, b } => Ok(a.dist(*b)),
            BoundaryPiece::Arc { segment, .. } => segment.arc_length(),
        }
    }
}

// Gauss-Kronrod 7/15 abscissae and weights on [-1, 1] (positive half).
const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod<T: Scalar>(f: &impl Fn(T) -> T, lo: T, hi: T) -> (T, T) {
    let half = (hi - lo) * T::lit(0.5);
    let mid = (hi + lo) * T::lit(0.5);
    let centre = f(mid);
    let mut kronrod = centre * T::lit(K15_WEIGHTS[7]);
    let mut gauss = centre * T::lit(G7_WEIGHTS[3]);
    for i in 0..7 {
        let dx = half * T::lit(GK_NODES[i]);
        let pair = f(mid - dx) + f(mid + dx);
        kronrod = kronrod + pair * T::lit(K15_WEIGHTS[i]);
        if i % 2 == 1 {
            gauss = gauss + pair * T::lit(G7_WEIGHTS[i / 2]);
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss-Kronrod integration of a smooth scalar function.
pub(crate) fn adaptive_integral<T: Scalar>(
    f: &impl Fn(T) -> T,
    lo: T,
    hi: T,
    rel_tol: T,
) -> Option<T> {
    let (whole, err) = gauss_kronrod(f, lo, hi);
    let tol = rel_tol * whole.abs().max(T::min_positive_value());
    if err <= tol {
        return Some(whole);
    }
    // bisect with a budget split proportional to sub-interval length
    let mut stack = vec![(lo, hi, 0u32)];
    let mut total = T::zero();
    let span = hi - lo;
    while let Some((a, b, depth)) = stack.pop() {
        let (val, err) = gauss_kronrod(f, a, b);
        let local_tol = tol * (b - a) / span;
        if err <= local_tol || err <= T::epsilon() * val.abs() * T::lit(50.0) {
            total = total + val;
        } else if depth >= 40 {
            return None;
        } else {
            let m = (a + b) * T::lit(0.5);
            stack.push((m, b, depth + 1));
            stack.push((a, m, depth + 1));
        }
    }
    Some(total)
}

/// Length of `gamma([t0, t1])`, i.e. `zeta(t1) - zeta(t0)`.
pub fn arc_length<T: Scalar>(curve: &BoundaryCurve<T>, t0: T, t1: T) -> Result<T, GeometryError> {
    if t0 == t1 {
        return Ok(T::zero());
    }
    let (lo, hi, sign) = if t0 < t1 {
        (t0, t1, T::one())
    } else {
        (t1, t0, -T::one())
    };
    let rel = T::lit(1e-12).max(T::epsilon() * T::lit(100.0));
    adaptive_integral(&|t| curve.derivative(t).norm(), lo, hi, rel)
        .map(|l| l * sign)
        .ok_or(GeometryError::NonConvergent {
            lo: lo.as_f64(),
            hi: hi.as_f64(),
        })
}
