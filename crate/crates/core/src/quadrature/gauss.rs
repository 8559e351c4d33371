//! Gauss-Legendre and Gauss-Lobatto rules on `[-1, 1]`.
//!
//! Nodes are computed once per `(n, family)` in double precision by Newton
//! iteration and cached; requests for other scalar types convert the cached
//! values.

use std::sync::OnceLock;

use thiserror::Error;

use crate::scalar::Scalar;

pub const MAX_POINTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("{family:?} rule with {n} points is not supported (allowed {min}..={max})")]
    OutOfRange {
        family: Family,
        n: usize,
        min: usize,
        max: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Legendre,
    Lobatto,
}

/// One-dimensional rule on `[-1, 1]` with ascending nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule1D<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> QuadratureRule1D<T> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| f(x) * w)
            .sum()
    }

    fn convert(rule: &QuadratureRule1D<f64>) -> Self {
        Self {
            nodes: rule.nodes.iter().map(|&x| T::lit(x)).collect(),
            weights: rule.weights.iter().map(|&w| T::lit(w)).collect(),
        }
    }
}

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    // derivative from the recurrence; valid away from the endpoints
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn compute_legendre(n: usize) -> QuadratureRule1D<f64> {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule1D { nodes, weights }
}

fn compute_lobatto(n: usize) -> QuadratureRule1D<f64> {
    // interior nodes are the roots of P'_{n-1}
    let deg = n - 1;
    let d = deg as f64;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[n - 1] = 1.0;
    for i in 1..n.div_ceil(2) {
        // Chebyshev-Gauss-Lobatto initial guess
        let mut x = (std::f64::consts::PI * i as f64 / d).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre(deg, x);
            let ddp = (2.0 * x * dp - d * (d + 1.0) * p) / (1.0 - x * x);
            let dx = dp / ddp;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let weights = nodes
        .iter()
        .map(|&x| {
            let (p, _) = legendre(deg, x);
            2.0 / (d * (d + 1.0) * p * p)
        })
        .collect();
    QuadratureRule1D { nodes, weights }
}

type Cache = [OnceLock<QuadratureRule1D<f64>>; MAX_POINTS + 1];

fn cache(family: Family) -> &'static Cache {
    static LEGENDRE: OnceLock<Cache> = OnceLock::new();
    static LOBATTO: OnceLock<Cache> = OnceLock::new();
    let slot = match family {
        Family::Legendre => &LEGENDRE,
        Family::Lobatto => &LOBATTO,
    };
    slot.get_or_init(|| std::array::from_fn(|_| OnceLock::new()))
}

fn cached(family: Family, n: usize) -> &'static QuadratureRule1D<f64> {
    cache(family)[n].get_or_init(|| match family {
        Family::Legendre => compute_legendre(n),
        Family::Lobatto => compute_lobatto(n),
    })
}

/// `n`-point Gauss-Legendre rule, exact for degree `2n - 1`.
pub fn gauss_legendre<T: Scalar>(n: usize) -> Result<QuadratureRule1D<T>, RuleError> {
    if !(1..=MAX_POINTS).contains(&n) {
        return Err(RuleError::OutOfRange {
            family: Family::Legendre,
            n,
            min: 1,
            max: MAX_POINTS,
        });
    }
    Ok(QuadratureRule1D::convert(cached(Family::Legendre, n)))
}

/// `n`-point Gauss-Lobatto rule including both endpoints, exact for degree `2n - 3`.
pub fn gauss_lobatto<T: Scalar>(n: usize) -> Result<QuadratureRule1D<T>, RuleError> {
    if !(2..=MAX_POINTS).contains(&n) {
        return Err(RuleError::OutOfRange {
            family: Family::Lobatto,
            n,
            min: 2,
            max: MAX_POINTS,
        });
    }
    Ok(QuadratureRule1D::convert(cached(Family::Lobatto, n)))
}

pub fn rule<T: Scalar>(family: Family, n: usize) -> Result<QuadratureRule1D<T>, RuleError> {
    match family {
        Family::Legendre => gauss_legendre(n),
        Family::Lobatto => gauss_lobatto(n),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_monomial(p: usize) -> f64 {
        if p % 2 == 1 {
            0.0
        } else {
            2.0 / (p as f64 + 1.0)
        }
    }

    #[test]
    fn legendre_small_rules() {
        let r = gauss_legendre::<f64>(1).unwrap();
        assert_eq!((r.nodes.clone(), r.weights.clone()), (vec![0.0], vec![2.0]));
        let r = gauss_legendre::<f64>(2).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert!((r.nodes[0] + s).abs() < 1e-15 && (r.nodes[1] - s).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15 && (r.weights[1] - 1.0).abs() < 1e-15);
        let r = gauss_legendre::<f64>(5).unwrap();
        assert!((r.integrate(|t| t.powi(8)) - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn lobatto_small_rules() {
        let r = gauss_lobatto::<f64>(2).unwrap();
        assert_eq!(
            (r.nodes.clone(), r.weights.clone()),
            (vec![-1.0, 1.0], vec![1.0, 1.0])
        );
        let r = gauss_lobatto::<f64>(3).unwrap();
        assert_eq!(r.nodes, vec![-1.0, 0.0, 1.0]);
        for (w, e) in r.weights.iter().zip([1.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]) {
            assert!((w - e).abs() < 1e-15);
        }
        let r = gauss_lobatto::<f64>(4).unwrap();
        assert!((r.nodes[1] + 1.0 / 5f64.sqrt()).abs() < 1e-15);
        assert!((r.integrate(|t| t.powi(4)) - 0.4).abs() < 1e-14);
    }

    #[test]
    fn out_of_range_counts() {
        assert!(gauss_legendre::<f64>(0).is_err());
        assert!(gauss_legendre::<f64>(65).is_err());
        assert!(gauss_lobatto::<f64>(1).is_err());
        assert!(gauss_lobatto::<f64>(65).is_err());
    }

    #[test]
    fn exactness_and_invariants_for_all_sizes() {
        for n in 1..=MAX_POINTS {
            let r = gauss_legendre::<f64>(n).unwrap();
            assert!(
                (r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13,
                "legendre {n}"
            );
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for p in 0..(2 * n).min(40) {
                assert!(
                    (r.integrate(|t| t.powi(p as i32)) - exact_monomial(p)).abs() < 1e-13,
                    "legendre {n} p {p}"
                );
            }
        }
        for n in 2..=MAX_POINTS {
            let r = gauss_lobatto::<f64>(n).unwrap();
            assert!(
                (r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13,
                "lobatto {n}"
            );
            assert!(r.nodes.windows(2).all(|w| w[0] < w[1]));
            assert!(r.weights.iter().all(|&w| w > 0.0));
            for p in 0..(2 * n - 2).min(40) {
                assert!(
                    (r.integrate(|t| t.powi(p as i32)) - exact_monomial(p)).abs() < 1e-13,
                    "lobatto {n} p {p}"
                );
            }
        }
    }

    #[test]
    fn single_precision_conversion() {
        let r = gauss_lobatto::<f32>(5).unwrap();
        assert!((r.weights.iter().sum::<f32>() - 2.0).abs() < 1e-6);
    }
}
