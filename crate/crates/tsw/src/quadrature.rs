//! Gauss-Legendre and Gauss-Lobatto-Legendre quadrature on [-1, 1],
//! plus their tensor products on the reference square.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A 1D quadrature rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct QuadRule<T> {
    pub points: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadRule<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Apply the rule to a function on [-1, 1].
    pub fn integrate(&self, f: impl Fn(T) -> T) -> T {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Legendre polynomial P_n(x) and its first derivative.
fn legendre_pair<T: Real>(n: usize, x: T) -> (T, T) {
    let one = T::one();
    if n == 0 {
        return (one, T::zero());
    }
    let mut p_prev = one;
    let mut p = x;
    for m in 1..n {
        let mf = T::of_usize(m);
        let next = ((T::of(2.0) * mf + one) * x * p - mf * p_prev) / (mf + one);
        p_prev = p;
        p = next;
    }
    // (x^2 - 1) P_n' = n (x P_n - P_{n-1})
    let denom = x * x - one;
    let nf = T::of_usize(n);
    let dp = if denom.abs() > T::epsilon() {
        nf * (x * p - p_prev) / denom
    } else {
        // At x = +-1: P_n'(+-1) = (+-1)^{n-1} n(n+1)/2
        let sign = if n % 2 == 0 { x.signum() } else { one };
        sign * nf * (nf + one) / T::of(2.0)
    };
    (p, dp)
}

fn newton_tol<T: Real>() -> T {
    // Cold-started Chebyshev guesses converge in a handful of steps; stop at
    // the scalar type's resolution (1e-15 for f64).
    T::of(1e-15).max(T::epsilon() * T::of(4.0))
}

/// n-point Gauss-Legendre rule: interior nodes, exact to degree 2n-1.
pub fn gauss_rule<T: Real>(n: usize) -> Result<QuadRule<T>> {
    if n < 1 {
        return Err(Error::invalid("gauss_rule requires n >= 1"));
    }
    let mut points = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    let tol = newton_tol::<T>();
    for i in 0..(n + 1) / 2 {
        // Chebyshev estimate for the i-th root of P_n.
        let guess = -((std::f64::consts::PI * (i as f64 + 0.75)) / (n as f64 + 0.5)).cos();
        let mut x = T::of(guess);
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, x);
            let dx = p / dp;
            x = x - dx;
            if dx.abs() <= tol {
                break;
            }
        }
        let (_, dp) = legendre_pair(n, x);
        let w = T::of(2.0) / ((T::one() - x * x) * dp * dp);
        points[i] = x;
        weights[i] = w;
        // Mirror for exact symmetry.
        points[n - 1 - i] = -x;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        points[n / 2] = T::zero();
    }
    Ok(QuadRule { points, weights })
}

/// n-point Gauss-Lobatto-Legendre rule: endpoints included, exact to
/// degree 2n-3.
pub fn gll_rule<T: Real>(n: usize) -> Result<QuadRule<T>> {
    if n < 2 {
        return Err(Error::invalid("gll_rule requires n >= 2"));
    }
    let mut points = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];
    points[0] = -T::one();
    points[n - 1] = T::one();
    let tol = newton_tol::<T>();
    // Interior nodes are the roots of P'_{n-1}.
    for i in 1..(n + 1) / 2 {
        let guess = -((std::f64::consts::PI * i as f64) / (n as f64 - 1.0)).cos();
        let mut x = T::of(guess);
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n - 1, x);
            // P'' from the Legendre ODE: (1-x^2) P'' = 2x P' - m(m+1) P
            let m = T::of_usize(n - 1);
            let ddp = (T::of(2.0) * x * dp - m * (m + T::one()) * p) / (T::one() - x * x);
            let dx = dp / ddp;
            x = x - dx;
            if dx.abs() <= tol {
                break;
            }
        }
        points[i] = x;
        points[n - 1 - i] = -x;
    }
    if n % 2 == 1 {
        points[n / 2] = T::zero();
    }
    let scale = T::of(2.0) / (T::of_usize(n) * T::of_usize(n - 1));
    for i in 0..(n + 1) / 2 {
        let (p, _) = legendre_pair(n - 1, points[i]);
        let w = scale / (p * p);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok(QuadRule { points, weights })
}

/// Tensor-product rule on the reference square [-1, 1]^2, stored flattened
/// with the x index fastest.
#[derive(Debug, Clone)]
pub struct QuadRule2d<T> {
    pub nx: usize,
    pub ny: usize,
    /// (xi, eta) per point
    pub points: Vec<(T, T)>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadRule2d<T> {
    pub fn tensor(rule: &QuadRule<T>) -> Self {
        Self::tensor_xy(rule, rule)
    }

    pub fn tensor_xy(rx: &QuadRule<T>, ry: &QuadRule<T>) -> Self {
        let mut points = Vec::with_capacity(rx.len() * ry.len());
        let mut weights = Vec::with_capacity(rx.len() * ry.len());
        for (j, &eta) in ry.points.iter().enumerate() {
            for (i, &xi) in rx.points.iter().enumerate() {
                points.push((xi, eta));
                weights.push(rx.weights[i] * ry.weights[j]);
            }
        }
        QuadRule2d {
            nx: rx.len(),
            ny: ry.len(),
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Default number of volume quadrature points per direction for order-k
/// spaces. Every bilinear and trilinear integrand assembled here has degree
/// at most 3k+2 per direction; GLL with max(2k+2, 3) points is exact for all
/// of them.
pub fn default_quad_points(order: usize) -> usize {
    (2 * order + 2).max(3)
}
