//! Tensor-product Gauss–Legendre rules on the reference cell `[-1, 1]^d`.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Highest polynomial exactness order for which a rule is provided.
pub const MAX_ORDER: usize = 20;

#[derive(Clone, Debug)]
pub struct QuadratureRule<T> {
    pub dim: usize,
    /// Reference points; the second coordinate is zero in 1D.
    pub points: Vec<[T; 2]>,
    pub weights: Vec<T>,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Chebyshev-type initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Number of Gauss points per direction needed for exactness `order`.
pub fn points_for_order(order: usize) -> usize {
    order / 2 + 1
}

/// Tensor Gauss–Legendre rule in `dim` dimensions, exact for polynomials of
/// degree `order` in each variable.
pub fn quadrature_rule<T: Real>(dim: usize, order: usize) -> Result<QuadratureRule<T>> {
    if order > MAX_ORDER {
        return Err(Error::Unsupported(format!(
            "quadrature order {order} exceeds {MAX_ORDER}"
        )));
    }
    if !(1..=2).contains(&dim) {
        return Err(Error::Unsupported(format!("dimension {dim}")));
    }
    let (x, w) = gauss_legendre(points_for_order(order));
    let mut points = Vec::new();
    let mut weights = Vec::new();
    if dim == 1 {
        for (xi, wi) in x.iter().zip(&w) {
            points.push([T::lit(*xi), T::zero()]);
            weights.push(T::lit(*wi));
        }
    } else {
        for (yj, wj) in x.iter().zip(&w) {
            for (xi, wi) in x.iter().zip(&w) {
                points.push([T::lit(*xi), T::lit(*yj)]);
                weights.push(T::lit(wi * wj));
            }
        }
    }
    Ok(QuadratureRule {
        dim,
        points,
        weights,
    })
}
