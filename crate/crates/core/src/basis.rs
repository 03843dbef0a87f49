//! Lagrange bases on equispaced nodes of the reference cell `[-1, 1]^d`.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// One-dimensional Lagrange polynomials stored by monomial coefficients.
#[derive(Clone, Debug)]
pub struct LagrangeBasis1d<T> {
    nodes: Vec<T>,
    /// `coeffs[i][k]` multiplies `x^k` in basis function `i`.
    coeffs: Vec<Vec<T>>,
}

impl<T: Real> LagrangeBasis1d<T> {
    pub fn equispaced(degree: usize) -> Self {
        let nodes_f: Vec<f64> = if degree == 0 {
            vec![0.0]
        } else {
            (0..=degree)
                .map(|i| -1.0 + 2.0 * i as f64 / degree as f64)
                .collect()
        };
        let coeffs = (0..=degree)
            .map(|i| {
                let mut poly = vec![1.0f64];
                let mut denom = 1.0;
                for (j, &xj) in nodes_f.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    // poly *= (x - xj)
                    let mut next = vec![0.0; poly.len() + 1];
                    for (k, &c) in poly.iter().enumerate() {
                        next[k + 1] += c;
                        next[k] -= c * xj;
                    }
                    poly = next;
                    denom *= nodes_f[i] - xj;
                }
                poly.iter().map(|c| T::lit(c / denom)).collect()
            })
            .collect();
        Self {
            nodes: nodes_f.into_iter().map(T::lit).collect(),
            coeffs,
        }
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    /// `d^k/dx^k` of basis function `i` at `x`.
    pub fn eval(&self, i: usize, x: T, k: usize) -> T {
        let c = &self.coeffs[i];
        let mut acc = T::zero();
        for n in (k..c.len()).rev() {
            let mut factor = T::one();
            for m in 0..k {
                factor *= T::count(n - m);
            }
            acc = acc * x + c[n] * factor;
        }
        acc
    }
}

/// Tensor-product `Q_p` Lagrange basis. Local function `i` corresponds to
/// 1D functions `(i % (p+1), i / (p+1))`.
#[derive(Clone, Debug)]
pub struct TensorBasis<T> {
    dim: usize,
    line: LagrangeBasis1d<T>,
}

impl<T: Real> TensorBasis<T> {
    pub fn new(dim: usize, degree: usize) -> Self {
        Self {
            dim,
            line: LagrangeBasis1d::equispaced(degree),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.line.degree()
    }

    pub fn len(&self) -> usize {
        (self.degree() + 1).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn split(&self, i: usize) -> (usize, usize) {
        let n = self.degree() + 1;
        (i % n, i / n)
    }

    pub fn line(&self) -> &LagrangeBasis1d<T> {
        &self.line
    }

    /// Reference coordinates of local node `i`.
    pub fn node(&self, i: usize) -> [T; 2] {
        let (a, b) = self.split(i);
        let y = if self.dim == 1 {
            T::zero()
        } else {
            self.line.nodes()[b]
        };
        [self.line.nodes()[a], y]
    }

    /// Reference-coordinate derivative `D^k phi_i(xi)`.
    pub fn eval(&self, i: usize, xi: [T; 2], k: [usize; 2]) -> T {
        let (a, b) = self.split(i);
        let fx = self.line.eval(a, xi[0], k[0]);
        if self.dim == 1 {
            debug_assert_eq!(k[1], 0);
            fx
        } else {
            fx * self.line.eval(b, xi[1], k[1])
        }
    }
}

/// Which derivative multiindices enter the scaled semi-norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiIndexSet {
    /// `1 <= |k| <= p` with every `k_i <= p` (mixed derivatives included).
    #[default]
    TotalDegree,
    /// Every `k` with `1 <= |k|` and `k_i <= p`, i.e. all nonzero derivatives
    /// of a `Q_p` function.
    Tensor,
}

pub fn multiindices(dim: usize, degree: usize, set: MultiIndexSet) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    let ky_max = if dim == 1 { 0 } else { degree };
    for total in 1..=(degree + ky_max) {
        for ky in 0..=ky_max {
            if ky > total {
                continue;
            }
            let kx = total - ky;
            if kx > degree {
                continue;
            }
            if set == MultiIndexSet::TotalDegree && total > degree {
                continue;
            }
            out.push([kx, ky]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_property_and_partition_of_unity() {
        for dim in 1..=2 {
            for p in 1..=2 {
                let b = TensorBasis::<f64>::new(dim, p);
                for i in 0..b.len() {
                    for j in 0..b.len() {
                        let v = b.eval(j, b.node(i), [0, 0]);
                        let expected = if i == j { 1.0 } else { 0.0 };
                        assert!((v - expected).abs() < 1e-13);
                    }
                }
                for xi in [[-0.3, 0.7], [0.11, -0.9], [0.5, 0.5]] {
                    let xi = if dim == 1 { [xi[0], 0.0] } else { xi };
                    let s: f64 = (0..b.len()).map(|j| b.eval(j, xi, [0, 0])).sum();
                    assert!((s - 1.0).abs() < 1e-13);
                    let ds: f64 = (0..b.len()).map(|j| b.eval(j, xi, [1, 0])).sum();
                    assert!(ds.abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn derivative_of_quadratic_basis() {
        let l = LagrangeBasis1d::<f64>::equispaced(2);
        // phi_1(x) = 1 - x^2
        assert!((l.eval(1, 0.3, 0) - (1.0 - 0.09)).abs() < 1e-15);
        assert!((l.eval(1, 0.3, 1) + 0.6).abs() < 1e-15);
        assert!((l.eval(1, 0.3, 2) + 2.0).abs() < 1e-15);
        assert_eq!(l.eval(1, 0.3, 3), 0.0);
    }

    #[test]
    fn multiindex_sets() {
        assert_eq!(multiindices(1, 2, MultiIndexSet::TotalDegree), vec![[1, 0], [2, 0]]);
        assert_eq!(
            multiindices(2, 1, MultiIndexSet::TotalDegree),
            vec![[1, 0], [0, 1]]
        );
        assert_eq!(multiindices(2, 2, MultiIndexSet::TotalDegree).len(), 5);
        assert_eq!(multiindices(2, 2, MultiIndexSet::Tensor).len(), 8);
        assert_eq!(multiindices(2, 1, MultiIndexSet::Tensor).len(), 3);
    }
}
