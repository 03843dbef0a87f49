//! Continuous and discontinuous `Q_p` Lagrange spaces on uniform meshes.
//!
//! All elements of a uniform mesh are congruent, so every element-local
//! integral is precomputed once in [`ElementKernels`].

use serde::{Deserialize, Serialize};

use crate::basis::{multiindices, MultiIndexSet, TensorBasis};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, LuFactor};
use crate::mesh::{Mesh, Side};
use crate::quadrature::quadrature_rule;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuity {
    Cg,
    Dg,
}

/// Quadrature data on one side of the reference element.
#[derive(Clone, Debug)]
pub struct FaceKernel<T> {
    pub side: Side,
    /// Reference coordinates in the element that owns the side.
    pub points: Vec<[T; 2]>,
    /// Physical weights (they sum to the face measure).
    pub weights: Vec<T>,
    pub phi: Vec<Vec<T>>,
    pub grad: Vec<Vec<[T; 2]>>,
    pub normal: [T; 2],
}

/// Precomputed element integrals shared by all (congruent) elements.
#[derive(Clone, Debug)]
pub struct ElementKernels<T> {
    pub n_loc: usize,
    pub det_j: T,
    /// Reference quadrature points (exact to order `2p + 1`).
    pub points: Vec<[T; 2]>,
    /// Physical quadrature weights.
    pub weights: Vec<T>,
    /// `phi[q][i]`.
    pub phi: Vec<Vec<T>>,
    /// Physical gradients `grad[q][i]`.
    pub grad: Vec<Vec<[T; 2]>>,
    /// Physical Laplacians `laplacian[q][i]`.
    pub laplacian: Vec<Vec<T>>,
    pub mass: DenseMatrix<T>,
    pub mass_inv: DenseMatrix<T>,
    pub stiffness: DenseMatrix<T>,
    /// `(1/|K|) int phi_i`.
    pub mean_weights: Vec<T>,
    gram_total: DenseMatrix<T>,
    gram_tensor: DenseMatrix<T>,
    /// Physical gradients at the element's own Lagrange nodes, `[node][i]`.
    pub node_grad: Vec<Vec<[T; 2]>>,
    /// `extension[side][i][j] = phi_j` of the neighbor across `side`,
    /// evaluated at local node `i`.
    pub extension: Vec<DenseMatrix<T>>,
    pub faces: Vec<FaceKernel<T>>,
}

impl<T: Real> ElementKernels<T> {
    fn new(basis: &TensorBasis<T>, hx: T, hy: T, dim: usize) -> Result<Self> {
        let p = basis.degree();
        let n = basis.len();
        let sx = T::two() / hx;
        let sy = T::two() / hy;
        let det_j = if dim == 1 { hx / T::two() } else { hx * hy / T::lit(4.0) };
        let rule = quadrature_rule::<T>(dim, 2 * p + 1)?;
        let grad_at = |xi: [T; 2]| -> Vec<[T; 2]> {
            (0..n)
                .map(|i| {
                    let gx = basis.eval(i, xi, [1, 0]) * sx;
                    let gy = if dim == 1 {
                        T::zero()
                    } else {
                        basis.eval(i, xi, [0, 1]) * sy
                    };
                    [gx, gy]
                })
                .collect()
        };
        let points = rule.points.clone();
        let weights: Vec<T> = rule.weights.iter().map(|w| *w * det_j).collect();
        let phi: Vec<Vec<T>> = points
            .iter()
            .map(|xi| (0..n).map(|i| basis.eval(i, *xi, [0, 0])).collect())
            .collect();
        let grad: Vec<Vec<[T; 2]>> = points.iter().map(|xi| grad_at(*xi)).collect();
        let laplacian: Vec<Vec<T>> = points
            .iter()
            .map(|xi| {
                (0..n)
                    .map(|i| {
                        let mut l = basis.eval(i, *xi, [2, 0]) * sx * sx;
                        if dim == 2 {
                            l += basis.eval(i, *xi, [0, 2]) * sy * sy;
                        }
                        l
                    })
                    .collect()
            })
            .collect();
        let mut mass = DenseMatrix::zeros(n, n);
        let mut stiffness = DenseMatrix::zeros(n, n);
        for q in 0..points.len() {
            let w = weights[q];
            for i in 0..n {
                for j in 0..n {
                    mass[(i, j)] += w * phi[q][i] * phi[q][j];
                    stiffness[(i, j)] +=
                        w * (grad[q][i][0] * grad[q][j][0] + grad[q][i][1] * grad[q][j][1]);
                }
            }
        }
        let mass_inv = LuFactor::new(&mass)?.inverse();
        let measure = if dim == 1 { hx } else { hx * hy };
        let mean_weights = (0..n)
            .map(|i| (0..points.len()).map(|q| weights[q] * phi[q][i]).sum::<T>() / measure)
            .collect();
        let h = if dim == 1 { hx } else { hx.max(hy) };
        let gram = |set: MultiIndexSet| {
            let mut g = DenseMatrix::zeros(n, n);
            for k in multiindices(dim, p, set) {
                let order = k[0] + k[1];
                let scale = h.powi(2 * order as i32 - dim as i32)
                    * sx.powi(2 * k[0] as i32)
                    * sy.powi(2 * k[1] as i32);
                for (q, xi) in points.iter().enumerate() {
                    let d: Vec<T> = (0..n).map(|i| basis.eval(i, *xi, k)).collect();
                    for i in 0..n {
                        for j in 0..n {
                            g[(i, j)] += scale * weights[q] * d[i] * d[j];
                        }
                    }
                }
            }
            g
        };
        let gram_total = gram(MultiIndexSet::TotalDegree);
        let gram_tensor = gram(MultiIndexSet::Tensor);
        let node_grad = (0..n).map(|l| grad_at(basis.node(l))).collect();
        let extension = Side::for_dim(dim)
            .iter()
            .map(|side| {
                let (dx, dy) = side.offset();
                let shift = [T::lit(-2.0 * dx as f64), T::lit(-2.0 * dy as f64)];
                DenseMatrix::from_fn(n, n, |i, j| {
                    let x = basis.node(i);
                    basis.eval(j, [x[0] + shift[0], x[1] + shift[1]], [0, 0])
                })
            })
            .collect();
        let line_rule = quadrature_rule::<T>(1, 2 * p + 1)?;
        let faces = Side::for_dim(dim)
            .iter()
            .map(|&side| {
                let (dx, dy) = side.offset();
                let (pts, ws): (Vec<[T; 2]>, Vec<T>) = if dim == 1 {
                    (vec![[T::lit(dx as f64), T::zero()]], vec![T::one()])
                } else if dx != 0 {
                    line_rule
                        .points
                        .iter()
                        .zip(&line_rule.weights)
                        .map(|(s, w)| ([T::lit(dx as f64), s[0]], *w * hy / T::two()))
                        .unzip()
                } else {
                    line_rule
                        .points
                        .iter()
                        .zip(&line_rule.weights)
                        .map(|(s, w)| ([s[0], T::lit(dy as f64)], *w * hx / T::two()))
                        .unzip()
                };
                FaceKernel {
                    side,
                    phi: pts
                        .iter()
                        .map(|xi| (0..n).map(|i| basis.eval(i, *xi, [0, 0])).collect())
                        .collect(),
                    grad: pts.iter().map(|xi| grad_at(*xi)).collect(),
                    points: pts,
                    weights: ws,
                    normal: side.outward_normal(),
                }
            })
            .collect();
        Ok(Self {
            n_loc: n,
            det_j,
            points,
            weights,
            phi,
            grad,
            laplacian,
            mass,
            mass_inv,
            stiffness,
            mean_weights,
            gram_total,
            gram_tensor,
            node_grad,
            extension,
            faces,
        })
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    /// Quadratic form of the scaled semi-norm on local coefficients.
    pub fn gram(&self, set: MultiIndexSet) -> &DenseMatrix<T> {
        match set {
            MultiIndexSet::TotalDegree => &self.gram_total,
            MultiIndexSet::Tensor => &self.gram_tensor,
        }
    }
}

/// Polynomial on one element, stored in that element's local basis.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalPolynomial<T> {
    pub element: usize,
    pub coeffs: Vec<T>,
}

impl<T: Real> LocalPolynomial<T> {
    pub fn mean(&self, space: &FeSpace<T>) -> T {
        crate::linalg::dot(&space.kernels().mean_weights, &self.coeffs)
    }

    pub fn seminorm(&self, space: &FeSpace<T>, set: MultiIndexSet) -> T {
        space.local_seminorm(&self.coeffs, set)
    }

    pub fn eval(&self, space: &FeSpace<T>, xi: [T; 2], k: [usize; 2]) -> Result<T> {
        space.evaluate_local(&self.coeffs, xi, k)
    }
}

#[derive(Clone, Debug)]
pub struct FeSpace<T> {
    mesh: Mesh<T>,
    continuity: Continuity,
    basis: TensorBasis<T>,
    kernels: ElementKernels<T>,
    /// Flattened element-to-global map, `n_loc` entries per element.
    element_dofs: Vec<usize>,
    n_dofs: usize,
    /// Lattice size of CG nodes per direction.
    lattice: (usize, usize),
    dof_coords: Vec<[T; 2]>,
    /// For each global dof, the `(element, local index)` pairs that share it.
    dof_elements: Vec<Vec<(usize, usize)>>,
    boundary_dofs: Vec<usize>,
}

impl<T: Real> FeSpace<T> {
    pub fn new(mesh: Mesh<T>, continuity: Continuity, degree: usize) -> Result<Self> {
        if !(1..=2).contains(&degree) {
            return Err(Error::Unsupported(format!("polynomial degree {degree}")));
        }
        let dim = mesh.dim();
        let basis = TensorBasis::new(dim, degree);
        let (hx, hy) = mesh.spacing();
        let kernels = ElementKernels::new(&basis, hx, hy, dim)?;
        let n_loc = basis.len();
        let (nx, ny) = mesh.shape();
        let periodic = mesh.is_periodic();
        let lat = |n: usize| if periodic { n * degree } else { n * degree + 1 };
        let lattice = (lat(nx), if dim == 1 { 1 } else { lat(ny) });
        let n_el = mesh.num_elements();
        let mut element_dofs = Vec::with_capacity(n_el * n_loc);
        for e in 0..n_el {
            let (ix, iy) = mesh.element_coords(e);
            for i in 0..n_loc {
                let (a, b) = basis.split(i);
                let dof = match continuity {
                    Continuity::Dg => e * n_loc + i,
                    Continuity::Cg => {
                        let gx = (ix * degree + a) % lattice.0;
                        let gy = if dim == 1 { 0 } else { (iy * degree + b) % lattice.1 };
                        gx + lattice.0 * gy
                    }
                };
                element_dofs.push(dof);
            }
        }
        let n_dofs = match continuity {
            Continuity::Dg => n_el * n_loc,
            Continuity::Cg => lattice.0 * lattice.1,
        };
        let mut dof_elements = vec![Vec::new(); n_dofs];
        let mut dof_coords = vec![[T::zero(); 2]; n_dofs];
        for e in 0..n_el {
            for i in 0..n_loc {
                let d = element_dofs[e * n_loc + i];
                if dof_elements[d].is_empty() {
                    dof_coords[d] = mesh.to_physical(e, basis.node(i));
                }
                dof_elements[d].push((e, i));
            }
        }
        let boundary_dofs = if continuity == Continuity::Cg && !periodic {
            (0..n_dofs)
                .filter(|d| {
                    let (gx, gy) = (d % lattice.0, d / lattice.0);
                    gx == 0
                        || gx + 1 == lattice.0
                        || (dim == 2 && (gy == 0 || gy + 1 == lattice.1))
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            mesh,
            continuity,
            basis,
            kernels,
            element_dofs,
            n_dofs,
            lattice,
            dof_coords,
            dof_elements,
            boundary_dofs,
        })
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn continuity(&self) -> Continuity {
        self.continuity
    }

    pub fn is_dg(&self) -> bool {
        self.continuity == Continuity::Dg
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn basis(&self) -> &TensorBasis<T> {
        &self.basis
    }

    pub fn kernels(&self) -> &ElementKernels<T> {
        &self.kernels
    }

    pub fn n_loc(&self) -> usize {
        self.kernels.n_loc
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_elements()
    }

    /// Nodes per direction of the CG lattice.
    pub fn lattice(&self) -> (usize, usize) {
        self.lattice
    }

    pub fn element_dofs(&self, e: usize) -> &[usize] {
        let n = self.n_loc();
        &self.element_dofs[e * n..(e + 1) * n]
    }

    pub fn dof_coords(&self) -> &[[T; 2]] {
        &self.dof_coords
    }

    pub fn dof_elements(&self, dof: usize) -> &[(usize, usize)] {
        &self.dof_elements[dof]
    }

    /// CG dofs on a non-periodic boundary (empty for DG).
    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn gather(&self, u: &[T], e: usize) -> Vec<T> {
        self.element_dofs(e).iter().map(|&d| u[d]).collect()
    }

    pub fn gather_into(&self, u: &[T], e: usize, out: &mut [T]) {
        for (o, &d) in out.iter_mut().zip(self.element_dofs(e)) {
            *o = u[d];
        }
    }

    pub fn local(&self, u: &[T], e: usize) -> LocalPolynomial<T> {
        LocalPolynomial {
            element: e,
            coeffs: self.gather(u, e),
        }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(&self, f: impl Fn([T; 2]) -> T) -> Vec<T> {
        self.dof_coords.iter().map(|x| f(*x)).collect()
    }

    /// Physical derivative `D^k` of a local polynomial at a reference point.
    pub fn evaluate_local(&self, coeffs: &[T], xi: [T; 2], k: [usize; 2]) -> Result<T> {
        let p = self.degree();
        if k[0] > p || k[1] > p || (self.dim() == 1 && k[1] > 0) {
            return Err(Error::InvalidParameter(format!(
                "derivative order {k:?} exceeds degree {p}"
            )));
        }
        let (hx, hy) = self.mesh.spacing();
        let scale = (T::two() / hx).powi(k[0] as i32) * (T::two() / hy).powi(k[1] as i32);
        let v: T = coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| *c * self.basis.eval(i, xi, k))
            .sum();
        Ok(v * scale)
    }

    /// `D^k u_h` on element `e` at reference point `xi`.
    pub fn evaluate_field(&self, u: &[T], e: usize, xi: [T; 2], k: [usize; 2]) -> Result<T> {
        self.check_element(e)?;
        self.evaluate_local(&self.gather(u, e), xi, k)
    }

    /// Cell average `pi_e u`.
    pub fn cell_mean(&self, u: &[T], e: usize) -> T {
        crate::linalg::dot(&self.kernels.mean_weights, &self.gather(u, e))
    }

    pub fn local_seminorm(&self, coeffs: &[T], set: MultiIndexSet) -> T {
        // the semi-norm ignores constants; shifting avoids cancellation
        let shift = coeffs.first().copied().unwrap_or_else(T::zero);
        let c: Vec<T> = coeffs.iter().map(|x| *x - shift).collect();
        self.kernels.gram(set).bilinear(&c, &c).max(T::zero()).sqrt()
    }

    /// Scaled Sobolev semi-norm `||u_h||_e`.
    pub fn scaled_seminorm(&self, u: &[T], e: usize, set: MultiIndexSet) -> T {
        self.local_seminorm(&self.gather(u, e), set)
    }

    pub fn local_mass_matrix(&self, e: usize) -> Result<DenseMatrix<T>> {
        self.check_element(e)?;
        Ok(self.kernels.mass.clone())
    }

    fn check_element(&self, e: usize) -> Result<()> {
        if e < self.num_elements() {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index: e,
                len: self.num_elements(),
            })
        }
    }

    /// Values of `u_h` at the volume quadrature points of `e`.
    pub fn values_at_points(&self, coeffs: &[T]) -> Vec<T> {
        self.kernels
            .phi
            .iter()
            .map(|row| crate::linalg::dot(row, coeffs))
            .collect()
    }

    /// Integral of `u_h` over the domain.
    pub fn integral(&self, u: &[T]) -> T {
        let measure = self.mesh.element_measure(0);
        (0..self.num_elements())
            .map(|e| self.cell_mean(u, e) * measure)
            .sum()
    }

    /// Quadrature of `f(x, u_h, grad u_h)` over the domain with a rule exact
    /// to `order`, summed in element order.
    pub fn integrate_with(
        &self,
        u: &[T],
        order: usize,
        f: impl Fn([T; 2], T, [T; 2]) -> T,
    ) -> Result<T> {
        let rule = quadrature_rule::<T>(self.dim(), order)?;
        let n = self.n_loc();
        let (hx, hy) = self.mesh.spacing();
        let (sx, sy) = (T::two() / hx, T::two() / hy);
        let tables: Vec<(Vec<T>, Vec<[T; 2]>)> = rule
            .points
            .iter()
            .map(|xi| {
                let v = (0..n).map(|i| self.basis.eval(i, *xi, [0, 0])).collect();
                let g = (0..n)
                    .map(|i| {
                        let gy = if self.dim() == 1 {
                            T::zero()
                        } else {
                            self.basis.eval(i, *xi, [0, 1]) * sy
                        };
                        [self.basis.eval(i, *xi, [1, 0]) * sx, gy]
                    })
                    .collect();
                (v, g)
            })
            .collect();
        let det_j = self.kernels.det_j;
        let mut total = T::zero();
        let mut c = vec![T::zero(); n];
        for e in 0..self.num_elements() {
            self.gather_into(u, e, &mut c);
            let mut local = T::zero();
            for (q, xi) in rule.points.iter().enumerate() {
                let (v, g) = &tables[q];
                let uh = crate::linalg::dot(v, &c);
                let mut gu = [T::zero(); 2];
                for i in 0..n {
                    gu[0] += g[i][0] * c[i];
                    gu[1] += g[i][1] * c[i];
                }
                local += rule.weights[q] * det_j * f(self.mesh.to_physical(e, *xi), uh, gu);
            }
            total += local;
        }
        Ok(total)
    }

    /// `||u_h - u||_{L2}` with a quadrature rule of order `2p + 4`.
    pub fn l2_error(&self, u: &[T], exact: impl Fn([T; 2]) -> T) -> Result<T> {
        let order = 2 * self.degree() + 4;
        Ok(self
            .integrate_with(u, order, |x, uh, _| (uh - exact(x)).powi(2))?
            .sqrt())
    }

    /// Broken `|u_h - u|_{H1}`.
    pub fn h1_error(&self, u: &[T], exact_grad: impl Fn([T; 2]) -> [T; 2]) -> Result<T> {
        let order = 2 * self.degree() + 4;
        Ok(self
            .integrate_with(u, order, |x, _, g| {
                let ge = exact_grad(x);
                (g[0] - ge[0]).powi(2) + (g[1] - ge[1]).powi(2)
            })?
            .sqrt())
    }
}

/// Coefficient vectors of `m` conserved quantities over one space.
#[derive(Clone, Debug, PartialEq)]
pub struct StateField<T> {
    pub components: Vec<Vec<T>>,
}

impl<T: Real> StateField<T> {
    pub fn zeros(m: usize, n_dofs: usize) -> Self {
        Self {
            components: vec![vec![T::zero(); n_dofs]; m],
        }
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.components.first().map_or(0, Vec::len)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|v| v.is_finite())
    }

    /// `self = a * self + b * other`.
    pub fn axpby(&mut self, a: T, b: T, other: &Self) {
        for (u, v) in self.components.iter_mut().zip(&other.components) {
            for (x, y) in u.iter_mut().zip(v) {
                *x = a * *x + b * *y;
            }
        }
    }

    /// State vector at one dof.
    pub fn at(&self, dof: usize) -> Vec<T> {
        self.components.iter().map(|c| c[dof]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(p: usize, cont: Continuity, n: usize) -> FeSpace<f64> {
        FeSpace::new(Mesh::build_uniform_line(0.0, 1.0, n, false).unwrap(), cont, p).unwrap()
    }

    fn square(p: usize, cont: Continuity, n: usize, periodic: bool) -> FeSpace<f64> {
        let m = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, n, n, periodic).unwrap();
        FeSpace::new(m, cont, p).unwrap()
    }

    #[test]
    fn dof_counts() {
        assert_eq!(line(1, Continuity::Cg, 4).n_dofs(), 5);
        assert_eq!(line(2, Continuity::Cg, 4).n_dofs(), 9);
        assert_eq!(line(2, Continuity::Dg, 4).n_dofs(), 12);
        assert_eq!(square(2, Continuity::Cg, 3, false).n_dofs(), 49);
        assert_eq!(square(2, Continuity::Cg, 3, true).n_dofs(), 36);
        let dg = square(1, Continuity::Dg, 3, false);
        assert_eq!(dg.n_dofs(), dg.n_loc() * dg.num_elements());
        assert_eq!(square(1, Continuity::Cg, 2, false).boundary_dofs().len(), 8);
    }

    #[test]
    fn field_evaluation_examples() {
        let s = line(1, Continuity::Cg, 1 + 1);
        let u = s.interpolate(|x| x[0]);
        for e in 0..2 {
            assert_relative_eq!(s.evaluate_field(&u, e, [0.3, 0.0], [1, 0]).unwrap(), 1.0, epsilon = 1e-13);
        }
        let s = line(2, Continuity::Cg, 1 + 2);
        let u = s.interpolate(|x| x[0] * x[0]);
        assert_relative_eq!(s.evaluate_field(&u, 1, [0.1, 0.0], [2, 0]).unwrap(), 2.0, epsilon = 1e-11);
        assert!(s.evaluate_field(&u, 1, [0.1, 0.0], [3, 0]).is_err());
        let c = s.interpolate(|_| 4.0);
        assert!(s.evaluate_field(&c, 0, [0.2, 0.0], [1, 0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn cell_means() {
        let one = |p| FeSpace::new(Mesh::build_uniform_line(0.0, 1.0, 2, false).unwrap(), Continuity::Dg, p).unwrap();
        let s = one(1);
        let u = s.interpolate(|x| 2.0 * x[0]);
        // element 0 is [0, 0.5]
        assert_relative_eq!(s.cell_mean(&u, 0), 0.5, epsilon = 1e-14);
        let s = one(2);
        let u = s.interpolate(|_| 3.0);
        assert_relative_eq!(s.cell_mean(&u, 1), 3.0, epsilon = 1e-14);
    }

    #[test]
    fn seminorm_examples() {
        let h = 0.25;
        let s = FeSpace::new(Mesh::build_uniform_line(0.0, 1.0, 4, false).unwrap(), Continuity::Dg, 1).unwrap();
        let u = s.interpolate(|x| x[0]);
        assert_relative_eq!(s.scaled_seminorm(&u, 2, MultiIndexSet::TotalDegree), h, epsilon = 1e-14);

        let s = FeSpace::new(
            Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 1, 1, false).unwrap(),
            Continuity::Dg,
            1,
        )
        .unwrap();
        let u = s.interpolate(|x| x[0] + x[1]);
        assert_relative_eq!(s.scaled_seminorm(&u, 0, MultiIndexSet::TotalDegree), 2f64.sqrt(), epsilon = 1e-13);

        let s = FeSpace::new(Mesh::build_uniform_line(0.0, 1.0, 2, false).unwrap(), Continuity::Dg, 2).unwrap();
        let u = s.interpolate(|x| x[0] * x[0]);
        // element 0 = [0, 1/2]: h^1 * int (2x)^2 + h^3 * int 4
        let h = 0.5f64;
        let expected = (h * 4.0 * h.powi(3) / 3.0 + h.powi(3) * 4.0 * h).sqrt();
        assert_relative_eq!(s.scaled_seminorm(&u, 0, MultiIndexSet::TotalDegree), expected, epsilon = 1e-13);
    }

    #[test]
    fn mass_matrix_textbook() {
        let s = FeSpace::new(Mesh::build_uniform_line(0.0, 0.5, 2, false).unwrap(), Continuity::Cg, 1).unwrap();
        let m = s.local_mass_matrix(0).unwrap();
        let h = 0.25;
        assert_relative_eq!(m[(0, 0)], h / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m[(0, 1)], h / 6.0, epsilon = 1e-15);
        assert!(m.max_asymmetry() < 1e-15);
        assert!(s.local_mass_matrix(9).is_err());
    }

    #[test]
    fn extension_reproduces_global_polynomial() {
        let s = square(2, Continuity::Dg, 3, false);
        let u = s.interpolate(|x| 1.0 + x[0] * x[1] - 2.0 * x[1] * x[1]);
        let k = s.kernels();
        for (si, side) in Side::ALL.iter().enumerate() {
            let nb = s.mesh().neighbor(4, *side).unwrap();
            let ext = k.extension[si].matvec(&s.gather(&u, nb));
            for (a, b) in ext.iter().zip(s.gather(&u, 4)) {
                assert_relative_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn l2_error_of_interpolant() {
        let s = line(1, Continuity::Cg, 8);
        let u = s.interpolate(|x| x[0]);
        assert!(s.l2_error(&u, |x| x[0]).unwrap() < 1e-14);
        let err = s.l2_error(&u, |x| x[0] + 1.0).unwrap();
        assert_relative_eq!(err, 1.0, epsilon = 1e-13);
    }
}
