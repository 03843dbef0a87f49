//! Gradient projection `P_h` and the fluctuation operator
//! `kappa_e(v) = v - P_h v` restricted to an element.
//!
//! For DG spaces `P_h` is the elementwise L2 projection, so the fluctuation
//! of any discrete gradient vanishes. For CG spaces `P_h` is a Clement-type
//! quasi-interpolant: at each global Lagrange node it takes the arithmetic
//! mean of the one-sided gradients of all adjacent elements.

use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use crate::space::{Continuity, FeSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    DgL2,
    CgClement,
}

impl ProjectionMode {
    pub fn for_space<T: Real>(space: &FeSpace<T>) -> Self {
        match space.continuity() {
            Continuity::Dg => ProjectionMode::DgL2,
            Continuity::Cg => ProjectionMode::CgClement,
        }
    }
}

/// Projected gradient of one scalar field.
#[derive(Clone, Debug)]
pub struct GradientProjection<T> {
    pub mode: ProjectionMode,
    /// CG: `P_h grad u` at every global node. Empty in DG mode.
    pub nodal: Vec<[T; 2]>,
}

/// `grad u_h` averaged over the elements adjacent to each node.
pub fn nodal_average_gradient<T: Real>(space: &FeSpace<T>, u: &[T]) -> Vec<[T; 2]> {
    let k = space.kernels();
    let n = space.n_loc();
    let mut sum = vec![[T::zero(); 2]; space.n_dofs()];
    let mut c = vec![T::zero(); n];
    for e in 0..space.num_elements() {
        space.gather_into(u, e, &mut c);
        for (l, &d) in space.element_dofs(e).iter().enumerate() {
            let mut g = [T::zero(); 2];
            for j in 0..n {
                g[0] += k.node_grad[l][j][0] * c[j];
                g[1] += k.node_grad[l][j][1] * c[j];
            }
            sum[d][0] += g[0];
            sum[d][1] += g[1];
        }
    }
    for (d, s) in sum.iter_mut().enumerate() {
        let m = T::count(space.dof_elements(d).len());
        s[0] /= m;
        s[1] /= m;
    }
    sum
}

pub fn project_gradient<T: Real>(space: &FeSpace<T>, u: &[T]) -> GradientProjection<T> {
    let mode = ProjectionMode::for_space(space);
    let nodal = match mode {
        ProjectionMode::DgL2 => Vec::new(),
        ProjectionMode::CgClement => nodal_average_gradient(space, u),
    };
    GradientProjection { mode, nodal }
}

impl<T: Real> GradientProjection<T> {
    /// `kappa_e(grad u_h)` at the volume quadrature points of `e`.
    pub fn fluctuation(&self, space: &FeSpace<T>, u: &[T], e: usize) -> Vec<[T; 2]> {
        let k = space.kernels();
        let nq = k.num_points();
        if self.mode == ProjectionMode::DgL2 {
            return vec![[T::zero(); 2]; nq];
        }
        let c = space.gather(u, e);
        let dofs = space.element_dofs(e);
        (0..nq)
            .map(|q| {
                let mut g = [T::zero(); 2];
                for (j, &d) in dofs.iter().enumerate() {
                    let phi = k.phi[q][j];
                    g[0] += k.grad[q][j][0] * c[j] - phi * self.nodal[d][0];
                    g[1] += k.grad[q][j][1] * c[j] - phi * self.nodal[d][1];
                }
                g
            })
            .collect()
    }

    /// `||kappa_e(grad u_h)||_{0,K_e}`.
    pub fn fluctuation_norm(&self, space: &FeSpace<T>, u: &[T], e: usize) -> T {
        let w = &space.kernels().weights;
        self.fluctuation(space, u, e)
            .iter()
            .zip(w)
            .map(|(g, w)| *w * (g[0] * g[0] + g[1] * g[1]))
            .sum::<T>()
            .sqrt()
    }
}

/// `kappa_e(grad u_h)` at the quadrature points of `e`, projecting on the fly.
pub fn fluctuation<T: Real>(space: &FeSpace<T>, u: &[T], e: usize) -> Vec<[T; 2]> {
    project_gradient(space, u).fluctuation(space, u, e)
}

/// Adds `sum_e sum_q k_e[q] . kappa_e(grad phi_i)(x_q)` to `out[i]` for every
/// global basis function `phi_i`, where `moments[e][q]` already contains the
/// quadrature weight and any coefficient.
pub fn apply_fluctuation_adjoint<T: Real>(
    space: &FeSpace<T>,
    moments: &[Vec<[T; 2]>],
    out: &mut [T],
) {
    if space.is_dg() {
        return;
    }
    let k = space.kernels();
    let n = space.n_loc();
    let nq = k.num_points();
    // nodal moments m_n = sum_e sum_{l: node(e,l)=n} sum_q k_e[q] phi_l(x_q)
    let mut nodal = vec![[T::zero(); 2]; space.n_dofs()];
    for (e, ke) in moments.iter().enumerate() {
        let dofs = space.element_dofs(e);
        for j in 0..n {
            let mut g = T::zero();
            let mut m = [T::zero(); 2];
            for q in 0..nq {
                g += ke[q][0] * k.grad[q][j][0] + ke[q][1] * k.grad[q][j][1];
                m[0] += ke[q][0] * k.phi[q][j];
                m[1] += ke[q][1] * k.phi[q][j];
            }
            out[dofs[j]] += g;
            nodal[dofs[j]][0] += m[0];
            nodal[dofs[j]][1] += m[1];
        }
    }
    for (d, m) in nodal.iter().enumerate() {
        if m[0] == T::zero() && m[1] == T::zero() {
            continue;
        }
        let adj = space.dof_elements(d);
        let inv = T::one() / T::count(adj.len());
        for &(e, l) in adj {
            let dofs = space.element_dofs(e);
            for j in 0..n {
                let g = k.node_grad[l][j];
                out[dofs[j]] -= inv * (m[0] * g[0] + m[1] * g[1]);
            }
        }
    }
}

/// Explicit matrix of `v -> kappa_e(grad v)` at the quadrature points of one
/// element, acting on the dofs of its patch.
#[derive(Clone, Debug)]
pub struct FluctuationMap<T> {
    pub element: usize,
    /// Patch dofs in canonical patch-lattice order.
    pub dofs: Vec<usize>,
    /// Row `2 q + c` holds component `c` at quadrature point `q`.
    pub matrix: DenseMatrix<T>,
}

/// Dofs of the elements of `Omega_e`, ordered by their position in the local
/// patch lattice so that congruent patches produce identical layouts.
pub fn patch_dofs<T: Real>(space: &FeSpace<T>, e: usize) -> Vec<usize> {
    let mesh = space.mesh();
    let p = space.degree();
    let width = 3 * p + 1;
    let (ix, iy) = mesh.element_coords(e);
    let dys: &[isize] = if space.dim() == 1 { &[0] } else { &[-1, 0, 1] };
    let mut keyed = Vec::new();
    for &dy in dys {
        for dx in -1isize..=1 {
            let Some(nb) = mesh.offset_element(ix, iy, dx, dy) else {
                continue;
            };
            for (i, &d) in space.element_dofs(nb).iter().enumerate() {
                let (a, b) = space.basis().split(i);
                let px = (dx + 1) as usize * p + a;
                let py = (dy + 1) as usize * p + b;
                keyed.push((px + width * py, d));
            }
        }
    }
    keyed.sort_by_key(|&(key, _)| key);
    let mut seen = std::collections::HashSet::new();
    keyed
        .into_iter()
        .filter_map(|(_, d)| seen.insert(d).then_some(d))
        .collect()
}

pub fn fluctuation_map<T: Real>(space: &FeSpace<T>, e: usize) -> FluctuationMap<T> {
    let k = space.kernels();
    let nq = k.num_points();
    let n = space.n_loc();
    if space.is_dg() {
        return FluctuationMap {
            element: e,
            dofs: space.element_dofs(e).to_vec(),
            matrix: DenseMatrix::zeros(2 * nq, n),
        };
    }
    let dofs = patch_dofs(space, e);
    let col = |d: usize| dofs.iter().position(|&x| x == d).expect("dof in patch");
    let mut matrix = DenseMatrix::zeros(2 * nq, dofs.len());
    let own = space.element_dofs(e);
    for (j, &d) in own.iter().enumerate() {
        let cj = col(d);
        for q in 0..nq {
            matrix[(2 * q, cj)] += k.grad[q][j][0];
            matrix[(2 * q + 1, cj)] += k.grad[q][j][1];
        }
    }
    for (l, &node) in own.iter().enumerate() {
        let adj = space.dof_elements(node);
        let inv = T::one() / T::count(adj.len());
        for &(e2, l2) in adj {
            for (j, &d) in space.element_dofs(e2).iter().enumerate() {
                let cj = col(d);
                let g = k.node_grad[l2][j];
                for q in 0..nq {
                    let phi = k.phi[q][l] * inv;
                    matrix[(2 * q, cj)] -= phi * g[0];
                    matrix[(2 * q + 1, cj)] -= phi * g[1];
                }
            }
        }
    }
    FluctuationMap {
        element: e,
        dofs,
        matrix,
    }
}

impl<T: Real> FluctuationMap<T> {
    /// `int_{K_e} kappa_e(grad v) . kappa_e(grad w)` as a matrix on the patch
    /// dofs.
    pub fn gram(&self, space: &FeSpace<T>) -> DenseMatrix<T> {
        let w = &space.kernels().weights;
        let n = self.dofs.len();
        let mut g = DenseMatrix::zeros(n, n);
        for (q, wq) in w.iter().enumerate() {
            for c in 0..2 {
                let row = self.matrix.row(2 * q + c);
                for i in 0..n {
                    let a = *wq * row[i];
                    if a == T::zero() {
                        continue;
                    }
                    for j in 0..n {
                        g[(i, j)] += a * row[j];
                    }
                }
            }
        }
        g
    }
}
