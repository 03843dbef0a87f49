//! Dissipative stabilization: low-order viscosity, high-order fluctuation
//! (orthogonal subscale) terms, their blend, and the LPS forms `s_h` and
//! `d_h` used for steady problems.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_eigen, DenseMatrix};
use crate::projection::{apply_fluctuation_adjoint, fluctuation_map, project_gradient, FluctuationMap};
use crate::scalar::Real;
use crate::space::FeSpace;

/// `nu_e = lambda_e h_e / (2 p)`.
pub fn viscosity<T: Real>(lambda: T, h: T, p: usize) -> Result<T> {
    if p == 0 {
        return Err(Error::Unsupported("viscosity for p = 0".into()));
    }
    Ok(lambda * h / T::count(2 * p))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaMode {
    #[default]
    Computed,
    One,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabParams<T> {
    pub nu: Vec<T>,
    pub gamma: Vec<T>,
    pub omega: Vec<T>,
}

impl<T: Real> StabParams<T> {
    pub fn validate(&self) -> Result<()> {
        let n = self.nu.len();
        if self.gamma.len() != n || self.omega.len() != n {
            return Err(Error::InvalidParameter("parameter lengths differ".into()));
        }
        let unit = |x: &T| *x >= T::zero() && *x <= T::one();
        if self.nu.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::InvalidParameter("negative viscosity".into()));
        }
        if !self.gamma.iter().all(unit) {
            return Err(Error::InvalidParameter("gamma outside [0, 1]".into()));
        }
        if !self.omega.iter().all(|w| unit(w) && *w > T::zero()) {
            return Err(Error::InvalidParameter("omega outside (0, 1]".into()));
        }
        Ok(())
    }
}

fn local_grad_dot<T: Real>(space: &FeSpace<T>, cu: &[T], cw: &[T]) -> T {
    space.kernels().stiffness.bilinear(cw, cu)
}

fn fluct_dot<T: Real>(space: &FeSpace<T>, a: &[[T; 2]], b: &[[T; 2]]) -> T {
    space
        .kernels()
        .weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| *w * (x[0] * y[0] + x[1] * y[1]))
        .sum()
}

/// `nu_e (grad w, grad u)_{K_e}` for every element.
pub fn low_order_apply<T: Real>(space: &FeSpace<T>, nu: &[T], u: &[T], w: &[T]) -> Vec<T> {
    (0..space.num_elements())
        .map(|e| nu[e] * local_grad_dot(space, &space.gather(u, e), &space.gather(w, e)))
        .collect()
}

/// `nu_e (kappa_e grad w, kappa_e grad u)_{K_e}` for every element.
pub fn high_order_apply<T: Real>(space: &FeSpace<T>, nu: &[T], u: &[T], w: &[T]) -> Vec<T> {
    if space.is_dg() {
        return vec![T::zero(); space.num_elements()];
    }
    let pu = project_gradient(space, u);
    let pw = project_gradient(space, w);
    (0..space.num_elements())
        .map(|e| nu[e] * fluct_dot(space, &pu.fluctuation(space, u, e), &pw.fluctuation(space, w, e)))
        .collect()
}

/// `sum_e [gamma_e s^H_e(u, w) + (1 - gamma_e) s^L_e(u, w)]`.
pub fn blended_apply<T: Real>(space: &FeSpace<T>, nu: &[T], gamma: &[T], u: &[T], w: &[T]) -> T {
    let lo = low_order_apply(space, nu, u, w);
    let hi = high_order_apply(space, nu, u, w);
    (0..space.num_elements())
        .map(|e| gamma[e] * hi[e] + (T::one() - gamma[e]) * lo[e])
        .sum()
}

/// Vector `r` with `r_i = ` blended form of `(u, phi_i)`, so that
/// `blended_apply(u, w) = w . r`.
pub fn blended_vector<T: Real>(space: &FeSpace<T>, nu: &[T], gamma: &[T], u: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); space.n_dofs()];
    add_blended_vector(space, nu, gamma, u, T::one(), &mut out);
    out
}

/// `out += scale * blended_vector(...)`.
pub fn add_blended_vector<T: Real>(
    space: &FeSpace<T>,
    nu: &[T],
    gamma: &[T],
    u: &[T],
    scale: T,
    out: &mut [T],
) {
    let k = space.kernels();
    let n = space.n_loc();
    let mut c = vec![T::zero(); n];
    for e in 0..space.num_elements() {
        let a = scale * (T::one() - gamma[e]) * nu[e];
        if a == T::zero() {
            continue;
        }
        space.gather_into(u, e, &mut c);
        let kc = k.stiffness.matvec(&c);
        for (i, &d) in space.element_dofs(e).iter().enumerate() {
            out[d] += a * kc[i];
        }
    }
    if space.is_dg() || gamma.iter().zip(nu).all(|(g, v)| *g * *v == T::zero()) {
        return;
    }
    let proj = project_gradient(space, u);
    let nq = k.num_points();
    let moments: Vec<Vec<[T; 2]>> = (0..space.num_elements())
        .map(|e| {
            let a = scale * gamma[e] * nu[e];
            if a == T::zero() {
                return vec![[T::zero(); 2]; nq];
            }
            proj.fluctuation(space, u, e)
                .iter()
                .zip(&k.weights)
                .map(|(g, w)| [a * *w * g[0], a * *w * g[1]])
                .collect()
        })
        .collect();
    apply_fluctuation_adjoint(space, &moments, out);
}

/// `(grad v, grad w)_{Omega_e}`.
fn patch_grad_dot<T: Real>(space: &FeSpace<T>, e: usize, v: &[T], w: &[T]) -> T {
    space
        .mesh()
        .element_patch(e)
        .expect("valid element")
        .into_iter()
        .map(|e2| local_grad_dot(space, &space.gather(v, e2), &space.gather(w, e2)))
        .sum()
}

/// `s_h(v, w) = sum_e omega_e nu_e (kappa_e grad v, kappa_e grad w)_{K_e}`.
pub fn lps_form_sh<T: Real>(space: &FeSpace<T>, params: &StabParams<T>, v: &[T], w: &[T]) -> T {
    let hi = high_order_apply(space, &params.nu, v, w);
    (0..space.num_elements()).map(|e| params.omega[e] * hi[e]).sum()
}

/// `d_h(u; v, w)` with `gamma` frozen from `u`. DG spaces use `K_e` in place
/// of the vertex patch.
pub fn nonlinear_form_dh<T: Real>(space: &FeSpace<T>, params: &StabParams<T>, v: &[T], w: &[T]) -> T {
    let hi = high_order_apply(space, &params.nu, v, w);
    let lo = low_order_apply(space, &params.nu, v, w);
    let mut total = T::zero();
    for e in 0..space.num_elements() {
        let (g, nu, om) = (params.gamma[e], params.nu[e], params.omega[e]);
        let one = T::one();
        let grad = if space.is_dg() {
            lo[e]
        } else if (one - g) * nu == T::zero() {
            T::zero()
        } else {
            nu * patch_grad_dot(space, e, v, w)
        };
        total += (one - g) * (grad - om * hi[e]) + g * (one - om) * hi[e];
    }
    total
}

/// Stiffness matrix of the patch `Omega_e` on the dofs of `map`.
pub fn patch_stiffness<T: Real>(space: &FeSpace<T>, map: &FluctuationMap<T>) -> DenseMatrix<T> {
    let n = map.dofs.len();
    let mut a = DenseMatrix::zeros(n, n);
    let k = &space.kernels().stiffness;
    for e2 in space.mesh().element_patch(map.element).expect("valid element") {
        let cols: Vec<usize> = space
            .element_dofs(e2)
            .iter()
            .map(|d| map.dofs.iter().position(|x| x == d).expect("dof in patch"))
            .collect();
        for (i, &ci) in cols.iter().enumerate() {
            for (j, &cj) in cols.iter().enumerate() {
                a[(ci, cj)] += k[(i, j)];
            }
        }
    }
    a
}

/// Smallest generalized eigenvalue of (patch stiffness, fluctuation Gram),
/// capped at one. Both matrices vanish on constants; the quotient is
/// restricted to the range of the stiffness matrix.
pub fn omega_from_matrices<T: Real>(stiff: &DenseMatrix<T>, gram: &DenseMatrix<T>) -> T {
    let (vals, vecs) = symmetric_eigen(stiff);
    let n = vals.len();
    let lmax = vals.iter().fold(T::zero(), |m, v| m.max(*v));
    if lmax <= T::zero() {
        return T::one();
    }
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > lmax * T::lit(1e-10)).collect();
    let r = keep.len();
    // C = L^{-1/2} V^T B V L^{-1/2}
    let mut bv = DenseMatrix::zeros(n, r);
    for (c, &i) in keep.iter().enumerate() {
        let s = T::one() / vals[i].sqrt();
        for row in 0..n {
            let mut acc = T::zero();
            for j in 0..n {
                acc += gram[(row, j)] * vecs[(j, i)];
            }
            bv[(row, c)] = acc * s;
        }
    }
    let mut cmat = DenseMatrix::zeros(r, r);
    for (a, &i) in keep.iter().enumerate() {
        let s = T::one() / vals[i].sqrt();
        for b in 0..r {
            let mut acc = T::zero();
            for row in 0..n {
                acc += vecs[(row, i)] * bv[(row, b)];
            }
            cmat[(a, b)] = acc * s;
        }
    }
    for a in 0..r {
        for b in a + 1..r {
            let m = (cmat[(a, b)] + cmat[(b, a)]) * T::half();
            cmat[(a, b)] = m;
            cmat[(b, a)] = m;
        }
    }
    let (mu, _) = symmetric_eigen(&cmat);
    let mu_max = mu.last().copied().unwrap_or(T::zero());
    if mu_max <= T::lit(1e-12) {
        T::one()
    } else {
        (T::one() / mu_max).min(T::one())
    }
}

/// Discrete `omega_e` of one element.
pub fn estimate_omega_e<T: Real>(space: &FeSpace<T>, e: usize) -> Result<T> {
    if e >= space.num_elements() {
        return Err(Error::IndexOutOfRange {
            index: e,
            len: space.num_elements(),
        });
    }
    if space.is_dg() {
        return Ok(T::one());
    }
    let map = fluctuation_map(space, e);
    Ok(omega_from_matrices(&patch_stiffness(space, &map), &map.gram(space)))
}

/// `omega_e` for all elements. Congruent patches share their value.
pub fn omega_field<T: Real>(space: &FeSpace<T>, mode: OmegaMode) -> Vec<T> {
    let n_el = space.num_elements();
    if mode == OmegaMode::One || space.is_dg() {
        return vec![T::one(); n_el];
    }
    let mesh = space.mesh();
    let (nx, ny) = mesh.shape();
    let min_n = if mesh.is_periodic() { 4 } else { 3 };
    let cacheable = nx >= min_n && (space.dim() == 1 || ny >= min_n);
    let mut cache: HashMap<u16, T> = HashMap::new();
    (0..n_el)
        .map(|e| {
            if !cacheable {
                return estimate_omega_e(space, e).expect("valid element");
            }
            let (ix, iy) = mesh.element_coords(e);
            let mut key = 0u16;
            let mut bit = 0;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if mesh.offset_element(ix, iy, dx, dy).is_some() {
                        key |= 1 << bit;
                    }
                    bit += 1;
                }
            }
            *cache
                .entry(key)
                .or_insert_with(|| estimate_omega_e(space, e).expect("valid element"))
        })
        .collect()
}

/// Calls `add(i, j, value)` for every entry of the matrix of
/// `s_h + d_h`, which equals
/// `sum_e (1 - gamma_e) nu_e (grad, grad)_{Omega_e} + gamma_e nu_e (kappa, kappa)_{K_e}`
/// (with `K_e` in place of `Omega_e` for DG).
pub fn add_lps_matrix<T: Real>(
    space: &FeSpace<T>,
    nu: &[T],
    gamma: &[T],
    mut add: impl FnMut(usize, usize, T),
) {
    let n_el = space.num_elements();
    let mut nu_eff = vec![T::zero(); n_el];
    for e in 0..n_el {
        let a = (T::one() - gamma[e]) * nu[e];
        if a == T::zero() {
            continue;
        }
        if space.is_dg() {
            nu_eff[e] += a;
        } else {
            for e2 in space.mesh().element_patch(e).expect("valid element") {
                nu_eff[e2] += a;
            }
        }
    }
    let k = &space.kernels().stiffness;
    for e in 0..n_el {
        if nu_eff[e] == T::zero() {
            continue;
        }
        let dofs = space.element_dofs(e);
        for (i, &di) in dofs.iter().enumerate() {
            for (j, &dj) in dofs.iter().enumerate() {
                add(di, dj, nu_eff[e] * k[(i, j)]);
            }
        }
    }
    let coeff: Vec<T> = (0..n_el).map(|e| gamma[e] * nu[e]).collect();
    add_fluctuation_matrix(space, &coeff, add);
}

/// Calls `add(i, j, value)` for the matrix of
/// `sum_e coeff_e (kappa_e grad, kappa_e grad)_{K_e}` (nothing for DG).
pub fn add_fluctuation_matrix<T: Real>(space: &FeSpace<T>, coeff: &[T], mut add: impl FnMut(usize, usize, T)) {
    if space.is_dg() {
        return;
    }
    for e in 0..space.num_elements() {
        let a = coeff[e];
        if a == T::zero() {
            continue;
        }
        let map = fluctuation_map(space, e);
        let g = map.gram(space);
        for (i, &di) in map.dofs.iter().enumerate() {
            for (j, &dj) in map.dofs.iter().enumerate() {
                let v = g[(i, j)];
                if v != T::zero() {
                    add(di, dj, a * v);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::space::Continuity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cg_square(p: usize, n: usize) -> FeSpace<f64> {
        let m = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, n, n, false).unwrap();
        FeSpace::new(m, Continuity::Cg, p).unwrap()
    }

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn viscosity_examples() {
        assert_eq!(viscosity(2.0, 0.5, 1).unwrap(), 0.5);
        assert_eq!(viscosity(1.0, 1.0 / 128.0, 2).unwrap(), 1.0 / 512.0);
        assert_eq!(viscosity(0.0, 0.3, 1).unwrap(), 0.0);
        assert!(viscosity(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn low_order_examples() {
        let m = Mesh::<f64>::build_uniform_line(0.0, 1.0, 1 + 1, false).unwrap();
        let s = FeSpace::new(m, Continuity::Cg, 1).unwrap();
        let x = s.interpolate(|p| p[0]);
        let total: f64 = low_order_apply(&s, &[1.0, 1.0], &x, &x).iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        let c = s.interpolate(|_| 2.0);
        assert!(low_order_apply(&s, &[1.0, 1.0], &c, &x).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn blended_vector_matches_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for cont in [Continuity::Cg, Continuity::Dg] {
            let m = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 4, 3, false).unwrap();
            let s = FeSpace::new(m, cont, 2).unwrap();
            let u = random(s.n_dofs(), &mut rng);
            let w = random(s.n_dofs(), &mut rng);
            let nu: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
            let g: Vec<f64> = (0..12).map(|_| rng.gen_range(0.0..1.0)).collect();
            let r = blended_vector(&s, &nu, &g, &u);
            let a: f64 = r.iter().zip(&w).map(|(x, y)| x * y).sum();
            let b = blended_apply(&s, &nu, &g, &u, &w);
            assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()));
            // symmetry and linearity in gamma
            let b2 = blended_apply(&s, &nu, &g, &w, &u);
            assert!((b - b2).abs() < 1e-11 * (1.0 + b.abs()));
            let half = vec![0.5; 12];
            let mean = 0.5 * (blended_apply(&s, &nu, &vec![0.0; 12], &u, &w) + blended_apply(&s, &nu, &vec![1.0; 12], &u, &w));
            assert!((blended_apply(&s, &nu, &half, &u, &w) - mean).abs() < 1e-11);
        }
    }

    #[test]
    fn omega_is_rayleigh_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = Mesh::<f64>::build_uniform_line(0.0, 1.0, 3, false).unwrap();
        let s = FeSpace::new(m, Continuity::Cg, 1).unwrap();
        let map = fluctuation_map(&s, 1);
        let a = patch_stiffness(&s, &map);
        let b = map.gram(&s);
        let omega = omega_from_matrices(&a, &b);
        assert!(omega > 0.0 && omega <= 1.0);
        // brute-force Rayleigh quotients over random directions
        let mut best = f64::INFINITY;
        for _ in 0..20000 {
            let v = random(map.dofs.len(), &mut rng);
            let den = b.bilinear(&v, &v);
            if den > 1e-14 {
                best = best.min(a.bilinear(&v, &v) / den);
            }
        }
        assert!(best.min(1.0) >= omega - 1e-10);
        assert!((best.min(1.0) - omega) < 0.05);
    }

    #[test]
    fn omega_field_cache_matches_direct() {
        let s = cg_square(2, 5);
        let field = omega_field(&s, OmegaMode::Computed);
        for e in [0, 2, 7, 12, 24] {
            assert!((field[e] - estimate_omega_e(&s, e).unwrap()).abs() < 1e-12);
        }
        assert!(field.iter().all(|w| *w > 0.0 && *w <= 1.0));
        let dg = FeSpace::new(Mesh::<f64>::build_uniform_line(0.0, 1.0, 4, false).unwrap(), Continuity::Dg, 1).unwrap();
        assert!(omega_field(&dg, OmegaMode::Computed).iter().all(|w| *w == 1.0));
    }

    #[test]
    fn dh_nonnegative_and_sum_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let s = cg_square(1, 4);
        let n_el = s.num_elements();
        let omega = omega_field(&s, OmegaMode::Computed);
        for _ in 0..10 {
            let params = StabParams {
                nu: (0..n_el).map(|_| rng.gen_range(0.0..1.0)).collect(),
                gamma: (0..n_el).map(|_| rng.gen_range(0.0..1.0)).collect(),
                omega: omega.clone(),
            };
            params.validate().unwrap();
            let v = random(s.n_dofs(), &mut rng);
            let w = random(s.n_dofs(), &mut rng);
            let dh = nonlinear_form_dh(&s, &params, &v, &v);
            let grad2: f64 = low_order_apply(&s, &vec![1.0; n_el], &v, &v).iter().sum();
            assert!(dh >= -1e-12 * grad2);
            let mut mat = DenseMatrix::zeros(s.n_dofs(), s.n_dofs());
            add_lps_matrix(&s, &params.nu, &params.gamma, |i, j, x| mat[(i, j)] += x);
            let direct = lps_form_sh(&s, &params, &v, &w) + nonlinear_form_dh(&s, &params, &v, &w);
            assert!((mat.bilinear(&w, &v) - direct).abs() < 1e-11 * (1.0 + direct.abs()));
        }
        let ones = StabParams {
            nu: vec![0.7; n_el],
            gamma: vec![1.0; n_el],
            omega: vec![1.0; n_el],
        };
        let v = random(s.n_dofs(), &mut rng);
        assert!(nonlinear_form_dh(&s, &ones, &v, &v).abs() < 1e-14);
    }
}
