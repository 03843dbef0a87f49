//! Steady convection-diffusion-reaction problems: CG with `a + s_h + d_h`,
//! symmetric interior penalty DG with `a + d_h`, Picard iteration over the
//! blending factors, and error norms.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hyperbolic::Scheme;
use crate::linalg::{solve_sparse, CsrMatrix};
use crate::scalar::Real;
use crate::space::FeSpace;
use crate::stabilization::{add_fluctuation_matrix, add_lps_matrix, lps_form_sh, omega_field, viscosity, OmegaMode, StabParams};
use crate::weno::{sensor_field, WeightMode, WenoConfig};

pub type ScalarFn<T> = Arc<dyn Fn([T; 2]) -> T + Send + Sync>;
pub type VectorFn<T> = Arc<dyn Fn([T; 2]) -> [T; 2] + Send + Sync>;

/// `-eps Lap u + b . grad u + c u = g` with `u = u_D` on the boundary.
#[derive(Clone)]
pub struct CdrProblem<T> {
    pub epsilon: T,
    pub velocity: VectorFn<T>,
    pub velocity_divergence: ScalarFn<T>,
    pub reaction: ScalarFn<T>,
    pub source: ScalarFn<T>,
    pub dirichlet: ScalarFn<T>,
    pub exact: Option<ScalarFn<T>>,
    pub exact_gradient: Option<VectorFn<T>>,
}

impl<T> fmt::Debug for CdrProblem<T>
where
    T: fmt::Debug,
{
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CdrProblem")
            .field("epsilon", &self.epsilon)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl<T: Real> CdrProblem<T> {
    pub fn new(
        epsilon: T,
        velocity: VectorFn<T>,
        velocity_divergence: ScalarFn<T>,
        reaction: ScalarFn<T>,
        source: ScalarFn<T>,
        dirichlet: ScalarFn<T>,
    ) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::InvalidParameter("diffusion must be positive".into()));
        }
        Ok(Self {
            epsilon,
            velocity,
            velocity_divergence,
            reaction,
            source,
            dirichlet,
            exact: None,
            exact_gradient: None,
        })
    }

    pub fn with_exact(mut self, u: ScalarFn<T>, grad: VectorFn<T>) -> Self {
        self.exact = Some(u);
        self.exact_gradient = Some(grad);
        self
    }

    /// `sigma = c - div b / 2`.
    pub fn sigma(&self, x: [T; 2]) -> T {
        (self.reaction)(x) - T::half() * (self.velocity_divergence)(x)
    }

    /// Minimum of `sigma` over the quadrature points of `space`; rejects
    /// `sigma_0 <= 0`.
    pub fn sigma0(&self, space: &FeSpace<T>) -> Result<T> {
        let k = space.kernels();
        let mesh = space.mesh();
        let mut s = T::infinity();
        for e in 0..space.num_elements() {
            for xi in &k.points {
                s = s.min(self.sigma(mesh.to_physical(e, *xi)));
            }
        }
        if !(s > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_0 = {} must be positive",
                s.as_f64()
            )));
        }
        Ok(s)
    }

    /// `nu_e` from `lambda_e = max |b|` over the quadrature points of `K_e`.
    pub fn viscosity(&self, space: &FeSpace<T>) -> Result<Vec<T>> {
        let k = space.kernels();
        let mesh = space.mesh();
        let h = mesh.h_max();
        (0..space.num_elements())
            .map(|e| {
                let lam = k.points.iter().fold(T::zero(), |m, xi| {
                    let b = (self.velocity)(mesh.to_physical(e, *xi));
                    m.max((b[0] * b[0] + b[1] * b[1]).sqrt())
                });
                viscosity(lam, h, space.degree())
            })
            .collect()
    }
}

/// `u = sin(pi x) sin(pi y)` (or `sin(pi x)` in 1D) on the unit box.
pub fn smooth_problem<T: Real>(epsilon: T, b: [T; 2], c: T, dim: usize) -> Result<CdrProblem<T>> {
    let pi = T::PI();
    let two_d = dim == 2;
    let u = move |x: [T; 2]| {
        let sy = if two_d { (pi * x[1]).sin() } else { T::one() };
        (pi * x[0]).sin() * sy
    };
    let grad = move |x: [T; 2]| {
        let (sx, cx) = ((pi * x[0]).sin(), (pi * x[0]).cos());
        if two_d {
            let (sy, cy) = ((pi * x[1]).sin(), (pi * x[1]).cos());
            [pi * cx * sy, pi * sx * cy]
        } else {
            [pi * cx, T::zero()]
        }
    };
    let lap_factor = if two_d { T::two() } else { T::one() };
    let g = move |x: [T; 2]| {
        let gu = grad(x);
        epsilon * lap_factor * pi * pi * u(x) + b[0] * gu[0] + b[1] * gu[1] + c * u(x)
    };
    Ok(CdrProblem::new(
        epsilon,
        Arc::new(move |_| b),
        Arc::new(|_| T::zero()),
        Arc::new(move |_| c),
        Arc::new(g),
        Arc::new(u),
    )?
    .with_exact(Arc::new(u), Arc::new(grad)))
}

/// `u = x (1 - exp((y - 1)/eps)) / (1 - exp(-1/eps))` with `b = (1, 1)`,
/// `c = 1`; layer along `y = 1`.
pub fn boundary_layer_problem<T: Real>(epsilon: T) -> Result<CdrProblem<T>> {
    let denom = T::one() - (-T::one() / epsilon).exp();
    let phi = move |y: T| (T::one() - ((y - T::one()) / epsilon).exp()) / denom;
    let dphi = move |y: T| -((y - T::one()) / epsilon).exp() / (epsilon * denom);
    let u = move |x: [T; 2]| x[0] * phi(x[1]);
    let grad = move |x: [T; 2]| [phi(x[1]), x[0] * dphi(x[1])];
    // -eps x phi'' + phi + x phi' + x phi; the layer terms cancel
    let g = move |x: [T; 2]| phi(x[1]) * (T::one() + x[0]);
    Ok(CdrProblem::new(
        epsilon,
        Arc::new(|_| [T::one(), T::one()]),
        Arc::new(|_| T::zero()),
        Arc::new(|_| T::one()),
        Arc::new(g),
        Arc::new(u),
    )?
    .with_exact(Arc::new(u), Arc::new(grad)))
}

/// Linear system with constrained (Dirichlet) rows replaced by identities.
#[derive(Clone, Debug)]
pub struct DiscreteSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    pub constrained: Vec<bool>,
}

impl<T: Real> DiscreteSystem<T> {
    pub fn solve(&self, guess: Option<&[T]>) -> Result<Vec<T>> {
        solve_sparse(&self.matrix, &self.rhs, guess)
    }

    /// `max |b - A x|` over unconstrained rows.
    pub fn residual_max(&self, x: &[T]) -> T {
        let ax = self.matrix.matvec(x);
        (0..self.rhs.len())
            .filter(|&i| !self.constrained[i])
            .fold(T::zero(), |m, i| m.max((self.rhs[i] - ax[i]).abs()))
    }
}

/// Element triplets and load vector of the CG form `a(u, w) = (g, w)`,
/// without boundary conditions.
fn cg_galerkin<T: Real>(problem: &CdrProblem<T>, space: &FeSpace<T>) -> (Vec<(usize, usize, T)>, Vec<T>) {
    let k = space.kernels();
    let mesh = space.mesh();
    let n = space.n_loc();
    let mut trip = Vec::with_capacity(space.num_elements() * n * n);
    let mut rhs = vec![T::zero(); space.n_dofs()];
    let mut local = vec![T::zero(); n * n];
    for e in 0..space.num_elements() {
        local.iter_mut().for_each(|v| *v = T::zero());
        let dofs = space.element_dofs(e);
        for q in 0..k.num_points() {
            let x = mesh.to_physical(e, k.points[q]);
            let (b, c, g) = ((problem.velocity)(x), (problem.reaction)(x), (problem.source)(x));
            let w = k.weights[q];
            for i in 0..n {
                let (phi_i, gi) = (k.phi[q][i], k.grad[q][i]);
                rhs[dofs[i]] += w * g * phi_i;
                for j in 0..n {
                    let gj = k.grad[q][j];
                    let v = problem.epsilon * (gi[0] * gj[0] + gi[1] * gj[1])
                        + (b[0] * gj[0] + b[1] * gj[1]) * phi_i
                        + c * k.phi[q][j] * phi_i;
                    local[i * n + j] += w * v;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                trip.push((dofs[i], dofs[j], local[i * n + j]));
            }
        }
    }
    (trip, rhs)
}

/// Matrix of `a + s_h` (`include_dh = false`) or `a + s_h + d_h` on a CG
/// space with no boundary conditions applied.
pub fn cg_operator<T: Real>(
    problem: &CdrProblem<T>,
    space: &FeSpace<T>,
    params: &StabParams<T>,
    include_dh: bool,
) -> Result<(CsrMatrix<T>, Vec<T>)> {
    if space.is_dg() {
        return Err(Error::Unsupported("CG assembly on a DG space".into()));
    }
    params.validate()?;
    let (mut trip, rhs) = cg_galerkin(problem, space);
    if include_dh {
        add_lps_matrix(space, &params.nu, &params.gamma, |i, j, v| trip.push((i, j, v)));
    } else {
        let coeff: Vec<T> = params.omega.iter().zip(&params.nu).map(|(o, n)| *o * *n).collect();
        add_fluctuation_matrix(space, &coeff, |i, j, v| trip.push((i, j, v)));
    }
    let n = space.n_dofs();
    Ok((CsrMatrix::from_triplets(n, n, trip), rhs))
}

/// CG system with Dirichlet rows eliminated against the nodal interpolant
/// of `u_D`.
pub fn assemble_cg<T: Real>(
    problem: &CdrProblem<T>,
    space: &FeSpace<T>,
    params: &StabParams<T>,
    include_dh: bool,
) -> Result<DiscreteSystem<T>> {
    problem.sigma0(space)?;
    let (a, mut rhs) = cg_operator(problem, space, params, include_dh)?;
    let n = space.n_dofs();
    let mut constrained = vec![false; n];
    let mut ud = vec![T::zero(); n];
    for &d in space.boundary_dofs() {
        constrained[d] = true;
        ud[d] = (problem.dirichlet)(space.dof_coords()[d]);
    }
    let mut trip = Vec::with_capacity(a.nnz());
    for i in 0..n {
        if constrained[i] {
            trip.push((i, i, T::one()));
            rhs[i] = ud[i];
            continue;
        }
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if constrained[j] {
                rhs[i] -= v * ud[j];
            } else {
                trip.push((i, j, v));
            }
        }
    }
    Ok(DiscreteSystem {
        matrix: CsrMatrix::from_triplets(n, n, trip),
        rhs,
        constrained,
    })
}

fn face_diameter<T: Real>(space: &FeSpace<T>, measure: T) -> T {
    if space.dim() == 1 {
        space.mesh().spacing().0
    } else {
        measure
    }
}

/// SIP-DG system of `a + d_h` with Nitsche-type boundary data.
pub fn assemble_sipdg<T: Real>(
    problem: &CdrProblem<T>,
    space: &FeSpace<T>,
    params: &StabParams<T>,
    eta: T,
) -> Result<DiscreteSystem<T>> {
    if !space.is_dg() {
        return Err(Error::Unsupported("SIP-DG assembly on a CG space".into()));
    }
    if !(eta > T::zero()) {
        return Err(Error::InvalidParameter("penalty must be positive".into()));
    }
    params.validate()?;
    problem.sigma0(space)?;
    let k = space.kernels();
    let mesh = space.mesh();
    let n = space.n_loc();
    let eps = problem.epsilon;
    let mut trip = Vec::new();
    let mut rhs = vec![T::zero(); space.n_dofs()];
    let mut local = vec![T::zero(); n * n];
    for e in 0..space.num_elements() {
        local.iter_mut().for_each(|v| *v = T::zero());
        let dofs = space.element_dofs(e);
        let visc = (T::one() - params.gamma[e]) * params.nu[e];
        for q in 0..k.num_points() {
            let x = mesh.to_physical(e, k.points[q]);
            let b = (problem.velocity)(x);
            let r = (problem.reaction)(x) - (problem.velocity_divergence)(x);
            let g = (problem.source)(x);
            let w = k.weights[q];
            for i in 0..n {
                let (phi_i, gi) = (k.phi[q][i], k.grad[q][i]);
                rhs[dofs[i]] += w * g * phi_i;
                for j in 0..n {
                    let (phi_j, gj) = (k.phi[q][j], k.grad[q][j]);
                    let v = (eps + visc) * (gi[0] * gj[0] + gi[1] * gj[1]) - phi_j * (b[0] * gi[0] + b[1] * gi[1])
                        + r * phi_j * phi_i;
                    local[i * n + j] += w * v;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                trip.push((dofs[i], dofs[j], local[i * n + j]));
            }
        }
    }
    for face in mesh.faces() {
        let hf = face_diameter(space, face.measure);
        let pen = eta / hf;
        let nrm = face.normal;
        let kl = &k.faces[face.left_side.index()];
        let dl = space.element_dofs(face.left);
        match face.right {
            Some(re) => {
                let kr = &k.faces[face.left_side.opposite().index()];
                let dr = space.element_dofs(re);
                for q in 0..kl.points.len() {
                    let x = mesh.to_physical(face.left, kl.points[q]);
                    let b = (problem.velocity)(x);
                    let bn = b[0] * nrm[0] + b[1] * nrm[1];
                    let w = kl.weights[q];
                    // traces: (dof, value, normal derivative, jump sign)
                    let sides = [
                        (dl, &kl.phi[q], &kl.grad[q], T::one()),
                        (dr, &kr.phi[q], &kr.grad[q], -T::one()),
                    ];
                    for (ti, (di, pi, gi, si)) in sides.iter().enumerate() {
                        for (tj, (dj, pj, gj, sj)) in sides.iter().enumerate() {
                            let upwind = (bn >= T::zero()) == (tj == 0);
                            for i in 0..n {
                                let dni = gi[i][0] * nrm[0] + gi[i][1] * nrm[1];
                                for j in 0..n {
                                    let dnj = gj[j][0] * nrm[0] + gj[j][1] * nrm[1];
                                    let mut v = eps
                                        * (-T::half() * dni * *sj * pj[j] - T::half() * dnj * *si * pi[i]
                                            + pen * *si * *sj * pi[i] * pj[j]);
                                    if upwind {
                                        v += bn * pj[j] * *si * pi[i];
                                    }
                                    let _ = ti;
                                    trip.push((di[i], dj[j], w * v));
                                }
                            }
                        }
                    }
                }
            }
            None => {
                for q in 0..kl.points.len() {
                    let x = mesh.to_physical(face.left, kl.points[q]);
                    let b = (problem.velocity)(x);
                    let bn = b[0] * nrm[0] + b[1] * nrm[1];
                    let ud = (problem.dirichlet)(x);
                    let w = kl.weights[q];
                    let (pq, gq) = (&kl.phi[q], &kl.grad[q]);
                    for i in 0..n {
                        let dni = gq[i][0] * nrm[0] + gq[i][1] * nrm[1];
                        rhs[dl[i]] += w * eps * (pen * pq[i] - dni) * ud;
                        if bn < T::zero() {
                            rhs[dl[i]] -= w * bn * ud * pq[i];
                        }
                        for j in 0..n {
                            let dnj = gq[j][0] * nrm[0] + gq[j][1] * nrm[1];
                            let mut v = eps * (-dni * pq[j] - dnj * pq[i] + pen * pq[i] * pq[j]);
                            if bn >= T::zero() {
                                v += bn * pq[j] * pq[i];
                            }
                            trip.push((dl[i], dl[j], w * v));
                        }
                    }
                }
            }
        }
    }
    let nd = space.n_dofs();
    Ok(DiscreteSystem {
        matrix: CsrMatrix::from_triplets(nd, nd, trip),
        rhs,
        constrained: vec![false; nd],
    })
}

/// `R^e = int_{K_e} (-eps Lap u_h + b . grad u_h + c u_h - g)^2`; values at
/// roundoff level relative to the individual terms are reported as zero.
pub fn element_residual_steady<T: Real>(problem: &CdrProblem<T>, space: &FeSpace<T>, u: &[T], e: usize) -> T {
    let k = space.kernels();
    let mesh = space.mesh();
    let c = space.gather(u, e);
    let mut r = T::zero();
    let mut scale = T::zero();
    for q in 0..k.num_points() {
        let x = mesh.to_physical(e, k.points[q]);
        let mut uh = T::zero();
        let mut lap = T::zero();
        let mut g = [T::zero(); 2];
        for j in 0..c.len() {
            uh += k.phi[q][j] * c[j];
            lap += k.laplacian[q][j] * c[j];
            g[0] += k.grad[q][j][0] * c[j];
            g[1] += k.grad[q][j][1] * c[j];
        }
        let b = (problem.velocity)(x);
        let terms = [
            -problem.epsilon * lap,
            b[0] * g[0] + b[1] * g[1],
            (problem.reaction)(x) * uh,
            -(problem.source)(x),
        ];
        let res: T = terms.iter().copied().sum();
        let mag: T = terms.iter().map(|t| t.abs()).sum();
        r += k.weights[q] * res * res;
        scale += k.weights[q] * mag * mag;
    }
    if r <= T::lit(1e-24) * scale {
        T::zero()
    } else {
        r
    }
}

pub fn element_residuals_steady<T: Real>(problem: &CdrProblem<T>, space: &FeSpace<T>, u: &[T]) -> Vec<T> {
    (0..space.num_elements())
        .map(|e| element_residual_steady(problem, space, u, e))
        .collect()
}

/// `||v||_S = (eps |v|_1^2 + sigma_0 ||v||^2 + s_h(v, v))^{1/2}`.
pub fn s_norm<T: Real>(problem: &CdrProblem<T>, space: &FeSpace<T>, params: &StabParams<T>, v: &[T]) -> Result<T> {
    let sigma0 = problem.sigma0(space)?;
    let base = space.integrate_with(v, 2 * space.degree() + 1, |_, uh, g| {
        problem.epsilon * (g[0] * g[0] + g[1] * g[1]) + sigma0 * uh * uh
    })?;
    let sh = if space.is_dg() { T::zero() } else { lps_form_sh(space, params, v, v) };
    Ok((base + sh).max(T::zero()).sqrt())
}

/// Sum over faces of `(1/h_F) ||[[v - u]]||_F^2` where `u` is an optional
/// continuous function (zero outside the domain).
fn jump_term<T: Real>(space: &FeSpace<T>, v: &[T], exact: Option<&ScalarFn<T>>) -> T {
    let k = space.kernels();
    let mesh = space.mesh();
    let mut total = T::zero();
    for face in mesh.faces() {
        let hf = face_diameter(space, face.measure);
        let kl = &k.faces[face.left_side.index()];
        let cl = space.gather(v, face.left);
        let cr = face.right.map(|r| space.gather(v, r));
        let kr = &k.faces[face.left_side.opposite().index()];
        for q in 0..kl.points.len() {
            let vl = crate::linalg::dot(&kl.phi[q], &cl);
            let jump = match &cr {
                Some(cr) => vl - crate::linalg::dot(&kr.phi[q], cr),
                None => {
                    let x = mesh.to_physical(face.left, kl.points[q]);
                    vl - exact.map(|f| f(x)).unwrap_or(T::zero())
                }
            };
            total += kl.weights[q] * jump * jump / hf;
        }
    }
    total
}

/// `||v||_DG = (eps [sum |v|_{1,K}^2 + sum_F ||[[v]]||_F^2 / h_F] + sigma_0 ||v||^2)^{1/2}`.
pub fn dg_norm<T: Real>(problem: &CdrProblem<T>, space: &FeSpace<T>, v: &[T]) -> Result<T> {
    let sigma0 = problem.sigma0(space)?;
    let base = space.integrate_with(v, 2 * space.degree() + 1, |_, uh, g| {
        problem.epsilon * (g[0] * g[0] + g[1] * g[1]) + sigma0 * uh * uh
    })?;
    Ok((base + problem.epsilon * jump_term(space, v, None)).sqrt())
}

/// Error of `u_h` against the exact solution in the S-norm (CG) or DG norm.
/// The `s_h` part uses the nodal interpolant of the exact solution.
pub fn energy_error<T: Real>(
    problem: &CdrProblem<T>,
    space: &FeSpace<T>,
    params: &StabParams<T>,
    u: &[T],
) -> Result<T> {
    let (exact, grad) = match (&problem.exact, &problem.exact_gradient) {
        (Some(u), Some(g)) => (u.clone(), g.clone()),
        _ => return Err(Error::InvalidParameter("exact solution required".into())),
    };
    let sigma0 = problem.sigma0(space)?;
    let order = 2 * space.degree() + 4;
    let base = space.integrate_with(u, order, |x, uh, g| {
        let ge = grad(x);
        problem.epsilon * ((g[0] - ge[0]).powi(2) + (g[1] - ge[1]).powi(2)) + sigma0 * (uh - exact(x)).powi(2)
    })?;
    let extra = if space.is_dg() {
        problem.epsilon * jump_term(space, u, Some(&exact))
    } else {
        let iu = space.interpolate(|x| exact(x));
        let d: Vec<T> = iu.iter().zip(u).map(|(a, b)| *a - *b).collect();
        lps_form_sh(space, params, &d, &d)
    };
    Ok((base + extra).sqrt())
}

#[derive(Clone, Debug)]
pub struct CdrOptions<T> {
    pub scheme: Scheme,
    pub weno: WenoConfig<T>,
    pub omega: OmegaMode,
    /// SIP penalty; `None` selects `10 p^2`.
    pub eta: Option<T>,
    pub max_iter: usize,
    pub tol: T,
    /// Initial relaxation factor `alpha`.
    pub relaxation: T,
}

impl<T: Real> Default for CdrOptions<T> {
    fn default() -> Self {
        Self {
            scheme: Scheme::RbWeno,
            weno: WenoConfig::default(),
            omega: OmegaMode::Computed,
            eta: None,
            max_iter: 50,
            tol: T::lit(1e-10),
            relaxation: T::one(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CdrSolution<T> {
    pub u: Vec<T>,
    pub params: StabParams<T>,
    /// Relative L2 update per iteration.
    pub trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    pub relaxation: T,
}

fn relative_l2<T: Real>(space: &FeSpace<T>, new: &[T], old: &[T]) -> Result<T> {
    let d: Vec<T> = new.iter().zip(old).map(|(a, b)| *a - *b).collect();
    let o = 2 * space.degree() + 1;
    let num = space.integrate_with(&d, o, |_, v, _| v * v)?.sqrt();
    let den = space.integrate_with(new, o, |_, v, _| v * v)?.sqrt();
    Ok(if den > T::zero() { num / den } else { num })
}

fn solve_frozen<T: Real>(
    problem: &CdrProblem<T>,
    space: &FeSpace<T>,
    params: &StabParams<T>,
    include_dh: bool,
    eta: T,
    guess: Option<&[T]>,
) -> Result<Vec<T>> {
    let sys = if space.is_dg() {
        assemble_sipdg(problem, space, params, eta)?
    } else {
        assemble_cg(problem, space, params, include_dh)?
    };
    sys.solve(guess)
}

/// Fixed-point iteration `gamma^(k) = gamma(u^(k))`, starting from
/// `gamma^(0) = 1`. Non-convergence is reported through `converged`.
pub fn picard_solve<T: Real>(problem: &CdrProblem<T>, space: &FeSpace<T>, opts: &CdrOptions<T>) -> Result<CdrSolution<T>> {
    let n_el = space.num_elements();
    let nu = problem.viscosity(space)?;
    let omega = omega_field(space, opts.omega);
    let eta = opts.eta.unwrap_or_else(|| T::count(10 * space.degree() * space.degree()));
    let (gamma0, include_dh) = match opts.scheme {
        Scheme::Galerkin => (T::one(), false),
        Scheme::LowOnly => (T::zero(), true),
        Scheme::Weno | Scheme::RbWeno => (T::one(), true),
    };
    let mut params = StabParams {
        nu,
        gamma: vec![gamma0; n_el],
        omega,
    };
    let mut u = solve_frozen(problem, space, &params, include_dh, eta, None)?;
    let nonlinear = matches!(opts.scheme, Scheme::Weno | Scheme::RbWeno);
    if !nonlinear {
        return Ok(CdrSolution {
            u,
            params,
            trace: Vec::new(),
            iterations: 1,
            converged: true,
            relaxation: opts.relaxation,
        });
    }
    let mut cfg = opts.weno.clone();
    cfg.mode = if opts.scheme == Scheme::RbWeno {
        WeightMode::Residual
    } else {
        WeightMode::Classical
    };
    let mut alpha = opts.relaxation;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 1;
    while iterations < opts.max_iter {
        let residuals = (cfg.mode == WeightMode::Residual).then(|| element_residuals_steady(problem, space, &u));
        params.gamma = sensor_field(space, &u, &cfg, residuals.as_deref())?;
        let new = solve_frozen(problem, space, &params, include_dh, eta, Some(&u))?;
        let next: Vec<T> = u
            .iter()
            .zip(&new)
            .map(|(o, n)| (T::one() - alpha) * *o + alpha * *n)
            .collect();
        let change = relative_l2(space, &next, &u)?;
        u = next;
        iterations += 1;
        trace.push(change);
        if change <= opts.tol {
            converged = true;
            break;
        }
        let m = trace.len();
        if alpha == T::one() && m >= 3 && trace[m - 1] > trace[m - 2] && trace[m - 2] > trace[m - 3] {
            alpha = T::half();
        }
    }
    Ok(CdrSolution {
        u,
        params,
        trace,
        iterations,
        converged,
        relaxation: alpha,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub dofs: usize,
    pub err_l2: f64,
    pub err_s: f64,
    pub rate_l2: Option<f64>,
    pub rate_s: Option<f64>,
    pub picard_iters: usize,
}

/// `log(e_coarse / e_fine) / log(h_coarse / h_fine)`.
pub fn observed_rate(e_coarse: f64, e_fine: f64, h_coarse: f64, h_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

/// Errors on the meshes produced by `make_space(level)` for
/// `level = 0..levels`.
pub fn convergence_study<T: Real>(
    problem: &CdrProblem<T>,
    levels: usize,
    mut make_space: impl FnMut(usize) -> Result<FeSpace<T>>,
    opts: &CdrOptions<T>,
) -> Result<Vec<ConvergenceRow>> {
    let exact = problem
        .exact
        .clone()
        .ok_or_else(|| Error::InvalidParameter("exact solution required".into()))?;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for level in 0..levels {
        let space = make_space(level)?;
        let sol = picard_solve(problem, &space, opts)?;
        let err_l2 = space.l2_error(&sol.u, |x| exact(x))?.as_f64();
        let err_s = energy_error(problem, &space, &sol.params, &sol.u)?.as_f64();
        let h = space.mesh().h_max().as_f64();
        let (rate_l2, rate_s) = match rows.last() {
            Some(prev) => (
                Some(observed_rate(prev.err_l2, err_l2, prev.h, h)),
                Some(observed_rate(prev.err_s, err_s, prev.h, h)),
            ),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            h,
            dofs: space.n_dofs(),
            err_l2,
            err_s,
            rate_l2,
            rate_s,
            picard_iters: sol.iterations,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::space::Continuity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reaction_diffusion_1d() -> CdrProblem<f64> {
        CdrProblem::new(
            1.0,
            Arc::new(|_| [0.0, 0.0]),
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.0),
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
        )
        .unwrap()
    }

    fn params(space: &FeSpace<f64>, problem: &CdrProblem<f64>, gamma: f64) -> StabParams<f64> {
        StabParams {
            nu: problem.viscosity(space).unwrap(),
            gamma: vec![gamma; space.num_elements()],
            omega: omega_field(space, OmegaMode::Computed),
        }
    }

    #[test]
    fn rejects_nonpositive_sigma_and_epsilon() {
        let space = FeSpace::new(Mesh::<f64>::build_uniform_line(0.0, 1.0, 4, false).unwrap(), Continuity::Cg, 1).unwrap();
        let bad = CdrProblem::new(
            1.0,
            Arc::new(|x: [f64; 2]| [x[0] * 4.0, 0.0]),
            Arc::new(|_| 4.0),
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        )
        .unwrap();
        assert!(bad.sigma0(&space).is_err());
        let p = params(&space, &bad, 1.0);
        assert!(assemble_cg(&bad, &space, &p, true).is_err());
        assert!(CdrProblem::<f64>::new(0.0, Arc::new(|_| [0.0; 2]), Arc::new(|_| 0.0), Arc::new(|_| 1.0), Arc::new(|_| 0.0), Arc::new(|_| 0.0)).is_err());
    }

    #[test]
    fn sigma0_bounds_sigma_at_points() {
        let space = FeSpace::new(Mesh::<f64>::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 3, 3, false).unwrap(), Continuity::Cg, 2).unwrap();
        let pr = CdrProblem::new(
            1.0,
            Arc::new(|x: [f64; 2]| [x[0] * x[0], 0.0]),
            Arc::new(|x: [f64; 2]| 2.0 * x[0]),
            Arc::new(|x: [f64; 2]| 2.0 + x[1]),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        )
        .unwrap();
        let s0 = pr.sigma0(&space).unwrap();
        for e in 0..space.num_elements() {
            for xi in &space.kernels().points {
                assert!(s0 <= pr.sigma(space.mesh().to_physical(e, *xi)));
            }
        }
    }

    #[test]
    fn two_cell_hand_assembly() {
        // -u'' + u = 1 on (0,1), u(0) = u(1) = 0, two p=1 cells, h = 1/2
        let pr = reaction_diffusion_1d();
        let space = FeSpace::new(Mesh::build_uniform_line(0.0, 1.0, 2, false).unwrap(), Continuity::Cg, 1).unwrap();
        let p = params(&space, &pr, 1.0);
        let (a, rhs) = cg_operator(&pr, &space, &p, true).unwrap();
        let h = 0.5;
        let k = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
        let m = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
        let want = [
            [k[0][0] + m[0][0], k[0][1] + m[0][1], 0.0],
            [k[1][0] + m[1][0], 2.0 * (k[1][1] + m[1][1]), k[0][1] + m[0][1]],
            [0.0, k[1][0] + m[1][0], k[1][1] + m[1][1]],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - want[i][j]).abs() < 1e-13);
            }
        }
        assert!((rhs[1] - h).abs() < 1e-14);
        let sys = assemble_cg(&pr, &space, &p, true).unwrap();
        let u = sys.solve(None).unwrap();
        assert!((u[1] - h / (want[1][1])).abs() < 1e-13);
        assert_eq!((u[0], u[2]), (0.0, 0.0));
    }

    #[test]
    fn unit_gamma_unit_omega_adds_nothing_from_dh() {
        let pr = smooth_problem(1.0, [1.0, 0.5], 1.0, 2).unwrap();
        let space = FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 4, 4, false).unwrap(), Continuity::Cg, 1).unwrap();
        let mut p = params(&space, &pr, 1.0);
        p.omega = vec![1.0; space.num_elements()];
        let (a, _) = cg_operator(&pr, &space, &p, true).unwrap();
        let (b, _) = cg_operator(&pr, &space, &p, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (ax, bx) = (a.matvec(&x), b.matvec(&x));
        for (u, v) in ax.iter().zip(&bx) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn cg_linear_scheme_is_coercive_in_s_norm() {
        let pr = smooth_problem(1.0, [1.0, 0.5], 1.0, 2).unwrap();
        let space = FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 5, 5, false).unwrap(), Continuity::Cg, 2).unwrap();
        let p = params(&space, &pr, 1.0);
        let (a, _) = cg_operator(&pr, &space, &p, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let mut v: Vec<f64> = (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for &d in space.boundary_dofs() {
                v[d] = 0.0;
            }
            let s = s_norm(&pr, &space, &p, &v).unwrap();
            assert!(a.bilinear(&v, &v) >= (1.0 - 1e-8) * s * s);
        }
    }

    #[test]
    fn sipdg_reaction_only_gives_l2_projection() {
        let pr = CdrProblem::<f64> {
            epsilon: 0.0,
            velocity: Arc::new(|_| [0.0, 0.0]),
            velocity_divergence: Arc::new(|_| 0.0),
            reaction: Arc::new(|_| 1.0),
            source: Arc::new(|x: [f64; 2]| (3.0 * x[0]).exp()),
            dirichlet: Arc::new(|_| 0.0),
            exact: None,
            exact_gradient: None,
        };
        let space = FeSpace::new(Mesh::build_uniform_line(0.0, 1.0, 4, false).unwrap(), Continuity::Dg, 2).unwrap();
        let p = params(&space, &pr, 1.0);
        let u = assemble_sipdg(&pr, &space, &p, 10.0).unwrap().solve(None).unwrap();
        let k = space.kernels();
        for e in 0..4 {
            let c = space.gather(&u, e);
            let mut b = vec![0.0; 3];
            for q in 0..k.num_points() {
                let x = space.mesh().to_physical(e, k.points[q]);
                for i in 0..3 {
                    b[i] += k.weights[q] * (3.0 * x[0]).exp() * k.phi[q][i];
                }
            }
            let want = k.mass_inv.matvec(&b);
            for i in 0..3 {
                assert!((c[i] - want[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sipdg_upwind_takes_left_trace() {
        // pure advection-reaction: the matrix couples each cell only to its left neighbour
        let pr = CdrProblem::<f64> {
            epsilon: 0.0,
            velocity: Arc::new(|_| [1.0, 0.0]),
            velocity_divergence: Arc::new(|_| 0.0),
            reaction: Arc::new(|_| 1.0),
            source: Arc::new(|_| 0.0),
            dirichlet: Arc::new(|_| 0.0),
            exact: None,
            exact_gradient: None,
        };
        let space = FeSpace::new(Mesh::build_uniform_line(0.0, 1.0, 3, false).unwrap(), Continuity::Dg, 1).unwrap();
        let p = params(&space, &pr, 1.0);
        let sys = assemble_sipdg(&pr, &space, &p, 10.0).unwrap();
        let a = sys.matrix.to_dense();
        // cell 1 rows: coupling to cell 0 only through its right node (dof 1)
        assert!(a[(2, 0)].abs() < 1e-14);
        assert!((a[(2, 1)] + 1.0).abs() < 1e-14);
        // no coupling to the downwind cell
        for i in 2..4 {
            for j in 4..6 {
                assert!(a[(i, j)].abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sipdg_reproduces_linear_solution() {
        let u = |x: [f64; 2]| 1.0 + 2.0 * x[0] - x[1];
        let pr = CdrProblem::new(
            0.5,
            Arc::new(|_| [1.0, 2.0]),
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.0),
            Arc::new(move |x| 2.0 - 2.0 + u(x)),
            Arc::new(u),
        )
        .unwrap();
        let space = FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 3, 3, false).unwrap(), Continuity::Dg, 1).unwrap();
        let p = params(&space, &pr, 1.0);
        let sys = assemble_sipdg(&pr, &space, &p, 10.0).unwrap();
        let ui = space.interpolate(u);
        let r = sys.rhs.iter().zip(sys.matrix.matvec(&ui)).fold(0.0f64, |m, (b, a)| m.max((b - a).abs()));
        assert!(r < 1e-12, "{r}");
    }

    #[test]
    fn dg_norm_of_continuous_field_has_no_interior_jumps() {
        let pr = smooth_problem(0.3, [1.0, 0.0], 2.0, 2).unwrap();
        let space = FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 3, 3, true).unwrap(), Continuity::Dg, 1).unwrap();
        let v = space.interpolate(|x| (x[0] + 0.5 * x[1]) * 0.0 + (2.0 * std::f64::consts::PI * x[0]).sin());
        let n = dg_norm(&pr, &space, &v).unwrap();
        let s0 = pr.sigma0(&space).unwrap();
        let want = space
            .integrate_with(&v, 3, |_, u, g| 0.3 * (g[0] * g[0] + g[1] * g[1]) + s0 * u * u)
            .unwrap();
        // periodic nodal interpolant is continuous across all faces
        assert!((n * n - want).abs() < 1e-12);
        let z = vec![0.0; space.n_dofs()];
        assert_eq!(dg_norm(&pr, &space, &z).unwrap(), 0.0);
        let v2: Vec<f64> = v.iter().map(|x| -3.0 * x).collect();
        assert!((dg_norm(&pr, &space, &v2).unwrap() - 3.0 * n).abs() < 1e-12);
    }

    #[test]
    fn steady_residual_examples() {
        let pr = CdrProblem::<f64>::new(
            1.0,
            Arc::new(|_| [0.0, 0.0]),
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.0),
            Arc::new(|_| 0.0),
            Arc::new(|_| 0.0),
        )
        .unwrap();
        let space = FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 2, 2, false).unwrap(), Continuity::Dg, 2).unwrap();
        let one = vec![1.0; space.n_dofs()];
        for e in 0..4 {
            assert!((element_residual_steady(&pr, &space, &one, e) - 0.25).abs() < 1e-14);
        }
        // polynomial exact solution with polynomial data
        let u = |x: [f64; 2]| x[0] * x[0] + x[0] * x[1];
        let pr2 = CdrProblem::new(
            2.0,
            Arc::new(|_| [1.0, 0.0]),
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.0),
            Arc::new(move |x: [f64; 2]| -4.0 + (2.0 * x[0] + x[1]) + u(x)),
            Arc::new(u),
        )
        .unwrap();
        let ui = space.interpolate(u);
        assert!(element_residuals_steady(&pr2, &space, &ui).iter().all(|r| *r == 0.0));
    }

    #[test]
    fn steady_residual_matches_high_order_oracle() {
        let space = FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 3, 3, false).unwrap(), Continuity::Cg, 2).unwrap();
        let u = space.interpolate(|x: [f64; 2]| (x[0] * 2.0).cos() * x[1]);
        let rule = crate::quadrature::quadrature_rule::<f64>(2, 2 * 2 + 4).unwrap();
        let (hx, hy) = space.mesh().spacing();
        let polynomial = CdrProblem::new(
            0.7,
            Arc::new(|_| [1.0, -0.5]),
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.5),
            Arc::new(|x: [f64; 2]| x[0] * x[1] - 2.0 * x[1] * x[1]),
            Arc::new(|_| 0.0),
        )
        .unwrap();
        let smooth = smooth_problem::<f64>(0.7, [1.0, -0.5], 1.5, 2).unwrap();
        for (pr, tol) in [(&polynomial, 1e-12), (&smooth, 1e-3)] {
            for e in [0, 4, 8] {
                let c = space.gather(&u, e);
                let mut want = 0.0;
                for (xi, w) in rule.points.iter().zip(&rule.weights) {
                    let x = space.mesh().to_physical(e, *xi);
                    let ev = |k| space.evaluate_local(&c, *xi, k).unwrap();
                    let r = -0.7 * (ev([2, 0]) + ev([0, 2])) + ev([1, 0]) - 0.5 * ev([0, 1]) + 1.5 * ev([0, 0]) - (pr.source)(x);
                    want += w * hx * hy / 4.0 * r * r;
                }
                let got = element_residual_steady(pr, &space, &u, e);
                assert!((got - want).abs() < tol * want, "{got} {want}");
            }
        }
    }

    #[test]
    fn picard_linear_modes_take_one_iteration() {
        let pr = smooth_problem(1.0, [1.0, 0.5], 1.0, 2).unwrap();
        let space = FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 4, 4, false).unwrap(), Continuity::Cg, 1).unwrap();
        for scheme in [Scheme::Galerkin, Scheme::LowOnly] {
            let opts = CdrOptions { scheme, ..CdrOptions::default() };
            let s = picard_solve(&pr, &space, &opts).unwrap();
            assert_eq!(s.iterations, 1);
            assert!(s.converged);
        }
    }

    #[test]
    fn picard_reproduces_exact_discrete_solution() {
        // u = x + 2y lies in V_h; its residual vanishes and the fixed point keeps gamma = 1
        let u = |x: [f64; 2]| x[0] + 2.0 * x[1];
        let pr = CdrProblem::new(
            1.0,
            Arc::new(|_| [1.0, 1.0]),
            Arc::new(|_| 0.0),
            Arc::new(|_| 1.0),
            Arc::new(move |x| 3.0 + u(x)),
            Arc::new(u),
        )
        .unwrap();
        for cont in [Continuity::Cg, Continuity::Dg] {
            let space = FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 4, 4, false).unwrap(), cont, 1).unwrap();
            let s = picard_solve(&pr, &space, &CdrOptions::default()).unwrap();
            let ui = space.interpolate(u);
            let err = s.u.iter().zip(&ui).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-9, "{cont:?} {err}");
            assert!(s.params.gamma.iter().all(|g| *g == 1.0), "{cont:?}");
            assert!(s.converged);
        }
    }

    #[test]
    fn rate_example() {
        assert!((observed_rate(0.1, 0.025, 0.2, 0.1) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn linear_scheme_galerkin_orthogonality() {
        let pr = smooth_problem(1.0, [1.0, 0.5], 1.0, 2).unwrap();
        let space = FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 6, 6, false).unwrap(), Continuity::Cg, 2).unwrap();
        let opts = CdrOptions { scheme: Scheme::Galerkin, ..CdrOptions::default() };
        let s = picard_solve(&pr, &space, &opts).unwrap();
        let sys = assemble_cg(&pr, &space, &s.params, false).unwrap();
        assert!(sys.residual_max(&s.u) < 1e-11);
    }
}
