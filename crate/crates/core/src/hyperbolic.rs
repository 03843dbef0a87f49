//! Semi-discrete CG/DG schemes for hyperbolic conservation laws with
//! blended WENO stabilization, advanced by SSP Runge-Kutta methods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{BandedLu, CsrMatrix, DenseMatrix, LuFactor};
use crate::mesh::Side;
use crate::physics::{boundary_state, BoundarySpec, PhysicsModel};
use crate::quadrature::quadrature_rule;
use crate::scalar::Real;
use crate::space::{FeSpace, StateField};
use crate::stabilization::{add_blended_vector, viscosity};
use crate::weno::{sensor_field, WeightMode, WenoConfig};
use crate::basis::LagrangeBasis1d;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// No stabilization.
    Galerkin,
    /// Low-order viscosity everywhere (`gamma = 0`).
    LowOnly,
    /// Smoothness-based weights.
    #[default]
    Weno,
    /// Residual-based weights.
    RbWeno,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// `R^e = ||u_dot + div f(u_h)||^2` with `u_dot` from the previous stage.
    #[default]
    Lagged,
    /// `R^e = ||div f(u_h)||^2`.
    SpatialOnly,
}

#[derive(Clone, Debug)]
pub struct HyperbolicConfig<T> {
    pub scheme: Scheme,
    pub weno: WenoConfig<T>,
    pub residual: ResidualMode,
    pub cfl: T,
    /// SSP-RK order (2 or 3).
    pub rk_order: usize,
    pub t_final: T,
    /// Global wave speed bound overriding the pointwise estimate.
    pub wave_speed_bound: Option<T>,
    pub max_steps: usize,
    /// Record a diagnostics row every this many steps (and at the end).
    pub diagnostics_every: usize,
}

impl<T: Real> HyperbolicConfig<T> {
    pub fn new(scheme: Scheme, degree: usize, t_final: T) -> Self {
        Self {
            scheme,
            weno: WenoConfig::default(),
            residual: ResidualMode::Lagged,
            cfl: T::lit(0.3),
            rk_order: (degree + 1).min(3),
            t_final,
            wave_speed_bound: None,
            max_steps: usize::MAX,
            diagnostics_every: 1,
        }
    }

    fn weno_config(&self) -> WenoConfig<T> {
        let mut w = self.weno.clone();
        w.mode = match self.scheme {
            Scheme::RbWeno => WeightMode::Residual,
            _ => WeightMode::Classical,
        };
        w
    }
}

/// Solution snapshot together with the quantities of the last stage.
#[derive(Clone, Debug)]
pub struct SemiDiscreteState<T> {
    pub u: StateField<T>,
    pub t: T,
    pub gamma: Vec<T>,
    pub nu: Vec<T>,
    pub lambda: Vec<T>,
    /// Galerkin time derivative of the latest stage (absent before the
    /// first evaluation).
    pub udot: Option<StateField<T>>,
    pub steps: usize,
}

/// One diagnostics record.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mass: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Factor1d<T> {
    Banded(BandedLu<T>),
    Dense(LuFactor<T>),
}

impl<T: Real> Factor1d<T> {
    fn solve(&self, b: &mut [T]) {
        match self {
            Factor1d::Banded(lu) => lu.solve_in_place(b),
            Factor1d::Dense(lu) => lu.solve_in_place(b),
        }
    }
}

/// Exact inverse of the consistent mass matrix.
#[derive(Clone, Debug)]
enum MassSolver<T> {
    Dg(DenseMatrix<T>),
    /// `M = M_y (x) M_x` on the CG node lattice.
    Cg {
        x: Factor1d<T>,
        y: Option<Factor1d<T>>,
        nx: usize,
        ny: usize,
    },
}

/// Global 1D mass matrix of a CG lattice.
fn mass_1d<T: Real>(n_el: usize, p: usize, h: T, periodic: bool) -> Result<CsrMatrix<T>> {
    let line = LagrangeBasis1d::<T>::equispaced(p);
    let rule = quadrature_rule::<T>(1, 2 * p + 1)?;
    let n = if periodic { n_el * p } else { n_el * p + 1 };
    let mut t = Vec::new();
    for e in 0..n_el {
        for a in 0..=p {
            for b in 0..=p {
                let m: T = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| *w * line.eval(a, x[0], 0) * line.eval(b, x[0], 0))
                    .sum::<T>()
                    * h
                    * T::half();
                t.push(((e * p + a) % n, (e * p + b) % n, m));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(n, n, t))
}

fn factor_1d<T: Real>(m: &CsrMatrix<T>, periodic: bool) -> Result<Factor1d<T>> {
    Ok(if periodic {
        Factor1d::Dense(LuFactor::new(&m.to_dense())?)
    } else {
        Factor1d::Banded(BandedLu::new(m)?)
    })
}

impl<T: Real> MassSolver<T> {
    fn new(space: &FeSpace<T>) -> Result<Self> {
        if space.is_dg() {
            return Ok(MassSolver::Dg(space.kernels().mass_inv.clone()));
        }
        let mesh = space.mesh();
        let (ex, ey) = mesh.shape();
        let (hx, hy) = mesh.spacing();
        let p = space.degree();
        let periodic = mesh.is_periodic();
        let x = factor_1d(&mass_1d(ex, p, hx, periodic)?, periodic)?;
        let y = if space.dim() == 2 {
            Some(factor_1d(&mass_1d(ey, p, hy, periodic)?, periodic)?)
        } else {
            None
        };
        let (nx, ny) = space.lattice();
        Ok(MassSolver::Cg { x, y, nx, ny })
    }

    fn solve(&self, space: &FeSpace<T>, b: &mut [T]) {
        match self {
            MassSolver::Dg(inv) => {
                let n = inv.rows();
                let mut tmp = vec![T::zero(); n];
                for e in 0..space.num_elements() {
                    let blk = &mut b[e * n..(e + 1) * n];
                    for i in 0..n {
                        tmp[i] = crate::linalg::dot(inv.row(i), blk);
                    }
                    blk.copy_from_slice(&tmp);
                }
            }
            MassSolver::Cg { x, y, nx, ny } => {
                for row in b.chunks_mut(*nx) {
                    x.solve(row);
                }
                if let Some(y) = y {
                    let mut col = vec![T::zero(); *ny];
                    for gx in 0..*nx {
                        for gy in 0..*ny {
                            col[gy] = b[gx + nx * gy];
                        }
                        y.solve(&mut col);
                        for gy in 0..*ny {
                            b[gx + nx * gy] = col[gy];
                        }
                    }
                }
            }
        }
    }
}

/// Assembled global consistent mass matrix.
pub fn assemble_mass<T: Real>(space: &FeSpace<T>) -> CsrMatrix<T> {
    let m = &space.kernels().mass;
    let mut t = Vec::new();
    for e in 0..space.num_elements() {
        let dofs = space.element_dofs(e);
        for (i, &di) in dofs.iter().enumerate() {
            for (j, &dj) in dofs.iter().enumerate() {
                t.push((di, dj, m[(i, j)]));
            }
        }
    }
    CsrMatrix::from_triplets(space.n_dofs(), space.n_dofs(), t)
}

/// `dt = CFL h_min / (lambda_max (2p + 1))`, limited by the remaining time.
pub fn cfl_timestep<T: Real>(h_min: T, lambda_max: T, p: usize, cfl: T, remaining: T) -> T {
    if !(lambda_max > T::zero()) {
        return remaining;
    }
    (cfl * h_min / (lambda_max * T::count(2 * p + 1))).min(remaining)
}

/// Output of one right-hand-side evaluation.
#[derive(Clone, Debug)]
pub struct RhsOutput<T> {
    pub udot: StateField<T>,
    pub gamma: Vec<T>,
    pub nu: Vec<T>,
    pub lambda: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct HyperbolicSolver<T> {
    pub space: FeSpace<T>,
    pub model: PhysicsModel<T>,
    pub boundary: BoundarySpec<T>,
    pub config: HyperbolicConfig<T>,
    mass: MassSolver<T>,
}

impl<T: Real> HyperbolicSolver<T> {
    pub fn new(
        space: FeSpace<T>,
        model: PhysicsModel<T>,
        boundary: BoundarySpec<T>,
        config: HyperbolicConfig<T>,
    ) -> Result<Self> {
        if !(2..=3).contains(&config.rk_order) {
            return Err(Error::Unsupported(format!("SSP-RK order {}", config.rk_order)));
        }
        if !(config.cfl > T::zero()) {
            return Err(Error::InvalidParameter("CFL must be positive".into()));
        }
        config.weno.validate(space.dim())?;
        let mass = MassSolver::new(&space)?;
        Ok(Self {
            space,
            model,
            boundary,
            config,
            mass,
        })
    }

    pub fn num_components(&self) -> usize {
        self.model.num_components(self.space.dim())
    }

    /// Nodal interpolant of a state function.
    pub fn interpolate(&self, f: impl Fn([T; 2]) -> Vec<T>) -> StateField<T> {
        let m = self.num_components();
        let mut s = StateField::zeros(m, self.space.n_dofs());
        for (d, x) in self.space.dof_coords().iter().enumerate() {
            let v = f(*x);
            for c in 0..m {
                s.components[c][d] = v[c];
            }
        }
        s
    }

    pub fn initial_state(&self, u: StateField<T>) -> SemiDiscreteState<T> {
        let n = self.space.num_elements();
        SemiDiscreteState {
            u,
            t: T::zero(),
            gamma: vec![T::one(); n],
            nu: vec![T::zero(); n],
            lambda: vec![T::zero(); n],
            udot: None,
            steps: 0,
        }
    }

    fn local_states(&self, u: &StateField<T>, e: usize) -> Vec<Vec<T>> {
        u.components.iter().map(|c| self.space.gather(c, e)).collect()
    }

    /// States at the volume quadrature points, `[q][component]`.
    fn point_states(&self, local: &[Vec<T>]) -> Vec<Vec<T>> {
        let k = self.space.kernels();
        k.phi
            .iter()
            .map(|row| local.iter().map(|c| crate::linalg::dot(row, c)).collect())
            .collect()
    }

    /// `lambda_e` for every element.
    pub fn element_wave_speeds(&self, u: &StateField<T>) -> Result<Vec<T>> {
        if let Some(b) = self.config.wave_speed_bound {
            return Ok(vec![b; self.space.num_elements()]);
        }
        let k = self.space.kernels();
        let dim = self.space.dim();
        (0..self.space.num_elements())
            .map(|e| {
                let states = self.point_states(&self.local_states(u, e));
                let pts: Vec<[T; 2]> = k.points.iter().map(|xi| self.space.mesh().to_physical(e, *xi)).collect();
                self.model.max_wavespeed(&states, &pts, dim).map_err(|err| err.in_element(e))
            })
            .collect()
    }

    /// `R^e` from the first component (density for Euler).
    pub fn element_residuals(&self, u: &StateField<T>, udot: Option<&StateField<T>>) -> Vec<T> {
        let space = &self.space;
        let k = space.kernels();
        let n = space.n_loc();
        let dim = space.dim();
        let use_udot = self.config.residual == ResidualMode::Lagged;
        let mut c0 = vec![T::zero(); n];
        let mut m = [vec![T::zero(); n], vec![T::zero(); n]];
        let mut ud = vec![T::zero(); n];
        (0..space.num_elements())
            .map(|e| {
                space.gather_into(&u.components[0], e, &mut c0);
                if self.model.is_system() {
                    for d in 0..dim {
                        space.gather_into(&u.components[1 + d], e, &mut m[d]);
                    }
                }
                match (use_udot, udot) {
                    (true, Some(v)) => space.gather_into(&v.components[0], e, &mut ud),
                    _ => ud.iter_mut().for_each(|x| *x = T::zero()),
                }
                let mut r = T::zero();
                let mut scale = T::zero();
                for q in 0..k.num_points() {
                    let dt = crate::linalg::dot(&k.phi[q], &ud);
                    let div = if self.model.is_system() {
                        let mut s = T::zero();
                        for d in 0..dim {
                            for j in 0..n {
                                s += k.grad[q][j][d] * m[d][j];
                            }
                        }
                        s
                    } else {
                        let uq = crate::linalg::dot(&k.phi[q], &c0);
                        let mut g = [T::zero(); 2];
                        for j in 0..n {
                            g[0] += k.grad[q][j][0] * c0[j];
                            g[1] += k.grad[q][j][1] * c0[j];
                        }
                        let x = space.mesh().to_physical(e, k.points[q]);
                        self.model.scalar_flux_divergence(uq, g, x, dim)
                    };
                    let w = k.weights[q];
                    r += w * (dt + div) * (dt + div);
                    scale += w * (dt.abs() + div.abs()) * (dt.abs() + div.abs());
                }
                if r <= T::lit(1e-24) * scale {
                    T::zero()
                } else {
                    r
                }
            })
            .collect()
    }

    /// Blending factors for the configured scheme.
    pub fn blending(&self, u: &StateField<T>, udot: Option<&StateField<T>>) -> Result<Vec<T>> {
        let n = self.space.num_elements();
        match self.config.scheme {
            Scheme::Galerkin => Ok(vec![T::one(); n]),
            Scheme::LowOnly => Ok(vec![T::zero(); n]),
            Scheme::Weno => sensor_field(&self.space, &u.components[0], &self.config.weno_config(), None),
            Scheme::RbWeno => {
                let res = self.element_residuals(u, udot);
                sensor_field(&self.space, &u.components[0], &self.config.weno_config(), Some(&res))
            }
        }
    }

    /// Galerkin right-hand side `b` (before stabilization and mass solve).
    fn galerkin_vector(&self, u: &StateField<T>, t: T) -> Result<StateField<T>> {
        let space = &self.space;
        let mesh = space.mesh();
        let k = space.kernels();
        let dim = space.dim();
        let m = self.num_components();
        let n = space.n_loc();
        let mut b = StateField::zeros(m, space.n_dofs());
        let mut f = [[T::zero(); 2]; 4];
        for e in 0..space.num_elements() {
            let local = self.local_states(u, e);
            let states = self.point_states(&local);
            let dofs = space.element_dofs(e);
            for (q, s) in states.iter().enumerate() {
                let x = mesh.to_physical(e, k.points[q]);
                self.model.flux(s, x, dim, &mut f).map_err(|err| err.in_element(e))?;
                let w = k.weights[q];
                for c in 0..m {
                    let comp = &mut b.components[c];
                    for i in 0..n {
                        comp[dofs[i]] += w * (f[c][0] * k.grad[q][i][0] + f[c][1] * k.grad[q][i][1]);
                    }
                }
            }
        }
        let mut fstar = [T::zero(); 4];
        for face in mesh.faces() {
            if face.right.is_some() && !space.is_dg() {
                continue;
            }
            let le = face.left;
            let fk_l = &k.faces[face.left_side.index()];
            let local_l = self.local_states(u, le);
            let dofs_l = space.element_dofs(le).to_vec();
            let right = face.right.map(|re| {
                let side: Side = face.left_side.opposite();
                (re, &k.faces[side.index()], self.local_states(u, re), space.element_dofs(re).to_vec())
            });
            for q in 0..fk_l.points.len() {
                let ul: Vec<T> = local_l.iter().map(|c| crate::linalg::dot(&fk_l.phi[q], c)).collect();
                let x = mesh.to_physical(le, fk_l.points[q]);
                let ur: Vec<T> = match &right {
                    Some((_, fk_r, local_r, _)) => {
                        local_r.iter().map(|c| crate::linalg::dot(&fk_r.phi[q], c)).collect()
                    }
                    None => boundary_state(
                        &self.boundary,
                        &self.model,
                        face.tag.expect("boundary face has a tag"),
                        &ul,
                        face.normal,
                        x,
                        t,
                    )?,
                };
                self.model
                    .lax_friedrichs(&ul, &ur, x, face.normal, dim, &mut fstar)
                    .map_err(|err| err.in_element(le))?;
                let w = fk_l.weights[q];
                for c in 0..m {
                    let comp = &mut b.components[c];
                    for i in 0..n {
                        comp[dofs_l[i]] -= w * fstar[c] * fk_l.phi[q][i];
                    }
                    if let Some((_, fk_r, _, dofs_r)) = &right {
                        for i in 0..n {
                            comp[dofs_r[i]] += w * fstar[c] * fk_r.phi[q][i];
                        }
                    }
                }
            }
        }
        Ok(b)
    }

    /// `u_dot = M^{-1} (b_Galerkin - b_stab)` at time `t`.
    pub fn assemble_rhs(&self, u: &StateField<T>, t: T, udot_prev: Option<&StateField<T>>) -> Result<RhsOutput<T>> {
        let lambda = self.element_wave_speeds(u)?;
        let h = self.space.mesh().h_max();
        let p = self.space.degree();
        let nu = lambda
            .iter()
            .map(|l| viscosity(*l, h, p))
            .collect::<Result<Vec<T>>>()?;
        let gamma = self.blending(u, udot_prev)?;
        let mut b = self.galerkin_vector(u, t)?;
        if self.config.scheme != Scheme::Galerkin {
            for (c, comp) in b.components.iter_mut().enumerate() {
                add_blended_vector(&self.space, &nu, &gamma, &u.components[c], -T::one(), comp);
            }
        }
        for comp in b.components.iter_mut() {
            self.mass.solve(&self.space, comp);
        }
        Ok(RhsOutput {
            udot: b,
            gamma,
            nu,
            lambda,
        })
    }

    fn stage(&self, state: &mut SemiDiscreteState<T>, u: &StateField<T>, t: T) -> Result<StateField<T>> {
        let out = self.assemble_rhs(u, t, state.udot.as_ref())?;
        state.gamma = out.gamma;
        state.nu = out.nu;
        state.lambda = out.lambda;
        state.udot = Some(out.udot.clone());
        Ok(out.udot)
    }

    /// One SSP-RK step of size `dt`.
    pub fn ssp_rk_step(&self, state: &mut SemiDiscreteState<T>, dt: T) -> Result<()> {
        let t = state.t;
        let u0 = state.u.clone();
        let l0 = self.stage(state, &u0, t)?;
        let mut u1 = u0.clone();
        u1.axpby(T::one(), dt, &l0);
        let unew = match self.config.rk_order {
            2 => {
                let l1 = self.stage(state, &u1, t + dt)?;
                u1.axpby(T::one(), dt, &l1);
                let mut out = u0;
                out.axpby(T::half(), T::half(), &u1);
                out
            }
            _ => {
                let l1 = self.stage(state, &u1, t + dt)?;
                u1.axpby(T::one(), dt, &l1);
                let mut u2 = u0.clone();
                u2.axpby(T::lit(0.75), T::lit(0.25), &u1);
                let l2 = self.stage(state, &u2, t + dt * T::half())?;
                u2.axpby(T::one(), dt, &l2);
                let mut out = u0;
                out.axpby(T::one() / T::lit(3.0), T::two() / T::lit(3.0), &u2);
                out
            }
        };
        state.u = unew;
        state.t = t + dt;
        state.steps += 1;
        if !state.u.is_finite() {
            return Err(Error::BlowUp {
                step: state.steps,
                time: state.t.as_f64(),
            });
        }
        Ok(())
    }

    /// Stable step for the current state.
    pub fn timestep(&self, state: &SemiDiscreteState<T>) -> Result<T> {
        let lam = self
            .element_wave_speeds(&state.u)?
            .into_iter()
            .fold(T::zero(), |m, l| m.max(l));
        let (hx, hy) = self.space.mesh().spacing();
        let h = if self.space.dim() == 1 { hx } else { hx.min(hy) };
        Ok(cfl_timestep(
            h,
            lam,
            self.space.degree(),
            self.config.cfl,
            self.config.t_final - state.t,
        ))
    }

    pub fn diagnostics(&self, state: &SemiDiscreteState<T>, dt: T) -> DiagnosticRow {
        let mut row = DiagnosticRow {
            step: state.steps,
            t: state.t.as_f64(),
            dt: dt.as_f64(),
            min: Vec::new(),
            max: Vec::new(),
            mass: Vec::new(),
        };
        for c in &state.u.components {
            row.min.push(c.iter().fold(f64::INFINITY, |m, v| m.min(v.as_f64())));
            row.max.push(c.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64())));
            row.mass.push(self.space.integral(c).as_f64());
        }
        row
    }

    /// Advances to `t_final` (or `max_steps`).
    pub fn run(&self, state: &mut SemiDiscreteState<T>) -> Result<Vec<DiagnosticRow>> {
        let mut rows = vec![self.diagnostics(state, T::zero())];
        let tol = self.config.t_final * T::lit(1e-12);
        let every = self.config.diagnostics_every.max(1);
        while state.t < self.config.t_final - tol && state.steps < self.config.max_steps {
            let dt = self.timestep(state)?;
            if !(dt > T::zero()) {
                break;
            }
            self.ssp_rk_step(state, dt)?;
            let last = state.t >= self.config.t_final - tol || state.steps >= self.config.max_steps;
            if state.steps % every == 0 || last {
                rows.push(self.diagnostics(state, dt));
            }
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pcg;
    use crate::mesh::Mesh;
    use crate::physics::{BoundaryData, VelocityField};
    use crate::space::Continuity;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn advection_1d(cont: Continuity, p: usize, n: usize, periodic: bool, scheme: Scheme) -> HyperbolicSolver<f64> {
        let mesh = Mesh::build_uniform_line(0.0, 1.0, n, periodic).unwrap();
        let space = FeSpace::new(mesh, cont, p).unwrap();
        HyperbolicSolver::new(
            space,
            PhysicsModel::Advection(VelocityField::Constant([1.0, 0.0])),
            BoundarySpec::inflow(BoundaryData::Constant(vec![0.0])),
            HyperbolicConfig::new(scheme, p, 0.1),
        )
        .unwrap()
    }

    #[test]
    fn kronecker_mass_solve_matches_pcg() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(p, periodic) in &[(1, false), (2, false), (2, true)] {
            let mesh = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 2.0, 5, 4, periodic).unwrap();
            let space = FeSpace::new(mesh, Continuity::Cg, p).unwrap();
            let solver = MassSolver::new(&space).unwrap();
            let b: Vec<f64> = (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = b.clone();
            solver.solve(&space, &mut x);
            let m = assemble_mass(&space);
            let (y, _) = pcg(&m, &b, None, 1e-13, 1000).unwrap();
            for (a, c) in x.iter().zip(&y) {
                assert!((a - c).abs() < 1e-9 * (1.0 + c.abs()));
            }
        }
    }

    #[test]
    fn cfl_examples() {
        assert!((cfl_timestep::<f64>(0.01, 1.0, 1, 0.3, 1.0) - 0.001).abs() < 1e-15);
        assert_eq!(cfl_timestep::<f64>(0.01, 0.0, 1, 0.3, 0.7), 0.7);
        assert!((cfl_timestep::<f64>(0.005, 1.0, 1, 0.3, 1.0) - 0.0005).abs() < 1e-15);
    }

    #[test]
    fn free_stream_preservation() {
        for cont in [Continuity::Cg, Continuity::Dg] {
            for scheme in [Scheme::Weno, Scheme::RbWeno, Scheme::LowOnly] {
                let s = advection_1d(cont, 2, 8, true, scheme);
                let u = s.interpolate(|_| vec![0.7]);
                let out = s.assemble_rhs(&u, 0.0, None).unwrap();
                assert!(out.udot.components[0].iter().all(|v| v.abs() < 1e-12));
            }
        }
        let mesh = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 4, 4, true).unwrap();
        let space = FeSpace::new(mesh, Continuity::Dg, 1).unwrap();
        let s: HyperbolicSolver<f64> = HyperbolicSolver::new(space, PhysicsModel::euler(), BoundarySpec::none(), HyperbolicConfig::new(Scheme::RbWeno, 1, 0.1)).unwrap();
        let u = s.interpolate(|_| crate::physics::conserved(1.4, 1.2, &[0.3, -0.4], 2.0));
        let out = s.assemble_rhs(&u, 0.0, None).unwrap();
        assert!(out.udot.components.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn two_cell_upwind_oracle() {
        // DG p=1 with cellwise constant data, inflow 0 at x=0, v=1
        let s = advection_1d(Continuity::Dg, 1, 2, false, Scheme::Galerkin);
        let u = StateField { components: vec![vec![1.0, 1.0, 3.0, 3.0]] };
        let out = s.assemble_rhs(&u, 0.0, None).unwrap();
        // cell 0: volume (-1, 1), faces (0, -1); cell 1: volume (-3, 3), faces (1, -3)
        let h = 0.5;
        let minv = |b0: f64, b1: f64| ((4.0 * b0 - 2.0 * b1) / h, (-2.0 * b0 + 4.0 * b1) / h);
        let (a0, a1) = minv(-1.0, 0.0);
        let (c0, c1) = minv(-2.0, 0.0);
        let got = &out.udot.components[0];
        for (g, w) in got.iter().zip([a0, a1, c0, c1]) {
            assert!((g - w).abs() < 1e-12, "{got:?}");
        }
    }

    #[test]
    fn dg_weno_with_unit_gamma_is_galerkin() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = advection_1d(Continuity::Dg, 2, 6, true, Scheme::Galerkin);
        let u = StateField { components: vec![(0..s.space.n_dofs()).map(|_| rng.gen_range(0.0..1.0)).collect()] };
        let g = s.assemble_rhs(&u, 0.0, None).unwrap();
        let mut b = s.galerkin_vector(&u, 0.0).unwrap();
        let nu = vec![0.3; s.space.num_elements()];
        add_blended_vector(&s.space, &nu, &vec![1.0; s.space.num_elements()], &u.components[0], -1.0, &mut b.components[0]);
        s.mass.solve(&s.space, &mut b.components[0]);
        assert_eq!(g.udot.components[0], b.components[0]);
    }

    #[test]
    fn steady_exact_state_has_zero_residual() {
        let s = advection_1d(Continuity::Dg, 2, 6, true, Scheme::RbWeno);
        let u = s.interpolate(|_| vec![2.0]);
        let udot = StateField::zeros(1, s.space.n_dofs());
        assert!(s.element_residuals(&u, Some(&udot)).iter().all(|r| *r == 0.0));
    }

    #[test]
    fn lagged_residual_matches_quadrature_oracle() {
        let s = advection_1d(Continuity::Dg, 2, 5, true, Scheme::RbWeno);
        let u = s.interpolate(|x| vec![(2.0 * std::f64::consts::PI * x[0]).sin()]);
        let out = s.assemble_rhs(&u, 0.0, None).unwrap();
        let r = s.element_residuals(&u, Some(&out.udot));
        let rule = quadrature_rule::<f64>(1, 2 * 2 + 3).unwrap();
        for e in 0..5 {
            let cu = s.space.gather(&u.components[0], e);
            let cd = s.space.gather(&out.udot.components[0], e);
            let mut want = 0.0;
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let ud = s.space.evaluate_local(&cd, *xi, [0, 0]).unwrap();
                let ux = s.space.evaluate_local(&cu, *xi, [1, 0]).unwrap();
                want += w * 0.1 * (ud + ux).powi(2);
            }
            assert!((r[e] - want).abs() < 1e-11 * (1.0 + want));
        }
    }

    #[test]
    fn rk3_matches_taylor_on_linear_ode() {
        let s = advection_1d(Continuity::Dg, 2, 8, true, Scheme::Galerkin);
        let u0 = s.interpolate(|x| vec![(2.0 * std::f64::consts::PI * x[0]).sin()]);
        let apply = |v: &StateField<f64>| s.assemble_rhs(v, 0.0, None).unwrap().udot;
        for dt in [1e-2, 5e-3] {
            let mut st = s.initial_state(u0.clone());
            s.ssp_rk_step(&mut st, dt).unwrap();
            // Taylor: u + dt L u + dt^2/2 L^2 u + dt^3/6 L^3 u
            let l1 = apply(&u0);
            let l2 = apply(&l1);
            let l3 = apply(&l2);
            let mut taylor = u0.clone();
            taylor.axpby(1.0, dt, &l1);
            taylor.axpby(1.0, dt * dt / 2.0, &l2);
            taylor.axpby(1.0, dt * dt * dt / 6.0, &l3);
            let err: f64 = st.u.components[0].iter().zip(&taylor.components[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err}");
        }
    }

    #[test]
    fn constant_state_invariant_and_zero_velocity_exact() {
        let s = advection_1d(Continuity::Cg, 1, 10, true, Scheme::Weno);
        let mut st = s.initial_state(s.interpolate(|_| vec![0.4]));
        for _ in 0..100 {
            s.ssp_rk_step(&mut st, 1e-3).unwrap();
        }
        assert!(st.u.components[0].iter().all(|v| (v - 0.4).abs() < 1e-11));

        let mesh = Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, 4, 4, false).unwrap();
        let space = FeSpace::new(mesh, Continuity::Cg, 2).unwrap();
        let mut cfg = HyperbolicConfig::new(Scheme::Weno, 2, 0.5);
        cfg.max_steps = 10;
        let s: HyperbolicSolver<f64> = HyperbolicSolver::new(space, PhysicsModel::Advection(VelocityField::Constant([0.0, 0.0])), BoundarySpec::inflow(BoundaryData::Constant(vec![0.0])), cfg).unwrap();
        let u0 = s.interpolate(|x| vec![(x[0] * 7.0).sin() * x[1]]);
        let mut st = s.initial_state(u0.clone());
        s.run(&mut st).unwrap();
        for (a, b) in st.u.components[0].iter().zip(&u0.components[0]) {
            assert!((a - b).abs() <= 1e-15);
        }
        assert_eq!(st.t, 0.5);
    }

    #[test]
    fn dg_periodic_step_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = advection_1d(Continuity::Dg, 1, 20, true, Scheme::Weno);
        let u0 = StateField { components: vec![(0..s.space.n_dofs()).map(|_| rng.gen_range(0.0..1.0)).collect()] };
        let m0 = s.space.integral(&u0.components[0]);
        let mut st = s.initial_state(u0);
        s.ssp_rk_step(&mut st, 1e-3).unwrap();
        let m1 = s.space.integral(&st.u.components[0]);
        assert!((m1 - m0).abs() <= 1e-12 * m0.abs());
    }
}
