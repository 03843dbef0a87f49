//! Flux functions, wave speed bounds, the local Lax-Friedrichs flux and
//! boundary states.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::BoundaryTag;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VelocityField<T> {
    Constant([T; 2]),
    /// `omega (c_y - y, x - c_x)`.
    Rotation { omega: T, center: [T; 2] },
}

impl<T: Real> VelocityField<T> {
    pub fn at(&self, x: [T; 2]) -> [T; 2] {
        match *self {
            VelocityField::Constant(v) => v,
            VelocityField::Rotation { omega, center } => {
                [omega * (center[1] - x[1]), omega * (x[0] - center[0])]
            }
        }
    }

    pub fn divergence(&self, _x: [T; 2]) -> T {
        T::zero()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhysicsModel<T> {
    Advection(VelocityField<T>),
    /// `f(u) = (sin u, cos u)`.
    Kpp,
    /// `f(u) = u^2 / 2` in every direction.
    Burgers,
    Euler { gamma: T },
}

impl<T: Real> PhysicsModel<T> {
    pub fn euler() -> Self {
        PhysicsModel::Euler { gamma: T::lit(1.4) }
    }

    pub fn num_components(&self, dim: usize) -> usize {
        match self {
            PhysicsModel::Euler { .. } => dim + 2,
            _ => 1,
        }
    }

    pub fn is_system(&self) -> bool {
        matches!(self, PhysicsModel::Euler { .. })
    }

    /// Flux `f(u)`: `out[c] = [f_x, f_y]` for component `c`.
    pub fn flux(&self, u: &[T], x: [T; 2], dim: usize, out: &mut [[T; 2]]) -> Result<()> {
        match *self {
            PhysicsModel::Advection(v) => {
                let v = v.at(x);
                out[0] = [v[0] * u[0], v[1] * u[0]];
            }
            PhysicsModel::Kpp => out[0] = [u[0].sin(), u[0].cos()],
            PhysicsModel::Burgers => {
                let f = u[0] * u[0] * T::half();
                out[0] = [f, if dim == 1 { T::zero() } else { f }];
            }
            PhysicsModel::Euler { gamma } => {
                let p = pressure(gamma, u, dim)?;
                let rho = u[0];
                if dim == 1 {
                    let v = u[1] / rho;
                    out[0] = [u[1], T::zero()];
                    out[1] = [u[1] * v + p, T::zero()];
                    out[2] = [v * (u[2] + p), T::zero()];
                } else {
                    let (vx, vy) = (u[1] / rho, u[2] / rho);
                    out[0] = [u[1], u[2]];
                    out[1] = [u[1] * vx + p, u[1] * vy];
                    out[2] = [u[2] * vx, u[2] * vy + p];
                    out[3] = [vx * (u[3] + p), vy * (u[3] + p)];
                }
            }
        }
        Ok(())
    }

    /// Upper bound of the wave speed, in direction `n` or over all
    /// directions.
    pub fn wave_speed(&self, u: &[T], x: [T; 2], dim: usize, n: Option<[T; 2]>) -> Result<T> {
        let norm = |v: [T; 2]| (v[0] * v[0] + v[1] * v[1]).sqrt();
        Ok(match *self {
            PhysicsModel::Advection(v) => {
                let v = v.at(x);
                match n {
                    Some(n) => (v[0] * n[0] + v[1] * n[1]).abs(),
                    None => norm(v),
                }
            }
            PhysicsModel::Kpp => T::one(),
            PhysicsModel::Burgers => {
                let dir = if dim == 1 { [T::one(), T::zero()] } else { [T::one(), T::one()] };
                let d = match n {
                    Some(n) => (dir[0] * n[0] + dir[1] * n[1]).abs(),
                    None => norm(dir),
                };
                u[0].abs() * d
            }
            PhysicsModel::Euler { gamma } => {
                let p = pressure(gamma, u, dim)?;
                let c = (gamma * p / u[0]).sqrt();
                let v = [u[1] / u[0], if dim == 1 { T::zero() } else { u[2] / u[0] }];
                let vn = match n {
                    Some(n) => (v[0] * n[0] + v[1] * n[1]).abs(),
                    None => norm(v),
                };
                vn + c
            }
        })
    }

    /// Local Lax-Friedrichs flux `F*(uL, uR, n)`.
    pub fn lax_friedrichs(
        &self,
        ul: &[T],
        ur: &[T],
        x: [T; 2],
        n: [T; 2],
        dim: usize,
        out: &mut [T],
    ) -> Result<()> {
        let m = ul.len();
        let mut fl = [[T::zero(); 2]; 4];
        let mut fr = [[T::zero(); 2]; 4];
        self.flux(ul, x, dim, &mut fl)?;
        self.flux(ur, x, dim, &mut fr)?;
        let lam = self
            .wave_speed(ul, x, dim, Some(n))?
            .max(self.wave_speed(ur, x, dim, Some(n))?);
        for c in 0..m {
            let fln = fl[c][0] * n[0] + fl[c][1] * n[1];
            let frn = fr[c][0] * n[0] + fr[c][1] * n[1];
            out[c] = T::half() * (fln + frn) - T::half() * lam * (ur[c] - ul[c]);
        }
        Ok(())
    }

    /// Wave speed bound over a set of states and points.
    pub fn max_wavespeed(&self, states: &[Vec<T>], points: &[[T; 2]], dim: usize) -> Result<T> {
        let mut lam = T::zero();
        for (u, x) in states.iter().zip(points) {
            lam = lam.max(self.wave_speed(u, *x, dim, None)?);
        }
        Ok(lam)
    }

    /// `div f(u_h)` of a scalar model by the chain rule.
    pub fn scalar_flux_divergence(&self, u: T, grad: [T; 2], x: [T; 2], dim: usize) -> T {
        match *self {
            PhysicsModel::Advection(v) => {
                let vx = v.at(x);
                vx[0] * grad[0] + vx[1] * grad[1] + v.divergence(x) * u
            }
            PhysicsModel::Kpp => u.cos() * grad[0] - u.sin() * grad[1],
            PhysicsModel::Burgers => {
                if dim == 1 {
                    u * grad[0]
                } else {
                    u * (grad[0] + grad[1])
                }
            }
            PhysicsModel::Euler { .. } => T::nan(),
        }
    }
}

/// `p = (gamma - 1) (rho E - |m|^2 / (2 rho))`; rejects inadmissible states.
pub fn pressure<T: Real>(gamma: T, u: &[T], dim: usize) -> Result<T> {
    let rho = u[0];
    if !(rho > T::zero()) {
        return Err(Error::Inadmissible {
            element: None,
            reason: format!("density {rho}"),
        });
    }
    let (m2, e) = if dim == 1 {
        (u[1] * u[1], u[2])
    } else {
        (u[1] * u[1] + u[2] * u[2], u[3])
    };
    let internal = e - T::half() * m2 / rho;
    if !(internal > T::zero()) {
        return Err(Error::Inadmissible {
            element: None,
            reason: format!("internal energy {internal}"),
        });
    }
    Ok((gamma - T::one()) * internal)
}

/// Conserved state from density, velocity (length `dim`) and pressure.
pub fn conserved<T: Real>(gamma: T, rho: T, v: &[T], p: T) -> Vec<T> {
    let kinetic: T = v.iter().map(|c| *c * *c).sum::<T>() * rho * T::half();
    let mut u = Vec::with_capacity(v.len() + 2);
    u.push(rho);
    u.extend(v.iter().map(|c| rho * *c));
    u.push(p / (gamma - T::one()) + kinetic);
    u
}

/// Density, velocity and pressure of a conserved state.
pub fn primitive<T: Real>(gamma: T, u: &[T], dim: usize) -> Result<(T, Vec<T>, T)> {
    let p = pressure(gamma, u, dim)?;
    let v = u[1..=dim].iter().map(|m| *m / u[0]).collect();
    Ok((u[0], v, p))
}

pub type StateFn<T> = Arc<dyn Fn([T; 2], T) -> Vec<T> + Send + Sync>;

/// Exterior data for tagged boundary faces.
#[derive(Clone)]
pub enum BoundaryData<T> {
    Constant(Vec<T>),
    Function(StateFn<T>),
}

impl<T: Real> BoundaryData<T> {
    pub fn eval(&self, x: [T; 2], t: T) -> Vec<T> {
        match self {
            BoundaryData::Constant(v) => v.clone(),
            BoundaryData::Function(f) => f(x, t),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for BoundaryData<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryData::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            BoundaryData::Function(_) => f.write_str("Function(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoundarySpec<T> {
    /// State for `Inflow` faces.
    pub inflow: Option<BoundaryData<T>>,
    /// State for `DirichletTimed` faces.
    pub timed: Option<BoundaryData<T>>,
}

impl<T: Real> BoundarySpec<T> {
    pub fn none() -> Self {
        Self {
            inflow: None,
            timed: None,
        }
    }

    pub fn inflow(data: BoundaryData<T>) -> Self {
        Self {
            inflow: Some(data),
            timed: None,
        }
    }
}

/// Exterior (ghost) state on a boundary face.
pub fn boundary_state<T: Real>(
    spec: &BoundarySpec<T>,
    model: &PhysicsModel<T>,
    tag: BoundaryTag,
    interior: &[T],
    n: [T; 2],
    x: [T; 2],
    t: T,
) -> Result<Vec<T>> {
    let missing = |what: &str| Error::InvalidParameter(format!("no {what} boundary data configured"));
    match tag {
        BoundaryTag::Outflow => Ok(interior.to_vec()),
        BoundaryTag::Inflow => Ok(spec.inflow.as_ref().ok_or_else(|| missing("inflow"))?.eval(x, t)),
        BoundaryTag::DirichletTimed => Ok(spec.timed.as_ref().ok_or_else(|| missing("timed"))?.eval(x, t)),
        BoundaryTag::Wall => {
            let mut g = interior.to_vec();
            if model.is_system() {
                let dim = interior.len() - 2;
                let mn: T = (0..dim).map(|i| interior[1 + i] * n[i]).sum();
                for i in 0..dim {
                    g[1 + i] = interior[1 + i] - T::two() * mn * n[i];
                }
            }
            Ok(g)
        }
    }
}

/// Double Mach reflection: post-shock state left of the moving shock line
/// `x = 1/6 + (y + 20 t) / sqrt(3)`, pre-shock state to the right.
pub fn double_mach_state<T: Real>(x: [T; 2], t: T) -> Vec<T> {
    let gamma = T::lit(1.4);
    let shock = T::lit(1.0 / 6.0) + (x[1] + T::lit(20.0) * t) / T::lit(3f64.sqrt());
    if x[0] < shock {
        let a = T::lit(30f64.to_radians());
        conserved(
            gamma,
            T::lit(8.0),
            &[T::lit(8.25) * a.cos(), -T::lit(8.25) * a.sin()],
            T::lit(116.5),
        )
    } else {
        conserved(gamma, T::lit(1.4), &[T::zero(), T::zero()], T::one())
    }
}
