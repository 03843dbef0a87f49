//! Benchmark registry: initial and boundary data, solver construction from
//! a [`RunConfig`], and the `run_benchmark` driver.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::cdr::{boundary_layer_problem, convergence_study, smooth_problem, CdrOptions, CdrProblem, ConvergenceRow};
use crate::config::{Benchmark, RunConfig};
use crate::error::{Error, Result};
use crate::hyperbolic::{DiagnosticRow, HyperbolicConfig, HyperbolicSolver, SemiDiscreteState};
use crate::mesh::{BoundaryTag, Mesh};
use crate::output::{write_convergence_csv, write_csv_file, write_diagnostics_csv, write_profile_csv, write_vtk_file, VtkField};
use crate::physics::{conserved, double_mach_state, BoundaryData, BoundarySpec, PhysicsModel, VelocityField};
use crate::scalar::Real;
use crate::space::{FeSpace, StateField};

/// Hump, cone and slotted cylinder of radius 0.15.
pub fn sbr_initial<T: Real>(x: [T; 2]) -> T {
    let r0 = T::lit(0.15);
    let dist = |cx: f64, cy: f64| ((x[0] - T::lit(cx)).powi(2) + (x[1] - T::lit(cy)).powi(2)).sqrt();
    let hump = dist(0.25, 0.5);
    if hump <= r0 {
        return T::lit(0.25) + T::lit(0.25) * (T::PI() * hump / r0).cos();
    }
    let cone = dist(0.5, 0.25);
    if cone <= r0 {
        return T::one() - cone / r0;
    }
    let cyl = dist(0.5, 0.75);
    if cyl <= r0 && ((x[0] - T::half()).abs() >= T::lit(0.025) || x[1] >= T::lit(0.85)) {
        return T::one();
    }
    T::zero()
}

/// `7 pi / 2` inside the unit disk, `pi / 4` outside.
pub fn kpp_initial<T: Real>(x: [T; 2]) -> T {
    if x[0] * x[0] + x[1] * x[1] <= T::one() {
        T::lit(3.5) * T::PI()
    } else {
        T::FRAC_PI_4()
    }
}

pub fn titarev_toro_left<T: Real>() -> Vec<T> {
    conserved(T::lit(1.4), T::lit(1.515695), &[T::lit(0.523346)], T::lit(1.805))
}

pub fn titarev_toro_initial<T: Real>(x: [T; 2], interface: T) -> Vec<T> {
    if x[0] < interface {
        titarev_toro_left()
    } else {
        let rho = T::one() + T::lit(0.1) * (T::lit(20.0) * T::PI() * (x[0] - T::lit(5.0))).sin();
        conserved(T::lit(1.4), rho, &[T::zero()], T::one())
    }
}

/// Dense state 1 inside the band `lo <= y <= hi`, state 2 outside.
pub fn kelvin_helmholtz_initial<T: Real>(x: [T; 2], band: [T; 2]) -> Vec<T> {
    let vy = T::lit(0.01) * (T::two() * T::PI() * (x[0] - T::half())).sin();
    let p = T::lit(2.5);
    if x[1] >= band[0] && x[1] <= band[1] {
        conserved(T::lit(1.4), T::two(), &[-T::half(), vy], p)
    } else {
        conserved(T::lit(1.4), T::one(), &[T::half(), vy], p)
    }
}

/// Solver plus initial data of a time-dependent benchmark.
#[derive(Clone, Debug)]
pub struct HyperbolicSetup<T> {
    pub solver: HyperbolicSolver<T>,
    pub initial: StateField<T>,
}

fn mesh_for<T: Real>(cfg: &RunConfig) -> Result<Mesh<T>> {
    let e = &cfg.elements;
    let l = |v: f64| T::lit(v);
    match cfg.benchmark {
        Benchmark::TitarevToro => {
            let mut m = Mesh::build_uniform_line(l(-5.0), l(5.0), e[0], false)?;
            m.set_boundary_tags(|f| if f.normal[0] < T::zero() { BoundaryTag::Inflow } else { BoundaryTag::Wall });
            Ok(m)
        }
        Benchmark::Sbr | Benchmark::CdrMms | Benchmark::CdrLayer => {
            Mesh::build_uniform_quad(l(0.0), l(0.0), l(1.0), l(1.0), e[0], e[1], false)
        }
        Benchmark::Kpp => Mesh::build_uniform_quad(l(-2.0), l(-2.5), l(2.0), l(1.5), e[0], e[1], false),
        Benchmark::KelvinHelmholtz => Mesh::build_uniform_quad(l(0.0), l(0.0), l(1.0), l(1.0), e[0], e[1], true),
        Benchmark::DoubleMach => {
            let mut m = Mesh::build_uniform_quad(l(0.0), l(0.0), l(4.0), l(1.0), e[0], e[1], false)?;
            let sixth = l(1.0 / 6.0);
            m.set_boundary_tags(|f| {
                if f.normal[0] > T::zero() {
                    BoundaryTag::Outflow
                } else if f.normal[1] < T::zero() && f.center[0] >= sixth {
                    BoundaryTag::Wall
                } else {
                    BoundaryTag::DirichletTimed
                }
            });
            Ok(m)
        }
    }
}

pub fn hyperbolic_config<T: Real>(cfg: &RunConfig) -> HyperbolicConfig<T> {
    let w = cfg.weno_config();
    let mut h = HyperbolicConfig::new(cfg.scheme, cfg.degree, T::lit(cfg.t_final));
    h.weno = crate::weno::WenoConfig {
        neighbor_weight: T::lit(w.neighbor_weight),
        r: w.r,
        epsilon: T::lit(w.epsilon),
        delta: T::lit(w.delta),
        theta: T::lit(w.theta),
        q: T::lit(w.q),
        q_beta: w.q_beta.map(T::lit),
        mode: w.mode,
        seminorm: w.seminorm,
    };
    h.residual = cfg.residual;
    h.cfl = T::lit(cfg.cfl);
    h.rk_order = cfg.rk_order;
    h.wave_speed_bound = cfg.wave_speed_bound.map(T::lit);
    h.max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    h.diagnostics_every = cfg.output.diagnostics_every;
    h
}

/// Builds the solver and initial state of a time-dependent benchmark.
pub fn hyperbolic_setup<T: Real>(cfg: &RunConfig) -> Result<HyperbolicSetup<T>> {
    if cfg.benchmark.is_cdr() {
        return Err(Error::InvalidParameter(format!("{} is a steady benchmark", cfg.benchmark.name())));
    }
    let mesh = mesh_for::<T>(cfg)?;
    let space = FeSpace::new(mesh, cfg.continuity, cfg.degree)?;
    let (model, boundary) = match cfg.benchmark {
        Benchmark::Sbr => (
            PhysicsModel::Advection(VelocityField::Rotation {
                omega: T::two() * T::PI(),
                center: [T::half(), T::half()],
            }),
            BoundarySpec::inflow(BoundaryData::Constant(vec![T::zero()])),
        ),
        Benchmark::Kpp => (PhysicsModel::Kpp, BoundarySpec::inflow(BoundaryData::Constant(vec![T::FRAC_PI_4()]))),
        Benchmark::TitarevToro => (PhysicsModel::euler(), BoundarySpec::inflow(BoundaryData::Constant(titarev_toro_left()))),
        Benchmark::KelvinHelmholtz => (PhysicsModel::euler(), BoundarySpec::none()),
        Benchmark::DoubleMach => (
            PhysicsModel::euler(),
            BoundarySpec {
                inflow: None,
                timed: Some(BoundaryData::Function(std::sync::Arc::new(double_mach_state))),
            },
        ),
        Benchmark::CdrMms | Benchmark::CdrLayer => unreachable!(),
    };
    let solver = HyperbolicSolver::new(space, model, boundary, hyperbolic_config(cfg))?;
    let tt = T::lit(cfg.fixture.tt_interface);
    let band = [T::lit(cfg.fixture.kh_band[0]), T::lit(cfg.fixture.kh_band[1])];
    let initial = match cfg.benchmark {
        Benchmark::Sbr => solver.interpolate(|x| vec![sbr_initial(x)]),
        Benchmark::Kpp => solver.interpolate(|x| vec![kpp_initial(x)]),
        Benchmark::TitarevToro => solver.interpolate(|x| titarev_toro_initial(x, tt)),
        Benchmark::KelvinHelmholtz => solver.interpolate(|x| kelvin_helmholtz_initial(x, band)),
        Benchmark::DoubleMach => solver.interpolate(|x| double_mach_state(x, T::zero())),
        Benchmark::CdrMms | Benchmark::CdrLayer => unreachable!(),
    };
    Ok(HyperbolicSetup { solver, initial })
}

/// Manufactured problem of a steady benchmark.
pub fn cdr_problem<T: Real>(cfg: &RunConfig) -> Result<CdrProblem<T>> {
    let eps = T::lit(cfg.cdr.epsilon);
    match cfg.benchmark {
        Benchmark::CdrMms => smooth_problem(eps, [T::one(), T::half()], T::one(), 2),
        Benchmark::CdrLayer => boundary_layer_problem(eps),
        b => Err(Error::InvalidParameter(format!("{} is not a steady benchmark", b.name()))),
    }
}

pub fn cdr_options<T: Real>(cfg: &RunConfig) -> CdrOptions<T> {
    let w = hyperbolic_config::<T>(cfg).weno;
    CdrOptions {
        scheme: cfg.scheme,
        weno: w,
        omega: cfg.cdr.omega,
        eta: cfg.cdr.eta.map(T::lit),
        max_iter: cfg.cdr.max_iter,
        tol: T::lit(cfg.cdr.tol),
        relaxation: T::lit(cfg.cdr.relaxation),
    }
}

/// Convergence table of a steady benchmark on `levels` uniform refinements
/// of the configured mesh.
pub fn cdr_convergence(cfg: &RunConfig, levels: usize) -> Result<Vec<ConvergenceRow>> {
    let problem = cdr_problem::<f64>(cfg)?;
    let (nx, ny) = (cfg.elements[0], cfg.elements[1]);
    convergence_study(
        &problem,
        levels,
        |l| FeSpace::new(Mesh::build_uniform_quad(0.0, 0.0, 1.0, 1.0, nx << l, ny << l, false)?, cfg.continuity, cfg.degree),
        &cdr_options(cfg),
    )
}

pub fn component_names(benchmark: Benchmark) -> Vec<&'static str> {
    match benchmark {
        Benchmark::Sbr | Benchmark::Kpp | Benchmark::CdrMms | Benchmark::CdrLayer => vec!["u"],
        Benchmark::TitarevToro => vec!["rho", "m", "E"],
        Benchmark::KelvinHelmholtz | Benchmark::DoubleMach => vec!["rho", "mx", "my", "E"],
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunSummary {
    pub benchmark: String,
    pub steps: usize,
    pub t: f64,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub mass: Vec<f64>,
    pub convergence: Vec<ConvergenceRow>,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
}

/// Writes the diagnostics, VTK and (1D) profile outputs of a finished run.
pub fn write_hyperbolic_outputs(
    cfg: &RunConfig,
    setup: &HyperbolicSetup<f64>,
    state: &SemiDiscreteState<f64>,
    rows: &[DiagnosticRow],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let names = component_names(cfg.benchmark);
    let space = &setup.solver.space;
    if cfg.output.diagnostics {
        let p = dir.join("diagnostics.csv");
        write_csv_file(&p, |w| write_diagnostics_csv(w, rows))?;
        written.push(p);
    }
    if cfg.output.vtk {
        let p = dir.join("solution.vtk");
        let mut fields: Vec<VtkField<'_, f64>> = names
            .iter()
            .zip(&state.u.components)
            .map(|(n, c)| VtkField::Point(n, c.as_slice()))
            .collect();
        fields.push(VtkField::Cell("gamma", &state.gamma));
        write_vtk_file(&p, space, cfg.benchmark.name(), &fields)?;
        written.push(p);
    }
    if cfg.output.profile && space.dim() == 1 {
        let p = dir.join("profile.csv");
        let cols: Vec<&[f64]> = state.u.components.iter().map(|c| c.as_slice()).collect();
        write_profile_csv(&p, space, &names, &cols)?;
        written.push(p);
    }
    Ok(written)
}

/// Runs a configured benchmark; `write` controls file output.
pub fn run_benchmark(cfg: &RunConfig, write: bool) -> Result<RunSummary> {
    let start = Instant::now();
    let dir = PathBuf::from(&cfg.output.directory);
    let mut summary = RunSummary {
        benchmark: cfg.benchmark.name().to_string(),
        ..RunSummary::default()
    };
    if cfg.benchmark.is_cdr() {
        summary.convergence = cdr_convergence(cfg, cfg.cdr.levels)?;
        if write {
            let p = dir.join("convergence.csv");
            write_csv_file(&p, |w| write_convergence_csv(w, &summary.convergence))?;
            summary.outputs.push(p);
        }
    } else {
        let setup = hyperbolic_setup::<f64>(cfg)?;
        let mut state = setup.solver.initial_state(setup.initial.clone());
        let rows = setup.solver.run(&mut state)?;
        let last = setup.solver.diagnostics(&state, 0.0);
        summary.steps = state.steps;
        summary.t = state.t;
        summary.min = last.min;
        summary.max = last.max;
        summary.mass = last.mass;
        if write {
            summary.outputs = write_hyperbolic_outputs(cfg, &setup, &state, &rows, &dir)?;
        }
    }
    summary.wall_time_s = start.elapsed().as_secs_f64();
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures() {
        assert_eq!(titarev_toro_left::<f64>()[0], 1.515695);
        let l = titarev_toro_left::<f64>();
        assert!((l[1] / l[0] - 0.523346).abs() < 1e-15);
        let kh1 = kelvin_helmholtz_initial::<f64>([0.75, 0.5], [0.25, 0.75]);
        let kh2 = kelvin_helmholtz_initial::<f64>([0.75, 0.9], [0.25, 0.75]);
        assert_eq!((kh1[0], kh2[0]), (2.0, 1.0));
        assert!((kh1[1] / kh1[0] + 0.5).abs() < 1e-15 && (kh2[1] / kh2[0] - 0.5).abs() < 1e-15);
        assert!((kh1[2] / kh1[0] - 0.01).abs() < 1e-15);
        let p1 = crate::physics::pressure(1.4, &kh1, 2).unwrap();
        assert!((p1 - 2.5).abs() < 1e-14);
        assert!((kpp_initial([0.0f64, 0.0]) - 3.5 * std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(kpp_initial([1.5f64, 0.0]), std::f64::consts::FRAC_PI_4);
    }

    #[test]
    fn sbr_pieces() {
        assert_eq!(sbr_initial([0.25f64, 0.5]), 0.5);
        assert_eq!(sbr_initial([0.5f64, 0.25]), 1.0);
        assert_eq!(sbr_initial([0.45f64, 0.75]), 1.0);
        assert_eq!(sbr_initial([0.5f64, 0.88]), 1.0);
        // the slot
        assert_eq!(sbr_initial([0.5f64, 0.75]), 0.0);
        assert_eq!(sbr_initial([0.9f64, 0.9]), 0.0);
    }

    #[test]
    fn every_benchmark_constructs_from_registry() {
        for b in Benchmark::ALL {
            let mut cfg = RunConfig::defaults(b);
            cfg.elements = if b.dim() == 1 { vec![10] } else { vec![4, 4] };
            if b.is_cdr() {
                assert!(cdr_problem::<f64>(&cfg).is_ok());
            } else {
                let s = hyperbolic_setup::<f64>(&cfg).unwrap();
                assert!(s.initial.is_finite());
                assert_eq!(s.initial.num_components(), component_names(b).len());
            }
        }
    }

    #[test]
    fn short_runs_are_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let mut outs = Vec::new();
        for k in 0..2 {
            let mut cfg = RunConfig::defaults(Benchmark::TitarevToro);
            cfg.elements = vec![40];
            cfg.max_steps = Some(5);
            cfg.output.directory = dir.path().join(format!("run{k}")).to_string_lossy().into_owned();
            let s = run_benchmark(&cfg, true).unwrap();
            assert_eq!(s.steps, 5);
            outs.push(s.outputs.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
        }
        assert_eq!(outs[0], outs[1]);
        assert_eq!(outs[0].len(), 3);
    }

    #[test]
    fn double_mach_tags() {
        let mut cfg = RunConfig::defaults(Benchmark::DoubleMach);
        cfg.elements = vec![24, 6];
        let m = mesh_for::<f64>(&cfg).unwrap();
        for f in m.faces().iter().filter(|f| f.is_boundary()) {
            let want = if f.normal[0] > 0.0 {
                BoundaryTag::Outflow
            } else if f.normal[1] < 0.0 && f.center[0] > 1.0 / 6.0 {
                BoundaryTag::Wall
            } else {
                BoundaryTag::DirichletTimed
            };
            assert_eq!(f.tag, Some(want));
        }
    }
}
