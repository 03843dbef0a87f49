//! Run configuration: a TOML document with defaults filled per benchmark.

use serde::{Deserialize, Serialize};

use crate::basis::MultiIndexSet;
use crate::error::{Error, Result};
use crate::hyperbolic::{ResidualMode, Scheme};
use crate::space::Continuity;
use crate::stabilization::OmegaMode;
use crate::weno::WenoConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    Sbr,
    Kpp,
    TitarevToro,
    KelvinHelmholtz,
    DoubleMach,
    CdrMms,
    CdrLayer,
}

impl Benchmark {
    pub const ALL: [Benchmark; 7] = [
        Benchmark::Sbr,
        Benchmark::Kpp,
        Benchmark::TitarevToro,
        Benchmark::KelvinHelmholtz,
        Benchmark::DoubleMach,
        Benchmark::CdrMms,
        Benchmark::CdrLayer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Sbr => "sbr",
            Benchmark::Kpp => "kpp",
            Benchmark::TitarevToro => "titarev_toro",
            Benchmark::KelvinHelmholtz => "kelvin_helmholtz",
            Benchmark::DoubleMach => "double_mach",
            Benchmark::CdrMms => "cdr_mms",
            Benchmark::CdrLayer => "cdr_layer",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown benchmark `{name}`")))
    }

    pub fn is_cdr(self) -> bool {
        matches!(self, Benchmark::CdrMms | Benchmark::CdrLayer)
    }

    pub fn dim(self) -> usize {
        if self == Benchmark::TitarevToro {
            1
        } else {
            2
        }
    }

    /// Desk-scale element counts.
    pub fn default_elements(self) -> Vec<usize> {
        match self {
            Benchmark::Sbr | Benchmark::Kpp => vec![64, 64],
            Benchmark::TitarevToro => vec![500],
            Benchmark::KelvinHelmholtz => vec![128, 128],
            Benchmark::DoubleMach => vec![192, 48],
            Benchmark::CdrMms | Benchmark::CdrLayer => vec![8, 8],
        }
    }

    pub fn default_degree(self) -> usize {
        match self {
            Benchmark::KelvinHelmholtz | Benchmark::DoubleMach => 1,
            _ => 2,
        }
    }

    pub fn default_continuity(self) -> Continuity {
        match self {
            Benchmark::Sbr | Benchmark::Kpp | Benchmark::CdrMms | Benchmark::CdrLayer => Continuity::Cg,
            _ => Continuity::Dg,
        }
    }

    pub fn default_t_final(self) -> f64 {
        match self {
            Benchmark::TitarevToro => 5.0,
            Benchmark::DoubleMach => 0.2,
            Benchmark::CdrMms | Benchmark::CdrLayer => 0.0,
            _ => 1.0,
        }
    }

    pub fn default_linear_weight(self) -> f64 {
        if self == Benchmark::Kpp {
            0.2
        } else {
            1e-3
        }
    }

    pub fn default_wave_speed_bound(self) -> Option<f64> {
        (self == Benchmark::Kpp).then_some(1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WenoSection {
    pub theta: f64,
    pub q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_beta: Option<f64>,
    pub r: i32,
    pub epsilon: f64,
    pub delta: f64,
    /// Linear weight of each neighbor stencil.
    pub linear_weight: f64,
    pub seminorm: MultiIndexSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdrSection {
    pub epsilon: f64,
    pub levels: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub relaxation: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub omega: OmegaMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSection {
    /// Left/right split of the Titarev-Toro data.
    pub tt_interface: f64,
    /// `y` range of the dense Kelvin-Helmholtz layer.
    pub kh_band: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: String,
    pub vtk: bool,
    pub profile: bool,
    pub diagnostics: bool,
    pub diagnostics_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub elements: Vec<usize>,
    pub degree: usize,
    pub continuity: Continuity,
    pub scheme: Scheme,
    pub cfl: f64,
    pub t_final: f64,
    pub rk_order: usize,
    pub residual: ResidualMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wave_speed_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    pub seed: u64,
    pub weno: WenoSection,
    pub cdr: CdrSection,
    pub fixture: FixtureSection,
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeno {
    theta: Option<f64>,
    q: Option<f64>,
    q_beta: Option<f64>,
    r: Option<i32>,
    epsilon: Option<f64>,
    delta: Option<f64>,
    linear_weight: Option<f64>,
    seminorm: Option<MultiIndexSet>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCdr {
    epsilon: Option<f64>,
    levels: Option<usize>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    relaxation: Option<f64>,
    eta: Option<f64>,
    omega: Option<OmegaMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFixture {
    tt_interface: Option<f64>,
    kh_band: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
    vtk: Option<bool>,
    profile: Option<bool>,
    diagnostics: Option<bool>,
    diagnostics_every: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    benchmark: Option<Benchmark>,
    elements: Option<Vec<usize>>,
    degree: Option<usize>,
    continuity: Option<Continuity>,
    scheme: Option<Scheme>,
    cfl: Option<f64>,
    t_final: Option<f64>,
    rk_order: Option<usize>,
    residual: Option<ResidualMode>,
    wave_speed_bound: Option<f64>,
    max_steps: Option<usize>,
    seed: Option<u64>,
    #[serde(default)]
    weno: RawWeno,
    #[serde(default)]
    cdr: RawCdr,
    #[serde(default)]
    fixture: RawFixture,
    #[serde(default)]
    output: RawOutput,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of the first `key = ...` assignment, or 0 when absent.
fn line_of_key(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

impl RunConfig {
    /// All defaults for `benchmark`.
    pub fn defaults(benchmark: Benchmark) -> Self {
        let degree = benchmark.default_degree();
        Self {
            benchmark,
            elements: benchmark.default_elements(),
            degree,
            continuity: benchmark.default_continuity(),
            scheme: Scheme::RbWeno,
            cfl: 0.3,
            t_final: benchmark.default_t_final(),
            rk_order: (degree + 1).min(3),
            residual: ResidualMode::Lagged,
            wave_speed_bound: benchmark.default_wave_speed_bound(),
            max_steps: None,
            seed: 0,
            weno: WenoSection {
                theta: 1.0,
                q: 1.0,
                q_beta: None,
                r: 2,
                epsilon: 1e-6,
                delta: 1e-6,
                linear_weight: benchmark.default_linear_weight(),
                seminorm: MultiIndexSet::TotalDegree,
            },
            cdr: CdrSection {
                epsilon: if benchmark == Benchmark::CdrLayer { 1e-4 } else { 1.0 },
                levels: 4,
                max_iter: 50,
                tol: 1e-10,
                relaxation: 1.0,
                eta: None,
                omega: OmegaMode::Computed,
            },
            fixture: FixtureSection {
                tt_interface: -4.5,
                kh_band: [0.25, 0.75],
            },
            output: OutputSection {
                directory: format!("out/{}", benchmark.name()),
                vtk: true,
                profile: true,
                diagnostics: true,
                diagnostics_every: 10,
            },
        }
    }

    /// `WenoConfig` equivalent of the `[weno]` table.
    pub fn weno_config(&self) -> WenoConfig<f64> {
        WenoConfig {
            neighbor_weight: self.weno.linear_weight,
            r: self.weno.r,
            epsilon: self.weno.epsilon,
            delta: self.weno.delta,
            theta: self.weno.theta,
            q: self.weno.q,
            q_beta: self.weno.q_beta,
            mode: if self.scheme == Scheme::RbWeno {
                crate::weno::WeightMode::Residual
            } else {
                crate::weno::WeightMode::Classical
            },
            seminorm: self.weno.seminorm,
        }
    }

    /// Range checks. Errors carry the key name; [`parse_config`] adds lines.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let dim = self.benchmark.dim();
        let err = |k: &'static str, m: String| Err((k, m));
        if self.elements.len() != dim || self.elements.iter().any(|n| *n == 0) {
            return err("elements", format!("expected {dim} positive element counts"));
        }
        if !(1..=2).contains(&self.degree) {
            return err("degree", format!("degree {} not in {{1, 2}}", self.degree));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return err("cfl", format!("cfl {} not in (0, 1]", self.cfl));
        }
        if !(self.t_final >= 0.0) || (!self.benchmark.is_cdr() && self.t_final == 0.0) {
            return err("t_final", format!("t_final {} must be positive", self.t_final));
        }
        if !(2..=3).contains(&self.rk_order) {
            return err("rk_order", format!("rk_order {} not in {{2, 3}}", self.rk_order));
        }
        if self.wave_speed_bound.is_some_and(|b| !(b > 0.0)) {
            return err("wave_speed_bound", "wave speed bound must be positive".into());
        }
        let w = &self.weno;
        if !(w.theta >= 0.0) {
            return err("theta", format!("theta {} must be nonnegative", w.theta));
        }
        if !(w.q > 0.0) {
            return err("q", format!("q {} must be positive", w.q));
        }
        if w.q_beta.is_some_and(|v| !(v > 0.0)) {
            return err("q_beta", "q_beta must be positive".into());
        }
        if w.r < 1 {
            return err("r", format!("r {} must be a positive integer", w.r));
        }
        if !(w.epsilon > 0.0) {
            return err("epsilon", "epsilon must be positive".into());
        }
        if !(w.delta > 0.0) {
            return err("delta", "delta must be positive".into());
        }
        if !(w.linear_weight > 0.0 && w.linear_weight * (2 * dim) as f64 <= 0.9) {
            return err(
                "linear_weight",
                format!("linear_weight {} must be positive with a central weight >= 0.1", w.linear_weight),
            );
        }
        let c = &self.cdr;
        if !(c.epsilon > 0.0) {
            return err("epsilon", "cdr epsilon must be positive".into());
        }
        if !(1..=8).contains(&c.levels) {
            return err("levels", format!("levels {} not in 1..=8", c.levels));
        }
        if c.max_iter == 0 {
            return err("max_iter", "max_iter must be positive".into());
        }
        if !(c.tol > 0.0) {
            return err("tol", "tol must be positive".into());
        }
        if !(c.relaxation > 0.0 && c.relaxation <= 1.0) {
            return err("relaxation", format!("relaxation {} not in (0, 1]", c.relaxation));
        }
        if c.eta.is_some_and(|e| !(e > 0.0)) {
            return err("eta", "eta must be positive".into());
        }
        let [lo, hi] = self.fixture.kh_band;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return err("kh_band", "kh_band must satisfy 0 <= lo < hi <= 1".into());
        }
        if !(self.fixture.tt_interface > -5.0 && self.fixture.tt_interface < 5.0) {
            return err("tt_interface", "tt_interface must lie in (-5, 5)".into());
        }
        if self.output.diagnostics_every == 0 {
            return err("diagnostics_every", "diagnostics_every must be positive".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            line: 0,
            message: e.to_string(),
        })
    }
}

/// Parses and validates a configuration; missing keys take the defaults of
/// the selected benchmark.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map_or(0, |s| line_of_offset(text, s.start)),
        message: e.message().to_string(),
    })?;
    let benchmark = raw.benchmark.ok_or_else(|| Error::Config {
        line: 1,
        message: "missing key `benchmark`".into(),
    })?;
    let mut c = RunConfig::defaults(benchmark);
    macro_rules! take {
        ($($dst:expr => $src:expr),* $(,)?) => {
            $(if let Some(v) = $src { $dst = v; })*
        };
    }
    if let Some(d) = raw.degree {
        c.degree = d;
        c.rk_order = (d + 1).min(3);
    }
    take! {
        c.elements => raw.elements,
        c.continuity => raw.continuity,
        c.scheme => raw.scheme,
        c.cfl => raw.cfl,
        c.t_final => raw.t_final,
        c.rk_order => raw.rk_order,
        c.residual => raw.residual,
        c.seed => raw.seed,
        c.weno.theta => raw.weno.theta,
        c.weno.q => raw.weno.q,
        c.weno.r => raw.weno.r,
        c.weno.epsilon => raw.weno.epsilon,
        c.weno.delta => raw.weno.delta,
        c.weno.linear_weight => raw.weno.linear_weight,
        c.weno.seminorm => raw.weno.seminorm,
        c.cdr.epsilon => raw.cdr.epsilon,
        c.cdr.levels => raw.cdr.levels,
        c.cdr.max_iter => raw.cdr.max_iter,
        c.cdr.tol => raw.cdr.tol,
        c.cdr.relaxation => raw.cdr.relaxation,
        c.cdr.omega => raw.cdr.omega,
        c.fixture.tt_interface => raw.fixture.tt_interface,
        c.fixture.kh_band => raw.fixture.kh_band,
        c.output.directory => raw.output.directory,
        c.output.vtk => raw.output.vtk,
        c.output.profile => raw.output.profile,
        c.output.diagnostics => raw.output.diagnostics,
        c.output.diagnostics_every => raw.output.diagnostics_every,
    }
    if raw.wave_speed_bound.is_some() {
        c.wave_speed_bound = raw.wave_speed_bound;
    }
    if raw.max_steps.is_some() {
        c.max_steps = raw.max_steps;
    }
    if raw.weno.q_beta.is_some() {
        c.weno.q_beta = raw.weno.q_beta;
    }
    if raw.cdr.eta.is_some() {
        c.cdr.eta = raw.cdr.eta;
    }
    c.validate().map_err(|(key, message)| Error::Config {
        line: line_of_key(text, key),
        message,
    })?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kpp_defaults() {
        let c = parse_config("benchmark = \"kpp\"\n").unwrap();
        assert_eq!(c.wave_speed_bound, Some(1.0));
        assert_eq!(c.weno.linear_weight, 0.2);
        assert_eq!((c.weno.r, c.weno.epsilon, c.weno.delta, c.weno.q), (2, 1e-6, 1e-6, 1.0));
        let s = parse_config("benchmark = \"sbr\"").unwrap();
        assert_eq!(s.weno.linear_weight, 1e-3);
        assert_eq!(s.wave_speed_bound, None);
    }

    #[test]
    fn range_errors_carry_lines() {
        let e = parse_config("benchmark = \"sbr\"\n\n[weno]\ntheta = -1\n").unwrap_err();
        match e {
            Error::Config { line, message } => {
                assert_eq!(line, 4);
                assert!(message.contains("theta"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_config("degree = 2\n"), Err(Error::Config { .. })));
        assert!(parse_config("benchmark = \"sbr\"\ncfl = 1.5\n").is_err());
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        match parse_config("benchmark = \"sbr\"\nfoo = 3\n").unwrap_err() {
            Error::Config { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("foo"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_config("benchmark = \"nope\"\n").is_err());
    }

    #[test]
    fn round_trip() {
        for b in Benchmark::ALL {
            let mut c = RunConfig::defaults(b);
            c.max_steps = Some(7);
            c.weno.q_beta = Some(1.5);
            let text = c.to_toml().unwrap();
            assert_eq!(parse_config(&text).unwrap(), c, "{text}");
        }
    }

    #[test]
    fn names_round_trip() {
        for b in Benchmark::ALL {
            assert_eq!(Benchmark::from_name(b.name()).unwrap(), b);
        }
    }
}
