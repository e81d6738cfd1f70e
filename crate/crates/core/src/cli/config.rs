//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! scenario = "stabilization"
//! seed = 7
//!
//! [params]
//! m = 2.0
//! p = 3.0
//! s = 0.5
//! q = 1.0
//!
//! [grid]
//! n = 64
//!
//! [evolution]
//! dt = 1e-3
//! t_end = 20.0
//!
//! [initial]
//! kind = "scaled_steady"
//! lambda = 0.5
//! ```
//!
//! Every section except `[params]` is optional and falls back to the defaults
//! of the corresponding library type.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::elliptic::{solve_forced_stationary, solve_steady_state, SolverConfig};
use crate::error::{Error, Result};
use crate::evolution::{EventConfig, SourceSpec, SourceTerm};
use crate::grid::{ModelParams, Regime};
use crate::model::Discretization;
use crate::nonlocal_op::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Stabilization,
    Extinction,
    Blowup,
    Contraction,
    Elliptic,
    SteadyState,
    #[default]
    Custom,
}

impl ScenarioKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioKind::Stabilization => "stabilization",
            ScenarioKind::Extinction => "extinction",
            ScenarioKind::Blowup => "blowup",
            ScenarioKind::Contraction => "contraction",
            ScenarioKind::Elliptic => "elliptic",
            ScenarioKind::SteadyState => "steady-state",
            ScenarioKind::Custom => "custom",
        }
    }

    pub fn is_evolution(&self) -> bool {
        matches!(
            self,
            ScenarioKind::Stabilization | ScenarioKind::Extinction | ScenarioKind::Blowup | ScenarioKind::Custom
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub m: f64,
    pub p: f64,
    pub s: f64,
    pub q: f64,
    #[serde(default = "one")]
    pub c_h: f64,
    #[serde(default)]
    pub truncation: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl ParamsSection {
    pub fn to_params(&self) -> Result<ModelParams> {
        ModelParams::new(self.m, self.p, self.s, self.q)?
            .with_growth_constant(self.c_h)?
            .with_truncation(self.truncation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { a: 0.0, b: 1.0, n: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionSection {
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl Default for EvolutionSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            record_every: 1,
        }
    }
}

/// A nodal profile.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    #[default]
    Zero,
    /// `amp (1 - ((x - center) / width)^2)_+^2`.
    Bump { center: f64, width: f64, amp: f64 },
    /// `c d(x)^s`.
    DistS { c: f64 },
    /// `lambda` times the positive steady state.
    ScaledSteady { lambda: f64 },
    /// Solution of `(-Delta)^s_p v = [[v]]^{q/m} + forcing`, above the steady state.
    Supersolution { forcing: f64 },
    /// iid uniform in `[-amp, amp]`, drawn from the scenario seed.
    Random { amp: f64 },
    Table { values: Vec<f64> },
}

pub fn bump_profile(x: f64, center: f64, width: f64, amp: f64) -> f64 {
    let r = (x - center) / width;
    amp * (1.0 - r * r).max(0.0).powi(2)
}

impl ProfileSpec {
    pub fn build(&self, disc: &Discretization, solver: &SolverConfig, seed: u64) -> Result<Field> {
        let n = disc.n();
        let field = match self {
            ProfileSpec::Zero => Field::zeros(n),
            ProfileSpec::Bump { center, width, amp } => {
                if !(*width > 0.0) {
                    return Err(Error::InvalidParams(format!("bump width must be > 0, got {width}")));
                }
                Field::from_fn(&disc.grid, |x| bump_profile(x, *center, *width, *amp))
            }
            ProfileSpec::DistS { c } => Field::from(disc.grid.dist_power(*c, disc.params.s)),
            ProfileSpec::ScaledSteady { lambda } => solve_steady_state(disc, solver)?.v.scaled(*lambda),
            ProfileSpec::Supersolution { forcing } => {
                if !(*forcing > 0.0) {
                    return Err(Error::InvalidParams(format!("supersolution forcing must be > 0, got {forcing}")));
                }
                let v = solve_steady_state(disc, solver)?.v;
                solve_forced_stationary(disc, *forcing, solver, &v)?.v
            }
            ProfileSpec::Random { amp } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Field::from((0..n).map(|_| amp * rng.random_range(-1.0..=1.0)).collect::<Vec<f64>>())
            }
            ProfileSpec::Table { values } => {
                let f = Field::new(values.clone())?;
                f.check_len(n)?;
                f
            }
        };
        if field.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("profile is not finite".into()));
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpSection {
    pub center: f64,
    pub width: f64,
    pub amp: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSection {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// The source is the sum of the listed parts.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    /// Coefficient of `[[v]]^{q/m}`; `0` switches it off.
    pub power: f64,
    /// Time-independent forcing bump.
    pub bump: Option<BumpSection>,
    /// Nodal forcing, piecewise linear in time.
    pub table: Option<TableSection>,
}

impl Default for SourceSection {
    fn default() -> Self {
        Self {
            power: 1.0,
            bump: None,
            table: None,
        }
    }
}

impl SourceSection {
    pub fn zero() -> Self {
        Self {
            power: 0.0,
            bump: None,
            table: None,
        }
    }

    pub fn build(&self, disc: &Discretization) -> Result<SourceSpec> {
        let params = &disc.params;
        let mut spec = SourceSpec::zero(params);
        if self.power != 0.0 {
            spec = spec.with_term(SourceTerm::Power { coef: self.power }, params.c_h.max(self.power.abs()));
        }
        if let Some(b) = &self.bump {
            if !(b.width > 0.0) {
                return Err(Error::InvalidParams(format!("bump width must be > 0, got {}", b.width)));
            }
            let row: Vec<f64> = disc.grid.nodes.iter().map(|&x| bump_profile(x, b.center, b.width, b.amp)).collect();
            spec = spec.with_term(
                SourceTerm::Table {
                    times: vec![0.0],
                    values: vec![row],
                },
                b.amp.abs(),
            );
        }
        if let Some(t) = &self.table {
            let sup = t.values.iter().flatten().fold(0.0_f64, |a, x| a.max(x.abs()));
            spec = spec.with_term(
                SourceTerm::Table {
                    times: t.times.clone(),
                    values: t.values.clone(),
                },
                sup,
            );
        }
        spec.validate(disc.n())?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EllipticSection {
    pub lambda: f64,
    pub rhs: ProfileSpec,
}

impl Default for EllipticSection {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            rhs: ProfileSpec::Bump {
                center: 0.5,
                width: 0.5,
                amp: 1.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionSection {
    /// Initial data of the second run.
    pub initial: ProfileSpec,
    /// Source of the second run; the first run's source when absent.
    pub source: Option<SourceSection>,
    pub tolerance: f64,
}

impl Default for ContractionSection {
    fn default() -> Self {
        Self {
            initial: ProfileSpec::Zero,
            source: None,
            tolerance: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Scenario files, relative to the sweep file.
    pub configs: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    pub params: ParamsSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub events: EventConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub initial: ProfileSpec,
    #[serde(default)]
    pub source: SourceSection,
    #[serde(default)]
    pub elliptic: EllipticSection,
    #[serde(default)]
    pub contraction: ContractionSection,
    /// Regime warnings raised at load time.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl ScenarioConfig {
    pub fn model_params(&self) -> Result<ModelParams> {
        self.params.to_params()
    }

    pub fn discretization(&self) -> Result<Discretization> {
        Discretization::new(self.model_params()?, self.grid.a, self.grid.b, self.grid.n)
    }
}

/// Sweep files only carry a `[sweep]` table.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    sweep: SweepSection,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn toml_error(text: &str, e: toml::de::Error) -> Error {
    Error::Config {
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    }
}

/// Regime requirement of each scenario, `None` when the scenario has none.
pub fn regime_violation(kind: ScenarioKind, params: &ModelParams) -> Option<String> {
    let pc = params.critical_p();
    let tag = |what: &str| {
        format!(
            "{} scenario expects {what}, got p = {}, q/m + 1 = {pc}, q = {}",
            kind.as_str(),
            params.p,
            params.q
        )
    };
    match kind {
        ScenarioKind::Stabilization | ScenarioKind::SteadyState => {
            (params.regime() != Regime::Subhomogeneous).then(|| tag("p > q/m + 1"))
        }
        ScenarioKind::Extinction => {
            (params.regime() != Regime::Superhomogeneous || params.q > 1.0).then(|| tag("p < q/m + 1 and q <= 1"))
        }
        ScenarioKind::Blowup => {
            (params.regime() != Regime::Superhomogeneous || params.q <= 1.0).then(|| tag("p < q/m + 1 and q > 1"))
        }
        _ => None,
    }
}

/// Parses and validates a scenario. Regime mismatches become warnings, or
/// errors when `strict`.
pub fn parse_config(text: &str, strict: bool) -> Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    let params = cfg.model_params()?;
    cfg.solver.validate()?;
    if !(cfg.evolution.dt > 0.0) || !(cfg.evolution.t_end >= cfg.evolution.dt) || cfg.evolution.record_every == 0 {
        return Err(Error::InvalidParams(format!("invalid evolution section {:?}", cfg.evolution)));
    }
    if let Some(msg) = regime_violation(cfg.scenario, &params) {
        if strict {
            return Err(Error::Regime(msg));
        }
        cfg.warnings.push(msg);
    }
    Ok(cfg)
}

pub fn load_config(path: &Path, strict: bool) -> Result<ScenarioConfig> {
    parse_config(&std::fs::read_to_string(path)?, strict)
}

/// Scenario paths listed by a sweep file, resolved against its directory.
pub fn load_sweep(path: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(path)?;
    let file: SweepFile = toml::from_str(&text).map_err(|e| toml_error(&text, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    Ok(file.sweep.configs.iter().map(|p| base.join(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "scenario = \"stabilization\"\n[params]\nm = 2.0\np = 3.0\ns = 0.5\nq = 1.0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL, true).unwrap();
        assert_eq!(cfg.scenario, ScenarioKind::Stabilization);
        assert_eq!(cfg.grid.n, 64);
        assert_eq!(cfg.evolution.dt, 1e-3);
        assert_eq!(cfg.solver, SolverConfig::default());
        assert_eq!(cfg.events, EventConfig::default());
        assert_eq!(cfg.params.c_h, 1.0);
        assert!(cfg.warnings.is_empty());
    }

    #[test]
    fn unknown_key_is_named_with_its_line() {
        let text = format!("{MINIMAL}\n[grid]\nn = 32\nbogus = 1\n");
        match parse_config(&text, false) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 10);
                assert!(message.contains("bogus"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn regime_mismatch_warns_or_fails() {
        let text = "scenario = \"blowup\"\n[params]\nm = 2.0\np = 3.0\ns = 0.5\nq = 1.0\n";
        assert!(matches!(parse_config(text, true), Err(Error::Regime(_))));
        let cfg = parse_config(text, false).unwrap();
        assert_eq!(cfg.warnings.len(), 1);
    }

    #[test]
    fn profiles_and_sources() {
        let text = format!(
            "{MINIMAL}[initial]\nkind = \"bump\"\ncenter = 0.5\nwidth = 0.25\namp = 2.0\n\
             [source]\npower = 0.0\n[source.bump]\ncenter = 0.5\nwidth = 0.5\namp = 1.0\n"
        );
        let cfg = parse_config(&text, true).unwrap();
        let d = cfg.discretization().unwrap();
        let v0 = cfg.initial.build(&d, &cfg.solver, 0).unwrap();
        assert!((v0.iter().cloned().fold(0.0, f64::max) - 2.0).abs() < 0.05);
        let src = cfg.source.build(&d).unwrap();
        assert_eq!(src.terms.len(), 1);
        assert!(src.eval(0.0, 32, d.grid.nodes[32], 5.0) > 0.9);
    }

    #[test]
    fn random_profile_is_seeded() {
        let text = format!("{MINIMAL}[initial]\nkind = \"random\"\namp = 1.0\n");
        let cfg = parse_config(&text, true).unwrap();
        let d = cfg.discretization().unwrap();
        let a = cfg.initial.build(&d, &cfg.solver, 3).unwrap();
        let b = cfg.initial.build(&d, &cfg.solver, 3).unwrap();
        let c = cfg.initial.build(&d, &cfg.solver, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn steady_state_profiles_are_ordered() {
        let base = format!("{MINIMAL}[grid]\nn = 16\n");
        let low = parse_config(&format!("{base}[initial]\nkind = \"scaled_steady\"\nlambda = 0.5\n"), true).unwrap();
        let high = parse_config(&format!("{base}[initial]\nkind = \"supersolution\"\nforcing = 1.0\n"), true).unwrap();
        let d = low.discretization().unwrap();
        let a = low.initial.build(&d, &low.solver, 0).unwrap();
        let b = high.initial.build(&d, &high.solver, 0).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| 0.0 < *x && x < y));
        let bad = parse_config(&format!("{base}[initial]\nkind = \"supersolution\"\nforcing = 0.0\n"), true).unwrap();
        assert!(bad.initial.build(&d, &bad.solver, 0).is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(parse_config("[params]\nm = 0.5\np = 3.0\ns = 0.5\nq = 1.0\n", false).is_err());
        assert!(parse_config(&format!("{MINIMAL}[evolution]\ndt = -1.0\n"), false).is_err());
        assert!(matches!(parse_config("[params]\nm = \n", false), Err(Error::Config { line: 2, .. })));
    }
}
