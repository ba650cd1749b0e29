//! Run configuration: a flat-sectioned TOML file overlaid by command-line flags.

use std::collections::BTreeMap;
use std::path::Path;

use clap::Args;
use serde::Deserialize;

use ftc::curvature::{Estimator, EvaluationPoint, ProbeSettings};
use ftc::fields::{FieldSettings, GridSpec, Kernel};
use ftc::flows::{Factor, FlowKind, HamiltonianTerm};
use ftc::integrate::{IntegratorSettings, JacobianMethod, Method};
use ftc::{Bounds, Epoch, FlowSystem, FtcError};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub epoch: EpochSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub curves: CurvesSection,
    #[serde(default)]
    pub segment: SegmentSection,
    #[serde(default)]
    pub alpha: AlphaSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    pub kind: Option<String>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub bounds: Option<[f64; 4]>,
    /// Terms of a `custom_hamiltonian` flow.
    #[serde(default)]
    pub terms: Vec<TermConfig>,
}

/// `amplitude * x(x) * y(y) * cos(omega t + phase)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub amplitude: f64,
    pub x: FactorConfig,
    pub y: FactorConfig,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "f", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorConfig {
    One,
    Power { n: u32 },
    Sin { k: f64, #[serde(default)] phase: f64 },
    Cos { k: f64, #[serde(default)] phase: f64 },
    Sech2 { scale: f64 },
    Tanh { scale: f64 },
}

impl From<FactorConfig> for Factor {
    fn from(f: FactorConfig) -> Self {
        match f {
            FactorConfig::One => Factor::One,
            FactorConfig::Power { n } => Factor::Power(n),
            FactorConfig::Sin { k, phase } => Factor::Sin { k, phase },
            FactorConfig::Cos { k, phase } => Factor::Cos { k, phase },
            FactorConfig::Sech2 { scale } => Factor::Sech2 { scale },
            FactorConfig::Tanh { scale } => Factor::Tanh { scale },
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochSection {
    pub t0: Option<f64>,
    pub tau: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub name: Option<String>,
    pub n_dirs: Option<usize>,
    pub n_probe: Option<usize>,
    pub epsilon: Option<f64>,
    pub estimator: Option<String>,
    pub evaluate_at: Option<String>,
    pub refine: Option<bool>,
    pub jacobian: Option<String>,
    pub stencil: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: Option<String>,
    pub steps: Option<usize>,
    pub step: Option<f64>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub guard_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvesSection {
    pub quantile: Option<f64>,
    pub theta_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSection {
    pub seeds: Option<usize>,
    pub threshold: Option<f64>,
    pub transform: Option<String>,
    pub min_cells: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSection {
    pub n_angles: Option<usize>,
    pub max_evals: Option<usize>,
    pub occupancy: Option<f64>,
    pub supersample: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub payload: Option<String>,
    pub png: Option<bool>,
    pub scale: Option<String>,
    pub slice_samples: Option<usize>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, FtcError> {
    let Some(path) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| FtcError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| FtcError::Config(format!("config {}: {}", path.display(), e.message())))
}

/// Flow, epoch and grid selection shared by the computing subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct FlowArgs {
    /// double-gyre, rossby-wave, rigid-rotation, linear-saddle
    #[arg(long)]
    pub flow: Option<String>,
    /// Flow parameter override, `name=value` (repeatable)
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Domain `x_min,x_max,y_min,y_max`
    #[arg(long, allow_hyphen_values = true)]
    pub bounds: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Grid size `NXxNY`
    #[arg(long)]
    pub grid: Option<String>,
}

/// Kernel and integrator tuning.
#[derive(Debug, Clone, Default, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub n_dirs: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Fixed RK4 steps per epoch
    #[arg(long)]
    pub steps: Option<usize>,
    /// rk4 or dopri45
    #[arg(long)]
    pub method: Option<String>,
    /// fd or variational
    #[arg(long)]
    pub jacobian: Option<String>,
    /// Guard box size as a multiple of the domain
    #[arg(long)]
    pub guard: Option<f64>,
}

fn bad(msg: String) -> FtcError {
    FtcError::Config(msg)
}

fn parse_pair(s: &str) -> Result<(String, f64), FtcError> {
    let (k, v) = s.split_once('=').ok_or_else(|| bad(format!("expected NAME=VALUE, got `{s}`")))?;
    let v: f64 = v.trim().parse().map_err(|_| bad(format!("parameter `{k}` is not a number: `{v}`")))?;
    Ok((k.trim().to_string(), v))
}

pub fn parse_reals<const N: usize>(s: &str, what: &str) -> Result<[f64; N], FtcError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad(format!("{what}: expected {N} comma-separated numbers, got `{s}`")))?;
    v.try_into().map_err(|_| bad(format!("{what}: expected {N} comma-separated numbers, got `{s}`")))
}

pub fn parse_grid(s: &str) -> Result<(usize, usize), FtcError> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| bad(format!("grid must look like 256x128, got `{s}`")))?;
    let nx = a.trim().parse().map_err(|_| bad(format!("bad grid width `{a}`")))?;
    let ny = b.trim().parse().map_err(|_| bad(format!("bad grid height `{b}`")))?;
    Ok((nx, ny))
}

pub fn default_tau(kind: FlowKind) -> f64 {
    match kind {
        FlowKind::DoubleGyre | FlowKind::RossbyWave => 10.0,
        _ => 1.0,
    }
}

pub fn default_grid(kind: FlowKind) -> (usize, usize) {
    match kind {
        FlowKind::DoubleGyre | FlowKind::RossbyWave => (256, 128),
        _ => (64, 64),
    }
}

/// Flow, epoch and grid after merging config and flags.
#[derive(Debug, Clone)]
pub struct Problem {
    pub flow: FlowSystem,
    pub epoch: Epoch,
    pub spec: GridSpec,
}

pub fn resolve_problem(cfg: &FileConfig, args: &FlowArgs) -> Result<Problem, FtcError> {
    let kind_name = args.flow.clone().or_else(|| cfg.flow.kind.clone()).unwrap_or_else(|| "double-gyre".into());
    let kind: FlowKind = kind_name.parse()?;
    let mut params = cfg.flow.params.clone();
    for p in &args.params {
        let (k, v) = parse_pair(p)?;
        params.insert(k, v);
    }
    let bounds = match (&args.bounds, cfg.flow.bounds) {
        (Some(s), _) => Some(parse_reals::<4>(s, "bounds")?),
        (None, b) => b,
    }
    .map(|b| Bounds::new(b[0], b[1], b[2], b[3]));
    let flow = if kind == FlowKind::CustomHamiltonian {
        if !params.is_empty() {
            return Err(bad("custom_hamiltonian takes terms, not params".into()));
        }
        let bounds = bounds.ok_or_else(|| bad("custom_hamiltonian needs bounds".into()))?;
        let terms = cfg
            .flow
            .terms
            .iter()
            .map(|t| HamiltonianTerm { amplitude: t.amplitude, x: t.x.into(), y: t.y.into(), omega: t.omega, phase: t.phase })
            .collect();
        FlowSystem::custom(terms, bounds)?
    } else {
        if !cfg.flow.terms.is_empty() {
            return Err(bad(format!("flow terms are only valid for custom_hamiltonian, not {kind}")));
        }
        FlowSystem::new(kind, params, bounds)?
    };
    let t0 = args.t0.or(cfg.epoch.t0).unwrap_or(0.0);
    let tau = args.tau.or(cfg.epoch.tau).unwrap_or_else(|| default_tau(kind));
    if !t0.is_finite() || !tau.is_finite() || tau == 0.0 {
        return Err(bad(format!("epoch needs finite t0 and nonzero tau, got t0={t0}, tau={tau}")));
    }
    let (dnx, dny) = default_grid(kind);
    let (nx, ny) = match &args.grid {
        Some(g) => parse_grid(g)?,
        None => (cfg.grid.nx.unwrap_or(dnx), cfg.grid.ny.unwrap_or(dny)),
    };
    let spec = GridSpec::new(nx, ny, flow.bounds())?;
    Ok(Problem { flow, epoch: Epoch::new(t0, tau), spec })
}

pub fn resolve_kernel(cfg: &FileConfig, cli: Option<&str>) -> Result<Kernel, FtcError> {
    cli.map(str::to_string).or_else(|| cfg.kernel.name.clone()).unwrap_or_else(|| "ftc_ratio".into()).parse()
}

pub fn resolve_settings(cfg: &FileConfig, args: &KernelArgs, threads: Option<usize>) -> Result<FieldSettings, FtcError> {
    let ic = &cfg.integrator;
    let mut integrator = IntegratorSettings::default();
    match args.method.as_deref().or(ic.method.as_deref()) {
        None | Some("rk4") => {}
        Some("dopri45") | Some("adaptive") => integrator.method = Method::Dopri45,
        Some(other) => return Err(bad(format!("unknown integrator `{other}`"))),
    }
    if let Some(n) = args.steps.or(ic.steps) {
        if n == 0 {
            return Err(bad("integrator steps must be positive".into()));
        }
        integrator.steps_per_epoch = n;
    }
    integrator.step = ic.step;
    if let Some(r) = ic.rtol {
        integrator.rtol = r;
    }
    if let Some(a) = ic.atol {
        integrator.atol = a;
    }
    if let Some(g) = args.guard.or(ic.guard_factor) {
        integrator.guard_factor = g;
    }
    let kc = &cfg.kernel;
    let jacobian = match args.jacobian.as_deref().or(kc.jacobian.as_deref()) {
        None | Some("fd") => JacobianMethod::FiniteDifference { h: kc.stencil },
        Some("variational") => JacobianMethod::Variational,
        Some(other) => return Err(bad(format!("unknown jacobian method `{other}`"))),
    };
    let mut probe = ProbeSettings::default();
    if let Some(n) = args.n_dirs.or(kc.n_dirs) {
        probe.n_dirs = n;
    }
    if let Some(n) = kc.n_probe {
        probe.n_probe = n;
    }
    probe.epsilon = args.epsilon.or(kc.epsilon);
    probe.estimator = match kc.estimator.as_deref() {
        None | Some("menger") => Estimator::Menger,
        Some("parametric") => Estimator::Parametric,
        Some(other) => return Err(bad(format!("unknown estimator `{other}`"))),
    };
    probe.evaluate_at = match kc.evaluate_at.as_deref() {
        None | Some("center") => EvaluationPoint::Center,
        Some("max_along_segment") => EvaluationPoint::MaxAlongSegment,
        Some(other) => return Err(bad(format!("unknown evaluation point `{other}`"))),
    };
    probe.refine = kc.refine.unwrap_or(false);
    if probe.n_dirs < 4 {
        return Err(bad(format!("n_dirs must be >= 4, got {}", probe.n_dirs)));
    }
    Ok(FieldSettings { integrator, jacobian, probe, threads })
}

/// Parses a flow description written into grid metadata back into a flow.
pub fn flow_from_description(s: &str) -> Result<FlowSystem, FtcError> {
    let err = || bad(format!("cannot reconstruct flow from `{s}`; pass --flow"));
    if s.contains(" terms=") {
        return Err(err());
    }
    let (kind, rest) = s.split_once(" [").ok_or_else(err)?;
    let (params, rest) = rest.split_once("] bounds=(").ok_or_else(err)?;
    let bounds = parse_reals::<4>(rest.trim_end_matches(')'), "bounds").map_err(|_| err())?;
    let mut map = BTreeMap::new();
    for kv in params.split(';').filter(|p| !p.is_empty()) {
        let (k, v) = kv.split_once(':').ok_or_else(err)?;
        map.insert(k.to_string(), v.parse::<f64>().map_err(|_| err())?);
    }
    let kind: FlowKind = kind.parse()?;
    if kind == FlowKind::CustomHamiltonian {
        return Err(err());
    }
    FlowSystem::new(kind, map, Some(Bounds::new(bounds[0], bounds[1], bounds[2], bounds[3])))
}
