//! Time-dependent planar velocity fields.
//!
//! Every built-in flow is Hamiltonian, `u = -∂H/∂y`, `v = ∂H/∂x`, with the
//! partial derivatives of `H` written out in closed form. The velocity
//! gradient is available analytically as well, which is what the
//! variational Jacobian in [`crate::integrate`] consumes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::{FtcError, Result};
use crate::geometry::{Bounds, Point2, Vector2};

/// Kilometres per day in one metre per second.
pub const MPS_TO_KM_PER_DAY: f64 = 86.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowKind {
    DoubleGyre,
    RossbyWave,
    RigidRotation,
    LinearSaddle,
    CustomHamiltonian,
}

impl FlowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowKind::DoubleGyre => "double_gyre",
            FlowKind::RossbyWave => "rossby_wave",
            FlowKind::RigidRotation => "rigid_rotation",
            FlowKind::LinearSaddle => "linear_saddle",
            FlowKind::CustomHamiltonian => "custom_hamiltonian",
        }
    }
}

impl fmt::Display for FlowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlowKind {
    type Err = FtcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "double_gyre" => Ok(FlowKind::DoubleGyre),
            "rossby_wave" | "rossby" => Ok(FlowKind::RossbyWave),
            "rigid_rotation" | "rotation" => Ok(FlowKind::RigidRotation),
            "linear_saddle" | "saddle" => Ok(FlowKind::LinearSaddle),
            "custom_hamiltonian" | "custom" => Ok(FlowKind::CustomHamiltonian),
            other => Err(FtcError::Config(format!("unknown flow kind `{other}`"))),
        }
    }
}

/// `H = A cos(π f(x,t)) cos(π y)` with `f = ε sin(ωt) x² + (1 − 2ε sin(ωt)) x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleGyreParams {
    pub a: f64,
    pub epsilon: f64,
    pub omega: f64,
}

impl Default for DoubleGyreParams {
    fn default() -> Self {
        Self { a: 0.1, epsilon: 0.1, omega: 2.0 * PI / 10.0 }
    }
}

/// Which relation turns phase speeds into wave frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaConvention {
    /// `σₙ = kₙ (cₙ − c₃)`, frame moving with wave 3.
    CoMoving,
    /// `σₙ = kₙ cₙ`.
    Absolute,
}

/// Rossby-wave jet in kilometre/day units.
///
/// Phase speeds and `U0` are given in m/s, the way they are usually quoted,
/// and converted on construction. Wavenumbers are in 1/km and frequencies
/// in 1/day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RossbyParams {
    pub u0: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub l: f64,
    pub k1: f64,
    pub k2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub earth_radius: f64,
    pub convention: SigmaConvention,
}

impl RossbyParams {
    /// Wavenumber `2n / (rₑ cos 30°)`.
    pub fn wavenumber(n: u32, earth_radius: f64) -> f64 {
        2.0 * n as f64 / (earth_radius * (PI / 6.0).cos())
    }

    fn sigma(k: f64, c: f64, c3: f64, convention: SigmaConvention) -> f64 {
        let speed = match convention {
            SigmaConvention::CoMoving => c - c3,
            SigmaConvention::Absolute => c,
        };
        k * speed * MPS_TO_KM_PER_DAY
    }
}

impl Default for RossbyParams {
    fn default() -> Self {
        let u0 = 44.31;
        let c3 = 0.462 * u0;
        let c2 = 0.2055 * u0;
        let c1 = c3;
        let earth_radius = 6371.0;
        let k1 = Self::wavenumber(1, earth_radius);
        let k2 = Self::wavenumber(2, earth_radius);
        let convention = SigmaConvention::CoMoving;
        Self {
            u0,
            c1,
            c2,
            c3,
            a1: 0.075,
            a2: 0.12,
            a3: 0.3,
            l: 1770.0,
            k1,
            k2,
            sigma1: Self::sigma(k1, c1, c3, convention),
            sigma2: Self::sigma(k2, c2, c3, convention),
            earth_radius,
            convention,
        }
    }
}

/// One factor of a separable Hamiltonian term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Factor {
    One,
    /// `s^n`, `n ∈ {1, 2, 3}`.
    Power(u32),
    /// `sin(k s + phase)`.
    Sin { k: f64, phase: f64 },
    /// `cos(k s + phase)`.
    Cos { k: f64, phase: f64 },
    /// `sech²(s / scale)`.
    Sech2 { scale: f64 },
    /// `tanh(s / scale)`.
    Tanh { scale: f64 },
}

impl Factor {
    /// Value, first and second derivative at `s`.
    fn eval(&self, s: f64) -> (f64, f64, f64) {
        match *self {
            Factor::One => (1.0, 0.0, 0.0),
            Factor::Power(n) => match n {
                0 => (1.0, 0.0, 0.0),
                1 => (s, 1.0, 0.0),
                2 => (s * s, 2.0 * s, 2.0),
                _ => (s * s * s, 3.0 * s * s, 6.0 * s),
            },
            Factor::Sin { k, phase } => {
                let (sn, cs) = (k * s + phase).sin_cos();
                (sn, k * cs, -k * k * sn)
            }
            Factor::Cos { k, phase } => {
                let (sn, cs) = (k * s + phase).sin_cos();
                (cs, -k * sn, -k * k * cs)
            }
            Factor::Sech2 { scale } => {
                let th = (s / scale).tanh();
                let sech2 = 1.0 - th * th;
                let d1 = -2.0 * sech2 * th / scale;
                let d2 = (4.0 * sech2 * th * th - 2.0 * sech2 * sech2) / (scale * scale);
                (sech2, d1, d2)
            }
            Factor::Tanh { scale } => {
                let th = (s / scale).tanh();
                let sech2 = 1.0 - th * th;
                (th, sech2 / scale, -2.0 * sech2 * th / (scale * scale))
            }
        }
    }

    fn is_valid(&self) -> bool {
        match *self {
            Factor::One => true,
            Factor::Power(n) => n <= 3,
            Factor::Sin { k, phase } | Factor::Cos { k, phase } => k.is_finite() && phase.is_finite(),
            Factor::Sech2 { scale } | Factor::Tanh { scale } => scale.is_finite() && scale != 0.0,
        }
    }
}

/// `amplitude · X(x) · Y(y) · cos(ω t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianTerm {
    pub amplitude: f64,
    pub x: Factor,
    pub y: Factor,
    pub omega: f64,
    pub phase: f64,
}

impl HamiltonianTerm {
    pub fn steady(amplitude: f64, x: Factor, y: Factor) -> Self {
        Self { amplitude, x, y, omega: 0.0, phase: 0.0 }
    }
}

/// First and second partial derivatives of a Hamiltonian.
#[derive(Debug, Clone, Copy, Default)]
struct HDerivs {
    hx: f64,
    hy: f64,
    hxx: f64,
    hxy: f64,
    hyy: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    DoubleGyre(DoubleGyreParams),
    Rossby(RossbyKm),
    Rotation { omega: f64 },
    Saddle { lambda: f64 },
    Custom(Vec<HamiltonianTerm>),
}

/// Rossby parameters converted to km/day.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RossbyKm {
    u0: f64,
    c3: f64,
    a1: f64,
    a2: f64,
    a3: f64,
    l: f64,
    k1: f64,
    k2: f64,
    sigma1: f64,
    sigma2: f64,
}

/// A planar, time-dependent, divergence-free velocity field.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSystem {
    kind: FlowKind,
    params: BTreeMap<String, f64>,
    bounds: Bounds,
    model: Model,
}

const DOUBLE_GYRE_KEYS: &[&str] = &["A", "epsilon", "omega"];
const ROSSBY_KEYS: &[&str] = &[
    "U0",
    "c1",
    "c2",
    "c3",
    "A1",
    "A2",
    "A3",
    "L",
    "k1",
    "k2",
    "sigma1",
    "sigma2",
    "earth_radius",
    "sigma_convention",
];

fn lookup(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn check_keys(kind: FlowKind, params: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<()> {
    if let Some(bad) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(FtcError::Config(format!("unknown parameter `{bad}` for flow {kind}")));
    }
    if let Some((k, v)) = params.iter().find(|(_, v)| !v.is_finite()) {
        return Err(FtcError::Config(format!("parameter `{k}` = {v} is not finite")));
    }
    Ok(())
}

impl FlowSystem {
    /// Builds a built-in flow. Missing parameters take their defaults and
    /// the resolved set is kept in [`FlowSystem::params`].
    pub fn new(kind: FlowKind, params: BTreeMap<String, f64>, bounds: Option<Bounds>) -> Result<Self> {
        let mut resolved = BTreeMap::new();
        let model = match kind {
            FlowKind::DoubleGyre => {
                check_keys(kind, &params, DOUBLE_GYRE_KEYS)?;
                let d = DoubleGyreParams::default();
                let p = DoubleGyreParams {
                    a: lookup(&params, "A", d.a),
                    epsilon: lookup(&params, "epsilon", d.epsilon),
                    omega: lookup(&params, "omega", d.omega),
                };
                if !(p.a > 0.0 && (0.0..0.5).contains(&p.epsilon) && p.omega > 0.0) {
                    return Err(FtcError::Config(format!(
                        "double gyre needs A > 0, 0 <= epsilon < 0.5, omega > 0 (got {p:?})"
                    )));
                }
                resolved.insert("A".into(), p.a);
                resolved.insert("epsilon".into(), p.epsilon);
                resolved.insert("omega".into(), p.omega);
                Model::DoubleGyre(p)
            }
            FlowKind::RossbyWave => {
                check_keys(kind, &params, ROSSBY_KEYS)?;
                let d = RossbyParams::default();
                let convention = match lookup(&params, "sigma_convention", 0.0) {
                    c if c == 0.0 => SigmaConvention::CoMoving,
                    c if c == 1.0 => SigmaConvention::Absolute,
                    c => {
                        return Err(FtcError::Config(format!(
                            "sigma_convention must be 0 (co-moving) or 1 (absolute), got {c}"
                        )))
                    }
                };
                let u0 = lookup(&params, "U0", d.u0);
                let c3 = lookup(&params, "c3", d.c3);
                let c2 = lookup(&params, "c2", d.c2);
                let c1 = lookup(&params, "c1", c3);
                let earth_radius = lookup(&params, "earth_radius", d.earth_radius);
                let k1 = lookup(&params, "k1", RossbyParams::wavenumber(1, earth_radius));
                let k2 = lookup(&params, "k2", RossbyParams::wavenumber(2, earth_radius));
                let p = RossbyParams {
                    u0,
                    c1,
                    c2,
                    c3,
                    a1: lookup(&params, "A1", d.a1),
                    a2: lookup(&params, "A2", d.a2),
                    a3: lookup(&params, "A3", d.a3),
                    l: lookup(&params, "L", d.l),
                    k1,
                    k2,
                    sigma1: lookup(&params, "sigma1", RossbyParams::sigma(k1, c1, c3, convention)),
                    sigma2: lookup(&params, "sigma2", RossbyParams::sigma(k2, c2, c3, convention)),
                    earth_radius,
                    convention,
                };
                if !(p.u0 > 0.0 && p.l > 0.0 && p.k1 > 0.0 && p.k2 > 0.0 && p.earth_radius > 0.0) {
                    return Err(FtcError::Config(
                        "rossby wave needs U0, L, k1, k2, earth_radius > 0".into(),
                    ));
                }
                for (k, v) in [
                    ("U0", p.u0),
                    ("c1", p.c1),
                    ("c2", p.c2),
                    ("c3", p.c3),
                    ("A1", p.a1),
                    ("A2", p.a2),
                    ("A3", p.a3),
                    ("L", p.l),
                    ("k1", p.k1),
                    ("k2", p.k2),
                    ("sigma1", p.sigma1),
                    ("sigma2", p.sigma2),
                    ("earth_radius", p.earth_radius),
                    ("sigma_convention", if convention == SigmaConvention::CoMoving { 0.0 } else { 1.0 }),
                ] {
                    resolved.insert(k.to_string(), v);
                }
                Model::Rossby(RossbyKm {
                    u0: p.u0 * MPS_TO_KM_PER_DAY,
                    c3: p.c3 * MPS_TO_KM_PER_DAY,
                    a1: p.a1,
                    a2: p.a2,
                    a3: p.a3,
                    l: p.l,
                    k1: p.k1,
                    k2: p.k2,
                    sigma1: p.sigma1,
                    sigma2: p.sigma2,
                })
            }
            FlowKind::RigidRotation => {
                check_keys(kind, &params, &["omega"])?;
                let omega = lookup(&params, "omega", 1.0);
                resolved.insert("omega".into(), omega);
                Model::Rotation { omega }
            }
            FlowKind::LinearSaddle => {
                check_keys(kind, &params, &["lambda"])?;
                let lambda = lookup(&params, "lambda", 1.0);
                resolved.insert("lambda".into(), lambda);
                Model::Saddle { lambda }
            }
            FlowKind::CustomHamiltonian => {
                return Err(FtcError::Config(
                    "custom_hamiltonian flows are built with FlowSystem::custom".into(),
                ))
            }
        };
        let bounds = bounds.unwrap_or_else(|| Self::default_bounds(kind, &resolved));
        if !bounds.is_valid() {
            return Err(FtcError::Config(format!("invalid domain bounds {bounds:?}")));
        }
        Ok(Self { kind, params: resolved, bounds, model })
    }

    /// Built-in flow with all parameters at their defaults.
    pub fn builtin(kind: FlowKind) -> Result<Self> {
        Self::new(kind, BTreeMap::new(), None)
    }

    pub fn double_gyre(p: DoubleGyreParams) -> Result<Self> {
        let params = [("A", p.a), ("epsilon", p.epsilon), ("omega", p.omega)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self::new(FlowKind::DoubleGyre, params, None)
    }

    pub fn rigid_rotation(omega: f64) -> Self {
        Self::new(FlowKind::RigidRotation, [("omega".to_string(), omega)].into(), None)
            .expect("rotation rate is finite")
    }

    pub fn linear_saddle(lambda: f64) -> Self {
        Self::new(FlowKind::LinearSaddle, [("lambda".to_string(), lambda)].into(), None)
            .expect("saddle rate is finite")
    }

    /// Sum of separable terms, `H = Σ a · X(x) · Y(y) · cos(ωt + φ)`.
    pub fn custom(terms: Vec<HamiltonianTerm>, bounds: Bounds) -> Result<Self> {
        if !bounds.is_valid() {
            return Err(FtcError::Config(format!("invalid domain bounds {bounds:?}")));
        }
        for (i, t) in terms.iter().enumerate() {
            let finite = [t.amplitude, t.omega, t.phase].iter().all(|v| v.is_finite());
            if !finite || !t.x.is_valid() || !t.y.is_valid() {
                return Err(FtcError::Config(format!("invalid hamiltonian term {i}: {t:?}")));
            }
        }
        let mut params = BTreeMap::new();
        params.insert("terms".to_string(), terms.len() as f64);
        Ok(Self { kind: FlowKind::CustomHamiltonian, params, bounds, model: Model::Custom(terms) })
    }

    /// The zero velocity field on `[-1, 1]²`.
    pub fn identity() -> Self {
        Self::custom(Vec::new(), Bounds::new(-1.0, 1.0, -1.0, 1.0)).expect("valid bounds")
    }

    pub fn default_bounds(kind: FlowKind, params: &BTreeMap<String, f64>) -> Bounds {
        match kind {
            FlowKind::DoubleGyre => Bounds::new(0.0, 2.0, 0.0, 1.0),
            FlowKind::RossbyWave => {
                let re = lookup(params, "earth_radius", 6371.0);
                let l = lookup(params, "L", 1770.0);
                Bounds::new(0.0, re * PI * (PI / 6.0).cos(), -2.5 * l, 2.5 * l)
            }
            _ => Bounds::new(-1.0, 1.0, -1.0, 1.0),
        }
    }

    pub fn kind(&self) -> FlowKind {
        self.kind
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn with_bounds(mut self, bounds: Bounds) -> Result<Self> {
        if !bounds.is_valid() {
            return Err(FtcError::Config(format!("invalid domain bounds {bounds:?}")));
        }
        self.bounds = bounds;
        Ok(self)
    }

    /// Period in x when the flow is zonally periodic (the Rossby channel
    /// with commensurate wavenumbers).
    pub fn zonal_period(&self) -> Option<f64> {
        match &self.model {
            Model::Rossby(r) => {
                let ratio = r.k2 / r.k1;
                ((ratio - ratio.round()).abs() < 1e-9 && ratio.round() >= 1.0).then(|| 2.0 * PI / r.k1)
            }
            _ => None,
        }
    }

    /// One-line description of kind, parameters and bounds.
    pub fn describe(&self) -> String {
        let params: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}:{v:?}")).collect();
        let b = self.bounds;
        let mut s = format!(
            "{} [{}] bounds=({:?},{:?},{:?},{:?})",
            self.kind,
            params.join(";"),
            b.x_min,
            b.x_max,
            b.y_min,
            b.y_max
        );
        if let Model::Custom(terms) = &self.model {
            s.push_str(&format!(" terms={terms:?}"));
        }
        s
    }

    /// Velocity `(−∂H/∂y, ∂H/∂x)` at `(z, t)`.
    pub fn velocity(&self, z: Point2, t: f64) -> Result<Vector2> {
        let v = self.velocity_unchecked(z, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(FtcError::Evaluation { z, t })
        }
    }

    /// Velocity without the finiteness check; integrators test the state instead.
    #[inline]
    pub fn velocity_unchecked(&self, z: Point2, t: f64) -> Vector2 {
        let (x, y) = (z.x, z.y);
        match &self.model {
            Model::Rotation { omega } => Vector2::new(-omega * y, omega * x),
            Model::Saddle { lambda } => Vector2::new(lambda * x, -lambda * y),
            Model::DoubleGyre(p) => {
                let st = (p.omega * t).sin();
                let a = p.epsilon * st;
                let b = 1.0 - 2.0 * a;
                let f = a * x * x + b * x;
                let fx = 2.0 * a * x + b;
                let (sf, cf) = (PI * f).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                Vector2::new(p.a * PI * cf * sy, -p.a * PI * sf * fx * cy)
            }
            Model::Rossby(p) => {
                let th = (y / p.l).tanh();
                let s = 1.0 - th * th;
                let (w, wx) = rossby_wave_sum(p, x, t);
                Vector2::new(-p.c3 + p.u0 * s + 2.0 * p.u0 * s * th * w, p.u0 * p.l * s * wx)
            }
            Model::Custom(terms) => {
                let d = custom_derivs(terms, x, y, t, false);
                Vector2::new(-d.hy, d.hx)
            }
        }
    }

    /// Velocity gradient `[[∂u/∂x, ∂u/∂y], [∂v/∂x, ∂v/∂y]]`.
    pub fn velocity_gradient(&self, z: Point2, t: f64) -> [[f64; 2]; 2] {
        let h = self.hamiltonian_derivs(z, t);
        [[-h.hxy, -h.hyy], [h.hxx, h.hxy]]
    }

    fn hamiltonian_derivs(&self, z: Point2, t: f64) -> HDerivs {
        let (x, y) = (z.x, z.y);
        match &self.model {
            Model::Rotation { omega } => HDerivs {
                hx: omega * x,
                hy: omega * y,
                hxx: *omega,
                hxy: 0.0,
                hyy: *omega,
            },
            Model::Saddle { lambda } => HDerivs {
                hx: -lambda * y,
                hy: -lambda * x,
                hxx: 0.0,
                hxy: -lambda,
                hyy: 0.0,
            },
            Model::DoubleGyre(p) => {
                let st = (p.omega * t).sin();
                let a = p.epsilon * st;
                let b = 1.0 - 2.0 * a;
                let f = a * x * x + b * x;
                let fx = 2.0 * a * x + b;
                let (sf, cf) = (PI * f).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                let amp = p.a * PI;
                HDerivs {
                    hx: -amp * sf * fx * cy,
                    hy: -amp * cf * sy,
                    hxx: -amp * (PI * cf * fx * fx + sf * 2.0 * a) * cy,
                    hxy: amp * PI * sf * fx * sy,
                    hyy: -amp * PI * cf * cy,
                }
            }
            Model::Rossby(p) => {
                let th = (y / p.l).tanh();
                let s = 1.0 - th * th;
                let (w, wx) = rossby_wave_sum(p, x, t);
                let wxx = rossby_wave_curvature(p, x, t);
                HDerivs {
                    hx: p.u0 * p.l * s * wx,
                    hy: p.c3 - p.u0 * s - 2.0 * p.u0 * s * th * w,
                    hxx: p.u0 * p.l * s * wxx,
                    hxy: -2.0 * p.u0 * s * th * wx,
                    hyy: 2.0 * p.u0 * s * th / p.l - 2.0 * p.u0 * w * (s * s - 2.0 * s * th * th) / p.l,
                }
            }
            Model::Custom(terms) => custom_derivs(terms, x, y, t, true),
        }
    }

    /// The stream function itself, where it is defined in closed form.
    pub fn hamiltonian(&self, z: Point2, t: f64) -> f64 {
        let (x, y) = (z.x, z.y);
        match &self.model {
            Model::Rotation { omega } => 0.5 * omega * (x * x + y * y),
            Model::Saddle { lambda } => -lambda * x * y,
            Model::DoubleGyre(p) => {
                let a = p.epsilon * (p.omega * t).sin();
                let f = a * x * x + (1.0 - 2.0 * a) * x;
                p.a * (PI * f).cos() * (PI * y).cos()
            }
            Model::Rossby(p) => {
                let th = (y / p.l).tanh();
                let (w, _) = rossby_wave_sum(p, x, t);
                p.c3 * y - p.u0 * p.l * th + p.u0 * p.l * (1.0 - th * th) * w
            }
            Model::Custom(terms) => terms
                .iter()
                .map(|term| {
                    term.amplitude * term.x.eval(x).0 * term.y.eval(y).0 * (term.omega * t + term.phase).cos()
                })
                .sum(),
        }
    }
}

/// Wave sum `W = A3 cos(k1 x) + A2 cos(k2 x − σ2 t) + A1 cos(k1 x − σ1 t)` and `∂W/∂x`.
#[inline]
fn rossby_wave_sum(p: &RossbyKm, x: f64, t: f64) -> (f64, f64) {
    let (s3, c3) = (p.k1 * x).sin_cos();
    let (s2, c2) = (p.k2 * x - p.sigma2 * t).sin_cos();
    let (s1, c1) = (p.k1 * x - p.sigma1 * t).sin_cos();
    let w = p.a3 * c3 + p.a2 * c2 + p.a1 * c1;
    let wx = -p.a3 * p.k1 * s3 - p.a2 * p.k2 * s2 - p.a1 * p.k1 * s1;
    (w, wx)
}

fn rossby_wave_curvature(p: &RossbyKm, x: f64, t: f64) -> f64 {
    -p.a3 * p.k1 * p.k1 * (p.k1 * x).cos()
        - p.a2 * p.k2 * p.k2 * (p.k2 * x - p.sigma2 * t).cos()
        - p.a1 * p.k1 * p.k1 * (p.k1 * x - p.sigma1 * t).cos()
}

fn custom_derivs(terms: &[HamiltonianTerm], x: f64, y: f64, t: f64, second: bool) -> HDerivs {
    let mut d = HDerivs::default();
    for term in terms {
        let (fx, dfx, ddfx) = term.x.eval(x);
        let (fy, dfy, ddfy) = term.y.eval(y);
        let a = term.amplitude * (term.omega * t + term.phase).cos();
        d.hx += a * dfx * fy;
        d.hy += a * fx * dfy;
        if second {
            d.hxx += a * ddfx * fy;
            d.hxy += a * dfx * dfy;
            d.hyy += a * fx * ddfy;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_and_saddle_closed_forms() {
        let rot = FlowSystem::rigid_rotation(1.0);
        assert_eq!(rot.velocity(Point2::new(1.0, 0.0), 3.7).unwrap(), Vector2::new(0.0, 1.0));
        let saddle = FlowSystem::linear_saddle(2.0);
        assert_eq!(saddle.velocity(Point2::new(0.5, -3.0), 0.0).unwrap(), Vector2::new(1.0, 6.0));
    }

    #[test]
    fn double_gyre_u_vanishes_on_bottom_edge() {
        let flow = FlowSystem::builtin(FlowKind::DoubleGyre).unwrap();
        for i in 0..=20 {
            let v = flow.velocity(Point2::new(0.1 * i as f64, 0.0), 0.0).unwrap();
            assert_eq!(v.x, 0.0);
        }
    }

    #[test]
    fn unknown_kind_and_parameter_are_config_errors() {
        assert!(matches!("vortex".parse::<FlowKind>(), Err(FtcError::Config(_))));
        let params = [("B".to_string(), 1.0)].into();
        let err = FlowSystem::new(FlowKind::DoubleGyre, params, None).unwrap_err();
        assert!(err.to_string().contains("`B`"));
    }

    #[test]
    fn double_gyre_parameter_ranges_enforced() {
        let bad = DoubleGyreParams { epsilon: 0.5, ..Default::default() };
        assert!(FlowSystem::double_gyre(bad).is_err());
        let bad = DoubleGyreParams { a: -0.1, ..Default::default() };
        assert!(FlowSystem::double_gyre(bad).is_err());
    }

    #[test]
    fn non_finite_velocity_names_point() {
        let flow = FlowSystem::custom(
            vec![HamiltonianTerm::steady(1e308, Factor::Power(3), Factor::Power(1))],
            Bounds::new(-1.0, 1.0, -1.0, 1.0),
        )
        .unwrap();
        match flow.velocity(Point2::new(10.0, 1.0), 2.0) {
            Err(FtcError::Evaluation { z, t }) => {
                assert_eq!(z, Point2::new(10.0, 1.0));
                assert_eq!(t, 2.0);
            }
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn rossby_defaults_match_documented_constants() {
        let flow = FlowSystem::builtin(FlowKind::RossbyWave).unwrap();
        let p = flow.params();
        assert_eq!(p["U0"], 44.31);
        assert!((p["c3"] / p["U0"] - 0.462).abs() < 1e-12);
        assert!((p["c2"] / p["U0"] - 0.2055).abs() < 1e-12);
        assert_eq!(p["c1"], p["c3"]);
        assert_eq!(p["sigma1"], 0.0);
        let k1 = 2.0 / (6371.0 * (PI / 6.0).cos());
        assert!((p["k1"] - k1).abs() < 1e-18);
        assert!((p["k2"] - 2.0 * k1).abs() < 1e-18);
        let b = flow.bounds();
        assert!((b.x_max - 2.0 * PI / k1).abs() < 1e-9);
        assert_eq!((b.y_min, b.y_max), (-4425.0, 4425.0));
    }

    #[test]
    fn absolute_sigma_convention_selectable() {
        let params = [("sigma_convention".to_string(), 1.0)].into();
        let flow = FlowSystem::new(FlowKind::RossbyWave, params, None).unwrap();
        let p = flow.params();
        assert!((p["sigma2"] - p["k2"] * p["c2"] * MPS_TO_KM_PER_DAY).abs() < 1e-15);
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let flows = [
            FlowSystem::builtin(FlowKind::DoubleGyre).unwrap(),
            FlowSystem::builtin(FlowKind::RossbyWave).unwrap(),
            FlowSystem::custom(
                vec![
                    HamiltonianTerm {
                        amplitude: 0.3,
                        x: Factor::Sin { k: 2.0, phase: 0.1 },
                        y: Factor::Sech2 { scale: 0.7 },
                        omega: 1.3,
                        phase: 0.2,
                    },
                    HamiltonianTerm::steady(0.2, Factor::Tanh { scale: 0.5 }, Factor::Power(2)),
                ],
                Bounds::new(-1.0, 1.0, -1.0, 1.0),
            )
            .unwrap(),
        ];
        for flow in &flows {
            let b = flow.bounds();
            let h = 1e-6 * b.width();
            for k in 0..10 {
                let z = Point2::new(
                    b.x_min + b.width() * (0.05 + 0.09 * k as f64),
                    b.y_min + b.height() * (0.9 - 0.08 * k as f64),
                );
                let t = 0.37 * k as f64;
                let g = flow.velocity_gradient(z, t);
                let dx = (flow.velocity_unchecked(z + Vector2::new(h, 0.0), t)
                    - flow.velocity_unchecked(z - Vector2::new(h, 0.0), t))
                    * (0.5 / h);
                let dy = (flow.velocity_unchecked(z + Vector2::new(0.0, h), t)
                    - flow.velocity_unchecked(z - Vector2::new(0.0, h), t))
                    * (0.5 / h);
                let scale = g.iter().flatten().fold(1e-12_f64, |m, v| m.max(v.abs()));
                for (num, ana) in [(dx.x, g[0][0]), (dy.x, g[0][1]), (dx.y, g[1][0]), (dy.y, g[1][1])] {
                    assert!((num - ana).abs() <= 1e-5 * scale, "{}: {num} vs {ana}", flow.kind());
                }
            }
        }
    }

    #[test]
    fn velocity_is_hamiltonian_gradient() {
        let flow = FlowSystem::builtin(FlowKind::RossbyWave).unwrap();
        let z = Point2::new(3000.0, 800.0);
        let h = 1e-3;
        let v = flow.velocity(z, 1.5).unwrap();
        let hx = (flow.hamiltonian(z + Vector2::new(h, 0.0), 1.5) - flow.hamiltonian(z - Vector2::new(h, 0.0), 1.5))
            / (2.0 * h);
        let hy = (flow.hamiltonian(z + Vector2::new(0.0, h), 1.5) - flow.hamiltonian(z - Vector2::new(0.0, h), 1.5))
            / (2.0 * h);
        assert!((v.x + hy).abs() < 1e-6 * v.norm());
        assert!((v.y - hx).abs() < 1e-6 * v.norm());
    }
}
