//! Closed-form 2×2 singular value decomposition and the pointwise
//! quantities built on it: FTLE, the finite-time stable/unstable
//! foliation directions, and the angle between them.

use crate::error::{FtcError, Result};
use crate::flows::FlowSystem;
use crate::geometry::{Point2, Vector2};
use crate::integrate::{default_stencil, flow_jacobian, flow_map, Epoch, IntegratorSettings, Jacobian2, JacobianMethod};

/// Relative singular-value gap below which the decomposition is isotropic.
pub const ISOTROPY_TOLERANCE: f64 = 1e-10;

/// `M = σ₁ u₁ v₁ᵀ + σ₂ u₂ v₂ᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Svd2 {
    pub u1: Vector2,
    pub u2: Vector2,
    pub v1: Vector2,
    pub v2: Vector2,
    pub sigma1: f64,
    pub sigma2: f64,
    pub isotropic: bool,
}

impl Svd2 {
    pub fn reconstruct(&self) -> Jacobian2 {
        let (s1, s2) = (self.sigma1, self.sigma2);
        let (u1, u2, v1, v2) = (self.u1, self.u2, self.v1, self.v2);
        Jacobian2::new(
            s1 * u1.x * v1.x + s2 * u2.x * v2.x,
            s1 * u1.x * v1.y + s2 * u2.x * v2.y,
            s1 * u1.y * v1.x + s2 * u2.y * v2.x,
            s1 * u1.y * v1.y + s2 * u2.y * v2.y,
        )
    }
}

/// Singular value decomposition of a 2×2 matrix.
///
/// `v₁` is the major axis of `MᵀM`, oriented with a nonnegative
/// x-component (nonnegative y on a tie); `v₂` is `v₁` turned a quarter
/// turn counter-clockwise and `u₁ = M v₁ / σ₁`, `u₂ = sign(det M) u₁⊥`.
/// `σ₂` is taken as `|det M| / σ₁`, which keeps its relative accuracy
/// when `σ₂ ≪ σ₁`.
pub fn svd2(m: &Jacobian2) -> Svd2 {
    svd2_with_tolerance(m, ISOTROPY_TOLERANCE)
}

/// [`svd2`] with a caller-chosen isotropy threshold on `(σ₁ − σ₂)/σ₁`.
pub fn svd2_with_tolerance(m: &Jacobian2, isotropy_tol: f64) -> Svd2 {
    let (a, b, c, d) = (m.a11, m.a12, m.a21, m.a22);
    let p = a * a + c * c;
    let q = b * b + d * d;
    let r = a * b + c * d;
    if p == 0.0 && q == 0.0 {
        return Svd2 {
            u1: Vector2::new(1.0, 0.0),
            u2: Vector2::new(0.0, 1.0),
            v1: Vector2::new(1.0, 0.0),
            v2: Vector2::new(0.0, 1.0),
            sigma1: 0.0,
            sigma2: 0.0,
            isotropic: true,
        };
    }
    let angle = 0.5 * (2.0 * r).atan2(p - q);
    let mut v1 = Vector2::from_angle(angle);
    if v1.x < 0.0 || (v1.x == 0.0 && v1.y < 0.0) {
        v1 = -v1;
    }
    let v2 = v1.perp();
    let mv1 = m.apply(v1);
    let sigma1 = mv1.norm();
    let u1 = mv1 * (1.0 / sigma1);
    let det = m.det();
    let sigma2 = (det.abs() / sigma1).min(sigma1);
    let u2 = if det < 0.0 { -u1.perp() } else { u1.perp() };
    let isotropic = (sigma1 - sigma2) / sigma1 < isotropy_tol;
    Svd2 { u1, u2, v1, v2, sigma1, sigma2, isotropic }
}

/// How per-point kernels integrate trajectories and differentiate the flow map.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelSettings {
    pub integrator: IntegratorSettings,
    pub jacobian: JacobianMethod,
}

fn require_nonzero(epoch: Epoch) -> Result<()> {
    if epoch.tau == 0.0 || !epoch.tau.is_finite() {
        return Err(FtcError::Config(format!("epoch duration must be nonzero and finite, got {}", epoch.tau)));
    }
    Ok(())
}

/// Finite-time Lyapunov exponent `(1/|τ|) ln σ₁(DΦ)`.
pub fn ftle(flow: &FlowSystem, z: Point2, epoch: Epoch, settings: &KernelSettings) -> Result<f64> {
    require_nonzero(epoch)?;
    let j = flow_jacobian(flow, z, epoch, &settings.integrator, settings.jacobian)?;
    ftle_from_jacobian(&j, epoch.tau)
}

pub fn ftle_from_jacobian(j: &Jacobian2, tau: f64) -> Result<f64> {
    let s = svd2(j);
    if s.sigma1 == 0.0 {
        return Err(FtcError::Numerical("largest singular value is zero".into()));
    }
    Ok(s.sigma1.ln() / tau.abs())
}

/// Stable/unstable foliation pair at a point and the angle between them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoliationSample {
    pub f_s: Vector2,
    pub f_u: Vector2,
    /// `arccos |⟨f_s, f_u⟩|`, in `[0, π/2]`.
    pub theta: f64,
    pub degenerate: bool,
    pub forward: Svd2,
    pub backward: Svd2,
}

/// Smallest singular-value gap a Jacobian from `settings` can resolve near `z`.
///
/// Central differences carry a rounding error of order `ε_mach · |coords| / h`
/// in every entry, far above [`ISOTROPY_TOLERANCE`] for small stencils.
pub fn isotropy_tolerance(flow: &FlowSystem, z: Point2, settings: &KernelSettings) -> f64 {
    match settings.jacobian {
        JacobianMethod::FiniteDifference { h } => {
            let h = h.unwrap_or_else(|| default_stencil(flow));
            let b = flow.bounds();
            let scale = z.x.abs().max(z.y.abs()) + b.x_min.abs().max(b.x_max.abs()).max(b.y_min.abs().max(b.y_max.abs()));
            (64.0 * f64::EPSILON * scale / h).max(ISOTROPY_TOLERANCE)
        }
        JacobianMethod::Variational => ISOTROPY_TOLERANCE,
    }
}

/// `f_s = v₂` of the forward Jacobian at `z`; `f_u = u₁` of the forward
/// Jacobian taken at the backward image of `z` over the preceding epoch.
pub fn foliation_from_jacobians(forward: &Jacobian2, backward: &Jacobian2) -> FoliationSample {
    foliation_with_tolerance(forward, backward, ISOTROPY_TOLERANCE)
}

fn foliation_with_tolerance(forward: &Jacobian2, backward: &Jacobian2, tol: f64) -> FoliationSample {
    let fwd = svd2_with_tolerance(forward, tol);
    let bwd = svd2_with_tolerance(backward, tol);
    let f_s = fwd.v2;
    let f_u = bwd.u1;
    FoliationSample {
        f_s,
        f_u,
        theta: splitting_angle(f_s, f_u),
        degenerate: fwd.isotropic || bwd.isotropic,
        forward: fwd,
        backward: bwd,
    }
}

/// Angle between two lines, folded to `[0, π/2]`.
pub fn splitting_angle(a: Vector2, b: Vector2) -> f64 {
    let cos = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    cos.acos()
}

pub fn foliation_pair(flow: &FlowSystem, z: Point2, epoch: Epoch, settings: &KernelSettings) -> Result<FoliationSample> {
    require_nonzero(epoch)?;
    let leg = |name: &'static str| move |e: FtcError| FtcError::Leg { leg: name, source: Box::new(e) };
    let forward = flow_jacobian(flow, z, epoch, &settings.integrator, settings.jacobian).map_err(leg("forward"))?;
    let origin = flow_map(flow, z, Epoch::new(epoch.t0, -epoch.tau), &settings.integrator).map_err(leg("backward"))?;
    let backward = flow_jacobian(flow, origin, epoch.preceding(), &settings.integrator, settings.jacobian)
        .map_err(leg("backward"))?;
    let tol = isotropy_tolerance(flow, z, settings).max(isotropy_tolerance(flow, origin, settings));
    Ok(foliation_with_tolerance(&forward, &backward, tol))
}
