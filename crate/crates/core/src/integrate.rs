//! Trajectory advection, the flow map and its spatial derivative.

use crate::error::{FtcError, Result};
use crate::flows::FlowSystem;
use crate::geometry::{Bounds, Point2, Vector2};

/// The time interval `[t0, t0 + tau]`; `tau < 0` integrates backward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Epoch {
    pub t0: f64,
    pub tau: f64,
}

impl Epoch {
    pub const fn new(t0: f64, tau: f64) -> Self {
        Self { t0, tau }
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.tau
    }

    /// The interval traversed in the opposite direction.
    pub fn reversed(&self) -> Epoch {
        Epoch::new(self.t0 + self.tau, -self.tau)
    }

    /// The interval of the same length that ends at `t0`, `[t0 − τ, t0]`.
    pub fn preceding(&self) -> Epoch {
        Epoch::new(self.t0 - self.tau, self.tau)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classical fixed-step fourth-order Runge–Kutta.
    Rk4,
    /// Dormand–Prince embedded 5(4) pair with step-size control.
    Dopri45,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub method: Method,
    /// Fixed step length; `None` splits each epoch into `steps_per_epoch` steps.
    pub step: Option<f64>,
    pub steps_per_epoch: usize,
    pub rtol: f64,
    pub atol: f64,
    /// Trajectories leaving the domain scaled by this factor are escapes.
    pub guard_factor: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            step: None,
            steps_per_epoch: 500,
            rtol: 1e-8,
            atol: 1e-12,
            guard_factor: 10.0,
        }
    }
}

impl IntegratorSettings {
    pub fn with_step(step: f64) -> Self {
        Self { step: Some(step), ..Self::default() }
    }

    pub fn adaptive(rtol: f64) -> Self {
        Self { method: Method::Dopri45, rtol, atol: rtol * 1e-4, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if let Some(h) = self.step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(FtcError::Config(format!("integration step must be > 0, got {h}")));
            }
        }
        if self.steps_per_epoch == 0 {
            return Err(FtcError::Config("steps_per_epoch must be >= 1".into()));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(FtcError::Config("tolerances must be > 0".into()));
        }
        if !(self.guard_factor >= 1.0) {
            return Err(FtcError::Config("guard factor must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of equal steps used by the fixed-step method over `tau`.
    pub fn fixed_steps(&self, tau: f64) -> usize {
        match self.step {
            Some(h) => ((tau.abs() / h).ceil() as usize).max(1),
            None => self.steps_per_epoch,
        }
    }
}

/// How [`flow_jacobian`] obtains `DΦ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JacobianMethod {
    /// Central differences with stencil half-width `h`; `None` uses
    /// `1e-8 × (x_max − x_min)`.
    FiniteDifference { h: Option<f64> },
    /// Integrates `J' = ∇u J` along the trajectory with the analytic
    /// velocity gradient.
    Variational,
}

impl Default for JacobianMethod {
    fn default() -> Self {
        JacobianMethod::FiniteDifference { h: None }
    }
}

/// A 2×2 matrix, usually the flow-map derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Jacobian2 {
    pub const IDENTITY: Jacobian2 = Jacobian2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn from_columns(c1: Vector2, c2: Vector2) -> Self {
        Self::new(c1.x, c2.x, c1.y, c2.y)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn apply(&self, v: Vector2) -> Vector2 {
        Vector2::new(self.a11 * v.x + self.a12 * v.y, self.a21 * v.x + self.a22 * v.y)
    }

    pub fn transpose(&self) -> Jacobian2 {
        Jacobian2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn mul(&self, o: &Jacobian2) -> Jacobian2 {
        Jacobian2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        [self.a11, self.a12, self.a21, self.a22].iter().all(|v| v.is_finite())
    }
}

struct Guard {
    box_: Bounds,
}

impl Guard {
    fn new(flow: &FlowSystem, settings: &IntegratorSettings) -> Self {
        Self { box_: flow.bounds().scaled(settings.guard_factor) }
    }

    #[inline]
    fn check(&self, z: Point2, t: f64) -> Result<()> {
        if !z.is_finite() {
            return Err(FtcError::NonFinite { t });
        }
        if !self.box_.contains(z) {
            return Err(FtcError::Escape { z, t });
        }
        Ok(())
    }
}

/// `Φ_{t0}^{t0+τ}(z)`.
pub fn flow_map(flow: &FlowSystem, z: Point2, epoch: Epoch, settings: &IntegratorSettings) -> Result<Point2> {
    settings.validate()?;
    if !z.is_finite() {
        return Err(FtcError::NonFinite { t: epoch.t0 });
    }
    if epoch.tau == 0.0 {
        return Ok(z);
    }
    let guard = Guard::new(flow, settings);
    match settings.method {
        Method::Rk4 => rk4(flow, z, epoch, settings.fixed_steps(epoch.tau), &guard),
        Method::Dopri45 => dopri45(flow, z, epoch, settings, &guard),
    }
}

fn rk4(flow: &FlowSystem, z0: Point2, epoch: Epoch, n: usize, guard: &Guard) -> Result<Point2> {
    let h = epoch.tau / n as f64;
    let mut z = z0;
    for i in 0..n {
        let t = epoch.t0 + i as f64 * h;
        let k1 = flow.velocity_unchecked(z, t);
        let k2 = flow.velocity_unchecked(z + k1 * (0.5 * h), t + 0.5 * h);
        let k3 = flow.velocity_unchecked(z + k2 * (0.5 * h), t + 0.5 * h);
        let k4 = flow.velocity_unchecked(z + k3 * h, t + h);
        z = z + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        guard.check(z, t + h)?;
    }
    Ok(z)
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn dopri45(
    flow: &FlowSystem,
    z0: Point2,
    epoch: Epoch,
    settings: &IntegratorSettings,
    guard: &Guard,
) -> Result<Point2> {
    let dir = epoch.tau.signum();
    let t_end = epoch.t1();
    let mut t = epoch.t0;
    let mut z = z0;
    let mut h = settings.step.unwrap_or(epoch.tau.abs() / 100.0).min(epoch.tau.abs()) * dir;
    let min_step = epoch.tau.abs() * 1e-14;
    let mut k = [Vector2::default(); 7];
    while (t_end - t) * dir > 0.0 {
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
        }
        k[0] = flow.velocity_unchecked(z, t);
        for s in 1..7 {
            let mut acc = Vector2::default();
            for (j, kj) in k.iter().enumerate().take(s) {
                acc = acc + *kj * DP_A[s][j];
            }
            k[s] = flow.velocity_unchecked(z + acc * h, t + DP_C[s] * h);
        }
        let mut d5 = Vector2::default();
        let mut d4 = Vector2::default();
        for s in 0..7 {
            d5 = d5 + k[s] * DP_B5[s];
            d4 = d4 + k[s] * DP_B4[s];
        }
        let z5 = z + d5 * h;
        let err = (d5 - d4) * h;
        let sx = settings.atol + settings.rtol * z.x.abs().max(z5.x.abs());
        let sy = settings.atol + settings.rtol * z.y.abs().max(z5.y.abs());
        let e = ((err.x / sx).powi(2) + (err.y / sy).powi(2)).sqrt() / std::f64::consts::SQRT_2;
        if !e.is_finite() {
            return Err(FtcError::NonFinite { t });
        }
        if e <= 1.0 {
            t += h;
            z = z5;
            guard.check(z, t)?;
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h.abs() < min_step {
            return Err(FtcError::Numerical(format!("adaptive step underflow at t={t}")));
        }
    }
    Ok(z)
}

/// Default finite-difference half-width for `flow`.
///
/// Truncation error in `det DΦ` grows like `h² σ₁³`; at `1e-8 × width` it
/// stays below `1e-4` for both benchmarks at τ = 15.
pub fn default_stencil(flow: &FlowSystem) -> f64 {
    1e-8 * flow.bounds().width()
}

/// `DΦ_{t0}^{t0+τ}(z)`.
pub fn flow_jacobian(
    flow: &FlowSystem,
    z: Point2,
    epoch: Epoch,
    settings: &IntegratorSettings,
    method: JacobianMethod,
) -> Result<Jacobian2> {
    match method {
        JacobianMethod::FiniteDifference { h } => {
            let h = h.unwrap_or_else(|| default_stencil(flow));
            finite_difference_jacobian(flow, z, epoch, settings, h)
        }
        JacobianMethod::Variational => variational_jacobian(flow, z, epoch, settings).map(|(_, j)| j),
    }
}

/// Central-difference Jacobian over the stencil `z ± h e₁`, `z ± h e₂`.
pub fn finite_difference_jacobian(
    flow: &FlowSystem,
    z: Point2,
    epoch: Epoch,
    settings: &IntegratorSettings,
    h: f64,
) -> Result<Jacobian2> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(FtcError::Config(format!("stencil half-width must be > 0, got {h}")));
    }
    let corner = |name: &'static str, d: Vector2| {
        flow_map(flow, z + d, epoch, settings).map_err(|e| FtcError::Stencil { corner: name, source: Box::new(e) })
    };
    let xp = corner("+x", Vector2::new(h, 0.0))?;
    let xm = corner("-x", Vector2::new(-h, 0.0))?;
    let yp = corner("+y", Vector2::new(0.0, h))?;
    let ym = corner("-y", Vector2::new(0.0, -h))?;
    let inv = 0.5 / h;
    Ok(Jacobian2::from_columns((xp - xm) * inv, (yp - ym) * inv))
}

/// Trajectory end point and `DΦ` from the variational equation, fixed-step RK4.
pub fn variational_jacobian(
    flow: &FlowSystem,
    z0: Point2,
    epoch: Epoch,
    settings: &IntegratorSettings,
) -> Result<(Point2, Jacobian2)> {
    settings.validate()?;
    let guard = Guard::new(flow, settings);
    let n = settings.fixed_steps(epoch.tau);
    let h = epoch.tau / n as f64;
    let rhs = |z: Point2, j: &Jacobian2, t: f64| {
        let g = flow.velocity_gradient(z, t);
        let grad = Jacobian2::new(g[0][0], g[0][1], g[1][0], g[1][1]);
        (flow.velocity_unchecked(z, t), grad.mul(j))
    };
    let axpy = |j: &Jacobian2, k: &Jacobian2, s: f64| {
        Jacobian2::new(j.a11 + s * k.a11, j.a12 + s * k.a12, j.a21 + s * k.a21, j.a22 + s * k.a22)
    };
    let mut z = z0;
    let mut j = Jacobian2::IDENTITY;
    if epoch.tau == 0.0 {
        return Ok((z, j));
    }
    for i in 0..n {
        let t = epoch.t0 + i as f64 * h;
        let (v1, m1) = rhs(z, &j, t);
        let (v2, m2) = rhs(z + v1 * (0.5 * h), &axpy(&j, &m1, 0.5 * h), t + 0.5 * h);
        let (v3, m3) = rhs(z + v2 * (0.5 * h), &axpy(&j, &m2, 0.5 * h), t + 0.5 * h);
        let (v4, m4) = rhs(z + v3 * h, &axpy(&j, &m3, h), t + h);
        z = z + (v1 + (v2 + v3) * 2.0 + v4) * (h / 6.0);
        let sum = axpy(&axpy(&axpy(&m1, &m2, 2.0), &m3, 2.0), &m4, 1.0);
        j = axpy(&j, &sum, h / 6.0);
        guard.check(z, t + h)?;
        if !j.is_finite() {
            return Err(FtcError::NonFinite { t: t + h });
        }
    }
    Ok((z, j))
}

/// Advects every vertex of a polyline; order is preserved.
pub fn advect_polyline(
    flow: &FlowSystem,
    points: &[Point2],
    epoch: Epoch,
    settings: &IntegratorSettings,
) -> Result<Vec<Point2>> {
    if points.len() < 2 {
        return Err(FtcError::Config(format!("polyline needs at least 2 points, got {}", points.len())));
    }
    points
        .iter()
        .enumerate()
        .map(|(i, &p)| flow_map(flow, p, epoch, settings).map_err(|e| e.at_index(i)))
        .collect()
}
