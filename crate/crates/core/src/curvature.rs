//! Curvature of discrete curves and the finite-time curvature kernel.
//!
//! A short segment through `z` in direction `v` is advected over the epoch
//! and the curvature of its image is measured at the image of `z`. The
//! maximum and minimum over directions give the maxFTC and minFTC values;
//! their regularized ratio is the FTC field.

use std::f64::consts::PI;

use crate::error::{FtcError, Result};
use crate::flows::FlowSystem;
use crate::geometry::{Point2, Vector2};
use crate::integrate::{flow_map, Epoch, IntegratorSettings};

/// Squared-speed floor for [`parametric_curvature`].
const TANGENT_FLOOR_SQ: f64 = 1e-300;

/// Curvature of a sampled curve at `index` from central differences in the
/// (uniform) sample parameter. Uses a five-point stencil where both
/// neighbours on each side exist, three points otherwise.
pub fn parametric_curvature(curve: &[Point2], index: usize) -> Result<f64> {
    if index == 0 || index + 1 >= curve.len() {
        return Err(FtcError::Config(format!(
            "curvature index {index} needs a neighbour on each side (curve has {} points)",
            curve.len()
        )));
    }
    let p = |k: usize| curve[k];
    let (d1, d2) = if index >= 2 && index + 2 < curve.len() {
        let (m2, m1, c, p1, p2) = (p(index - 2), p(index - 1), p(index), p(index + 1), p(index + 2));
        let d1 = ((p1 - m1) * 8.0 - (p2 - m2)) * (1.0 / 12.0);
        let d2 = ((p1 - c) * 16.0 + (m1 - c) * 16.0 - (p2 - c) - (m2 - c)) * (1.0 / 12.0);
        (d1, d2)
    } else {
        let (m1, c, p1) = (p(index - 1), p(index), p(index + 1));
        ((p1 - m1) * 0.5, (p1 - c) + (m1 - c))
    };
    let speed_sq = d1.norm_squared();
    if speed_sq < TANGENT_FLOOR_SQ {
        return Err(FtcError::DegenerateTangent(speed_sq));
    }
    Ok(d1.cross(d2).abs() / speed_sq.powf(1.5))
}

/// Curvature of the circle through three points, `4·area / (|pq|·|qw|·|wp|)`.
pub fn menger_curvature(p: Point2, q: Point2, w: Point2) -> Result<f64> {
    let a = p - q;
    let b = w - q;
    let c = w - p;
    let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
    if la == 0.0 || lb == 0.0 || lc == 0.0 {
        return Err(FtcError::CoincidentPoints);
    }
    Ok(2.0 * a.cross(b).abs() / (la * lb * lc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Three-point circumcircle curvature.
    Menger,
    /// Finite-difference curvature along the probe samples.
    Parametric,
}

/// Where along the advected probe the curvature is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvaluationPoint {
    /// At the image of the probe centre.
    Center,
    /// The largest value over all interior probe samples.
    MaxAlongSegment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSettings {
    /// Probe half-length; `None` uses `1e-4 × (x_max − x_min)`.
    pub epsilon: Option<f64>,
    pub n_dirs: usize,
    /// Samples per probe segment, odd, centre included.
    pub n_probe: usize,
    pub estimator: Estimator,
    pub evaluate_at: EvaluationPoint,
    /// Golden-section refinement of the extremal directions.
    pub refine: bool,
    pub integrator: IntegratorSettings,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            epsilon: None,
            n_dirs: 32,
            n_probe: 3,
            estimator: Estimator::Menger,
            evaluate_at: EvaluationPoint::Center,
            refine: false,
            integrator: IntegratorSettings::default(),
        }
    }
}

impl ProbeSettings {
    pub fn epsilon_for(&self, flow: &FlowSystem) -> f64 {
        self.epsilon.unwrap_or_else(|| 1e-4 * flow.bounds().width())
    }

    fn validate(&self, flow: &FlowSystem) -> Result<()> {
        let eps = self.epsilon_for(flow);
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(FtcError::Config(format!("probe epsilon must be > 0, got {eps}")));
        }
        if self.n_dirs < 4 {
            return Err(FtcError::Config(format!("n_dirs must be >= 4, got {}", self.n_dirs)));
        }
        if self.n_probe < 3 || self.n_probe % 2 == 0 {
            return Err(FtcError::Config(format!("n_probe must be odd and >= 3, got {}", self.n_probe)));
        }
        if self.estimator == Estimator::Menger && self.n_probe != 3 {
            return Err(FtcError::Config("the Menger estimator uses exactly 3 probe points".into()));
        }
        Ok(())
    }
}

/// The segment `{z + ε s v : |s| ≤ 1}` sampled at `n_probe` evenly spaced points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentProbe {
    pub center: Point2,
    pub direction: Vector2,
    pub half_length: f64,
    pub n_probe: usize,
}

impl SegmentProbe {
    pub fn points(&self) -> Vec<Point2> {
        let half = (self.n_probe / 2) as f64;
        (0..self.n_probe)
            .map(|k| {
                let s = (k as f64 - half) / half;
                if k == self.n_probe / 2 {
                    self.center
                } else {
                    self.center + self.direction * (self.half_length * s)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureFlag {
    Regular,
    /// Every direction stayed straight to within rounding; `C = c = 0`.
    Straight,
    /// No direction produced a usable curvature estimate; `r = 1`.
    Degenerate,
}

/// maxFTC, minFTC and their regularized ratio at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureTriple {
    pub max_curvature: f64,
    pub min_curvature: f64,
    /// `(C + δ) / (c + δ)`.
    pub ratio: f64,
    pub dir_max: Vector2,
    pub dir_min: Vector2,
    pub flag: CurvatureFlag,
}

/// Curvature of the advected probe along one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionCurvature {
    pub angle: f64,
    /// `None` when the advected samples collapsed onto each other.
    pub kappa: Option<f64>,
    /// Curvature indistinguishable from zero at working precision.
    pub noise_floor: f64,
}

/// Regularization floor `δ = 1e-12 / width` used in the ratio.
pub fn ratio_floor(flow: &FlowSystem) -> f64 {
    1e-12 / flow.bounds().width()
}

/// Rounding-noise level of a curvature estimate from advected samples.
///
/// Each advected coordinate carries an absolute error of roughly
/// `n_steps · ε_mach · |coords|`; a three-point curvature divides the
/// transverse error by the squared sample spacing.
fn noise_floor(points: &[Point2], flow: &FlowSystem, integrator: &IntegratorSettings, tau: f64) -> f64 {
    let b = flow.bounds();
    let scale = points
        .iter()
        .map(|p| p.x.abs().max(p.y.abs()))
        .fold(b.width().max(b.height()), f64::max);
    let spacing = points.windows(2).map(|w| w[0].distance(w[1])).fold(f64::INFINITY, f64::min);
    let steps = integrator.fixed_steps(tau) as f64;
    8.0 * steps * f64::EPSILON * scale / (spacing * spacing)
}

struct Scanner<'a> {
    flow: &'a FlowSystem,
    epoch: Epoch,
    probe: &'a ProbeSettings,
    eps: f64,
    center: Point2,
    center_image: Point2,
}

impl Scanner<'_> {
    fn direction(&self, angle: f64) -> Result<DirectionCurvature> {
        let probe = SegmentProbe {
            center: self.center,
            direction: Vector2::from_angle(angle),
            half_length: self.eps,
            n_probe: self.probe.n_probe,
        };
        let mid = self.probe.n_probe / 2;
        let mut image = Vec::with_capacity(self.probe.n_probe);
        for (k, p) in probe.points().into_iter().enumerate() {
            if k == mid {
                image.push(self.center_image);
            } else {
                image.push(flow_map(self.flow, p, self.epoch, &self.probe.integrator)?);
            }
        }
        let floor = noise_floor(&image, self.flow, &self.probe.integrator, self.epoch.tau);
        let estimate = |i: usize| match self.probe.estimator {
            Estimator::Menger => menger_curvature(image[i - 1], image[i], image[i + 1]),
            Estimator::Parametric => parametric_curvature(&image, i),
        };
        let kappa = match self.probe.evaluate_at {
            EvaluationPoint::Center => estimate(mid).ok(),
            EvaluationPoint::MaxAlongSegment => {
                let values: Vec<f64> = (1..image.len() - 1).filter_map(|i| estimate(i).ok()).collect();
                if values.is_empty() {
                    None
                } else {
                    Some(values.into_iter().fold(0.0, f64::max))
                }
            }
        };
        Ok(DirectionCurvature { angle, kappa, noise_floor: floor })
    }
}

fn scanner<'a>(flow: &'a FlowSystem, z: Point2, epoch: Epoch, probe: &'a ProbeSettings) -> Result<Scanner<'a>> {
    probe.validate(flow)?;
    if epoch.tau == 0.0 {
        return Err(FtcError::Config("epoch duration must be nonzero".into()));
    }
    let center_image = flow_map(flow, z, epoch, &probe.integrator)?;
    Ok(Scanner { flow, epoch, probe, eps: probe.epsilon_for(flow), center: z, center_image })
}

/// Per-direction curvatures over `n_dirs` angles uniformly spanning `[0, π)`.
pub fn ftc_direction_scan(
    flow: &FlowSystem,
    z: Point2,
    epoch: Epoch,
    probe: &ProbeSettings,
) -> Result<Vec<DirectionCurvature>> {
    let s = scanner(flow, z, epoch, probe)?;
    (0..probe.n_dirs).map(|j| s.direction(PI * j as f64 / probe.n_dirs as f64)).collect()
}

/// maxFTC, minFTC and FTC ratio at `z`.
pub fn ftc_point(flow: &FlowSystem, z: Point2, epoch: Epoch, probe: &ProbeSettings) -> Result<CurvatureTriple> {
    let s = scanner(flow, z, epoch, probe)?;
    let scan: Vec<DirectionCurvature> = (0..probe.n_dirs)
        .map(|j| s.direction(PI * j as f64 / probe.n_dirs as f64))
        .collect::<Result<_>>()?;
    let delta = ratio_floor(flow);
    let usable: Vec<(f64, f64)> = scan.iter().filter_map(|d| d.kappa.map(|k| (d.angle, k))).collect();
    if usable.is_empty() {
        return Ok(CurvatureTriple {
            max_curvature: 0.0,
            min_curvature: 0.0,
            ratio: 1.0,
            dir_max: Vector2::new(1.0, 0.0),
            dir_min: Vector2::new(1.0, 0.0),
            flag: CurvatureFlag::Degenerate,
        });
    }
    if scan.iter().all(|d| d.kappa.is_none_or(|k| k <= d.noise_floor)) {
        return Ok(CurvatureTriple {
            max_curvature: 0.0,
            min_curvature: 0.0,
            ratio: 1.0,
            dir_max: Vector2::from_angle(usable[0].0),
            dir_min: Vector2::from_angle(usable[0].0),
            flag: CurvatureFlag::Straight,
        });
    }
    // First occurrence wins ties so results do not depend on float ordering quirks.
    let mut hi = usable[0];
    let mut lo = usable[0];
    for &(a, k) in &usable[1..] {
        if k > hi.1 {
            hi = (a, k);
        }
        if k < lo.1 {
            lo = (a, k);
        }
    }
    if probe.refine {
        let width = PI / probe.n_dirs as f64;
        let kappa_at = |angle: f64| s.direction(angle).ok().and_then(|d| d.kappa);
        hi = golden_section(hi, width, true, &kappa_at);
        lo = golden_section(lo, width, false, &kappa_at);
    }
    let (c_max, c_min) = (hi.1, lo.1);
    Ok(CurvatureTriple {
        max_curvature: c_max,
        min_curvature: c_min,
        ratio: (c_max + delta) / (c_min + delta),
        dir_max: Vector2::from_angle(hi.0),
        dir_min: Vector2::from_angle(lo.0),
        flag: CurvatureFlag::Regular,
    })
}

/// Golden-section search on `[angle − width, angle + width]`; never returns
/// a worse value than `start`.
fn golden_section(start: (f64, f64), width: f64, maximize: bool, f: &dyn Fn(f64) -> Option<f64>) -> (f64, f64) {
    let better = |a: f64, b: f64| if maximize { a > b } else { a < b };
    let score = |x: f64| f(x).unwrap_or(if maximize { f64::NEG_INFINITY } else { f64::INFINITY });
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (start.0 - width, start.0 + width);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (score(x1), score(x2));
    for _ in 0..24 {
        if better(f1, f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = score(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = score(x2);
        }
    }
    let (x, fx) = if better(f1, f2) { (x1, f1) } else { (x2, f2) };
    if fx.is_finite() && better(fx, start.1) {
        (x.rem_euclid(PI), fx)
    } else {
        start
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::FlowKind;

    fn circle(radius: f64, spacing: f64, n: usize) -> Vec<Point2> {
        (0..n)
            .map(|k| {
                let a = 0.3 + spacing * k as f64;
                Point2::new(radius * a.cos(), radius * a.sin())
            })
            .collect()
    }

    #[test]
    fn parametric_on_circle() {
        let pts = circle(2.0, 1e-3, 7);
        for i in 1..6 {
            assert!((parametric_curvature(&pts, i).unwrap() - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn parametric_on_line_and_parabola() {
        let line: Vec<Point2> = (0..5).map(|k| Point2::new(k as f64, 2.0 * k as f64)).collect();
        assert_eq!(parametric_curvature(&line, 2).unwrap(), 0.0);
        let parabola: Vec<Point2> = (-2..=2).map(|k| {
            let s = 1e-3 * k as f64;
            Point2::new(s, s * s)
        }).collect();
        assert!((parametric_curvature(&parabola, 2).unwrap() - 2.0).abs() < 1e-5);
        assert!((parametric_curvature(&parabola[1..4], 1).unwrap() - 2.0).abs() < 1e-5);
    }

    #[test]
    fn parametric_errors() {
        let same = vec![Point2::new(1.0, 1.0); 3];
        assert!(matches!(parametric_curvature(&same, 1), Err(FtcError::DegenerateTangent(_))));
        assert!(parametric_curvature(&same, 0).is_err());
        assert!(parametric_curvature(&same, 2).is_err());
    }

    #[test]
    fn menger_examples() {
        let k = menger_curvature(Point2::new(0.0, 0.0), Point2::new(2.0, 0.0), Point2::new(0.0, 2.0)).unwrap();
        assert!((k - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let k = menger_curvature(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(2.0, 0.0)).unwrap();
        assert_eq!(k, 0.0);
        let k = menger_curvature(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0)).unwrap();
        assert!((k - 2f64.sqrt()).abs() < 1e-15);
        let p = Point2::new(0.5, 0.5);
        assert!(matches!(menger_curvature(p, p, Point2::new(1.0, 0.0)), Err(FtcError::CoincidentPoints)));
    }

    #[test]
    fn probe_samples_include_center() {
        let probe = SegmentProbe {
            center: Point2::new(1.0, 2.0),
            direction: Vector2::new(0.0, 1.0),
            half_length: 0.5,
            n_probe: 5,
        };
        let pts = probe.points();
        assert_eq!(pts[2], probe.center);
        assert_eq!(pts[0], Point2::new(1.0, 1.5));
        assert_eq!(pts[4], Point2::new(1.0, 2.5));
    }

    #[test]
    fn straightness_preserving_flows_give_unit_ratio() {
        let epoch = Epoch::new(0.0, 1.0);
        for flow in [FlowSystem::rigid_rotation(1.0), FlowSystem::linear_saddle(1.0)] {
            for z in [Point2::new(0.3, -0.4), Point2::new(-0.9, 0.05)] {
                let t = ftc_point(&flow, z, epoch, &ProbeSettings::default()).unwrap();
                assert_eq!((t.max_curvature, t.min_curvature, t.ratio), (0.0, 0.0, 1.0));
                assert_eq!(t.flag, CurvatureFlag::Straight);
                let scan = ftc_direction_scan(&flow, z, epoch, &ProbeSettings::default()).unwrap();
                assert!(scan.iter().all(|d| d.kappa.unwrap() <= d.noise_floor));
            }
        }
    }

    #[test]
    fn invalid_probe_settings() {
        let flow = FlowSystem::rigid_rotation(1.0);
        let z = Point2::default();
        let e = Epoch::new(0.0, 1.0);
        for bad in [
            ProbeSettings { n_dirs: 3, ..Default::default() },
            ProbeSettings { n_probe: 4, estimator: Estimator::Parametric, ..Default::default() },
            ProbeSettings { n_probe: 5, ..Default::default() },
            ProbeSettings { epsilon: Some(0.0), ..Default::default() },
        ] {
            assert!(matches!(ftc_point(&flow, z, e, &bad), Err(FtcError::Config(_))));
        }
    }

    #[test]
    fn scan_max_is_ftc_max() {
        let flow = FlowSystem::builtin(FlowKind::DoubleGyre).unwrap();
        let z = Point2::new(0.7, 0.3);
        let epoch = Epoch::new(0.0, 10.0);
        let probe = ProbeSettings::default();
        let t = ftc_point(&flow, z, epoch, &probe).unwrap();
        let scan = ftc_direction_scan(&flow, z, epoch, &probe).unwrap();
        let max = scan.iter().filter_map(|d| d.kappa).fold(f64::NEG_INFINITY, f64::max);
        let min = scan.iter().filter_map(|d| d.kappa).fold(f64::INFINITY, f64::min);
        assert_eq!(max, t.max_curvature);
        assert_eq!(min, t.min_curvature);
        assert!(t.ratio >= 1.0 && t.max_curvature >= t.min_curvature && t.min_curvature >= 0.0);
    }

    #[test]
    fn refinement_never_worsens_extremes() {
        let flow = FlowSystem::builtin(FlowKind::DoubleGyre).unwrap();
        let z = Point2::new(1.3, 0.6);
        let epoch = Epoch::new(0.0, 10.0);
        let plain = ftc_point(&flow, z, epoch, &ProbeSettings::default()).unwrap();
        let refined = ftc_point(&flow, z, epoch, &ProbeSettings { refine: true, ..Default::default() }).unwrap();
        assert!(refined.max_curvature >= plain.max_curvature);
        assert!(refined.min_curvature <= plain.min_curvature);
    }
}
