//! Scalar fields sampled at cell centres of a rectangular grid, and the
//! parallel driver that fills them from per-point kernels.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::curvature::{ftc_point, ProbeSettings};
use crate::error::{FtcError, Result};
use crate::flows::FlowSystem;
use crate::geometry::{Bounds, Point2};
use crate::integrate::{Epoch, IntegratorSettings, JacobianMethod, Method};
use crate::spectral::{foliation_pair, ftle, KernelSettings};

/// Grid dimensions and extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub bounds: Bounds,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, bounds: Bounds) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(FtcError::Config(format!("grid must be at least 2x2, got {nx}x{ny}")));
        }
        if !bounds.is_valid() {
            return Err(FtcError::Config(format!("invalid grid bounds {bounds:?}")));
        }
        Ok(Self { nx, ny, bounds })
    }

    pub fn dx(&self) -> f64 {
        self.bounds.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.bounds.height() / self.ny as f64
    }

    /// Centre of cell `(i, j)`, `i` along x.
    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            self.bounds.x_min + (i as f64 + 0.5) * self.dx(),
            self.bounds.y_min + (j as f64 + 0.5) * self.dy(),
        )
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major scalar field; invalid cells hold NaN and are flagged in `valid`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub nx: usize,
    pub ny: usize,
    pub bounds: Bounds,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub meta: BTreeMap<String, String>,
}

impl FieldGrid {
    /// Field from row-major values; non-finite entries become invalid cells.
    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(FtcError::Format(format!(
                "expected {} values for a {}x{} grid, got {}",
                spec.len(),
                spec.nx,
                spec.ny,
                values.len()
            )));
        }
        let valid: Vec<bool> = values.iter().map(|v| v.is_finite()).collect();
        let values = values.into_iter().map(|v| if v.is_finite() { v } else { f64::NAN }).collect();
        Ok(Self { nx: spec.nx, ny: spec.ny, bounds: spec.bounds, values, valid, meta: BTreeMap::new() })
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(spec: GridSpec, f: impl Fn(Point2) -> f64) -> Self {
        let values = (0..spec.ny)
            .flat_map(|j| (0..spec.nx).map(move |i| (i, j)))
            .map(|(i, j)| f(spec.cell_center(i, j)))
            .collect();
        Self::from_values(spec, values).expect("length matches spec")
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { nx: self.nx, ny: self.ny, bounds: self.bounds }
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.index(i, j);
        self.valid[k].then_some(self.values[k])
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        self.spec().cell_center(i, j)
    }

    pub fn invalidate(&mut self, i: usize, j: usize) {
        let k = self.index(i, j);
        self.valid[k] = false;
        self.values[k] = f64::NAN;
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(&self.valid).filter(|(_, ok)| **ok).map(|(v, _)| *v)
    }

    /// Cell containing `p`, clamped to the grid.
    pub fn cell_of(&self, p: Point2) -> (usize, usize) {
        let s = self.spec();
        let i = ((p.x - self.bounds.x_min) / s.dx()).floor().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p.y - self.bounds.y_min) / s.dy()).floor().clamp(0.0, (self.ny - 1) as f64) as usize;
        (i, j)
    }

    /// Bilinear interpolation between cell centres, extended linearly over
    /// the half-cell border. `None` if any of the four cells is invalid.
    pub fn interpolate(&self, p: Point2) -> Option<f64> {
        let s = self.spec();
        let fx = (p.x - self.bounds.x_min) / s.dx() - 0.5;
        let fy = (p.y - self.bounds.y_min) / s.dy() - 0.5;
        let i0 = (fx.floor().max(0.0) as usize).min(self.nx - 2);
        let j0 = (fy.floor().max(0.0) as usize).min(self.ny - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v00 = self.get(i0, j0)?;
        let v10 = self.get(i0 + 1, j0)?;
        let v01 = self.get(i0, j0 + 1)?;
        let v11 = self.get(i0 + 1, j0 + 1)?;
        let bottom = v00 + tx * (v10 - v00);
        let top = v01 + tx * (v11 - v01);
        Some(bottom + ty * (top - bottom))
    }

    /// Applies `f` to every valid value; non-finite results become invalid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> FieldGrid {
        let values = self.values.iter().zip(&self.valid).map(|(v, ok)| if *ok { f(*v) } else { f64::NAN }).collect();
        let mut out = FieldGrid::from_values(self.spec(), values).expect("same length");
        out.meta = self.meta.clone();
        out
    }

    /// Base-10 logarithm; non-positive cells become invalid.
    pub fn log10(&self) -> FieldGrid {
        self.map(|v| if v > 0.0 { v.log10() } else { f64::NAN })
    }

    /// Linear-interpolation quantile of the valid values, `q ∈ [0, 1]`.
    pub fn quantile(&self, q: f64) -> Option<f64> {
        let mut v: Vec<f64> = self.valid_values().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(sorted_quantile(&v, q))
    }
}

fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kernel {
    Ftle,
    MaxFtc,
    MinFtc,
    FtcRatio,
    Theta,
}

impl Kernel {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kernel::Ftle => "ftle",
            Kernel::MaxFtc => "maxftc",
            Kernel::MinFtc => "minftc",
            Kernel::FtcRatio => "ftc_ratio",
            Kernel::Theta => "theta",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Kernel {
    type Err = FtcError;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").to_ascii_lowercase().as_str() {
            "ftle" => Ok(Kernel::Ftle),
            "maxftc" | "max_ftc" => Ok(Kernel::MaxFtc),
            "minftc" | "min_ftc" => Ok(Kernel::MinFtc),
            "ftc_ratio" | "ftc" | "ratio" => Ok(Kernel::FtcRatio),
            "theta" => Ok(Kernel::Theta),
            other => Err(FtcError::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

/// Everything a per-point kernel needs besides the flow and epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldSettings {
    pub integrator: IntegratorSettings,
    pub jacobian: JacobianMethod,
    pub probe: ProbeSettings,
    /// Worker count; `None` uses the global pool. Never affects values.
    pub threads: Option<usize>,
}

impl FieldSettings {
    pub fn kernel_settings(&self) -> KernelSettings {
        KernelSettings { integrator: self.integrator, jacobian: self.jacobian }
    }

    pub fn probe_settings(&self) -> ProbeSettings {
        ProbeSettings { integrator: self.integrator, ..self.probe }
    }

    /// Stable textual form of every value-affecting setting.
    pub fn describe(&self) -> String {
        let i = &self.integrator;
        let p = &self.probe;
        let method = match i.method {
            Method::Rk4 => "rk4",
            Method::Dopri45 => "dopri45",
        };
        let jac = match self.jacobian {
            JacobianMethod::FiniteDifference { h } => format!("fd(h={h:?})"),
            JacobianMethod::Variational => "variational".to_string(),
        };
        format!(
            "integrator={method};step={:?};steps={};rtol={:?};atol={:?};guard={:?};jacobian={jac};\
             eps={:?};n_dirs={};n_probe={};estimator={:?};eval={:?};refine={}",
            i.step, i.steps_per_epoch, i.rtol, i.atol, i.guard_factor, p.epsilon, p.n_dirs, p.n_probe,
            p.estimator, p.evaluate_at, p.refine
        )
    }
}

/// Evaluates one kernel at one point. `Ok(None)` marks a cell that is
/// well-defined but has no value (degenerate foliation for `theta`).
pub fn evaluate_kernel(
    kernel: Kernel,
    flow: &FlowSystem,
    z: Point2,
    epoch: Epoch,
    settings: &FieldSettings,
) -> Result<Option<f64>> {
    Ok(match kernel {
        Kernel::Ftle => Some(ftle(flow, z, epoch, &settings.kernel_settings())?),
        Kernel::Theta => {
            let f = foliation_pair(flow, z, epoch, &settings.kernel_settings())?;
            (!f.degenerate).then_some(f.theta)
        }
        Kernel::MaxFtc | Kernel::MinFtc | Kernel::FtcRatio => {
            let t = ftc_point(flow, z, epoch, &settings.probe_settings())?;
            Some(match kernel {
                Kernel::MaxFtc => t.max_curvature,
                Kernel::MinFtc => t.min_curvature,
                _ => t.ratio,
            })
        }
    })
}

/// A field together with the reasons its invalid cells failed.
#[derive(Debug, Clone)]
pub struct GridEvaluation {
    pub field: FieldGrid,
    /// `(cell index, message)` in row-major order.
    pub failures: Vec<(usize, String)>,
}

/// FNV-1a hash of a provenance string.
pub fn settings_hash(s: &str) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

fn provenance(flow: &FlowSystem, epoch: Epoch, kernel: Kernel, settings: &FieldSettings) -> BTreeMap<String, String> {
    let mut meta = BTreeMap::new();
    meta.insert("flow".to_string(), flow.describe());
    meta.insert("kernel".to_string(), kernel.to_string());
    meta.insert("t0".to_string(), format!("{:?}", epoch.t0));
    meta.insert("tau".to_string(), format!("{:?}", epoch.tau));
    meta.insert("settings".to_string(), settings.describe());
    let digest = meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect::<String>();
    meta.insert("settings_hash".to_string(), settings_hash(&digest));
    meta
}

pub(crate) fn run_in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| FtcError::Config(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Evaluates `kernel` at every cell centre without the invalid-cell budget.
pub fn evaluate_grid(
    flow: &FlowSystem,
    epoch: Epoch,
    kernel: Kernel,
    spec: GridSpec,
    settings: &FieldSettings,
) -> Result<GridEvaluation> {
    let spec = GridSpec::new(spec.nx, spec.ny, spec.bounds)?;
    let rows: Vec<Vec<std::result::Result<Option<f64>, String>>> = run_in_pool(settings.threads, || {
        (0..spec.ny)
            .into_par_iter()
            .map(|j| {
                (0..spec.nx)
                    .map(|i| {
                        evaluate_kernel(kernel, flow, spec.cell_center(i, j), epoch, settings).map_err(|e| e.to_string())
                    })
                    .collect()
            })
            .collect()
    })?;
    let mut values = Vec::with_capacity(spec.len());
    let mut failures = Vec::new();
    for (k, r) in rows.into_iter().flatten().enumerate() {
        match r {
            Ok(Some(v)) if v.is_finite() => values.push(v),
            Ok(Some(v)) => {
                failures.push((k, format!("non-finite kernel value {v}")));
                values.push(f64::NAN);
            }
            Ok(None) => {
                failures.push((k, "degenerate".to_string()));
                values.push(f64::NAN);
            }
            Err(msg) => {
                failures.push((k, msg));
                values.push(f64::NAN);
            }
        }
    }
    let mut field = FieldGrid::from_values(spec, values)?;
    field.meta = provenance(flow, epoch, kernel, settings);
    Ok(GridEvaluation { field, failures })
}

/// Evaluates `kernel` over the grid; more than 20% invalid cells aborts.
pub fn compute_field(
    flow: &FlowSystem,
    epoch: Epoch,
    kernel: Kernel,
    spec: GridSpec,
    settings: &FieldSettings,
) -> Result<FieldGrid> {
    let eval = evaluate_grid(flow, epoch, kernel, spec, settings)?;
    let total = eval.field.values.len();
    if eval.failures.len() * 5 > total {
        let (k, msg) = &eval.failures[0];
        return Err(FtcError::TooManyInvalid {
            invalid: eval.failures.len(),
            total,
            first: format!("cell {k}: {msg}"),
        });
    }
    Ok(eval.field)
}

/// Field values sampled uniformly along a line segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceTrace {
    pub start: Point2,
    pub end: Point2,
    pub points: Vec<Point2>,
    /// `None` where the interpolation stencil touches an invalid cell.
    pub values: Vec<Option<f64>>,
}

pub fn slice(field: &FieldGrid, start: Point2, end: Point2, n: usize) -> Result<SliceTrace> {
    if n < 2 {
        return Err(FtcError::Config(format!("slice needs at least 2 samples, got {n}")));
    }
    for p in [start, end] {
        if !field.bounds.contains(p) {
            return Err(FtcError::OutOfBounds(p));
        }
    }
    let d = end - start;
    let points: Vec<Point2> = (0..n).map(|k| start + d * (k as f64 / (n - 1) as f64)).collect();
    let values = points.iter().map(|&p| field.interpolate(p)).collect();
    Ok(SliceTrace { start, end, points, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// `(q, value)` for q in 0.05, 0.25, 0.5, 0.75, 0.95.
    pub quantiles: Vec<(f64, f64)>,
    pub valid: usize,
    pub invalid: usize,
}

pub fn field_stats(field: &FieldGrid) -> Result<FieldStats> {
    let mut v: Vec<f64> = field.valid_values().collect();
    if v.is_empty() {
        return Err(FtcError::AllInvalid);
    }
    v.sort_by(f64::total_cmp);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    Ok(FieldStats {
        min: v[0],
        max: v[v.len() - 1],
        mean,
        quantiles: [0.05, 0.25, 0.5, 0.75, 0.95].iter().map(|&q| (q, sorted_quantile(&v, q))).collect(),
        valid: v.len(),
        invalid: field.values.len() - v.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_spec(nx: usize, ny: usize) -> GridSpec {
        GridSpec::new(nx, ny, Bounds::new(0.0, 1.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn cell_centers() {
        let s = GridSpec::new(4, 2, Bounds::new(0.0, 4.0, -1.0, 1.0)).unwrap();
        assert_eq!(s.cell_center(0, 0), Point2::new(0.5, -0.5));
        assert_eq!(s.cell_center(3, 1), Point2::new(3.5, 0.5));
        assert!(GridSpec::new(1, 5, Bounds::new(0.0, 1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn stats_constant_and_masked() {
        let mut f = FieldGrid::from_fn(unit_spec(3, 3), |_| 5.0);
        let s = field_stats(&f).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.invalid), (5.0, 5.0, 5.0, 0));
        f.invalidate(1, 1);
        assert_eq!(field_stats(&f).unwrap().invalid, 1);
        for j in 0..3 {
            for i in 0..3 {
                f.invalidate(i, j);
            }
        }
        assert!(matches!(field_stats(&f), Err(FtcError::AllInvalid)));
    }

    #[test]
    fn stats_ramp_mean() {
        let spec = GridSpec::new(4, 2, Bounds::new(0.0, 4.0, 0.0, 1.0)).unwrap();
        let f = FieldGrid::from_fn(spec, |p| p.x);
        let s = field_stats(&f).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!((s.min, s.max), (0.5, 3.5));
        assert_eq!(s.quantiles[2], (0.5, 2.0));
    }

    #[test]
    fn slice_of_constant_and_ramp() {
        let spec = GridSpec::new(17, 9, Bounds::new(0.0, 2.0, 0.0, 1.0)).unwrap();
        let c = FieldGrid::from_fn(spec, |_| 3.25);
        let t = slice(&c, Point2::new(0.0, 0.0), Point2::new(2.0, 1.0), 11).unwrap();
        assert!(t.values.iter().all(|v| *v == Some(3.25)));
        let ramp = FieldGrid::from_fn(spec, |p| p.x);
        let t = slice(&ramp, Point2::new(0.0, 0.5), Point2::new(2.0, 0.1), 50).unwrap();
        for (p, v) in t.points.iter().zip(&t.values) {
            assert!((v.unwrap() - p.x).abs() <= 1e-12);
        }
    }

    #[test]
    fn slice_gaps_and_bounds() {
        let mut f = FieldGrid::from_fn(unit_spec(8, 8), |p| p.y);
        f.invalidate(4, 4);
        let t = slice(&f, Point2::new(0.0, 0.55), Point2::new(1.0, 0.55), 21).unwrap();
        assert!(t.values.iter().any(|v| v.is_none()));
        assert!(t.values.iter().any(|v| v.is_some()));
        assert!(matches!(
            slice(&f, Point2::new(-0.1, 0.5), Point2::new(1.0, 0.5), 5),
            Err(FtcError::OutOfBounds(_))
        ));
    }

    #[test]
    fn kernel_names_round_trip() {
        for k in [Kernel::Ftle, Kernel::MaxFtc, Kernel::MinFtc, Kernel::FtcRatio, Kernel::Theta] {
            assert_eq!(k.as_str().parse::<Kernel>().unwrap(), k);
        }
        assert!("vorticity".parse::<Kernel>().is_err());
    }

    #[test]
    fn invalid_budget_aborts() {
        // Rigid rotation has degenerate foliations everywhere.
        let flow = FlowSystem::rigid_rotation(1.0);
        let err = compute_field(&flow, Epoch::new(0.0, 1.0), Kernel::Theta, unit_spec(4, 4), &FieldSettings::default())
            .unwrap_err();
        assert!(matches!(err, FtcError::TooManyInvalid { invalid: 16, total: 16, .. }), "{err}");
        let eval = evaluate_grid(&flow, Epoch::new(0.0, 1.0), Kernel::Theta, unit_spec(4, 4), &FieldSettings::default())
            .unwrap();
        assert_eq!(eval.field.invalid_count(), 16);
        assert!(eval.field.values.iter().all(|v| v.is_nan()));
    }
}
