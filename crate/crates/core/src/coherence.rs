//! Shape coherence of advected sets: overlap of an advected set with a
//! rigidly moved reference set, maximised over rotations and translations.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::curves::Polyline;
use crate::error::{FtcError, Result};
use crate::fields::{run_in_pool, GridSpec};
use crate::flows::FlowSystem;
use crate::geometry::{Point2, Vector2};
use crate::integrate::{flow_map, Epoch, IntegratorSettings};

/// Sample points per source cell along each axis.
pub const DEFAULT_SUPERSAMPLE: usize = 4;

/// A planar set represented by sample points, each standing for an equal
/// share of `area`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    pub points: Vec<Point2>,
    pub area: f64,
    /// Cell size of the grid the set was drawn from.
    pub cell: (f64, f64),
}

impl RegionSet {
    /// Cells where `mask` is true, sampled by a `supersample × supersample`
    /// lattice of points per cell.
    pub fn from_mask(spec: &GridSpec, mask: &[bool], supersample: usize) -> Result<Self> {
        if mask.len() != spec.len() {
            return Err(FtcError::Config(format!("mask has {} cells, grid has {}", mask.len(), spec.len())));
        }
        let s = supersample.max(1);
        let (dx, dy) = (spec.dx(), spec.dy());
        let mut points = Vec::new();
        let mut cells = 0usize;
        for (k, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
            cells += 1;
            let (i, j) = (k % spec.nx, k / spec.nx);
            let x0 = spec.bounds.x_min + i as f64 * dx;
            let y0 = spec.bounds.y_min + j as f64 * dy;
            for b in 0..s {
                for a in 0..s {
                    points.push(Point2::new(
                        x0 + (a as f64 + 0.5) * dx / s as f64,
                        y0 + (b as f64 + 0.5) * dy / s as f64,
                    ));
                }
            }
        }
        if cells == 0 {
            return Err(FtcError::EmptyOccupancy);
        }
        Ok(Self { points, area: cells as f64 * dx * dy, cell: (dx, dy) })
    }

    /// Cells whose centres lie inside a closed polyline.
    pub fn from_polyline(spec: &GridSpec, line: &Polyline, supersample: usize) -> Result<Self> {
        if !line.closed {
            return Err(FtcError::Config("region boundary must be a closed curve".into()));
        }
        let mask: Vec<bool> = (0..spec.ny)
            .flat_map(|j| (0..spec.nx).map(move |i| (i, j)))
            .map(|(i, j)| line.contains(spec.cell_center(i, j)))
            .collect();
        Self::from_mask(spec, &mask, supersample)
    }

    pub fn centroid(&self) -> Point2 {
        centroid(&self.points)
    }

    /// The same set moved rigidly about the origin.
    pub fn transformed(&self, angle: f64, translation: Vector2) -> RegionSet {
        let points = self.points.iter().map(|p| Point2::new(0.0, 0.0) + p.to_vector().rotated(angle) + translation).collect();
        RegionSet { points, ..self.clone() }
    }
}

fn centroid(points: &[Point2]) -> Point2 {
    let n = points.len().max(1) as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point2::new(sx / n, sy / n)
}

/// Rotation by `angle` about the moved set's centroid, then translation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RigidMotion {
    pub angle: f64,
    pub translation: Vector2,
}

impl RigidMotion {
    pub fn apply(&self, points: &[Point2]) -> Vec<Point2> {
        let c = centroid(points);
        points.iter().map(|&p| c + (p - c).rotated(self.angle) + self.translation).collect()
    }
}

/// Advected sample points; area is carried over unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct Advected {
    pub set: RegionSet,
    pub escaped: usize,
}

/// Advects every sample point; fewer than 1% may escape, and those are dropped.
pub fn advect_region(
    flow: &FlowSystem,
    a: &RegionSet,
    epoch: Epoch,
    settings: &IntegratorSettings,
    threads: Option<usize>,
) -> Result<Advected> {
    if a.points.is_empty() {
        return Err(FtcError::EmptyOccupancy);
    }
    let images: Vec<Option<Point2>> = run_in_pool(threads, || {
        a.points.par_iter().map(|&p| flow_map(flow, p, epoch, settings).ok()).collect()
    })?;
    let escaped = images.iter().filter(|p| p.is_none()).count();
    if escaped * 100 >= a.points.len() && escaped > 0 {
        return Err(FtcError::EscapeBudget { escaped, total: a.points.len() });
    }
    let points = images.into_iter().flatten().collect();
    Ok(Advected { set: RegionSet { points, ..a.clone() }, escaped })
}

/// Occupancy raster shared by both sets: cells of size `(hx, hy)` aligned
/// to `origin`, optionally wrapped in x with a period of `wrap` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Occupancy {
    pub origin: Point2,
    pub hx: f64,
    pub hy: f64,
    pub wrap: Option<i64>,
}

impl Occupancy {
    /// `factor` cells per source cell along each axis; with a zonal period
    /// the x size is adjusted so that the period is a whole number of cells.
    pub fn for_source(spec: &GridSpec, factor: f64, zonal_period: Option<f64>) -> Result<Self> {
        if !(factor >= 1.0) {
            return Err(FtcError::Config(format!("occupancy factor must be at least 1, got {factor}")));
        }
        let mut hx = spec.dx() / factor;
        let hy = spec.dy() / factor;
        let wrap = zonal_period.map(|p| {
            let n = (p / hx).round().max(1.0);
            hx = p / n;
            n as i64
        });
        Ok(Self { origin: Point2::new(spec.bounds.x_min, spec.bounds.y_min), hx, hy, wrap })
    }

    fn key(&self, p: Point2) -> (i64, i64) {
        let i = ((p.x - self.origin.x) / self.hx).floor() as i64;
        let j = ((p.y - self.origin.y) / self.hy).floor() as i64;
        (self.wrap.map_or(i, |n| i.rem_euclid(n)), j)
    }

    pub fn raster(&self, points: &[Point2]) -> HashSet<(i64, i64)> {
        points.iter().map(|&p| self.key(p)).collect()
    }
}

/// `|cells(P) ∩ cells(motion(B))| / |cells(motion(B))|`.
pub fn overlap_fraction(p_cells: &HashSet<(i64, i64)>, b: &RegionSet, motion: &RigidMotion, occ: &Occupancy) -> Result<f64> {
    let moved = occ.raster(&motion.apply(&b.points));
    if moved.is_empty() {
        return Err(FtcError::EmptyOccupancy);
    }
    let hit = moved.iter().filter(|c| p_cells.contains(c)).count();
    Ok(hit as f64 / moved.len() as f64)
}

/// Overlap of two point sets under `motion`, rasterised on `occ`.
pub fn overlap_of_sets(p: &RegionSet, b: &RegionSet, motion: &RigidMotion, occ: &Occupancy) -> Result<f64> {
    let cells = occ.raster(&p.points);
    if cells.is_empty() {
        return Err(FtcError::EmptyOccupancy);
    }
    overlap_fraction(&cells, b, motion, occ)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSettings {
    pub n_angles: usize,
    pub max_refine_evals: usize,
    /// Occupancy cells per source cell along each axis.
    pub occupancy_factor: f64,
    pub integrator: IntegratorSettings,
    pub threads: Option<usize>,
}

impl Default for AlphaSettings {
    fn default() -> Self {
        Self { n_angles: 360, max_refine_evals: 200, occupancy_factor: 2.0, integrator: IntegratorSettings::default(), threads: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaResult {
    pub alpha: f64,
    pub motion: RigidMotion,
    pub escaped: usize,
    pub evaluations: usize,
}

/// Best overlap of `p` with rigid motions of `b`: an angle scan with
/// centroids aligned, then coordinate descent over angle and translation.
pub fn maximize_overlap(p: &RegionSet, b: &RegionSet, occ: &Occupancy, settings: &AlphaSettings) -> Result<(f64, RigidMotion, usize)> {
    if settings.n_angles == 0 {
        return Err(FtcError::Config("n_angles must be positive".into()));
    }
    let cells = occ.raster(&p.points);
    if cells.is_empty() {
        return Err(FtcError::EmptyOccupancy);
    }
    let shift = p.centroid() - b.centroid();
    let scan: Vec<Result<f64>> = run_in_pool(settings.threads, || {
        (0..settings.n_angles)
            .into_par_iter()
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / settings.n_angles as f64;
                overlap_fraction(&cells, b, &RigidMotion { angle, translation: shift }, occ)
            })
            .collect()
    })?;
    let mut best = RigidMotion { angle: 0.0, translation: shift };
    let mut best_v = f64::NEG_INFINITY;
    for (k, v) in scan.into_iter().enumerate() {
        let v = v?;
        if v > best_v {
            best_v = v;
            best.angle = 2.0 * std::f64::consts::PI * k as f64 / settings.n_angles as f64;
        }
    }
    let mut evals = settings.n_angles;

    let mut steps = [2.0 * std::f64::consts::PI / settings.n_angles as f64, occ.hx, occ.hy];
    let min_steps = steps.map(|s| s * 1e-3);
    let mut used = 0;
    'refine: while used < settings.max_refine_evals {
        let mut improved = false;
        for c in 0..3 {
            for dir in [1.0, -1.0] {
                if used >= settings.max_refine_evals {
                    break 'refine;
                }
                let mut m = best;
                match c {
                    0 => m.angle += dir * steps[0],
                    1 => m.translation.x += dir * steps[1],
                    _ => m.translation.y += dir * steps[2],
                }
                let v = overlap_fraction(&cells, b, &m, occ)?;
                used += 1;
                if v > best_v {
                    best_v = v;
                    best = m;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for (s, lo) in steps.iter_mut().zip(min_steps) {
                *s *= 0.5;
                if *s < lo {
                    break 'refine;
                }
            }
        }
    }
    evals += used;
    Ok((best_v, best, evals))
}

/// Shape coherence factor of `a` against reference `b` over `epoch`.
pub fn shape_coherence_alpha(
    flow: &FlowSystem,
    a: &RegionSet,
    b: &RegionSet,
    spec: &GridSpec,
    epoch: Epoch,
    settings: &AlphaSettings,
) -> Result<AlphaResult> {
    let advected = advect_region(flow, a, epoch, &settings.integrator, settings.threads)?;
    let occ = Occupancy::for_source(spec, settings.occupancy_factor, flow.zonal_period())?;
    let (alpha, motion, evaluations) = maximize_overlap(&advected.set, b, &occ, settings)?;
    Ok(AlphaResult { alpha, motion, escaped: advected.escaped, evaluations })
}
