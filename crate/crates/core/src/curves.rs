//! Trough/ridge extraction and level-curve continuation on scalar fields.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{FtcError, Result};
use crate::fields::{evaluate_grid, FieldGrid, FieldSettings, GridSpec, Kernel};
use crate::flows::FlowSystem;
use crate::geometry::{Bounds, Point2, Vector2};
use crate::gridio::format_value;
use crate::integrate::Epoch;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Trough,
    Ridge,
}

/// Cells that are strict minima (trough) or maxima (ridge) along at least
/// one grid axis and lie below the `q`-quantile (trough) or above the
/// `1 - q`-quantile (ridge). Returned in row-major order.
pub fn extract_extremal_points(field: &FieldGrid, mode: Extremum, q: f64) -> Result<Vec<(usize, usize)>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(FtcError::Config(format!("quantile must lie in (0, 1), got {q}")));
    }
    let Some(cut) = field.quantile(if mode == Extremum::Trough { q } else { 1.0 - q }) else {
        return Ok(Vec::new());
    };
    let beats = |a: f64, b: f64| match mode {
        Extremum::Trough => a < b,
        Extremum::Ridge => a > b,
    };
    Ok(directional_extrema(field, mode)
        .into_iter()
        .filter(|&(i, j)| beats(field.get(i, j).expect("valid"), cut))
        .collect())
}

fn directional_extrema(field: &FieldGrid, mode: Extremum) -> Vec<(usize, usize)> {
    let beats = |a: f64, b: f64| match mode {
        Extremum::Trough => a < b,
        Extremum::Ridge => a > b,
    };
    let mut out = Vec::new();
    for j in 0..field.ny {
        for i in 0..field.nx {
            let Some(v) = field.get(i, j) else { continue };
            let along_x = i > 0
                && i + 1 < field.nx
                && matches!((field.get(i - 1, j), field.get(i + 1, j)), (Some(a), Some(b)) if beats(v, a) && beats(v, b));
            let along_y = j > 0
                && j + 1 < field.ny
                && matches!((field.get(i, j - 1), field.get(i, j + 1)), (Some(a), Some(b)) if beats(v, a) && beats(v, b));
            if along_x || along_y {
                out.push((i, j));
            }
        }
    }
    out
}

/// A differentiable scalar function on a rectangle.
pub trait ScalarFn {
    /// `None` outside the domain or where the function is undefined.
    fn value(&self, p: Point2) -> Option<f64>;
    fn gradient(&self, p: Point2) -> Option<Vector2>;
    fn bounds(&self) -> Bounds;
    /// Spread of values (max - min) used to scale tolerances.
    fn range(&self) -> f64;
}

/// Closed-form scalar function with an explicit gradient.
pub struct AnalyticFn<F, G> {
    pub f: F,
    pub grad: G,
    pub bounds: Bounds,
    pub range: f64,
}

impl<F, G> ScalarFn for AnalyticFn<F, G>
where
    F: Fn(Point2) -> f64,
    G: Fn(Point2) -> Vector2,
{
    fn value(&self, p: Point2) -> Option<f64> {
        self.bounds.contains(p).then(|| (self.f)(p))
    }

    fn gradient(&self, p: Point2) -> Option<Vector2> {
        self.bounds.contains(p).then(|| (self.grad)(p))
    }

    fn bounds(&self) -> Bounds {
        self.bounds
    }

    fn range(&self) -> f64 {
        self.range
    }
}

/// Catmull-Rom bicubic interpolant through the cell-centre samples of a
/// grid. C¹, exact at cell centres; samples beyond the edge are linearly
/// extrapolated. Undefined wherever its 4×4 stencil touches an invalid cell.
pub struct BicubicField<'a> {
    field: &'a FieldGrid,
    range: f64,
}

impl<'a> BicubicField<'a> {
    pub fn new(field: &'a FieldGrid) -> Result<Self> {
        let (lo, hi) = field
            .valid_values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo > hi {
            return Err(FtcError::AllInvalid);
        }
        Ok(Self { field, range: hi - lo })
    }

    fn sample(&self, i: isize, j: isize) -> Option<f64> {
        let (nx, ny) = (self.field.nx as isize, self.field.ny as isize);
        if i < 0 {
            return Some(2.0 * self.sample(0, j)? - self.sample(1, j)?);
        }
        if i >= nx {
            return Some(2.0 * self.sample(nx - 1, j)? - self.sample(nx - 2, j)?);
        }
        if j < 0 {
            return Some(2.0 * self.sample(i, 0)? - self.sample(i, 1)?);
        }
        if j >= ny {
            return Some(2.0 * self.sample(i, ny - 1)? - self.sample(i, ny - 2)?);
        }
        self.field.get(i as usize, j as usize)
    }

    fn eval(&self, p: Point2) -> Option<(f64, Vector2)> {
        if !self.field.bounds.contains(p) {
            return None;
        }
        let s = self.field.spec();
        let fx = (p.x - s.bounds.x_min) / s.dx() - 0.5;
        let fy = (p.y - s.bounds.y_min) / s.dy() - 0.5;
        let i0 = fx.floor().clamp(0.0, (s.nx - 2) as f64) as isize;
        let j0 = fy.floor().clamp(0.0, (s.ny - 2) as f64) as isize;
        let (wx, dwx) = catmull_rom(fx - i0 as f64);
        let (wy, dwy) = catmull_rom(fy - j0 as f64);
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for b in 0..4 {
            for a in 0..4 {
                let f = self.sample(i0 - 1 + a as isize, j0 - 1 + b as isize)?;
                v += wx[a] * wy[b] * f;
                gx += dwx[a] * wy[b] * f;
                gy += wx[a] * dwy[b] * f;
            }
        }
        Some((v, Vector2::new(gx / s.dx(), gy / s.dy())))
    }
}

fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let (t2, t3) = (t * t, t * t * t);
    (
        [
            0.5 * (-t + 2.0 * t2 - t3),
            0.5 * (2.0 - 5.0 * t2 + 3.0 * t3),
            0.5 * (t + 4.0 * t2 - 3.0 * t3),
            0.5 * (-t2 + t3),
        ],
        [
            0.5 * (-1.0 + 4.0 * t - 3.0 * t2),
            0.5 * (-10.0 * t + 9.0 * t2),
            0.5 * (1.0 + 8.0 * t - 9.0 * t2),
            0.5 * (-2.0 * t + 3.0 * t2),
        ],
    )
}

impl ScalarFn for BicubicField<'_> {
    fn value(&self, p: Point2) -> Option<f64> {
        self.eval(p).map(|(v, _)| v)
    }

    fn gradient(&self, p: Point2) -> Option<Vector2> {
        self.eval(p).map(|(_, g)| g)
    }

    fn bounds(&self) -> Bounds {
        self.field.bounds
    }

    fn range(&self) -> f64 {
        self.range
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveKind {
    FtcTrough,
    FtleRidge,
    ZeroSplitting,
    LevelSet,
}

impl CurveKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CurveKind::FtcTrough => "ftc_trough",
            CurveKind::FtleRidge => "ftle_ridge",
            CurveKind::ZeroSplitting => "zero_splitting",
            CurveKind::LevelSet => "level_set",
        }
    }
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CurveKind {
    type Err = FtcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ftc_trough" => Ok(CurveKind::FtcTrough),
            "ftle_ridge" => Ok(CurveKind::FtleRidge),
            "zero_splitting" => Ok(CurveKind::ZeroSplitting),
            "level_set" => Ok(CurveKind::LevelSet),
            other => Err(FtcError::Format(format!("unknown curve kind `{other}`"))),
        }
    }
}

/// A closed polyline repeats its first point at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<Point2>,
    pub closed: bool,
    pub kind: CurveKind,
    pub level: f64,
}

impl Polyline {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    /// Distance from `p` to the nearest segment.
    pub fn distance_to(&self, p: Point2) -> f64 {
        if self.points.len() == 1 {
            return p.distance(self.points[0]);
        }
        self.points.windows(2).map(|w| segment_distance(p, w[0], w[1])).fold(f64::INFINITY, f64::min)
    }

    /// Smallest distance between any vertex of `self` and the segments of `other`.
    pub fn min_distance(&self, other: &Polyline) -> f64 {
        self.points.iter().map(|&p| other.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    /// Shoelace area of a closed curve.
    pub fn enclosed_area(&self) -> f64 {
        let s: f64 = self.points.windows(2).map(|w| w[0].x * w[1].y - w[1].x * w[0].y).sum();
        0.5 * s.abs()
    }

    /// Even-odd point-in-polygon test; false for open curves.
    pub fn contains(&self, p: Point2) -> bool {
        if !self.closed {
            return false;
        }
        let mut inside = false;
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y) {
                inside = !inside;
            }
        }
        inside
    }

    /// True when no two non-adjacent segments intersect.
    pub fn is_simple(&self) -> bool {
        let segs: Vec<(Point2, Point2)> = self.points.windows(2).map(|w| (w[0], w[1])).collect();
        let n = segs.len();
        for a in 0..n {
            for b in a + 2..n {
                if self.closed && a == 0 && b == n - 1 {
                    continue;
                }
                if segments_intersect(segs[a], segs[b]) {
                    return false;
                }
            }
        }
        true
    }
}

pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let d = b - a;
    let l2 = d.norm_squared();
    if l2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(d) / l2).clamp(0.0, 1.0);
    p.distance(a + d * t)
}

fn segments_intersect((a, b): (Point2, Point2), (c, d): (Point2, Point2)) -> bool {
    let o = |p: Point2, q: Point2, r: Point2| (q - p).cross(r - p);
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    (d1 > 0.0) != (d2 > 0.0) && (d3 > 0.0) != (d4 > 0.0) && d1 != 0.0 && d2 != 0.0 && d3 != 0.0 && d4 != 0.0
}

/// Symmetric Hausdorff distance between two polylines (vertex to segment).
pub fn hausdorff(a: &Polyline, b: &Polyline) -> f64 {
    let one = |x: &Polyline, y: &Polyline| x.points.iter().map(|&p| y.distance_to(p)).fold(0.0, f64::max);
    one(a, b).max(one(b, a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSettings {
    pub step: f64,
    /// Arc length budget per direction.
    pub max_len: f64,
    /// Absolute level tolerance; `None` → 1e-3 · range.
    pub tolerance: Option<f64>,
    /// Gradient norm below which marching stops; `None` → 1e-9 · range / diagonal.
    pub gradient_floor: Option<f64>,
    pub max_newton: usize,
    pub min_closure_steps: usize,
}

impl ContinuationSettings {
    pub fn new(step: f64, max_len: f64) -> Self {
        Self { step, max_len, tolerance: None, gradient_floor: None, max_newton: 12, min_closure_steps: 10 }
    }

    /// Half a cell diagonal, with an arc budget of four domain perimeters.
    pub fn for_grid(spec: &GridSpec) -> Self {
        let b = spec.bounds;
        Self::new(0.5 * spec.dx().hypot(spec.dy()), 8.0 * (b.width() + b.height()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Closed,
    Exit,
    Stagnant,
    Length,
    NoConvergence,
}

struct Marcher<'a> {
    f: &'a dyn ScalarFn,
    level: f64,
    tol: f64,
    floor: f64,
    s: &'a ContinuationSettings,
}

impl Marcher<'_> {
    /// Newton projection onto the level set along the gradient, iterated
    /// well below the tolerance so that vertices do not drift.
    fn correct(&self, mut q: Point2) -> Option<Point2> {
        let mut r = self.f.value(q)? - self.level;
        for _ in 0..self.s.max_newton {
            if r.abs() <= 1e-6 * self.tol {
                break;
            }
            let g = self.f.gradient(q)?;
            let g2 = g.norm_squared();
            if g2.sqrt() < self.floor {
                break;
            }
            let next = q - g * (r / g2);
            let Some(rn) = self.f.value(next).map(|v| v - self.level) else { break };
            if rn.abs() >= r.abs() {
                break;
            }
            q = next;
            r = rn;
        }
        (r.abs() <= self.tol).then_some(q)
    }

    fn march(&self, seed: Point2, sign: f64, detect_closure: bool) -> (Vec<Point2>, Termination) {
        let mut pts = vec![seed];
        let mut p = seed;
        let mut prev: Option<Vector2> = None;
        let mut travelled = 0.0;
        loop {
            let Some(g) = self.f.gradient(p) else { return (pts, Termination::Exit) };
            if g.norm() < self.floor {
                return (pts, Termination::Stagnant);
            }
            let mut t = g.perp() * (sign / g.norm());
            if let Some(pt) = prev {
                if t.dot(pt) < 0.0 {
                    t = -t;
                }
            }
            let mut h = self.s.step;
            let mut next = None;
            for _ in 0..6 {
                let guess = p + t * h;
                if !self.f.bounds().contains(guess) {
                    h *= 0.5;
                    continue;
                }
                if let Some(q) = self.correct(guess) {
                    let turn_ok = self.f.gradient(q).is_some_and(|gq| gq.perp().dot(t).abs() > 0.7 * gq.norm());
                    if q.distance(p) > 0.0 && q.distance(guess) <= 0.5 * h && turn_ok {
                        next = Some(q);
                        break;
                    }
                }
                h *= 0.5;
            }
            let Some(q) = next else {
                let ahead = p + t * self.s.step;
                let out_of_domain = !self.f.bounds().contains(ahead) || self.f.value(ahead).is_none();
                return (pts, if out_of_domain { Termination::Exit } else { Termination::NoConvergence });
            };
            let heading_home = pts.len() > 1 && (q - p).dot(pts[1] - seed) > 0.0;
            if detect_closure
                && pts.len() > self.s.min_closure_steps
                && heading_home
                && segment_distance(seed, p, q) < 0.5 * self.s.step
            {
                pts.push(seed);
                return (pts, Termination::Closed);
            }
            travelled += q.distance(p);
            prev = Some(q - p);
            pts.push(q);
            p = q;
            if travelled >= self.s.max_len {
                return (pts, Termination::Length);
            }
        }
    }
}

/// Traces the level set `f = level` through `seed` in both directions.
pub fn continue_level_curve(
    f: &dyn ScalarFn,
    seed: Point2,
    level: f64,
    settings: &ContinuationSettings,
) -> Result<Polyline> {
    Ok(trace_level_curve(f, seed, level, settings)?.0)
}

/// As [`continue_level_curve`], also reporting how each end terminated.
pub fn trace_level_curve(
    f: &dyn ScalarFn,
    seed: Point2,
    level: f64,
    settings: &ContinuationSettings,
) -> Result<(Polyline, [Termination; 2])> {
    if !(settings.step > 0.0 && settings.max_len > 0.0) {
        return Err(FtcError::Config("continuation step and length must be positive".into()));
    }
    let b = f.bounds();
    let tol = settings.tolerance.unwrap_or(1e-3 * f.range());
    let floor = settings.gradient_floor.unwrap_or(1e-9 * f.range() / b.width().hypot(b.height()));
    let value = f.value(seed).ok_or(FtcError::OutOfBounds(seed))?;
    if (value - level).abs() > tol {
        return Err(FtcError::SeedNotOnLevel { value, level, tolerance: tol });
    }
    let g = f.gradient(seed).ok_or(FtcError::OutOfBounds(seed))?;
    if !(g.norm() >= floor) || g.norm() == 0.0 {
        return Err(FtcError::ZeroGradient(seed));
    }
    let m = Marcher { f, level, tol, floor, s: settings };
    let (fwd, end_f) = m.march(seed, 1.0, true);
    if end_f == Termination::Closed {
        let line = Polyline { points: fwd, closed: true, kind: CurveKind::LevelSet, level };
        return Ok((line, [Termination::Closed; 2]));
    }
    let (bwd, end_b) = m.march(seed, -1.0, false);
    let mut points: Vec<Point2> = bwd.into_iter().rev().collect();
    points.extend_from_slice(&fwd[1..]);
    Ok((Polyline { points, closed: false, kind: CurveKind::LevelSet, level }, [end_b, end_f]))
}

/// True when more than half of `a`'s points lie within `width` of `b`.
pub fn duplicates(a: &Polyline, b: &Polyline, width: f64) -> bool {
    let near = a.points.iter().filter(|&&p| b.distance_to(p) <= width).count();
    2 * near > a.points.len()
}

/// Segments of accepted curves binned on a uniform grid of `bin`-sized
/// cells, for distance queries up to `bin`.
struct SegmentIndex {
    origin: Point2,
    bin: f64,
    bins: HashMap<(i64, i64), Vec<(usize, Point2, Point2)>>,
}

impl SegmentIndex {
    fn new(origin: Point2, bin: f64) -> Self {
        Self { origin, bin, bins: HashMap::new() }
    }

    fn key(&self, p: Point2) -> (i64, i64) {
        (((p.x - self.origin.x) / self.bin).floor() as i64, ((p.y - self.origin.y) / self.bin).floor() as i64)
    }

    fn insert(&mut self, curve: usize, line: &Polyline) {
        for w in line.points.windows(2) {
            let (k0, k1) = (self.key(w[0]), self.key(w[1]));
            for i in k0.0.min(k1.0)..=k0.0.max(k1.0) {
                for j in k0.1.min(k1.1)..=k0.1.max(k1.1) {
                    self.bins.entry((i, j)).or_default().push((curve, w[0], w[1]));
                }
            }
        }
    }

    /// Curves with a segment within `r ≤ bin` of `p`.
    fn near(&self, p: Point2, r: f64, out: &mut Vec<usize>) {
        out.clear();
        let (ki, kj) = self.key(p);
        for i in ki - 1..=ki + 1 {
            for j in kj - 1..=kj + 1 {
                for &(c, a, b) in self.bins.get(&(i, j)).into_iter().flatten() {
                    if !out.contains(&c) && segment_distance(p, a, b) <= r {
                        out.push(c);
                    }
                }
            }
        }
    }
}

/// Continues level curves from `seeds` (in order), skipping seeds within
/// half a cell of an accepted curve and dropping any curve with more than
/// half its points within `cell_width` of a single accepted curve.
pub fn trace_from_seeds(
    f: &dyn ScalarFn,
    seeds: &[(Point2, f64)],
    kind: CurveKind,
    cell_width: f64,
    settings: &ContinuationSettings,
) -> Vec<Polyline> {
    let b = f.bounds();
    let mut index = SegmentIndex::new(Point2::new(b.x_min, b.y_min), cell_width);
    let mut out: Vec<Polyline> = Vec::new();
    let mut hits = Vec::new();
    for &(seed, level) in seeds {
        index.near(seed, 0.5 * cell_width, &mut hits);
        if !hits.is_empty() {
            continue;
        }
        let Ok(mut line) = continue_level_curve(f, seed, level, settings) else { continue };
        if line.points.len() < 2 {
            continue;
        }
        let mut counts = vec![0usize; out.len()];
        for &p in &line.points {
            index.near(p, cell_width, &mut hits);
            for &c in &hits {
                counts[c] += 1;
            }
        }
        if counts.iter().any(|&n| 2 * n > line.points.len()) {
            continue;
        }
        line.kind = kind;
        index.insert(out.len(), &line);
        out.push(line);
    }
    out
}

/// Level curves through the trough (or ridge) cells of a field.
pub fn extremal_curves(
    field: &FieldGrid,
    mode: Extremum,
    q: f64,
    kind: CurveKind,
    settings: &ContinuationSettings,
) -> Result<Vec<Polyline>> {
    let cells = extract_extremal_points(field, mode, q)?;
    let f = BicubicField::new(field)?;
    let seeds: Vec<(Point2, f64)> =
        cells.iter().map(|&(i, j)| (field.cell_center(i, j), field.get(i, j).expect("valid"))).collect();
    let s = field.spec();
    Ok(trace_from_seeds(&f, &seeds, kind, s.dx().max(s.dy()), settings))
}

/// Level curves of θ seeded at near-tangency cells of the θ field.
pub fn zero_splitting_from_field(theta: &FieldGrid, theta_tol: f64, settings: &ContinuationSettings) -> Result<Vec<Polyline>> {
    if !(theta_tol > 0.0) {
        return Err(FtcError::Config(format!("theta_tol must be positive, got {theta_tol}")));
    }
    let seeds: Vec<(Point2, f64)> = directional_extrema(theta, Extremum::Trough)
        .into_iter()
        .filter_map(|(i, j)| {
            let v = theta.get(i, j)?;
            (v < theta_tol).then(|| (theta.cell_center(i, j), v))
        })
        .collect();
    if seeds.is_empty() {
        return Ok(Vec::new());
    }
    let f = BicubicField::new(theta)?;
    let s = theta.spec();
    Ok(trace_from_seeds(&f, &seeds, CurveKind::ZeroSplitting, s.dx().max(s.dy()), settings))
}

/// Computes the θ field (degenerate cells masked) and extracts its
/// zero-splitting curves.
pub fn zero_splitting_curves(
    flow: &FlowSystem,
    epoch: Epoch,
    spec: GridSpec,
    theta_tol: f64,
    settings: &FieldSettings,
) -> Result<Vec<Polyline>> {
    let theta = evaluate_grid(flow, epoch, Kernel::Theta, spec, settings)?.field;
    if theta.valid_values().next().is_none() {
        return Ok(Vec::new());
    }
    zero_splitting_from_field(&theta, theta_tol, &ContinuationSettings::for_grid(&spec))
}

pub const POLYLINE_HEADER: &str = "kind,level,closed";

/// Writes curves as repeated blocks: `kind,level,closed`, one record,
/// `x,y`, then one row per vertex. No curves → the header line alone.
pub fn write_polylines<W: Write>(w: &mut W, lines: &[Polyline]) -> Result<()> {
    if lines.is_empty() {
        writeln!(w, "{POLYLINE_HEADER}")?;
    }
    for l in lines {
        writeln!(w, "{POLYLINE_HEADER}")?;
        writeln!(w, "{},{},{}", l.kind, format_value(l.level), l.closed)?;
        writeln!(w, "x,y")?;
        for p in &l.points {
            writeln!(w, "{},{}", format_value(p.x), format_value(p.y))?;
        }
    }
    Ok(())
}

pub fn read_polylines<R: BufRead>(r: R) -> Result<Vec<Polyline>> {
    let lines: Vec<String> = r.lines().collect::<std::io::Result<_>>()?;
    let bad = |msg: &str, n: usize| FtcError::Format(format!("polyline file line {}: {msg}", n + 1));
    let mut out = Vec::new();
    let mut k = 0;
    while k < lines.len() {
        if lines[k] != POLYLINE_HEADER {
            return Err(bad("expected block header", k));
        }
        k += 1;
        if k == lines.len() {
            break;
        }
        let rec: Vec<&str> = lines[k].split(',').collect();
        if rec.len() != 3 {
            return Err(bad("expected kind,level,closed record", k));
        }
        let kind: CurveKind = rec[0].parse()?;
        let level: f64 = rec[1].parse().map_err(|_| bad("bad level", k))?;
        let closed: bool = rec[2].parse().map_err(|_| bad("bad closed flag", k))?;
        k += 1;
        if lines.get(k).map(String::as_str) != Some("x,y") {
            return Err(bad("expected x,y header", k));
        }
        k += 1;
        let mut points = Vec::new();
        while k < lines.len() && lines[k] != POLYLINE_HEADER {
            let (x, y) = lines[k].split_once(',').ok_or_else(|| bad("expected x,y row", k))?;
            let x: f64 = x.parse().map_err(|_| bad("bad x", k))?;
            let y: f64 = y.parse().map_err(|_| bad("bad y", k))?;
            points.push(Point2::new(x, y));
            k += 1;
        }
        out.push(Polyline { points, closed, kind, level });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catmull_rom_partition_of_unity() {
        for t in [-0.5, 0.0, 0.3, 1.0, 1.5] {
            let (w, dw) = catmull_rom(t);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            assert!(dw.iter().sum::<f64>().abs() < 1e-14);
        }
        assert_eq!(catmull_rom(0.0).0, [0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn bicubic_reproduces_quadratics_in_the_interior() {
        let spec = GridSpec::new(20, 10, Bounds::new(0.0, 2.0, 0.0, 1.0)).unwrap();
        let field = FieldGrid::from_fn(spec, |p| p.x * p.x - 0.5 * p.y + 0.3 * p.x * p.y);
        let f = BicubicField::new(&field).unwrap();
        let p = Point2::new(0.93, 0.41);
        let g = f.gradient(p).unwrap();
        assert!((f.value(p).unwrap() - (p.x * p.x - 0.5 * p.y + 0.3 * p.x * p.y)).abs() < 1e-3);
        assert!((g.x - (2.0 * p.x + 0.3 * p.y)).abs() < 1e-2);
        assert!((g.y - (-0.5 + 0.3 * p.x)).abs() < 1e-10);
        assert_eq!(f.value(field.cell_center(3, 4)), field.get(3, 4));
    }

    #[test]
    fn polyline_csv_round_trip() {
        let lines = vec![
            Polyline { points: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.5)], closed: false, kind: CurveKind::FtleRidge, level: 0.25 },
            Polyline {
                points: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0), Point2::new(0.0, 0.0)],
                closed: true,
                kind: CurveKind::FtcTrough,
                level: 1.0 / 3.0,
            },
        ];
        let mut buf = Vec::new();
        write_polylines(&mut buf, &lines).unwrap();
        assert_eq!(read_polylines(&buf[..]).unwrap(), lines);
        let mut empty = Vec::new();
        write_polylines(&mut empty, &[]).unwrap();
        assert_eq!(String::from_utf8(empty.clone()).unwrap(), "kind,level,closed\n");
        assert!(read_polylines(&empty[..]).unwrap().is_empty());
    }

    #[test]
    fn simplicity_detects_crossings() {
        let pts = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| Point2::new(x, y)).collect::<Vec<_>>();
        let square = Polyline { points: pts(&[(0., 0.), (1., 0.), (1., 1.), (0., 1.), (0., 0.)]), closed: true, kind: CurveKind::LevelSet, level: 0.0 };
        assert!(square.is_simple());
        assert!((square.enclosed_area() - 1.0).abs() < 1e-15);
        assert!(square.contains(Point2::new(0.5, 0.5)));
        let bowtie = Polyline { points: pts(&[(0., 0.), (1., 1.), (1., 0.), (0., 1.), (0., 0.)]), ..square.clone() };
        assert!(!bowtie.is_simple());
    }
}
