//! Static raster plots. Convenience views only; grids and CSVs are the record.

use std::path::Path;

use image::{Rgb, RgbImage};
use imageproc::drawing::draw_line_segment_mut;

use ftc::curves::{CurveKind, Polyline};
use ftc::fields::{FieldGrid, GridSpec};
use ftc::{FtcError, Point2};

const INVALID: Rgb<u8> = Rgb([128, 128, 128]);
const TARGET_WIDTH: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

impl std::str::FromStr for Scale {
    type Err = FtcError;

    fn from_str(s: &str) -> Result<Self, FtcError> {
        match s {
            "linear" => Ok(Scale::Linear),
            "log" => Ok(Scale::Log),
            other => Err(FtcError::Config(format!("unknown color scale `{other}`"))),
        }
    }
}

fn pixels_per_cell(spec: &GridSpec) -> u32 {
    (TARGET_WIDTH / spec.nx).clamp(1, 16) as u32
}

/// Maps a field point to pixel coordinates, y up.
struct Frame {
    spec: GridSpec,
    width: u32,
    height: u32,
}

impl Frame {
    fn new(spec: GridSpec) -> Self {
        let k = pixels_per_cell(&spec);
        Self { spec, width: spec.nx as u32 * k, height: spec.ny as u32 * k }
    }

    fn pixel(&self, p: Point2) -> (f32, f32) {
        let b = self.spec.bounds;
        let u = (p.x - b.x_min) / b.width() * self.width as f64;
        let v = (b.y_max - p.y) / b.height() * self.height as f64;
        (u as f32, v as f32)
    }
}

fn viridis(t: f64) -> Rgb<u8> {
    let c = colorous::VIRIDIS.eval_continuous(t.clamp(0.0, 1.0));
    Rgb([c.r, c.g, c.b])
}

/// Heatmap with one block of pixels per cell; invalid cells are gray.
pub fn heatmap(field: &FieldGrid, scale: Scale) -> RgbImage {
    let map = |v: f64| match scale {
        Scale::Linear => Some(v),
        Scale::Log => (v > 0.0).then(|| v.log10()),
    };
    let mapped: Vec<Option<f64>> =
        (0..field.values.len()).map(|n| if field.valid[n] { map(field.values[n]) } else { None }).collect();
    let (lo, hi) = mapped.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let frame = Frame::new(field.spec());
    let k = pixels_per_cell(&field.spec());
    RgbImage::from_fn(frame.width, frame.height, |u, v| {
        let i = (u / k) as usize;
        let j = field.ny - 1 - (v / k) as usize;
        match mapped[field.index(i, j)] {
            Some(x) => viridis((x - lo) / span),
            None => INVALID,
        }
    })
}

fn curve_color(kind: CurveKind) -> Rgb<u8> {
    match kind {
        CurveKind::FtcTrough => Rgb([30, 60, 230]),
        CurveKind::FtleRidge => Rgb([220, 30, 30]),
        CurveKind::ZeroSplitting => Rgb([20, 170, 40]),
        CurveKind::LevelSet => Rgb([0, 0, 0]),
    }
}

/// Curves drawn over a background field in faded gray, or white when absent.
pub fn overlay(spec: GridSpec, background: Option<&FieldGrid>, lines: &[Polyline], scale: Scale) -> RgbImage {
    let frame = Frame::new(spec);
    let mut img = match background {
        Some(f) if f.nx == spec.nx && f.ny == spec.ny => {
            let mut img = heatmap(f, scale);
            for p in img.pixels_mut() {
                let g = (0.3 * p[0] as f64 + 0.59 * p[1] as f64 + 0.11 * p[2] as f64) as u8;
                let g = 160 + g / 3;
                *p = Rgb([g, g, g]);
            }
            img
        }
        _ => RgbImage::from_pixel(frame.width, frame.height, Rgb([255, 255, 255])),
    };
    for line in lines {
        let color = curve_color(line.kind);
        for w in line.points.windows(2) {
            draw_line_segment_mut(&mut img, frame.pixel(w[0]), frame.pixel(w[1]), color);
        }
    }
    img
}

/// Label grid with a fixed pseudo-random color per label; 0 is gray.
pub fn labels(spec: GridSpec, labels: &[u32]) -> RgbImage {
    let frame = Frame::new(spec);
    let k = pixels_per_cell(&spec);
    let color = |l: u32| {
        if l == 0 {
            return INVALID;
        }
        let h = (l as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        Rgb([(h >> 56) as u8 / 2 + 96, (h >> 40) as u8 / 2 + 96, (h >> 24) as u8 / 2 + 96])
    };
    RgbImage::from_fn(frame.width, frame.height, |u, v| {
        let i = (u / k) as usize;
        let j = spec.ny - 1 - (v / k) as usize;
        color(labels[j * spec.nx + i])
    })
}

/// Line plot of a slice trace against arc length; gaps where undefined.
pub fn slice_plot(values: &[Option<f64>]) -> RgbImage {
    let (w, h, pad) = (640u32, 320u32, 20.0f32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    let (x0, x1, y0, y1) = (pad, w as f32 - pad, h as f32 - pad, pad);
    for (a, b) in [((x0, y0), (x1, y0)), ((x0, y0), (x0, y1)), ((x1, y0), (x1, y1)), ((x0, y1), (x1, y1))] {
        draw_line_segment_mut(&mut img, a, b, axis);
    }
    let (lo, hi) = values.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return img;
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    let n = values.len().max(2) - 1;
    let at = |k: usize, v: f64| (x0 + (x1 - x0) * k as f32 / n as f32, y0 + (y1 - y0) * ((v - lo) / span) as f32);
    let line = Rgb([30, 60, 230]);
    for k in 1..values.len() {
        if let (Some(a), Some(b)) = (values[k - 1], values[k]) {
            draw_line_segment_mut(&mut img, at(k - 1, a), at(k, b), line);
        }
    }
    img
}

pub fn save(img: &RgbImage, path: &Path) -> Result<(), FtcError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| FtcError::Io(std::io::Error::other(format!("{}: {e}", path.display()))))
}
