use thiserror::Error;

use crate::geometry::Point2;

pub type Result<T> = std::result::Result<T, FtcError>;

#[derive(Debug, Error)]
pub enum FtcError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite velocity at z=({}, {}), t={t}", z.x, z.y)]
    Evaluation { z: Point2, t: f64 },

    #[error("trajectory escaped the guard box at z=({}, {}), t={t}", z.x, z.y)]
    Escape { z: Point2, t: f64 },

    #[error("non-finite state during integration at t={t}")]
    NonFinite { t: f64 },

    #[error("jacobian stencil corner {corner} failed: {source}")]
    Stencil {
        corner: &'static str,
        #[source]
        source: Box<FtcError>,
    },

    #[error("{leg} leg failed: {source}")]
    Leg {
        leg: &'static str,
        #[source]
        source: Box<FtcError>,
    },

    #[error("point {index} failed: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<FtcError>,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate tangent: squared speed {0:e} below floor")]
    DegenerateTangent(f64),

    #[error("coincident points in curvature estimate")]
    CoincidentPoints,

    #[error("{invalid} of {total} cells invalid, exceeds the 20% budget (first failure: {first})")]
    TooManyInvalid { invalid: usize, total: usize, first: String },

    #[error("point ({}, {}) lies outside the grid bounds", .0.x, .0.y)]
    OutOfBounds(Point2),

    #[error("field has no valid cells")]
    AllInvalid,

    #[error("seed value {value} is not on level {level} (tolerance {tolerance:e})")]
    SeedNotOnLevel { value: f64, level: f64, tolerance: f64 },

    #[error("zero gradient at seed ({}, {})", .0.x, .0.y)]
    ZeroGradient(Point2),

    #[error("grid {nx}x{ny} too small for {seeds} seeds")]
    GridTooSmall { nx: usize, ny: usize, seeds: usize },

    #[error("{escaped} of {total} region points escaped, exceeds the 1% budget")]
    EscapeBudget { escaped: usize, total: usize },

    #[error("empty occupancy")]
    EmptyOccupancy,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FtcError {
    pub(crate) fn at_index(self, index: usize) -> Self {
        FtcError::AtIndex { index, source: Box::new(self) }
    }
}
