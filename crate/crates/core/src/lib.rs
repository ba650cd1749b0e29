pub mod coherence;
pub mod curvature;
pub mod curves;
pub mod error;
pub mod fields;
pub mod flows;
pub mod geometry;
pub mod gridio;
pub mod integrate;
pub mod segmentation;
pub mod spectral;

pub use error::{FtcError, Result};
pub use flows::{FlowKind, FlowSystem};
pub use geometry::{Bounds, Point2, Vector2};
pub use integrate::{Epoch, IntegratorSettings, Jacobian2};
