//! Energy-scaling laboratory for thin elastic discs whose reference metric is
//! a cone `dρ² + m0² ρ² dθ²`.

pub mod ansatz;
pub mod curvature;
pub mod energy;
pub mod error;
pub mod geodesic;
pub mod geometry;
pub mod grid;
pub mod interp;
pub mod minimize;
pub mod params;
pub mod quadrature;
pub mod sphere;
pub mod surfaces;
pub mod sweep;

pub use error::{Error, Result};
pub use geometry::{metric_norm_sq, reference_metric, Geometry, Immersion, MetricComponents};
pub use grid::{PolarGrid, Vec3};
pub use params::ConeParams;
