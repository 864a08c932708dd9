//! Metrics, conformal rescaling, curvature formulas and radius bounds.

pub mod connection;
pub mod curvature;
pub mod metric;
pub mod profile;
pub mod radius;
pub mod warped;

pub use connection::{connection_deviation, deviation_in_frame, ConnectionDeviation};
pub use curvature::{conformal_curvature, conformal_curvature_oracle, kulkarni_nomizu, riemann_oracle, CurvatureTensor4};
pub use metric::{conformal_rescale, ConformalFactor, ConformalMetric, ConformalWeights, MetricDesc};
pub use profile::{sup_on_tail, Bounded, RadialFn, Spline, SupReport};
pub use radius::{homogenized_radius, lipschitz_defect, lipschitz_defect_line, radius_lower_bound, CappedBound, RadiusLowerBound, RadiusMode};
pub use warped::{warped_geometry_check, CrossSection, WarpedGeometryVerdict, WarpedModel};
