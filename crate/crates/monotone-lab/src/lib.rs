//! Numerical laboratory for monotone maps under power-law transport costs
//! `c(x, y) = h(x - y)` with `h` positively homogeneous of degree `p >= 2`.

pub mod cost;
pub mod error;
pub mod estimates;
pub mod lemmas;
pub mod map;
pub mod monotone;
pub mod quadrature;
pub mod regularity;
pub mod runner;
pub mod transport;

pub use cost::{CostFunction, EllipticityBounds};
pub use error::{Error, Result};
pub use estimates::{AffineFrame, BallSpec, Branch, EstimateReport};
pub use lemmas::LemmaReport;
pub use map::{GridSpec, SampledMap};
pub use monotone::MonotonicityReport;
pub use quadrature::QuadratureSpec;
pub use regularity::{Bump, Classification, FitDegree, RegularityProfile};
pub use transport::{Assignment, DensitySpec, GeneratorKind, NegativeKind};
