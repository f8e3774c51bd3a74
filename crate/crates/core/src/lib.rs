//! Offline single change-point estimation for Weibull series whose
//! consecutive observations are linked by a Clayton or Joe copula.

// Oracle constants keep every printed digit, and `!(x > 0.0)` is the
// idiom used to reject NaN alongside non-positive values.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod copula;
pub mod data;
pub mod error;
pub mod likelihood;
pub mod optimizer;
pub(crate) mod quad;
pub mod selection;
pub(crate) mod serde_ext;
pub mod simulate;
pub mod stats;
pub mod weibull;

pub use bootstrap::{BootstrapConfig, BootstrapResult, TauWindow};
pub use copula::{CopulaFamily, CopulaSpec, LogDensityPartials};
pub use data::{Format, InterarrivalSeries, RawSeries, Report};
pub use error::{Error, Result};
pub use likelihood::{ChangePoint, ModelParams, Series, TransformedParams};
pub use optimizer::{FitResult, NewtonConfig, ProfileConfig};
pub use selection::{Candidate, ModelComparison};
pub use simulate::{StudyConfig, StudyReport};
pub use weibull::{ShapeScalePartials, WeibullParams};
