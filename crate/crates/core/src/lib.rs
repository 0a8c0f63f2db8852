//! Prediction of Satisfied-User-Ratio curves and first-JND points for
//! compressed video.
//!
//! The pipeline segments a reference/coded clip pair into overlapping
//! spatial-temporal windows, scores each segment with a quality index,
//! selects the segments that degrade fastest across the qp ladder, and turns
//! their quality drops plus reference-side masking statistics into a 40-D
//! feature vector. An epsilon-SVR maps features to SUR values; projecting
//! the predictions to a non-increasing curve yields the first-JND point at a
//! chosen satisfaction threshold.
//!
//! Numeric code is generic over the scalar via [`scalar::Real`]; the aliases
//! below fix f64 for everyday use.

pub mod error;
pub mod eval;
pub mod features;
pub mod media;
pub mod quality;
pub mod scalar;
pub mod segment;
pub mod sur;
pub mod svr;

pub use error::{Error, ErrorCategory, Result};
pub use scalar::Real;

/// f64 SUR curve.
pub type SurCurve64 = sur::SurCurve<f64>;
/// f64 Gaussian JND model.
pub type GaussianJnd64 = sur::GaussianJndModel<f64>;
/// f64 JND point.
pub type JndPoint64 = sur::JndPoint<f64>;
/// f64 feature vector.
pub type FeatureVector64 = features::FeatureVector<f64>;
/// f64 masking feature.
pub type MaskingFeature64 = features::MaskingFeature<f64>;
/// f64 SVR model.
pub type SvrModel64 = svr::SvrModel<f64>;
/// f64 SVR hyper-parameters.
pub type SvrHyperParams64 = svr::SvrHyperParams<f64>;
/// f64 feature scaler.
pub type FeatureScaler64 = svr::FeatureScaler<f64>;
