//! Angle-of-arrival estimation from path-loss measurements.
//!
//! The crate is organised bottom-up:
//!
//! * [`beam`]: closed-form cosine beam patterns and free-space / RIS-aided link budgets.
//! * [`expr`]: symbolic expression trees (evaluation, text form, random generation, folding).
//! * [`sr`]: genetic-programming symbolic regression with an error/complexity Pareto front.
//! * [`estimators`]: the three path-loss-to-angle estimators and directivity fitting.
//! * [`crlb`]: Fisher information and Cramér-Rao bounds for the single-link model.
//! * [`synth`]: synthetic sweeps and Monte-Carlo path-loss CDFs.
//! * [`metrics`]: MAE and RMSE.
//! * [`bench`]: the end-to-end benchmark report and its plot tables.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `f64`
//! aliases below are what the pipeline and file formats use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod beam;
pub mod bench;
pub mod crlb;
pub mod estimators;
pub mod expr;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod sr;
pub mod synth;

pub use scalar::Scalar;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type CosinePattern = beam::CosinePattern<f64>;
pub type Pointing = beam::Pointing<f64>;
pub type FreeSpaceLink = beam::FreeSpaceLink<f64>;
pub type RisLink = beam::RisLink<f64>;
pub type AngularGain = beam::AngularGain<f64>;
pub type Expression = expr::Expression<f64>;
pub type ParetoFront = sr::ParetoFront<f64>;
pub type ScoredExpr = sr::ScoredExpr<f64>;
pub type DirectInversionModel = estimators::DirectInversionModel<f64>;
pub type PolyCosineModel = estimators::PolyCosineModel<f64>;
pub type CrlbConfig = crlb::CrlbConfig<f64>;
pub type CrlbCurve = crlb::CrlbCurve<f64>;

pub type Expression32 = expr::Expression<f32>;
pub type CosinePattern32 = beam::CosinePattern<f32>;
