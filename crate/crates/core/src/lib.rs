//! Instructional-video step localization toolkit.
//!
//! * [`lexicon`]: domain → task → step taxonomy and the step–task incidence matrix.
//! * [`annotation`]: ground truth, proposals, frame labels and their file formats.
//! * [`consistency`]: task-consistency refinement of proposal scores plus NMS.
//! * [`metrics`]: temporal IoU, AP/AR, mAP/mAR reports and frame accuracy.
//! * [`synthgen`]: seeded synthetic corpora and proposals.
//!
//! Numeric types are generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases.

pub mod annotation;
pub mod consistency;
pub mod lexicon;
pub mod metrics;
mod scalar;
pub mod synthgen;

pub use scalar::Scalar;

pub type Interval64 = annotation::Interval<f64>;
pub type Interval32 = annotation::Interval<f32>;
pub type Segment64 = annotation::Segment<f64>;
pub type Segment32 = annotation::Segment<f32>;
pub type VideoAnnotation64 = annotation::VideoAnnotation<f64>;
pub type VideoAnnotation32 = annotation::VideoAnnotation<f32>;
pub type Proposal64 = annotation::Proposal<f64>;
pub type ProposalSet64 = annotation::ProposalSet<f64>;
pub type ProposalSet32 = annotation::ProposalSet<f32>;
pub type FrameLabels64 = annotation::FrameLabelSequence<f64>;
pub type Detection64 = consistency::Detection<f64>;
pub type Detection32 = consistency::Detection<f32>;
pub type VideoDetections64 = consistency::VideoDetections<f64>;
pub type TcConfig64 = consistency::TcConfig<f64>;
pub type TcConfig32 = consistency::TcConfig<f32>;
