//! Post-processing, loss kernels, and evaluation for open-world object
//! detection with an unknown class.
//!
//! Everything operates on serialized proposals: boxes with a generalized
//! object-confidence (GOC) score and a vector of known-class logits. The
//! numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what the file formats use.

pub mod energy;
pub mod error;
pub mod gbd;
pub mod geometry;
pub mod goc_loss;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod sampling;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type BBox64 = geometry::BBox<f64>;
pub type BBox32 = geometry::BBox<f32>;
pub type GroundTruth64 = sampling::GroundTruthInstance<f64>;
pub type PartitionConfig64 = sampling::PartitionConfig<f64>;
pub type GocLossConfig64 = goc_loss::GocLossConfig<f64>;
pub type EnergyModel64 = energy::EnergyModel<f64>;
pub type ProposalGraph64 = gbd::ProposalGraph<f64>;
pub type InferenceConfig64 = inference::InferenceConfig<f64>;
pub type Proposal64 = inference::Proposal<f64>;
pub type DetectionResult64 = inference::DetectionResult<f64>;
pub type MetricsReport64 = metrics::MetricsReport<f64>;
