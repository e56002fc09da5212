//! Engines for a patient-specific musculoskeletal digital twin.
//!
//! Geometry and signal engines are generic over the scalar type ([`Real`]:
//! `f32` or `f64`); the `*F64` aliases below fix the common choice.

pub mod asset;
pub mod ehr;
pub mod inference;
pub mod ingest;
pub mod kinematics;
pub mod mapping;
pub mod mesh;
pub mod phantom;
pub mod motion;
pub mod registration;
pub mod scalar;
pub mod semg;
pub mod spatial;
pub mod spine;
pub mod trace;
pub mod transform;
pub mod twin;
pub mod volume;

pub use scalar::Real;

pub type MeshF64 = mesh::Mesh<f64>;
pub type VolumeF64 = volume::Volume<f64>;
pub type RigidTransformF64 = transform::RigidTransform<f64>;
pub type SensorTraceF64 = trace::SensorTrace<f64>;
pub type MotionSequenceF64 = motion::MotionSequence<f64>;

pub type MeshF32 = mesh::Mesh<f32>;
pub type RigidTransformF32 = transform::RigidTransform<f32>;
pub type RegistrationResultF64 = registration::RegistrationResult<f64>;
pub type LandmarkSetF64 = registration::LandmarkSet<f64>;
pub type SurfaceTextureF64 = mapping::SurfaceTexture<f64>;
pub type TissueStatsF64 = mapping::TissueStats<f64>;
pub type VertebraModelF64 = spine::VertebraModel<f64>;
pub type SpineModelF64 = spine::SpineModel<f64>;
pub type SemgReportF64 = semg::SemgReport<f64>;
pub type FrameDescriptorsF64 = kinematics::FrameDescriptors<f64>;
pub type PoseDescriptorF64 = kinematics::PoseDescriptor<f64>;

pub use inference::{FeatureGraph, FeatureVector, RiskScore};
pub use twin::TwinState;
