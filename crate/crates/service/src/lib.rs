//! Persistent patient twin store and its HTTP/JSON API.

pub mod analysis;
pub mod demo;
pub mod error;
pub mod http;
pub mod store;

pub use analysis::AnalysisKind;
pub use error::{ErrorBody, ServiceError};
pub use http::{router, serve};
pub use store::{PatientStore, UploadMeta};
