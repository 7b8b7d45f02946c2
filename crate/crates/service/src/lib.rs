//! Live audit sessions over HTTP. An audit board drives each session one
//! ballot at a time; every applied response is logged before it takes
//! effect, and the service rebuilds sessions from the logs on start.

pub mod app;
pub mod error;
pub mod session;
pub mod store;

pub use error::{ServiceError, ServiceResult};
