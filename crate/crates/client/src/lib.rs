//! Device and caregiver clients for the encrypted voice record server,
//! plus the caregiver's localhost console API.

pub mod caregiver;
pub mod config;
pub mod device;
pub mod labels;
pub mod remote;
pub mod ui;

pub use caregiver::{Caregiver, CaregiverError, QuerySession, QuerySource};
pub use config::ClientConfig;
pub use device::{Device, DeviceError};
pub use remote::{RemoteError, ServerClient};
