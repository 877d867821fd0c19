//! Semi-trusted record server: stores sealed audio and encrypted feature
//! vectors, answers encrypted distance queries, and never holds keys.

pub mod http;
pub mod store;

pub use http::{router, serve};
pub use store::{Clock, Store, StoreError, SystemClock};
