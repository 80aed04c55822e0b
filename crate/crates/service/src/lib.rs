//! HTTP review service: sessions pairing a document with generated text,
//! per-sentence and whole-text fact-checking, edit and evidence verdicts,
//! and annotation export.

pub mod api;
pub mod app;
pub mod config;
pub mod error;
pub mod persist;
pub mod schemas;
pub mod session;
pub mod views;

pub use api::{router, serve};
pub use app::{backend_from_config, CheckOverrides, CreateSession, ReviewService};
pub use config::ServiceConfig;
pub use error::ServiceError;
pub use session::{Event, Review, Session, Verdict};
