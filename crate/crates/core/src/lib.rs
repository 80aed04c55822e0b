//! Document-grounded fact-checking: evidence extraction and claim revision
//! through a pluggable generation backend, word-level error localization,
//! thresholded-edit decoding for recall/precision control, and the metrics
//! used to evaluate all of it.
//!
//! Metric code is generic over the float type (`f32`/`f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod auditor;
pub mod diffcore;
pub mod evalkit;
pub mod genbackend;
pub mod promptio;
pub mod scalar;
pub mod textmodel;

pub use auditor::{
    classify_factuality, fact_check_sentence, thresholded_edit, AuditError, AuditReport, DecodingConfig,
    DecodingMode, EditSpan, EditStatus, FactCheckResult,
};
pub use diffcore::{tag_errors, word_diff, DiffScript, ErrorTags};
pub use genbackend::{BackendError, BackendQuery, GenerationBackend, HttpBackend, MockBackend, MockScript};
pub use promptio::{build_input, parse_output, truncate_document, ModelInput, ModelOutput, PromptTemplate};
pub use scalar::Scalar;
pub use textmodel::{segment_document, tokenize_words, ClaimContext, Document, WordSequence};

pub type Prf = evalkit::Prf<f64>;
pub type Prf32 = evalkit::Prf<f32>;
pub type BaselineParams = evalkit::BaselineParams<f64>;
pub type MetricsReport = evalkit::MetricsReport<f64>;
pub type SweepRow = evalkit::SweepRow<f64>;
