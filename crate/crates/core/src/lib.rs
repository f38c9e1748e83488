//! Sentence decontextualization by discourse-guided content selection.
//!
//! A sentence taken out of its paragraph is split into elementary discourse
//! units (EDUs), the units that need context are found, the context EDUs
//! that resolve them are selected with a discourse relation, and a single
//! rewrite folds that content back into the sentence. Each stage is one
//! prompt to a [`backend::CompletionBackend`].
//!
//! ```
//! use decontext_core::backend::MockBackend;
//! use decontext_core::pipeline::{Pipeline, PipelineConfig};
//! use decontext_core::types::SourceRecord;
//!
//! let record = SourceRecord::new(
//!     "r1",
//!     "She was born in Ohio.",
//!     vec!["Jane Doe is an American painter.".into()],
//! );
//! let backend = MockBackend;
//! let pipeline = Pipeline::new(PipelineConfig::default(), &backend);
//! let (result, err) = pipeline.process(&record);
//! assert!(err.is_none());
//! println!("{}", result.rewritten);
//! ```

pub mod backend;
mod clock;
pub mod dataset;
pub mod metrics;
pub mod pipeline;
pub mod prompting;
pub mod relation;
pub mod segmenter;
pub mod text;
pub mod types;

pub use pipeline::{Pipeline, PipelineConfig};
pub use types::{DecontextResult, SourceRecord, Status};
