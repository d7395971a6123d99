//! Training-free, explanation-guided region selection for document VQA.
//!
//! A vision-language model explains where the answer to a question lives;
//! the page is cut into a grid, each cell is scored against the explanation
//! by several embedders, the cells chosen by majority vote stay visible and
//! everything else is painted black before the model is asked again. The
//! crate also carries the EM/ANLS evaluation harness, an HTTP client for the
//! inference service, offline mocks, and the `eagers` CLI.

pub mod backends;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod imaging;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod ranking;
pub mod report;
pub mod store;
pub mod synth;

pub use config::{Mode, PipelineConfig};
pub use error::{Error, Result};
pub use geometry::{expand_margin, partition, selection_count, visible_region, CellIndex, GridSpec, Rect};
pub use imaging::{apply_mask, ImageBuffer};
pub use metrics::{anls_single, exact_match, levenshtein, normalize, AnswerJudgment, TimingStats};
pub use pipeline::{Clock, EvalReport, QuestionOutcome, Runner};
pub use ranking::{cosine, fuse_majority, EmbeddingVector, SelectionResult, SimilarityMatrix};
