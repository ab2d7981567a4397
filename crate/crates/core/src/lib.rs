//! Text-centred scene-text visual question answering.
//!
//! OCR tokens and detected objects arrive as data. Questions, OCR text and
//! object labels are encoded with a recurrent reading-comprehension stack,
//! OCR tokens are related to objects by semantic and positional attention,
//! and answer candidates (OCR spans, retrieved texts, yes/no/unanswerable)
//! are scored against the question. ANLS and VQA accuracy are provided for
//! evaluation.

pub mod answer;
pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod encoders;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod normalize;
pub mod relate;
pub mod retrieval;
pub mod textprep;
pub mod train;

pub use error::{Error, Result};
