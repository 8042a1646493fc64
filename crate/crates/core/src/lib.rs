//! Probing per-layer token representations for subject-verb agreement
//! errors.
//!
//! The pipeline converts minimal-pair stimuli and M2-annotated corpora into
//! token-labelled sentences, reads per-layer word vectors from a binary
//! embedding store, trains one logistic probe per layer, and scores probes
//! with token-level F1 against a verb-only baseline.

pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod m2;
pub mod probe;
pub mod sentence;
pub mod stats;
pub mod stimuli;

pub use error::{Error, Result};
pub use sentence::{AnnotatedSentence, ConstructionId, Label, SVA_TAG};
