//! Experiment plumbing: corpus generation, configuration, and the end-to-end pipeline.

pub mod config;
pub mod corpus;
pub mod pipeline;

pub use config::{CorpusSource, ExperimentConfig};
pub use corpus::{gen_corpus, PlantedCorpus, PlantedCorpusSpec};
pub use pipeline::{Arm, CompareReport, Experiment, Models};
