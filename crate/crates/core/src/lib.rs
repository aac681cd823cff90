//! Adaptive locally linear embedding.
//!
//! Locally linear embedding reconstructs every point from its nearest
//! neighbors with sum-to-one weights and then finds low-dimensional
//! coordinates that keep those weights. This crate learns the Mahalanobis
//! metric `M = LᵀL` used for both the neighbor search and the
//! reconstruction, alternating closed-form weights with gradient steps on
//! the metric factor, and ships the evaluation metrics used to compare
//! embeddings (trustworthiness, continuity, silhouette, classification
//! accuracy).
//!
//! ```no_run
//! use alle::{data, pipeline, evaluation};
//!
//! let roll = data::generate_swiss_roll(1000, 0.0, 7)?;
//! let config = pipeline::PipelineConfig::default();
//! let fit = pipeline::fit_alle(&roll, &config)?;
//! let y = fit.to_data(&roll)?;
//! let t = evaluation::trustworthiness(&roll, &y, 10)?;
//! println!("T(10) = {t:.4}, final E = {:?}", fit.error_trace.last());
//! # Ok::<(), alle::AlleError>(())
//! ```

pub mod cli;
pub mod data;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod metric;
pub mod neighbors;
pub mod pipeline;
pub mod reconstruction;

pub use data::DataMatrix;
pub use embedding::{EmbeddingResult, SpectralEmbedding};
pub use error::{AlleError, Result};
pub use evaluation::{QualityReport, Split};
pub use metric::{MetricMode, MetricState, OptimizerConfig, OptimizerMethod};
pub use neighbors::NeighborIndex;
pub use pipeline::{fit, fit_alle, fit_lle, Algorithm, MetricInit, PipelineConfig, RecomputeNeighbors};
pub use reconstruction::{ResidualSet, WeightMatrix};
