//! Audit how language models place newspaper articles on a two-axis
//! economic / democracy compass.
//!
//! The crate is organised along the pipeline:
//!
//! - [`registry`]: newspaper sources, model specs and run parameters.
//! - [`harvester`]: homepage link scraping, longest-URL selection, article
//!   extraction and length filtering.
//! - [`gateway`]: the fixed prompt, provider dispatch with retries, quotas and
//!   cost accounting, plus deterministic mock providers.
//! - [`score`]: the strict `[economic, democracy]` response grammar.
//! - [`store`]: daily batch collection and the append-only run store.
//! - [`analytics`]: per-newspaper means and dispersion, heatmaps, cross-model
//!   disagreement and label agreement.
//! - [`report`]: CSV datasets and the markdown run report.
//! - [`pipeline`]: the end-to-end daily loop.
//! - [`service`]: the HTTP API for single-article evaluation and human
//!   assessments.

pub mod analytics;
pub mod clock;
pub mod gateway;
pub mod harvester;
pub mod pipeline;
pub mod registry;
pub mod report;
pub mod score;
pub mod service;
pub mod store;


pub use analytics::{HeatmapGrid, NewspaperSummary};
pub use registry::{ModelSpec, NewspaperSource, PositioningLabel, RunParameters};
pub use score::CompassScore;

pub use store::{ArticleRecord, Evaluation, HumanAssessment, RunManifest, RunStore};
