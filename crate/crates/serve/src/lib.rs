//! Sentiment scoring worker and the HTTP aggregation API behind the dashboard.

pub mod aggregate;
pub mod http;
pub mod scoring;

pub use aggregate::{aggregate, parse_bound, AggregateError, SentimentAggregate};
pub use http::{router, serve, AppState};
pub use scoring::{score_pending, spawn_scoring_worker, ScoreOptions, ScoreStats};

/// The inference bundle the server scores with.
pub type Model = pulsestream_core::SentimentModel;
