use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use pulsestream_core::Sentiment;
use pulsestream_pipeline::ingest::FigureConfig;
use pulsestream_pipeline::store::{ScanFilter, Store, StoreError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("unknown figure {0:?}")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Per-figure sentiment totals over a window of crawl times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentAggregate {
    pub figure_id: String,
    pub positive: u64,
    pub negative: u64,
    /// Records in the window not scored yet.
    pub pending: u64,
    pub from: DateTime<Utc>,
    pub to: DateTime<Utc>,
    pub as_of: DateTime<Utc>,
}

/// Count scored records per label for `figure_id` with `fetched_at` in
/// `[from, to]`, from one snapshot scan.
pub fn aggregate(
    store: &Store,
    figures: &[FigureConfig],
    figure_id: &str,
    from: DateTime<Utc>,
    to: DateTime<Utc>,
    as_of: DateTime<Utc>,
) -> Result<SentimentAggregate, AggregateError> {
    if !figures.iter().any(|f| f.figure_id == figure_id) {
        return Err(AggregateError::NotFound(figure_id.to_string()));
    }
    if from > to {
        return Err(AggregateError::InvalidArgument(format!("from {from} is after to {to}")));
    }
    let filter = ScanFilter {
        figure_id: Some(figure_id.to_string()),
        date_from: Some(from.date_naive()),
        date_to: Some(to.date_naive()),
        scored: None,
    };
    let mut agg = SentimentAggregate {
        figure_id: figure_id.to_string(),
        positive: 0,
        negative: 0,
        pending: 0,
        from,
        to,
        as_of,
    };
    for rec in store.scan(filter)? {
        let rec = rec?;
        if rec.video.fetched_at < from || rec.video.fetched_at > to {
            continue;
        }
        match rec.sentiment.map(|s| s.label) {
            Some(Sentiment::Positive) => agg.positive += 1,
            Some(Sentiment::Negative) => agg.negative += 1,
            None => agg.pending += 1,
        }
    }
    Ok(agg)
}

/// Parse a window bound: RFC 3339, or a bare `YYYY-MM-DD` meaning the start
/// of that UTC day (`end = false`) or its last second (`end = true`).
pub fn parse_bound(s: &str, end: bool) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
    let time = if end { NaiveTime::from_hms_opt(23, 59, 59)? } else { NaiveTime::MIN };
    Some(date.and_time(time).and_utc())
}
