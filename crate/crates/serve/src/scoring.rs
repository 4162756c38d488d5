use std::thread::JoinHandle;
use std::time::Duration;

use pulsestream_pipeline::clock::{now_seconds, Clock, StopSignal};
use pulsestream_pipeline::store::{ScanFilter, SentimentUpdate, Store, StoreError};
use serde::Serialize;

use crate::http::AppState;
use crate::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreOptions {
    /// Records predicted and written per store update.
    pub batch_size: usize,
    /// Also re-score records scored by a different model version.
    pub rescore_stale: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions { batch_size: 256, rescore_stale: false }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScoreStats {
    pub scored: u64,
    pub batches: u64,
    pub model_version_changes: u64,
}

/// Predict every unscored record's description and store the result under
/// the model's version. Each batch is committed on its own, so an error
/// keeps the progress made before it.
pub fn score_pending(store: &Store, model: &Model, opts: ScoreOptions, clock: &dyn Clock) -> Result<ScoreStats, StoreError> {
    if opts.batch_size == 0 {
        return Err(StoreError::InvalidArgument("batch_size must be at least 1".into()));
    }
    let version = model.version();
    let filter = if opts.rescore_stale { ScanFilter::default() } else { ScanFilter::scored(false) };
    let mut stats = ScoreStats::default();
    let mut batch = Vec::with_capacity(opts.batch_size);
    let flush = |batch: &mut Vec<SentimentUpdate>, stats: &mut ScoreStats| -> Result<(), StoreError> {
        if !batch.is_empty() {
            store.write_sentiments(batch)?;
            stats.scored += batch.len() as u64;
            stats.batches += 1;
            batch.clear();
        }
        Ok(())
    };
    for rec in store.scan(filter)? {
        let rec = rec?;
        match &rec.sentiment {
            Some(s) if s.model_version == version => continue,
            Some(_) => stats.model_version_changes += 1,
            None => {}
        }
        let p = model.predict(&rec.video.description);
        batch.push(SentimentUpdate {
            video_id: rec.video.video_id,
            label: p.label,
            confidence: p.confidence,
            scored_at: now_seconds(clock),
            model_version: version.to_string(),
        });
        if batch.len() == opts.batch_size {
            flush(&mut batch, &mut stats)?;
        }
    }
    flush(&mut batch, &mut stats)?;
    Ok(stats)
}

/// Score pending records every `interval` until `stop` fires. Does nothing
/// while no model is loaded.
pub fn spawn_scoring_worker(state: AppState, interval: Duration, opts: ScoreOptions, stop: StopSignal) -> JoinHandle<()> {
    std::thread::Builder::new()
        .name("scoring".into())
        .spawn(move || loop {
            if let Some(model) = state.model() {
                match score_pending(state.store(), &model, opts, &*state.clock()) {
                    Ok(s) if s.scored > 0 => log::info!("scored {} records with model {}", s.scored, model.version()),
                    Ok(_) => {}
                    Err(e) => log::error!("scoring failed: {e}"),
                }
            }
            if stop.wait_timeout(interval) {
                break;
            }
        })
        .expect("spawn scoring thread")
}
