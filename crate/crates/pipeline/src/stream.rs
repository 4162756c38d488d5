//! Broker to store bridge.

use std::time::Duration;

use crate::broker::{BrokerError, ConsumerHandle};
use crate::clock::StopSignal;
use crate::ingest::VideoMetadata;
use crate::store::{Store, StoreError};

/// Consumer group the store writer uses on [`crate::VIDEO_TOPIC`].
pub const STORE_GROUP: &str = "store-writer";

#[derive(Debug, thiserror::Error)]
pub enum StreamError {
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct DrainStats {
    pub batches: u64,
    pub messages: u64,
    pub written: u64,
    pub duplicates: u64,
    /// Payloads that were not valid metadata; committed past and dropped.
    pub malformed: u64,
}

impl DrainStats {
    fn absorb(&mut self, other: DrainStats) {
        self.batches += other.batches;
        self.messages += other.messages;
        self.written += other.written;
        self.duplicates += other.duplicates;
        self.malformed += other.malformed;
    }
}

/// Poll one batch, append it, then commit. A crash between append and
/// commit redelivers the batch, which the store's dedup absorbs.
pub fn drain_batch(
    consumer: &mut ConsumerHandle,
    store: &Store,
    max_messages: usize,
    timeout: Duration,
) -> Result<DrainStats, StreamError> {
    let msgs = consumer.poll(max_messages, timeout)?;
    if msgs.is_empty() {
        return Ok(DrainStats::default());
    }
    let mut stats = DrainStats { batches: 1, messages: msgs.len() as u64, ..DrainStats::default() };
    let mut records = Vec::with_capacity(msgs.len());
    for m in &msgs {
        match serde_json::from_slice::<VideoMetadata>(&m.payload) {
            Ok(v) if !v.video_id.is_empty() => records.push(v),
            _ => {
                log::warn!("dropping malformed message {}:{}", m.partition, m.offset);
                stats.malformed += 1;
            }
        }
    }
    let res = store.append_batch(&records)?;
    stats.written = res.written as u64;
    stats.duplicates = res.duplicates as u64;
    consumer.commit_positions()?;
    Ok(stats)
}

/// Drain until a poll comes back empty.
pub fn drain(consumer: &mut ConsumerHandle, store: &Store, max_messages: usize) -> Result<DrainStats, StreamError> {
    let mut total = DrainStats::default();
    loop {
        let s = drain_batch(consumer, store, max_messages, Duration::ZERO)?;
        if s.batches == 0 {
            return Ok(total);
        }
        total.absorb(s);
    }
}

/// Keep draining until `stop` fires, waiting up to `poll_timeout` for new
/// messages each round. Store errors are logged and the batch retried after
/// a pause, since nothing was committed for it.
pub fn run(
    consumer: &mut ConsumerHandle,
    store: &Store,
    max_messages: usize,
    poll_timeout: Duration,
    stop: &StopSignal,
) -> Result<DrainStats, BrokerError> {
    let mut total = DrainStats::default();
    while !stop.is_stopped() {
        match drain_batch(consumer, store, max_messages, poll_timeout) {
            Ok(s) => total.absorb(s),
            Err(StreamError::Broker(e)) => return Err(e),
            Err(StreamError::Store(e)) => {
                log::error!("store append failed, batch will be redelivered: {e}");
                consumer.rewind()?;
                if stop.wait_timeout(Duration::from_secs(1)) {
                    break;
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::Broker;
    use crate::store::{ScanFilter, StoreOptions};
    use chrono::{TimeZone, Utc};

    fn publish(broker: &Broker, id: &str) {
        let v = VideoMetadata {
            video_id: id.into(),
            channel_id: "c".into(),
            title: "t".into(),
            description: "d".into(),
            uri: format!("https://www.youtube.com/watch?v={id}"),
            figure_id: "anies".into(),
            keyword: "anies".into(),
            fetched_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        };
        broker.publish(crate::VIDEO_TOPIC, Some(id.as_bytes()), serde_json::to_vec(&v).unwrap()).unwrap();
    }

    #[test]
    fn drains_and_commits() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open_with(dir.path(), StoreOptions { sync: false, ..Default::default() }).unwrap();
        let broker = Broker::new();
        broker.create_topic(crate::VIDEO_TOPIC, 3).unwrap();
        for id in ["a", "b", "a", "c"] {
            publish(&broker, id);
        }
        broker.publish(crate::VIDEO_TOPIC, None, &b"junk"[..]).unwrap();
        let mut c = broker.subscribe(crate::VIDEO_TOPIC, STORE_GROUP).unwrap();
        let stats = drain(&mut c, &store, 2).unwrap();
        assert_eq!((stats.messages, stats.written, stats.duplicates, stats.malformed), (5, 3, 1, 1));
        assert_eq!(store.scan_all(ScanFilter::default()).unwrap().len(), 3);
        drop(c);
        let mut c = broker.subscribe(crate::VIDEO_TOPIC, STORE_GROUP).unwrap();
        assert_eq!(drain(&mut c, &store, 10).unwrap(), DrainStats::default());
    }
}
