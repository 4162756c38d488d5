//! Data path of the sentiment pipeline: scheduled crawling of video search
//! results, an in-process topic/partition broker with consumer groups, and
//! the partitioned, deduplicating record store the broker drains into.

pub mod broker;
pub mod clock;
pub mod ingest;
pub mod store;
pub mod stream;

pub use broker::{Broker, ConsumerHandle, TopicMessage};
pub use clock::{Clock, ManualClock, StopSignal, SystemClock};
pub use ingest::{Crawler, CrawlStats, FigureConfig, QuotaBudget, Transport, VideoMetadata};
pub use store::{ScanFilter, SentimentScore, SentimentUpdate, Store, StoreError, StoredRecord};
pub use stream::{drain, DrainStats, STORE_GROUP};

/// Topic carrying JSON-encoded [`VideoMetadata`], keyed by video id.
pub const VIDEO_TOPIC: &str = "video-metadata";
/// Default partition count of [`VIDEO_TOPIC`].
pub const DEFAULT_PARTITIONS: u32 = 4;
